"""Dense linear algebra helpers.

QR with a positive diagonal, Givens retriangularization after column
interchanges, random test matrices, seeded streams and matrix CSV I/O.

All indices are 0-based.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import RankDeficientError

RANK_TOL = 1e-12


def make_rng(seed: int, *block: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, block...)``.

    Streams for distinct block keys are statistically independent, so work
    split across any number of workers reproduces the serial result.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(b) for b in block))
    return np.random.Generator(np.random.PCG64(ss))


def qr_factorize(A) -> tuple[np.ndarray, np.ndarray]:
    """Thin QR factorization with a strictly positive diagonal.

    Parameters
    ----------
    A : array_like, shape (m, n)
        Matrix with ``m >= n`` and full column rank.

    Returns
    -------
    Q : ndarray, shape (m, n)
        Orthonormal columns.
    R : ndarray, shape (n, n)
        Upper triangular with ``R[k, k] > 0``.

    Raises
    ------
    RankDeficientError
        If the smallest diagonal entry is below ``1e-12`` times the largest.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    m, n = A.shape
    if m < n:
        raise ValueError(f"need at least as many rows as columns, got {m}x{n}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    Q, R = np.linalg.qr(A, mode="reduced")
    d = np.abs(np.diag(R))
    if n and (d.max() == 0.0 or d.min() <= RANK_TOL * d.max()):
        raise RankDeficientError("matrix is numerically rank deficient")
    s = np.where(np.diag(R) < 0, -1.0, 1.0)
    Q = Q * s
    R = np.triu(R * s[:, None])
    return Q, R


def _rotate_rows(R: np.ndarray, i: int, col: int, G: np.ndarray | None) -> None:
    # zero R[i, col] using rows (i-1, i)
    a, b = R[i - 1, col], R[i, col]
    r = math.hypot(a, b)
    c, s = a / r, b / r
    top = c * R[i - 1, col:] + s * R[i, col:]
    bot = -s * R[i - 1, col:] + c * R[i, col:]
    R[i - 1, col:], R[i, col:] = top, bot
    R[i, col] = 0.0
    if G is not None:
        gt = c * G[i - 1] + s * G[i]
        gb = -s * G[i - 1] + c * G[i]
        G[i - 1], G[i] = gt, gb


def _fix_signs(R: np.ndarray, G: np.ndarray | None) -> None:
    neg = np.diag(R) < 0
    if neg.any():
        R[neg] *= -1.0
        if G is not None:
            G[neg] *= -1.0


def swap_adjacent_retriangularize(R, k: int) -> np.ndarray:
    """Swap columns ``k-1`` and ``k`` and restore triangular form.

    Parameters
    ----------
    R : ndarray, shape (n, n)
        Upper triangular with positive diagonal.
    k : int
        Column index, ``1 <= k <= n-1``.

    Returns
    -------
    ndarray
        New upper-triangular factor with positive diagonal.
    """
    R = np.array(R, dtype=float)
    n = R.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must lie in [1, {n - 1}], got {k}")
    R[:, [k - 1, k]] = R[:, [k, k - 1]]
    if R[k, k - 1] != 0.0:
        _rotate_rows(R, k, k - 1, None)
    _fix_signs(R, None)
    return R


def move_column_retriangularize(R, j: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Interchange columns ``j`` and ``k`` (``j <= k``) and retriangularize.

    Returns
    -------
    R_new : ndarray
        Upper triangular with positive diagonal.
    Gt : ndarray
        Accumulated orthogonal transform with ``R_new = Gt @ R @ P``.
    """
    R = np.array(R, dtype=float)
    n = R.shape[0]
    if not 0 <= j <= k < n:
        raise ValueError(f"need 0 <= j <= k < {n}, got j={j}, k={k}")
    Gt = np.eye(n)
    if j == k:
        return R, Gt
    R[:, [j, k]] = R[:, [k, j]]
    for col in range(j, k):
        for i in range(k, col, -1):
            if R[i, col] != 0.0:
                _rotate_rows(R, i, col, Gt)
    _fix_signs(R, Gt)
    return R, Gt


def generate_type1(n: int, rng: np.random.Generator) -> np.ndarray:
    """Square matrix with i.i.d. standard normal entries."""
    if n < 1:
        raise ValueError("n must be positive")
    return rng.standard_normal((n, n))


def type2_singular_values(n: int) -> np.ndarray:
    i = np.arange(1, n + 1)
    return 10.0 ** (3.0 * (n / 2.0 - i) / (n - 1))


def generate_type2(n: int, rng: np.random.Generator) -> np.ndarray:
    """Square matrix ``U diag(d) V^T`` with condition number 1000."""
    if n < 2:
        raise ValueError("type 2 matrices need n >= 2")
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (U * type2_singular_values(n)) @ V.T


def generate_matrix(kind: str, n: int, rng: np.random.Generator) -> np.ndarray:
    if kind in ("type1", "1", 1):
        return generate_type1(n, rng)
    if kind in ("type2", "2", 2):
        return generate_type2(n, rng)
    raise ValueError(f"unknown matrix type {kind!r}")


def is_upper_triangular(R, tol: float = 1e-12) -> bool:
    R = np.asarray(R, dtype=float)
    scale = max(np.linalg.norm(R), 1.0)
    return bool(np.all(np.abs(np.tril(R, -1)) <= tol * scale) and np.all(np.diag(R) > 0))


def save_matrix_csv(path, A) -> None:
    """Write a matrix as CSV with a header row and 17 significant digits."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"c{j + 1}" for j in range(A.shape[1])])
        for row in A:
            w.writerow([f"{v:.17g}" for v in row])


def load_matrix_csv(path) -> np.ndarray:
    """Read a matrix CSV; a non-numeric first row is treated as a header."""
    rows = list(csv.reader(Path(path).read_text().splitlines()))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty matrix file")
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        rows = rows[1:]
    A = np.array([[float(c) for c in r] for r in rows])
    if A.ndim != 2 or A.size == 0:
        raise ValueError(f"{path}: ragged or empty matrix")
    return A
