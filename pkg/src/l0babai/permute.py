"""Column orderings that reshape the triangular factor before detection.

Every strategy returns a :class:`PermutationOutcome` whose ``perm`` is
0-based: ``perm[k]`` is the original column now at position ``k``, so
``A[:, perm] = Q_hat @ R_hat``.

Scans over candidate columns break exact ties by keeping the current
column, then by the smallest index. SP comparisons treat relative
differences below ``SP_RTOL`` as ties, since such gaps are rounding noise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .linalg import move_column_retriangularize, qr_factorize, swap_adjacent_retriangularize
from .model import Alphabet
from .sp import SpReport, sp_rb

SP_RTOL = 1e-12
STRATEGIES = ("lllp", "sqrd", "lsp", "gsp", "msp")


@dataclass
class PermutationOutcome:
    perm: np.ndarray
    R_hat: np.ndarray
    strategy: str
    sp_before: SpReport | None = None
    sp_after: SpReport | None = None
    swaps: int = 0
    # swaps whose coupling entry was exactly zero (these leave SP unchanged)
    trivial_swaps: int = field(default=0, repr=False)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "p": [int(i) + 1 for i in self.perm],
            "R_hat": self.R_hat.tolist(),
            "sp_before": None if self.sp_before is None else self.sp_before.to_dict(),
            "sp_after": None if self.sp_after is None else self.sp_after.to_dict(),
        }


def _finish(R0, R_hat, perm, strategy, sigma, lam, alphabet, **extra) -> PermutationOutcome:
    out = PermutationOutcome(np.asarray(perm), R_hat, strategy, **extra)
    if sigma is not None and lam is not None and alphabet is not None:
        out.sp_before = sp_rb(R0, sigma, lam, alphabet)
        out.sp_after = sp_rb(R_hat, sigma, lam, alphabet)
    return out


def _better(new: float, old: float) -> bool:
    return new > old * (1.0 + SP_RTOL)


def _block_sp(R, sigma, lam, alphabet) -> float:
    return sp_rb(R, sigma, lam, alphabet).total


def _pick_min(vals: np.ndarray, k: int) -> int:
    # argmin, keeping k on exact ties and otherwise the first index
    best = int(np.argmin(vals))
    return k if vals[k] == vals[best] else best


def lll_p(R, delta: float = 1.0, sigma=None, lam=None, alphabet: Alphabet | None = None) -> PermutationOutcome:
    """Adjacent swaps until the Lovasz condition holds at every level.

    No size reduction is applied, so the search box stays a box.

    Parameters
    ----------
    R : ndarray
        Upper triangular with positive diagonal.
    delta : float
        Lovasz parameter in ``(1/4, 1]``.
    """
    if not 0.25 < delta <= 1.0:
        raise ValueError("delta must lie in (1/4, 1]")
    R0 = np.asarray(R, dtype=float)
    Rc = R0.copy()
    n = Rc.shape[0]
    perm = list(range(n))
    swaps = trivial = 0
    k = 1
    while k < n:
        if delta * Rc[k - 1, k - 1] ** 2 > Rc[k - 1, k] ** 2 + Rc[k, k] ** 2:
            swaps += 1
            trivial += Rc[k - 1, k] == 0.0
            perm[k - 1], perm[k] = perm[k], perm[k - 1]
            Rc = swap_adjacent_retriangularize(Rc, k)
            if k > 1:
                k -= 1
        else:
            k += 1
    return _finish(R0, Rc, perm, "lllp", sigma, lam, alphabet, swaps=swaps, trivial_swaps=trivial)


def sqrd(A, sigma=None, lam=None, alphabet: Alphabet | None = None) -> PermutationOutcome:
    """Sorted QR: Householder QR pivoting on the smallest residual column norm.

    Columns are fixed first to last. Passing an upper-triangular ``R`` is
    equivalent to passing ``A`` since residual norms are invariant under
    the orthogonal factor.
    """
    A0 = np.asarray(A, dtype=float)
    m, n = A0.shape
    if m < n:
        raise ValueError("need at least as many rows as columns")
    W = A0.copy()
    perm = np.arange(n)
    for k in range(n):
        norms = np.linalg.norm(W[k:, k:], axis=0)
        j = k + _pick_min(norms, 0)
        if j != k:
            W[:, [k, j]] = W[:, [j, k]]
            perm[[k, j]] = perm[[j, k]]
        x = W[k:, k]
        nx = np.linalg.norm(x)
        if nx <= 1e-12 * max(np.linalg.norm(A0), 1.0):
            raise ValueError("matrix is numerically rank deficient")
        v = x.copy()
        v[0] += np.copysign(nx, x[0]) if x[0] != 0 else nx
        v /= np.linalg.norm(v)
        W[k:, k:] -= 2.0 * np.outer(v, v @ W[k:, k:])
        W[k + 1:, k] = 0.0
    R_hat = np.triu(W[:n])
    R_hat[np.diag(R_hat) < 0] *= -1.0
    R0 = qr_factorize(A0)[1] if m != n or np.any(np.tril(A0, -1)) else A0
    return _finish(R0, R_hat, perm, "sqrd", sigma, lam, alphabet)


def lsp_vblast(R, sigma=None, lam=None, alphabet: Alphabet | None = None) -> PermutationOutcome:
    """Greedy ordering maximizing the diagonal entry from the last level up.

    Uses ``F = R^{-T}``: moving column ``j`` to position ``k`` yields
    ``r_kk = 1 / ||F[j:k+1, j]||``, so the best candidate minimizes that norm.
    """
    R0 = np.asarray(R, dtype=float)
    n = R0.shape[0]
    Rc = R0.copy()
    F = solve_triangular(R0, np.eye(n), lower=False).T
    perm = np.arange(n)
    swaps = 0
    for k in range(n - 1, 0, -1):
        d = np.array([np.linalg.norm(F[j:k + 1, j]) for j in range(k + 1)])
        j = _pick_min(d, k)
        if j == k:
            continue
        swaps += 1
        Rc, Gt = move_column_retriangularize(Rc, j, k)
        F[:, [j, k]] = F[:, [k, j]]
        F = Gt @ F
        perm[[j, k]] = perm[[k, j]]
    return _finish(R0, Rc, perm, "lsp", sigma, lam, alphabet, swaps=swaps)


def _refactor(R0, perm) -> np.ndarray:
    if np.array_equal(perm, np.arange(len(perm))):
        return R0.copy()
    return qr_factorize(R0[:, perm])[1]


def _gsp_scan(B, k, sigma, lam, alphabet, skip=None):
    """Best column of the leading block ``B`` to move to position ``k``."""
    best_j, best_sp, best_R, best_G = k, _block_sp(B, sigma, lam, alphabet), B, None
    for j in range(k):
        if j == skip:
            continue
        Rt, Gt = move_column_retriangularize(B, j, k)
        s = _block_sp(Rt, sigma, lam, alphabet)
        if _better(s, best_sp):
            best_j, best_sp, best_R, best_G = j, s, Rt, Gt
    return best_j, best_R, best_G


def gsp(R, sigma: float, lam: float, alphabet: Alphabet) -> PermutationOutcome:
    """Greedy ordering that maximizes the closed-form SP level by level.

    At level ``k`` every column of the current leading block is tried at
    position ``k`` and the one giving the largest SP of that block wins.
    """
    R0 = np.asarray(R, dtype=float)
    n = R0.shape[0]
    B = R0.copy()
    perm = np.arange(n)
    swaps = 0
    for k in range(n - 1, 0, -1):
        j, B, _ = _gsp_scan(B, k, sigma, lam, alphabet)
        if j != k:
            swaps += 1
            perm[[j, k]] = perm[[k, j]]
        B = B[:k, :k]
    return _finish(R0, _refactor(R0, perm), perm, "gsp", sigma, lam, alphabet, swaps=swaps)


def msp(R, sigma: float, lam: float, alphabet: Alphabet) -> PermutationOutcome:
    """Try the V-BLAST candidate first; fall back to the SP scan if it hurts."""
    R0 = np.asarray(R, dtype=float)
    n = R0.shape[0]
    B = R0.copy()
    F = solve_triangular(R0, np.eye(n), lower=False).T
    perm = np.arange(n)
    swaps = 0
    for k in range(n - 1, 0, -1):
        d = np.array([np.linalg.norm(F[j:k + 1, j]) for j in range(k + 1)])
        jl = _pick_min(d, k)
        j, Bn, Gt = k, B, None
        if jl != k:
            Rt, Gl = move_column_retriangularize(B, jl, k)
            if _block_sp(Rt, sigma, lam, alphabet) >= _block_sp(B, sigma, lam, alphabet):
                j, Bn, Gt = jl, Rt, Gl
            else:
                j, Bn, Gt = _gsp_scan(B, k, sigma, lam, alphabet, skip=jl)
        if j != k:
            swaps += 1
            perm[[j, k]] = perm[[k, j]]
            F[:, [j, k]] = F[:, [k, j]]
            F = Gt @ F
        B = Bn[:k, :k]
        F = F[:k, :k]
    return _finish(R0, _refactor(R0, perm), perm, "msp", sigma, lam, alphabet, swaps=swaps)


def run_strategy(name: str, R, sigma=None, lam=None, alphabet=None, A=None, delta: float = 1.0):
    """Dispatch by short strategy name."""
    if name == "lllp":
        return lll_p(R, delta, sigma, lam, alphabet)
    if name == "sqrd":
        out = sqrd(R if A is None else A, sigma, lam, alphabet)
        if A is not None and sigma is not None:
            out.sp_before = sp_rb(R, sigma, lam, alphabet)
        return out
    if name == "lsp":
        return lsp_vblast(R, sigma, lam, alphabet)
    if name in ("gsp", "msp"):
        if sigma is None or lam is None or alphabet is None:
            raise ValueError(f"{name} needs sigma, lambda and an alphabet")
        return (gsp if name == "gsp" else msp)(R, sigma, lam, alphabet)
    raise ValueError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGIES)}")
