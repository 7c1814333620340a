"""Sequential Babai detectors operating on a triangular factor."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Alphabet, round_to_alphabet, round_to_integer


@dataclass
class DetectionResult:
    """Output of a Babai recursion.

    Attributes
    ----------
    x_hat : ndarray of int64
        Detected vector.
    c : ndarray
        Per-level centers.
    g : ndarray or None
        Per-level regularized scores; ``None`` for the unregularized detectors.
    """

    x_hat: np.ndarray
    c: np.ndarray
    g: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "x_hat": [int(v) for v in self.x_hat],
            "c": [float(v) for v in self.c],
            "g": None if self.g is None else [float(v) for v in self.g],
        }


def _check(R, y_tilde):
    R = np.asarray(R, dtype=float)
    y = np.asarray(y_tilde, dtype=float).ravel()
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError("R must be square")
    if y.size != R.shape[0]:
        raise ValueError(f"dimension mismatch: R is {R.shape[0]}x{R.shape[1]}, y has {y.size}")
    return R, y


def babai_regularized(R, y_tilde, lam: float, alphabet: Alphabet) -> DetectionResult:
    """L0-regularized box-constrained Babai point.

    At each level the rounded center is kept only when its score
    ``0.5 r^2 z^2 - r^2 z c + lam`` is negative; otherwise the symbol is 0.
    """
    R, y = _check(R, y_tilde)
    if not np.isfinite(lam) or lam < 0:
        raise ValueError("lambda must be finite and non-negative")
    n = y.size
    x = np.zeros(n, dtype=np.int64)
    c = np.zeros(n)
    g = np.zeros(n)
    for k in range(n - 1, -1, -1):
        rkk = R[k, k]
        c[k] = (y[k] - R[k, k + 1:] @ x[k + 1:]) / rkk
        z = int(round_to_alphabet(c[k], alphabet.M))
        g[k] = 0.5 * rkk**2 * z * z - rkk**2 * z * c[k] + lam
        x[k] = 0 if g[k] >= 0 else z
    return DetectionResult(x, c, g)


def babai_box(R, y_tilde, alphabet: Alphabet) -> DetectionResult:
    """Box-constrained Babai point: round each center into the alphabet."""
    R, y = _check(R, y_tilde)
    n = y.size
    x = np.zeros(n, dtype=np.int64)
    c = np.zeros(n)
    for k in range(n - 1, -1, -1):
        c[k] = (y[k] - R[k, k + 1:] @ x[k + 1:]) / R[k, k]
        x[k] = round_to_alphabet(c[k], alphabet.M)
    return DetectionResult(x, c)


def babai_ordinary(R, y_tilde) -> DetectionResult:
    """Unconstrained Babai point with plain nearest-integer rounding."""
    R, y = _check(R, y_tilde)
    n = y.size
    x = np.zeros(n, dtype=np.int64)
    c = np.zeros(n)
    for k in range(n - 1, -1, -1):
        c[k] = (y[k] - R[k, k + 1:] @ x[k + 1:]) / R[k, k]
        x[k] = round_to_integer(c[k])
    return DetectionResult(x, c)


def objective(R, y_tilde, x, lam: float) -> float:
    """``0.5 ||y - R x||^2 + lam ||x||_0``."""
    R, y = _check(R, y_tilde)
    x = np.asarray(x)
    r = y - R @ x
    return 0.5 * float(r @ r) + lam * int(np.count_nonzero(x))
