"""Closed-form success probabilities of the Babai detectors.

Everything is evaluated in scaled units: ``lambda_bar = lam / sigma**2``
and ``gamma = r_kk / (sqrt(2) sigma)``. Public helpers taking natural units
convert once on entry.

The log-SP curve ``F(zeta) = ln rho(exp(zeta))`` at the MAP weight has a
second derivative that is positive far left and negative far right; its
outermost roots ``mu1, mu2`` decide when the geometric-mean bound
``rho(omega_bar)**n`` is a lower or an upper bound on the total SP.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import BreakpointError, NoRootError
from .model import Alphabet, lambda_star

SQRT2 = math.sqrt(2.0)
TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)
TINY = 1e-250


def erf_accurate(x):
    """Error function, exactly odd in its argument."""
    x = np.asarray(x, dtype=float)
    out = np.copysign(special.erf(np.abs(x)), x)
    return float(out) if out.ndim == 0 else out


def alpha_kj(lam: float, r_kk: float, j: int) -> float:
    """Offset of the zero-decision boundary for candidate ``j`` (natural units)."""
    t = 2 * j - 1
    return lam / (r_kk * r_kk * t) - t / 2.0


def alpha_scaled(lambda_bar, gamma, j):
    t = 2 * np.asarray(j) - 1
    gamma = np.asarray(gamma, dtype=float)
    return lambda_bar / (2.0 * gamma * gamma * t) - t / 2.0


def j_k(lambda_bar: float, r_bar, M: int):
    """Index of the outermost alphabet symbol whose decision region is nonempty."""
    r_bar = np.asarray(r_bar, dtype=float)
    j = np.floor(0.5 * np.sqrt(1.0 + lambda_bar / (r_bar * r_bar))) + 1
    j = np.minimum(j, M).astype(np.int64)
    return int(j) if j.ndim == 0 else j


def _unpack(alphabet: Alphabet):
    return alphabet.M, alphabet.p


def rho_scaled(gamma, lambda_bar: float, alphabet: Alphabet):
    """Per-level success probability of the regularized point, scaled units."""
    M, p = _unpack(alphabet)
    gamma = np.asarray(gamma, dtype=float)
    if lambda_bar == 0.0:
        return rho_bb_scaled(gamma, alphabet)
    j = j_k(lambda_bar, gamma, M)
    t = 2 * np.asarray(j) - 1
    a = lambda_bar / (2.0 * gamma * gamma * t) - t / 2.0
    q = p / (2 * M)
    out = (q + (M - np.asarray(j)) * p / M * special.erf(gamma)
           - q * special.erf(a * gamma)
           + (1 - p) * special.erf((t + a) * gamma))
    return float(out) if out.ndim == 0 else out


def rho_bb_scaled(gamma, alphabet: Alphabet):
    M, p = _unpack(alphabet)
    gamma = np.asarray(gamma, dtype=float)
    out = (p / (2 * M) + (M - 1) * p / M * special.erf(gamma)
           + (1 - (2 * M - 1) * p / (2 * M)) * special.erf(gamma / 2.0))
    return float(out) if out.ndim == 0 else out


def rho_rb(r_kk, sigma: float, lam: float, alphabet: Alphabet):
    """Probability that one level of the regularized detector is correct."""
    return rho_scaled(np.asarray(r_kk, dtype=float) / (SQRT2 * sigma), lam / sigma**2, alphabet)


def rho_bb(r_kk, sigma: float, alphabet: Alphabet):
    """Probability that one level of the box-constrained detector is correct."""
    return rho_bb_scaled(np.asarray(r_kk, dtype=float) / (SQRT2 * sigma), alphabet)


@dataclass
class SpReport:
    """Per-level factors and their product."""

    rho: np.ndarray
    total: float
    detector: str

    def to_dict(self) -> dict:
        return {"detector": self.detector, "rho": [float(v) for v in self.rho], "total": float(self.total)}


def _diag(R) -> np.ndarray:
    d = np.diag(np.asarray(R, dtype=float)).copy()
    if np.any(d <= 0):
        raise ValueError("triangular factor must have a positive diagonal")
    return d


def sp_rb(R, sigma: float, lam: float, alphabet: Alphabet) -> SpReport:
    """Success probability of the regularized Babai point."""
    rho = np.atleast_1d(rho_rb(_diag(R), sigma, lam, alphabet))
    return SpReport(rho, float(np.prod(rho)), "RB")


def sp_bb(R, sigma: float, alphabet: Alphabet) -> SpReport:
    """Success probability of the box-constrained Babai point."""
    rho = np.atleast_1d(rho_bb(_diag(R), sigma, alphabet))
    return SpReport(rho, float(np.prod(rho)), "BB")


def log_sp_rb(R, sigma: float, lam: float, alphabet: Alphabet) -> float:
    return float(np.sum(np.log(np.atleast_1d(rho_rb(_diag(R), sigma, lam, alphabet)))))


def _theta(gamma, lambda_bar, t):
    return lambda_bar / (2.0 * t * gamma) + t * gamma / 2.0


def rho_rb_dgamma(gamma, lambda_bar: float, alphabet: Alphabet):
    """First derivative of the scaled per-level SP with respect to gamma.

    The closed form merges two exponential terms using
    ``exp(lambda_bar) = (1 - p) 2M / p``, so it is exact only when
    ``lambda_bar`` is the MAP weight of ``alphabet`` (see
    :func:`lambda_bar_star`).
    """
    M, p = _unpack(alphabet)
    gamma = np.asarray(gamma, dtype=float)
    j = np.asarray(j_k(lambda_bar, gamma, M))
    t = 2 * j - 1
    th = _theta(gamma, lambda_bar, t)
    out = TWO_OVER_SQRT_PI * ((M - j) / M * p * np.exp(-gamma**2) + (1 - p) * t * np.exp(-th**2))
    return float(out) if out.ndim == 0 else out


def rho_rb_d2gamma(gamma, lambda_bar: float, alphabet: Alphabet):
    """Second derivative of the scaled per-level SP with respect to gamma.

    Same validity condition as :func:`rho_rb_dgamma`.
    """
    M, p = _unpack(alphabet)
    gamma = np.asarray(gamma, dtype=float)
    j = np.asarray(j_k(lambda_bar, gamma, M))
    t = 2 * j - 1
    th = _theta(gamma, lambda_bar, t)
    first = -2.0 * (M - j) / M * p * gamma * np.exp(-gamma**2)
    second = 0.5 * (1 - p) * t * np.exp(-th**2) * (lambda_bar**2 / (t * t * gamma**3) - t * t * gamma)
    out = TWO_OVER_SQRT_PI * (first + second)
    return float(out) if out.ndim == 0 else out


def gamma_breakpoints(lambda_bar: float, M: int) -> np.ndarray:
    """Scaled diagonal values where the outermost active symbol changes.

    Returned in increasing order; empty when ``M == 1`` or ``lambda_bar == 0``.
    """
    if M < 2 or lambda_bar <= 0:
        return np.empty(0)
    i = np.arange(1, M)
    s = 2 * (M - i + 1)
    return np.sqrt(lambda_bar / ((s - 1) * (s - 3)))


def _f_second_raw(zeta, lambda_bar: float, alphabet: Alphabet):
    g = np.exp(np.asarray(zeta, dtype=float))
    r = rho_scaled(g, lambda_bar, alphabet)
    d1 = rho_rb_dgamma(g, lambda_bar, alphabet)
    d2 = rho_rb_d2gamma(g, lambda_bar, alphabet)
    u = d1 / r * g
    return d2 / r * g * g + u - u * u


def f_second(zeta: float, lambda_bar: float, alphabet: Alphabet) -> float:
    """Second derivative of ``ln rho(exp(zeta))`` at the MAP weight.

    Where the exact value underflows, a zero with the correct sign is
    returned.

    Raises
    ------
    BreakpointError
        If ``exp(zeta)`` lies within 1e-13 of a breakpoint, where the
        derivative is not defined.
    """
    g = math.exp(zeta)
    bp = gamma_breakpoints(lambda_bar, alphabet.M)
    if bp.size and np.min(np.abs(bp - g)) <= 1e-13 * max(1.0, g):
        raise BreakpointError(f"gamma={g!r} is a breakpoint of the second derivative")
    val = float(_f_second_raw(zeta, lambda_bar, alphabet))
    if abs(val) < TINY:
        # underflow: return a zero carrying the sign of the exact value
        return math.copysign(0.0, _f_second_sign(g, lambda_bar, alphabet))
    return val


def _f_second_sign(g: float, lambda_bar: float, alphabet: Alphabet) -> float:
    """Sign of F'' computed with the common exponential factor removed."""
    M, p = _unpack(alphabet)
    j = j_k(lambda_bar, g, M)
    t = 2 * j - 1
    th = float(_theta(g, lambda_bar, t))
    m = min(g * g, th * th)
    e1, e2 = math.exp(m - g * g), math.exp(m - th * th)
    a1, a2 = (M - j) / M * p, (1 - p) * t
    b1 = -2.0 * (M - j) / M * p * g
    b2 = 0.5 * (1 - p) * t * (lambda_bar**2 / (t * t * g**3) - t * t * g)
    r = float(rho_scaled(g, lambda_bar, alphabet))
    num = (b1 * g * g + a1 * g) * e1 + (b2 * g * g + a2 * g) * e2
    d1 = (a1 * e1 + a2 * e2) * g
    s = num / r - TWO_OVER_SQRT_PI * math.exp(-m) * (d1 / r) ** 2
    return math.copysign(1.0, s)


def _bisect(f, a: float, b: float, fa: float, tol: float = 1e-12) -> float:
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = f(m)
        if abs(fm) < TINY:
            return m
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def _scan_pieces(lambda_bar, alphabet, lo, hi, npts):
    """Sample F'' on each smooth piece of ``[lo, hi]``; return per-piece arrays."""
    cuts = np.log(gamma_breakpoints(lambda_bar, alphabet.M))
    edges = np.concatenate([[lo], cuts[(cuts > lo) & (cuts < hi)], [hi]])
    pieces = []
    for a, b in zip(edges[:-1], edges[1:]):
        pad = 1e-9 * max(1.0, abs(b - a))
        z = np.linspace(a + pad, b - pad, npts)
        v = _f_second_raw(z, lambda_bar, alphabet)
        # subnormal values carry no reliable sign
        pieces.append((z, np.where(np.abs(v) < TINY, 0.0, v)))
    return pieces


def _mu_roots(lambda_bar: float, M: int, p: float, npts: int = 4096) -> tuple[float, float]:
    alphabet = Alphabet(M, p)
    lo, hi = math.log(1e-6), math.log(1e6)
    bp = np.log(gamma_breakpoints(lambda_bar, M))
    if bp.size:
        lo, hi = min(lo, bp[0] - 5.0), max(hi, bp[-1] + 5.0)
    for _ in range(6):
        pieces = _scan_pieces(lambda_bar, alphabet, lo, hi, npts)
        vals = np.concatenate([v for _, v in pieces])
        nz = vals[vals != 0.0]
        if nz.size and nz[0] > 0 and nz[-1] < 0:
            break
        lo, hi = lo - (hi - lo) / 2, hi + (hi - lo) / 2
    else:
        raise NoRootError(f"no sign change of F'' found for M={M}, p={p}")

    brackets = []
    for z, v in pieces:
        idx = np.flatnonzero(v != 0.0)
        for a, b in zip(idx[:-1], idx[1:]):
            if (v[a] > 0) != (v[b] > 0):
                brackets.append((z[a], z[b], v[a]))
    if not brackets:
        raise NoRootError(f"no root of F'' bracketed for M={M}, p={p}")

    def f(zeta):
        return float(_f_second_raw(zeta, lambda_bar, alphabet))

    z1 = _bisect(f, *brackets[0])
    z2 = _bisect(f, *brackets[-1])
    return math.exp(z1), math.exp(z2)


_mu_cached = lru_cache(maxsize=256)(_mu_roots)


def mu_roots(lambda_bar: float, alphabet: Alphabet) -> tuple[float, float]:
    """Exponentials of the smallest and largest roots of ``f_second``.

    Roots are bracketed by a sign-change scan on a logarithmic grid of each
    smooth piece between breakpoints, then refined by bisection to 1e-12 in
    ``zeta``. Results are cached.
    """
    if lambda_bar < 0:
        raise ValueError("lambda_bar must be non-negative")
    return _mu_cached(float(lambda_bar), int(alphabet.M), float(alphabet.p))


def lambda_bar_star(alphabet: Alphabet) -> float:
    """Scaled MAP weight; independent of the noise level."""
    return lambda_star(1.0, alphabet)


def mu_for_alphabet(alphabet: Alphabet) -> tuple[float, float]:
    """``mu_roots`` at the MAP weight."""
    return mu_roots(lambda_bar_star(alphabet), alphabet)


@dataclass
class BoundReport:
    omega: float
    omega_bar: float
    mu1: float
    mu2: float
    side: str
    bound_value: float

    def to_dict(self) -> dict:
        return {k: (float(v) if not isinstance(v, str) else v) for k, v in self.__dict__.items()}


def sp_bound(R, sigma: float, alphabet: Alphabet) -> BoundReport:
    """Geometric-mean bound on the regularized SP at the MAP weight.

    ``side`` is ``"lower"`` when every diagonal entry is at most
    ``sqrt(2) sigma mu1`` (SP is at least the bound), ``"upper"`` when
    every entry is at least ``sqrt(2) sigma mu2`` (SP is at most the bound),
    and ``"inconclusive"`` otherwise.
    """
    d = _diag(R)
    n = d.size
    omega = float(np.exp(np.mean(np.log(d))))
    omega_bar = omega / (SQRT2 * sigma)
    lb = lambda_bar_star(alphabet)
    mu1, mu2 = mu_roots(lb, alphabet)
    if d.max() <= SQRT2 * sigma * mu1:
        side = "lower"
    elif d.min() >= SQRT2 * sigma * mu2:
        side = "upper"
    else:
        side = "inconclusive"
    bound = float(rho_scaled(omega_bar, lb, alphabet)) ** n
    return BoundReport(omega, omega_bar, mu1, mu2, side, bound)


def phi(gamma, beta, lambda_bar: float, alphabet: Alphabet):
    """``rho(gamma) * rho(beta / gamma)`` for a pair of levels with fixed product."""
    gamma = np.asarray(gamma, dtype=float)
    out = rho_scaled(gamma, lambda_bar, alphabet) * rho_scaled(beta / gamma, lambda_bar, alphabet)
    return float(out) if np.ndim(out) == 0 else out
