"""Sparse constellation, prior sampling, observations and rounding."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Alphabet:
    """Zero plus the odd integers up to ``2M-1`` in magnitude.

    ``p`` is the probability that a symbol is nonzero; each nonzero member
    is equally likely.
    """

    M: int
    p: float

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ConfigError(f"M must be a positive integer, got {self.M}")
        if not 0.0 < self.p <= self.p_max * (1 + 1e-15):
            raise ConfigError(f"p must lie in (0, {self.p_max:.6g}], got {self.p}")

    @property
    def p_max(self) -> float:
        return 2 * self.M / (2 * self.M + 1)

    @property
    def top(self) -> int:
        return 2 * self.M - 1

    @property
    def members(self) -> np.ndarray:
        odd = np.arange(1, 2 * self.M, 2)
        return np.concatenate([-odd[::-1], [0], odd])

    @property
    def probabilities(self) -> np.ndarray:
        q = self.p / (2 * self.M)
        pr = np.full(2 * self.M + 1, q)
        pr[self.M] = 1.0 - self.p
        return pr

    def at_bound(self) -> bool:
        return math.isclose(self.p, self.p_max, rel_tol=1e-14)


def lambda_star(sigma: float, alphabet: Alphabet) -> float:
    """MAP regularization weight ``sigma^2 ln((1-p) / (p/(2M)))``."""
    if sigma < 0:
        raise ConfigError("sigma must be non-negative")
    if alphabet.at_bound():
        return 0.0
    p, M = alphabet.p, alphabet.M
    return sigma**2 * math.log((1.0 - p) * 2 * M / p)


def sample_x_star(n: int, alphabet: Alphabet, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw i.i.d. symbols from the sparse prior.

    With ``size`` given the result has shape ``(size, n)``.
    """
    shape = (n,) if size is None else (size, n)
    u = rng.random(shape)
    idx = rng.integers(0, 2 * alphabet.M, size=shape)
    nonzero = 2 * (idx % alphabet.M) + 1
    nonzero = np.where(idx >= alphabet.M, -nonzero, nonzero)
    return np.where(u < alphabet.p, nonzero, 0).astype(np.int64)


def simulate_observation(A, x_star, sigma: float, rng: np.random.Generator):
    """Return ``(y, v)`` with ``y = A x* + v`` and ``v ~ N(0, sigma^2 I)``."""
    A = np.asarray(A, dtype=float)
    v = sigma * rng.standard_normal(A.shape[0])
    return A @ np.asarray(x_star, dtype=float) + v, v


def round_to_alphabet(c, M: int):
    """Vectorized nearest member of the alphabet, ties to smaller magnitude."""
    c = np.asarray(c, dtype=float)
    a = np.abs(c)
    odd = np.minimum(2.0 * np.ceil(a / 2.0) - 1.0, 2 * M - 1)
    out = np.where(a <= 0.5, 0.0, np.copysign(odd, c))
    return out.astype(np.int64)


def nearest_in_alphabet(c: float, alphabet: Alphabet) -> int:
    """Nearest member of the alphabet to ``c``; exact ties go to the smaller magnitude."""
    return int(round_to_alphabet(c, alphabet.M))


def round_to_integer(c):
    """Nearest integer with ties toward the smaller magnitude."""
    c = np.asarray(c, dtype=float)
    return (np.sign(c) * np.ceil(np.abs(c) - 0.5)).astype(np.int64)


@dataclass
class ModelInstance:
    A: np.ndarray
    x_star: np.ndarray
    sigma: float
    y: np.ndarray
    lam: float = 0.0
    seed: int | None = None
    v: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "A": np.asarray(self.A, dtype=float).tolist(),
            "x_star": [int(v) for v in self.x_star],
            "sigma": float(self.sigma),
            "y": [float(v) for v in self.y],
            "lambda": float(self.lam),
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelInstance":
        try:
            inst = cls(
                A=np.asarray(d["A"], dtype=float),
                x_star=np.asarray(d["x_star"], dtype=np.int64),
                sigma=float(d["sigma"]),
                y=np.asarray(d["y"], dtype=float),
                lam=float(d.get("lambda", 0.0)),
                seed=d.get("seed"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed model instance: {exc}") from exc
        if inst.A.ndim != 2 or inst.A.shape[0] != inst.y.size or inst.A.shape[1] != inst.x_star.size:
            raise ConfigError("model instance dimensions are inconsistent")
        if not math.isfinite(inst.lam) or inst.lam < 0:
            raise ConfigError("lambda must be finite and non-negative")
        return inst

    @classmethod
    def from_json(cls, text: str) -> "ModelInstance":
        return cls.from_dict(json.loads(text))


def make_instance(A, alphabet: Alphabet, sigma: float, rng: np.random.Generator,
                  lam: float | None = None, seed: int | None = None) -> ModelInstance:
    A = np.asarray(A, dtype=float)
    x = sample_x_star(A.shape[1], alphabet, rng)
    y, v = simulate_observation(A, x, sigma, rng)
    if lam is None:
        lam = lambda_star(sigma, alphabet)
    return ModelInstance(A=A, x_star=x, sigma=sigma, y=y, lam=lam, seed=seed, v=v)
