"""Monte Carlo estimation, an exhaustive oracle and the experiment drivers.

Every random quantity is drawn from a stream keyed by ``(seed, block...)``
so results do not depend on how blocks are spread over worker threads.
Aggregation is integer summation or ordered averaging, both independent of
completion order.
"""
from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, InstanceTooLargeError
from .kernels import BACKEND, babai_batch, count_successes
from .linalg import generate_matrix, make_rng, qr_factorize
from .model import Alphabet, lambda_star, sample_x_star
from .permute import lll_p, run_strategy
from .sp import log_sp_rb, mu_for_alphabet, sp_bb, sp_rb

BRUTE_FORCE_LIMIT = 10**7
CHUNK = 50_000

# stream tags, one per experiment family
_FIG1, _LLL, _TABLES, _CHANGE, _MC = 1, 2, 3, 4, 5

STRATEGY_LABELS = {"none": "No", "lllp": "LLL-P", "sqrd": "SQRD", "lsp": "LSP", "gsp": "GSP", "msp": "MSP"}
BB_STRATEGIES = ("none", "lllp", "sqrd", "lsp")
RB_STRATEGIES = ("none", "lllp", "sqrd", "lsp", "gsp", "msp")


@dataclass
class McEstimate:
    successes: int
    trials: int

    @property
    def estimate(self) -> float:
        return self.successes / self.trials

    @property
    def ci95(self) -> float:
        e = self.estimate
        return 1.96 * math.sqrt(e * (1.0 - e) / self.trials)

    def brackets(self, value: float, k: float = 3.0) -> bool:
        return abs(self.estimate - value) <= k * self.ci95

    def to_dict(self) -> dict:
        return {"successes": self.successes, "trials": self.trials,
                "estimate": self.estimate, "ci95": self.ci95}


def clustered_ci95(cluster_hits: np.ndarray, cluster_size: int) -> float:
    """95% half-width from the spread of per-cluster success rates.

    Trials that share one ``x*`` are correlated, so the binomial half-width
    understates the uncertainty when each ``x*`` is reused across noise draws.
    """
    rates = np.asarray(cluster_hits, dtype=float) / cluster_size
    if rates.size < 2:
        return float("nan")
    return 1.96 * float(np.std(rates, ddof=1)) / math.sqrt(rates.size)


def _draw_trials(R, sigma, alphabet, trials, rng):
    n = R.shape[0]
    X = sample_x_star(n, alphabet, rng, size=trials)
    Y = X @ R.T + sigma * rng.standard_normal((trials, n))
    return X, Y


def monte_carlo_sp(R, sigma: float, lam: float, alphabet: Alphabet, trials: int,
                   rng: np.random.Generator) -> McEstimate:
    """Fraction of random instances on which the regularized detector is exact.

    Each trial draws a fresh ``x*`` from the prior and fresh noise, forms
    ``y_tilde = R x* + v`` and checks the detected vector for exact equality.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    R = np.asarray(R, dtype=float)
    hits = 0
    done = 0
    while done < trials:
        t = min(CHUNK, trials - done)
        X, Y = _draw_trials(R, sigma, alphabet, t, rng)
        hits += count_successes(R, Y, X, lam, alphabet.M)
        done += t
    return McEstimate(hits, trials)


def brute_force_map(R, y_tilde, lam: float, alphabet: Alphabet) -> np.ndarray:
    """Exhaustive minimizer of ``0.5||y - R x||^2 + lam ||x||_0`` over the alphabet.

    Ties go to the lexicographically smallest vector.
    """
    R = np.asarray(R, dtype=float)
    y = np.asarray(y_tilde, dtype=float)
    n = R.shape[1]
    members = alphabet.members
    size = len(members) ** n
    if size > BRUTE_FORCE_LIMIT:
        raise InstanceTooLargeError(f"{len(members)}^{n} candidates exceed the limit of {BRUTE_FORCE_LIMIT}")
    tail = 1
    while tail < n and len(members) ** (tail + 1) <= 100_000:
        tail += 1
    tail = min(tail, n)
    head = n - tail
    tail_grid = np.array(list(itertools.product(members, repeat=tail)), dtype=float).reshape(-1, tail)
    tail_nnz = np.count_nonzero(tail_grid, axis=1)
    best_val, best_x = np.inf, None
    for h in itertools.product(members, repeat=head):
        h = np.array(h, dtype=float)
        resid = y - R[:, :head] @ h
        r = resid[None, :] - tail_grid @ R[:, head:].T
        val = 0.5 * np.einsum("ij,ij->i", r, r) + lam * (np.count_nonzero(h) + tail_nnz)
        i = int(np.argmin(val))
        if val[i] < best_val:
            best_val, best_x = val[i], np.concatenate([h, tail_grid[i]])
    return best_x.astype(np.int64)


# configuration -------------------------------------------------------------

_SCALES = {
    "figure1": {"desk": (20, 100, 100), "paper": (100, 100, 100)},
    "lll-direction": {"desk": (20, 1, 1), "paper": (1000, 1, 1)},
    "sp-tables": {"desk": (20, 100, 100), "paper": (500, 500, 500)},
    "sp-change": {"desk": (20, 1, 1), "paper": (1000, 1, 1)},
}

_DEFAULT_SIGMAS = {
    "figure1": {"type1": [round(0.05 * i, 2) for i in range(1, 11)],
                "type2": [round(0.05 * i, 2) for i in range(1, 11)]},
    "sp-tables": {"type1": [0.05, 0.10, 0.50, 0.80, 1.00, 1.50, 2.00],
                  "type2": [0.01, 0.03, 0.05, 0.10, 0.20, 0.30, 0.50]},
    "sp-change": {"type1": [0.2, 0.5, 1.5], "type2": [0.2, 0.5, 1.5]},
    "lll-direction": {"type1": [], "type2": []},
}

_DEFAULT_P = {"figure1": [0.3, 0.7], "lll-direction": [0.3, 0.7], "sp-tables": [0.3], "sp-change": [0.3, 0.7]}


@dataclass
class ExperimentConfig:
    """Settings shared by the experiment drivers.

    ``sigmas`` maps a matrix type to its noise levels; when left empty the
    per-experiment defaults apply.
    """

    experiment: str = "figure1"
    matrix_types: list = field(default_factory=lambda: ["type1", "type2"])
    n: int = 20
    m: int = 20
    M: int = 4
    p_list: list = field(default_factory=list)
    sigmas: dict = field(default_factory=dict)
    matrices: int = 0
    x_vectors: int = 0
    noise_draws: int = 0
    strategies: list = field(default_factory=lambda: list(RB_STRATEGIES))
    seed: int = 0
    scale: str = "desk"
    delta: float = 1.0
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        if self.experiment not in _SCALES:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.scale not in ("desk", "paper"):
            raise ConfigError(f"scale must be 'desk' or 'paper', got {self.scale!r}")
        mats, xs, noise = _SCALES[self.experiment][self.scale]
        self.matrices = self.matrices or mats
        self.x_vectors = self.x_vectors or xs
        self.noise_draws = self.noise_draws or noise
        self.p_list = [float(p) for p in (self.p_list or _DEFAULT_P[self.experiment])]
        defaults = _DEFAULT_SIGMAS[self.experiment]
        if isinstance(self.sigmas, (list, tuple)):
            self.sigmas = {t: list(self.sigmas) for t in self.matrix_types}
        self.sigmas = {t: [float(s) for s in self.sigmas.get(t, defaults.get(t, []))] for t in self.matrix_types}
        self._validate()

    def _validate(self):
        for t in self.matrix_types:
            if t not in ("type1", "type2"):
                raise ConfigError(f"unknown matrix type {t!r}")
            if self.experiment != "lll-direction" and not self.sigmas[t]:
                raise ConfigError(f"empty sigma list for {t}")
            if any(s <= 0 for s in self.sigmas[t]):
                raise ConfigError("noise levels must be positive")
        if min(self.matrices, self.x_vectors, self.noise_draws) < 1:
            raise ConfigError("all counts must be at least 1")
        if self.n < 1 or self.m < self.n:
            raise ConfigError("need 1 <= n <= m")
        if "type2" in self.matrix_types and self.m != self.n:
            raise ConfigError("type 2 matrices are square; set m == n")
        for p in self.p_list:
            Alphabet(self.M, p)
        bad = set(self.strategies) - set(RB_STRATEGIES)
        if bad:
            raise ConfigError(f"unknown strategies: {sorted(bad)}")
        if self.workers < 1:
            raise ConfigError("workers must be positive")

    @classmethod
    def from_dict(cls, d: dict, **overrides) -> "ExperimentConfig":
        d = {**d, **{k: v for k, v in overrides.items() if v is not None}}
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return asdict(self)


def _matrix(cfg: ExperimentConfig, kind: str, *block) -> np.ndarray:
    rng = make_rng(cfg.seed, *block, 0)
    if kind == "type1" and cfg.m != cfg.n:
        return rng.standard_normal((cfg.m, cfg.n))
    return generate_matrix(kind, cfg.n, rng)


def _pmap(cfg: ExperimentConfig, fn, items):
    if cfg.workers == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(cfg.workers) as ex:
        return list(ex.map(fn, items))


def _type_id(kind: str) -> int:
    return 1 if kind == "type1" else 2


def classify_change(log_before: float, log_after: float, rtol: float = 1e-12) -> str:
    """``increase``, ``decrease`` or ``none`` for a pair of log success probabilities."""
    d = log_after - log_before
    if abs(d) <= rtol:
        return "none"
    return "increase" if d > 0 else "decrease"


# experiments ---------------------------------------------------------------

def run_figure1(cfg: ExperimentConfig) -> list[dict]:
    """Theoretical and simulated SP curves of both detectors versus noise level.

    Returns rows ``{matrix_type, sigma, series, value}``; series names carry
    the sparsity level, e.g. ``TH-RBSP p=0.3``.
    """
    rows = []
    trials = cfg.x_vectors * cfg.noise_draws
    for kind in cfg.matrix_types:
        for si, sigma in enumerate(cfg.sigmas[kind]):
            for pi, p in enumerate(cfg.p_list):
                a = Alphabet(cfg.M, p)
                lam = lambda_star(sigma, a)

                def one(i, kind=kind, si=si, pi=pi, a=a, lam=lam, sigma=sigma):
                    R = qr_factorize(_matrix(cfg, kind, _FIG1, _type_id(kind), si, i))[1]
                    blk = (_FIG1, _type_id(kind), si, i, 1 + pi)
                    rb = monte_carlo_sp(R, sigma, lam, a, trials, make_rng(cfg.seed, *blk, 0))
                    bb = monte_carlo_sp(R, sigma, 0.0, a, trials, make_rng(cfg.seed, *blk, 1))
                    return sp_rb(R, sigma, lam, a).total, sp_bb(R, sigma, a).total, rb.successes, bb.successes

                res = _pmap(cfg, one, range(cfg.matrices))
                th_rb, th_bb, s_rb, s_bb = (np.array(c) for c in zip(*res))
                tot = trials * cfg.matrices
                est_rb = McEstimate(int(s_rb.sum()), tot)
                est_bb = McEstimate(int(s_bb.sum()), tot)
                tag = f"p={p:g}"
                for series, value in [
                    (f"TH-RBSP {tag}", th_rb.mean()), (f"TH-BBSP {tag}", th_bb.mean()),
                    (f"EXP-RBSP {tag}", est_rb.estimate), (f"EXP-BBSP {tag}", est_bb.estimate),
                    (f"CI95-RBSP {tag}", est_rb.ci95), (f"CI95-BBSP {tag}", est_bb.ci95),
                ]:
                    rows.append({"matrix_type": kind, "sigma": sigma, "series": series, "value": float(value)})
    return rows


def lll_direction_sigmas(R, alphabet: Alphabet) -> tuple[float, float]:
    """Noise levels placing every diagonal entry inside each bound's region."""
    mu1, mu2 = mu_for_alphabet(alphabet)
    d = np.diag(R)
    return d.min() / (2 * math.sqrt(2) * mu2), d.max() * math.sqrt(2) / mu1


def run_lll_direction(cfg: ExperimentConfig) -> list[dict]:
    """Tally how LLL-P changes the theoretical SP at two derived noise levels."""
    rows = []
    for kind in cfg.matrix_types:
        for pi, p in enumerate(cfg.p_list):
            a = Alphabet(cfg.M, p)

            def one(i, kind=kind, a=a):
                R = qr_factorize(_matrix(cfg, kind, _LLL, _type_id(kind), i))[1]
                out = lll_p(R, cfg.delta)
                res = []
                for sigma in lll_direction_sigmas(R, a):
                    lam = lambda_star(sigma, a)
                    res.append(classify_change(log_sp_rb(R, sigma, lam, a), log_sp_rb(out.R_hat, sigma, lam, a)))
                return res

            outcomes = _pmap(cfg, one, range(cfg.matrices))
            for bi, label in enumerate(("sigma1", "sigma2")):
                tally = {"increase": 0, "decrease": 0, "none": 0}
                for o in outcomes:
                    tally[o[bi]] += 1
                for outcome, count in tally.items():
                    rows.append({"matrix_type": kind, "p": p, "sigma": label, "outcome": outcome, "count": count})
    return rows


def _strategy_outcome(name, A, R, sigma, lam, a, delta):
    if name == "none":
        return np.arange(R.shape[0]), R
    out = run_strategy(name, R, sigma, lam, a, A=A, delta=delta)
    return out.perm, out.R_hat


def run_sp_permutation_tables(cfg: ExperimentConfig) -> list[dict]:
    """Mean simulated SP of both detectors under each ordering strategy.

    One row per (matrix type, p, sigma, detector, strategy) cell with the
    simulated estimate, its binomial 95% half-width, a half-width that
    accounts for each ``x*`` being reused across noise draws, and the mean
    theoretical SP.
    """
    rows = []
    trials = cfg.x_vectors * cfg.noise_draws
    for kind in cfg.matrix_types:
        for pi, p in enumerate(cfg.p_list):
            a = Alphabet(cfg.M, p)
            for si, sigma in enumerate(cfg.sigmas[kind]):
                lam = lambda_star(sigma, a)
                cells = [("RB", s) for s in RB_STRATEGIES if s in cfg.strategies]
                cells = [("BB", s) for s in BB_STRATEGIES if s in cfg.strategies] + cells

                def one(i, kind=kind, si=si, pi=pi, a=a, lam=lam, sigma=sigma, cells=cells):
                    A = _matrix(cfg, kind, _TABLES, _type_id(kind), pi, si, i)
                    R = qr_factorize(A)[1]
                    rng = make_rng(cfg.seed, _TABLES, _type_id(kind), pi, si, i, 1)
                    # common draws shared by every strategy of this matrix
                    X = sample_x_star(cfg.n, a, rng, size=cfg.x_vectors)
                    X = np.repeat(X, cfg.noise_draws, axis=0)
                    V = sigma * rng.standard_normal((trials, cfg.n))
                    cache, res = {}, []
                    for det, strat in cells:
                        if strat not in cache:
                            cache[strat] = _strategy_outcome(strat, A, R, sigma, lam, a, cfg.delta)
                        perm, Rh = cache[strat]
                        Xp = X[:, perm]
                        Y = Xp @ Rh.T + V
                        w = lam if det == "RB" else 0.0
                        ok = np.all(babai_batch(Rh, Y, w, a.M) == Xp, axis=1)
                        hits = ok.reshape(cfg.x_vectors, cfg.noise_draws).sum(axis=1)
                        th = sp_rb(Rh, sigma, lam, a).total if det == "RB" else sp_bb(Rh, sigma, a).total
                        res.append((hits, th))
                    return res

                res = _pmap(cfg, one, range(cfg.matrices))
                for ci, (det, strat) in enumerate(cells):
                    clusters = np.concatenate([r[ci][0] for r in res])
                    est = McEstimate(int(clusters.sum()), trials * cfg.matrices)
                    rows.append({
                        "matrix_type": kind, "p": p, "sigma": sigma, "detector": det,
                        "strategy": STRATEGY_LABELS[strat], "value": est.estimate, "ci95": est.ci95,
                        "ci95_clustered": clustered_ci95(clusters, cfg.noise_draws),
                        "theory": float(np.mean([r[ci][1] for r in res])),
                    })
    return rows


def run_sp_change_tables(cfg: ExperimentConfig) -> list[dict]:
    """Count strict increases, strict decreases and no-changes of the theoretical SP per strategy."""
    rows = []
    strategies = [s for s in cfg.strategies if s != "none"]
    for kind in cfg.matrix_types:
        for pi, p in enumerate(cfg.p_list):
            a = Alphabet(cfg.M, p)
            for si, sigma in enumerate(cfg.sigmas[kind]):
                lam = lambda_star(sigma, a)

                def one(i, kind=kind, pi=pi, si=si, a=a, lam=lam, sigma=sigma):
                    A = _matrix(cfg, kind, _CHANGE, _type_id(kind), pi, si, i)
                    R = qr_factorize(A)[1]
                    before = log_sp_rb(R, sigma, lam, a)
                    out = []
                    for s in strategies:
                        _, Rh = _strategy_outcome(s, A, R, sigma, lam, a, cfg.delta)
                        out.append(classify_change(before, log_sp_rb(Rh, sigma, lam, a)))
                    return out

                res = _pmap(cfg, one, range(cfg.matrices))
                for k, s in enumerate(strategies):
                    tally = {"increase": 0, "decrease": 0, "none": 0}
                    for r in res:
                        tally[r[k]] += 1
                    for outcome, count in tally.items():
                        rows.append({"matrix_type": kind, "p": p, "sigma": sigma,
                                     "strategy": STRATEGY_LABELS[s], "outcome": outcome, "count": count})
    return rows


RUNNERS = {
    "figure1": run_figure1,
    "lll-direction": run_lll_direction,
    "sp-tables": run_sp_permutation_tables,
    "sp-change": run_sp_change_tables,
}


# persistence ---------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    return v


def write_rows_csv(path, rows: list[dict]) -> None:
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})


def persist(cfg: ExperimentConfig, rows: list[dict], out_dir) -> tuple[Path, Path]:
    """Write ``<experiment>.csv`` and a JSON manifest with a content hash."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{cfg.experiment}.csv"
    write_rows_csv(csv_path, rows)
    digest = hashlib.sha256(csv_path.read_bytes()).hexdigest()
    manifest = {
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "content_sha256": digest,
        "backend": BACKEND,
        "version": __version__,
        "results": csv_path.name,
    }
    man_path = out / f"{cfg.experiment}.manifest.json"
    man_path.write_text(json.dumps(manifest, indent=2))
    return csv_path, man_path
