"""Command-line entry point.

Exit status is 0 on success, 2 for invalid input or configuration and 3 when
a numerical procedure fails.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .detect import babai_box, babai_ordinary, babai_regularized
from .errors import ConfigError, NumericalError
from .experiments import RUNNERS, ExperimentConfig, monte_carlo_sp, persist
from .kernels import BACKEND
from .linalg import load_matrix_csv, make_rng, qr_factorize
from .model import Alphabet, ModelInstance, lambda_star, make_instance
from .permute import STRATEGIES, run_strategy
from .sp import sp_bb, sp_bound, sp_rb

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with default option values")
    p.add_argument("--seed", type=int, help="base seed for all random streams")
    p.add_argument("--scale", choices=["desk", "paper"], help="experiment size preset")
    p.add_argument("--out", type=Path, help="output directory (or file for single results)")


def _model_args(p: argparse.ArgumentParser, sigma=True) -> None:
    p.add_argument("--matrix", type=Path, help="matrix CSV")
    if sigma:
        p.add_argument("--sigma", type=float, help="noise standard deviation")
    p.add_argument("--M", type=int, help="alphabet half-size")
    p.add_argument("--p", type=float, help="probability of a nonzero symbol")
    p.add_argument("--lambda", dest="lam", type=float, help="regularization weight (default: MAP weight)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="l0babai", description="Sparse integer detection with L0-regularized Babai points.")
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="detect one instance")
    _common(d)
    _model_args(d)
    d.add_argument("--instance", type=Path, help="model instance JSON (A, x_star, sigma, y, lambda, seed)")
    d.add_argument("--detector", choices=["rb", "bb", "ob"], default="rb")
    d.add_argument("--save-instance", type=Path, help="write the generated instance as JSON")

    t = sub.add_parser("sp-theory", help="closed-form success probabilities")
    _common(t)
    _model_args(t)

    mc = sub.add_parser("sp-mc", help="Monte Carlo success probability")
    _common(mc)
    _model_args(mc)
    mc.add_argument("--trials", type=int, help="number of trials (default 100000)")
    mc.add_argument("--detector", choices=["rb", "bb"], default="rb")

    b = sub.add_parser("bounds", help="geometric-mean bound and its thresholds")
    _common(b)
    _model_args(b)

    pm = sub.add_parser("permute", help="apply a column ordering strategy")
    _common(pm)
    _model_args(pm)
    pm.add_argument("--strategy", choices=STRATEGIES, required=True)
    pm.add_argument("--delta", type=float, default=1.0)

    ex = sub.add_parser("experiment", help="run a reproduction experiment")
    ex.add_argument("name", choices=sorted(RUNNERS))
    _common(ex)
    ex.add_argument("--workers", type=int, help="worker threads")
    return ap


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _opt(args, cfg: dict, name: str, default=None, required=False):
    val = getattr(args, name, None)
    if val is None:
        val = cfg.get("lambda" if name == "lam" else name, default)
    if val is None and required:
        raise ConfigError(f"missing required option --{name}")
    return val


def _alphabet(args, cfg) -> Alphabet:
    return Alphabet(int(_opt(args, cfg, "M", required=True)), float(_opt(args, cfg, "p", required=True)))


def _triangular(args, cfg) -> np.ndarray:
    path = _opt(args, cfg, "matrix", required=True)
    try:
        A = load_matrix_csv(path)
    except OSError as exc:
        raise ConfigError(f"cannot read matrix {path}: {exc}") from exc
    return qr_factorize(A)[1]


def _sigma(args, cfg) -> float:
    s = float(_opt(args, cfg, "sigma", required=True))
    if s <= 0:
        raise ConfigError("sigma must be positive")
    return s


def _emit(obj: dict, out: Path | None) -> None:
    text = json.dumps(obj, indent=2)
    if out is None:
        print(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n")
        print(f"wrote {out}")


def _table(rows: list[tuple[str, float]]) -> None:
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k:<{width}}  {v:.4f}" if isinstance(v, float) else f"{k:<{width}}  {v}")


def cmd_detect(args, cfg) -> None:
    a = _alphabet(args, cfg)
    if args.instance:
        try:
            inst = ModelInstance.from_json(args.instance.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read instance: {exc}") from exc
    else:
        A = load_matrix_csv(_opt(args, cfg, "matrix", required=True))
        sigma = _sigma(args, cfg)
        seed = int(_opt(args, cfg, "seed", default=0))
        inst = make_instance(A, a, sigma, make_rng(seed), lam=_opt(args, cfg, "lam"), seed=seed)
        if args.save_instance:
            args.save_instance.write_text(inst.to_json() + "\n")
    Q, R = qr_factorize(inst.A)
    yt = Q.T @ inst.y
    if args.detector == "rb":
        res = babai_regularized(R, yt, inst.lam, a)
    elif args.detector == "bb":
        res = babai_box(R, yt, a)
    else:
        res = babai_ordinary(R, yt)
    out = {"detector": args.detector, **res.to_dict(),
           "x_star": [int(v) for v in inst.x_star],
           "success": bool(np.array_equal(res.x_hat, inst.x_star))}
    _emit(out, args.out)


def cmd_sp_theory(args, cfg) -> None:
    a = _alphabet(args, cfg)
    R = _triangular(args, cfg)
    sigma = _sigma(args, cfg)
    lam = _opt(args, cfg, "lam")
    lam = lambda_star(sigma, a) if lam is None else float(lam)
    rb, bb = sp_rb(R, sigma, lam, a), sp_bb(R, sigma, a)
    if args.out:
        _emit({"sigma": sigma, "lambda": lam, "rb": rb.to_dict(), "bb": bb.to_dict()}, args.out)
    _table([("lambda", lam), ("sp_rb", rb.total), ("sp_bb", bb.total)])


def cmd_sp_mc(args, cfg) -> None:
    a = _alphabet(args, cfg)
    R = _triangular(args, cfg)
    sigma = _sigma(args, cfg)
    lam = _opt(args, cfg, "lam")
    lam = lambda_star(sigma, a) if lam is None else float(lam)
    if args.detector == "bb":
        lam = 0.0
    trials = int(_opt(args, cfg, "trials", default=100_000))
    if trials < 1:
        raise ConfigError("trials must be positive")
    est = monte_carlo_sp(R, sigma, lam, a, trials, make_rng(int(_opt(args, cfg, "seed", default=0))))
    theory = sp_rb(R, sigma, lam, a).total
    if args.out:
        _emit({**est.to_dict(), "theory": theory, "lambda": lam, "backend": BACKEND}, args.out)
    _table([("estimate", est.estimate), ("ci95", est.ci95), ("theory", theory), ("trials", est.trials)])


def cmd_bounds(args, cfg) -> None:
    a = _alphabet(args, cfg)
    rep = sp_bound(_triangular(args, cfg), _sigma(args, cfg), a)
    if args.out:
        _emit(rep.to_dict(), args.out)
    _table([("mu1", rep.mu1), ("mu2", rep.mu2), ("omega", rep.omega), ("side", rep.side), ("bound", rep.bound_value)])


def cmd_permute(args, cfg) -> None:
    R = _triangular(args, cfg)
    sigma = _opt(args, cfg, "sigma")
    M, p = _opt(args, cfg, "M"), _opt(args, cfg, "p")
    a = Alphabet(int(M), float(p)) if M is not None and p is not None else None
    lam = _opt(args, cfg, "lam")
    if sigma is not None and a is not None and lam is None:
        lam = lambda_star(float(sigma), a)
    if args.strategy in ("gsp", "msp") and (sigma is None or a is None):
        raise ConfigError(f"{args.strategy} needs --sigma, --M and --p")
    out = run_strategy(args.strategy, R, sigma, lam, a, delta=float(_opt(args, cfg, "delta", default=1.0)))
    _emit(out.to_dict(), args.out)


def cmd_experiment(args, cfg) -> None:
    cfg = {**cfg, "experiment": args.name}
    ec = ExperimentConfig.from_dict(cfg, seed=args.seed, scale=args.scale, workers=args.workers)
    rows = RUNNERS[args.name](ec)
    out_dir = args.out or Path(ec.out or f"results/{args.name}")
    csv_path, man_path = persist(ec, rows, out_dir)
    for r in rows[:40]:
        print("  ".join(f"{v:.4f}" if isinstance(v, float) else str(v) for v in r.values()))
    if len(rows) > 40:
        print(f"... {len(rows) - 40} more rows")
    print(f"wrote {csv_path} and {man_path}")


COMMANDS = {
    "detect": cmd_detect,
    "sp-theory": cmd_sp_theory,
    "sp-mc": cmd_sp_mc,
    "bounds": cmd_bounds,
    "permute": cmd_permute,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        COMMANDS[args.command](args, cfg)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
