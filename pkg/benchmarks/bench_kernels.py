"""Time the compiled detection kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--trials 20000] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from l0babai import _fallback
from l0babai.linalg import make_rng, qr_factorize
from l0babai.model import Alphabet, lambda_star, sample_x_star

try:
    from l0babai import _kernels
except ImportError:
    _kernels = None


def _problem(n, trials, seed=0):
    rng = make_rng(seed)
    a = Alphabet(4, 0.3)
    sigma = 0.3
    R = qr_factorize(rng.standard_normal((n, n)))[1]
    X = sample_x_star(n, a, rng, size=trials)
    Y = X @ R.T + sigma * rng.standard_normal(X.shape)
    return R, X, Y, lambda_star(sigma, a), a.M


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", type=int, nargs="+", default=[4, 20, 64])
    args = ap.parse_args()

    backends = [("python", _fallback)]
    if _kernels is not None:
        backends.append(("compiled", _kernels))
    else:
        print("compiled extension not built; timing the fallback only")

    print(f"{'n':>4} {'kernel':<16} " + " ".join(f"{b:>12}" for b, _ in backends) + f" {'speedup':>9}")
    for n in args.sizes:
        R, X, Y, lam, M = _problem(n, args.trials)
        for label, call in [
            ("babai_batch", lambda m: m.babai_batch(R, Y, lam, M, m.MODE_REGULARIZED)),
            ("count_successes", lambda m: m.count_successes(R, Y, X, lam, M)),
        ]:
            results = [call(m) for _, m in backends]
            if len(results) == 2:
                assert np.array_equal(results[0], results[1]), "backends disagree"
            times = [min(timeit.repeat(lambda m=m: call(m), number=1, repeat=args.repeat)) for _, m in backends]
            speed = f"{times[0] / times[1]:9.2f}" if len(times) == 2 else f"{'-':>9}"
            print(f"{n:>4} {label:<16} " + " ".join(f"{t * 1e3:10.2f}ms" for t in times) + f" {speed}")


if __name__ == "__main__":
    main()
