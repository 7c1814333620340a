"""Pure numpy implementations of the batch kernels.

Each routine is vectorized across trials and loops over levels only.
"""
import numpy as np

MODE_REGULARIZED = 0
MODE_ORDINARY = 1


def babai_batch(R, Y, lam, M, mode=MODE_REGULARIZED):
    """Run the sequential Babai recursion for every row of ``Y``.

    Parameters
    ----------
    R : ndarray, shape (n, n)
    Y : ndarray, shape (T, n)
        One transformed observation per row.
    lam : float
        Regularization weight; ``0`` gives the box-constrained point.
    M : int
        Alphabet half-size (ignored in ordinary mode).
    mode : int
        ``MODE_REGULARIZED`` or ``MODE_ORDINARY``.

    Returns
    -------
    ndarray of int64, shape (T, n)
    """
    R = np.ascontiguousarray(R, dtype=float)
    Y = np.ascontiguousarray(Y, dtype=float)
    T, n = Y.shape
    X = np.zeros((T, n), dtype=float)
    top = 2 * M - 1
    for k in range(n - 1, -1, -1):
        rkk = R[k, k]
        c = (Y[:, k] - X[:, k + 1:] @ R[k, k + 1:]) / rkk
        a = np.abs(c)
        if mode == MODE_ORDINARY:
            X[:, k] = np.sign(c) * np.ceil(a - 0.5)
            continue
        z = np.where(a <= 0.5, 0.0, np.copysign(np.minimum(2.0 * np.ceil(a / 2.0) - 1.0, top), c))
        r2 = rkk * rkk
        g = 0.5 * r2 * z * z - r2 * z * c + lam
        X[:, k] = np.where(g >= 0.0, 0.0, z)
    return X.astype(np.int64)


def count_successes(R, Y, X_true, lam, M):
    X = babai_batch(R, Y, lam, M, MODE_REGULARIZED)
    return int(np.count_nonzero(np.all(X == X_true, axis=1)))
