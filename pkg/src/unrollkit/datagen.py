"""Synthetic problem families with planted ground truth.

A dataset is a plain ``dict`` of float64 arrays. Metadata scalars are stored
as 1x1 arrays so the whole dict serializes straight into a URK1 container;
read them back with :func:`scalar`.
"""

import numpy as np

from .dense import eye, gaussian_matrix, matmul, power_iteration, transpose
from .errors import ContractError
from .rng import Rng
from .solvers import ista_solve

__all__ = [
    "KIND_SPARSE", "KIND_RPCA", "KIND_LSPARCOM", "scalar", "gen_dictionary",
    "gen_sparse_coding_dataset", "gen_rpca_dataset", "psf_dictionary",
    "gen_lsparcom_dataset", "STANDARD_FAMILY",
]

KIND_SPARSE, KIND_RPCA, KIND_LSPARCOM = 1, 2, 3

STANDARD_FAMILY = dict(n=20, m=40, k=3, t_train=1000, t_test=200, noise_sigma=0.01,
                       lambda_sup=0.1, seed=1)


def _s(v):
    return np.array([[float(v)]])


def scalar(ds, name):
    return float(ds[name][0, 0])


def _dictionary(n, m, rng):
    w = gaussian_matrix(n, m, rng)
    norms = np.sqrt(np.sum(w * w, axis=0))
    return w / norms


def gen_dictionary(n, m, seed):
    """Gaussian ``n x m`` dictionary with unit-norm columns."""
    if n < 1 or m < 1:
        raise ContractError("dictionary dimensions must be positive")
    return _dictionary(n, m, Rng(seed))


def _choose(rng, population, k):
    """``k`` distinct indices by a partial Fisher-Yates pass."""
    pool = list(range(population))
    for i in range(k):
        j = i + rng.below(population - i)
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k]


def _planted_codes(rng, m, k, count):
    x = np.zeros((m, count))
    for t in range(count):
        for idx in _choose(rng, m, k):
            sign = -1.0 if rng.uniform() < 0.5 else 1.0
            x[idx, t] = sign * (0.5 + rng.uniform())
    return x


def gen_sparse_coding_dataset(n, m, k, t_train, t_test, noise_sigma, lambda_sup, seed,
                              ista_tol=1e-10, ista_max_iters=200000):
    """Sparse-coding pairs ``y = W x + noise`` with converged-ISTA targets.

    ``X_*`` hold the supervision targets (ISTA on each ``y`` with
    ``lambda_sup``), ``P_*`` the planted ``k``-sparse codes.
    """
    if not 0 <= k <= m:
        raise ContractError(f"k={k} must lie in [0, m={m}]")
    if t_train < 0 or t_test < 0 or noise_sigma < 0:
        raise ContractError("counts and noise level must be nonnegative")
    rng = Rng(seed)
    w = _dictionary(n, m, rng)
    planted = _planted_codes(rng, m, k, t_train + t_test)
    y = matmul(w, planted) + noise_sigma * gaussian_matrix(n, t_train + t_test, rng)
    mu = 1.01 * power_iteration(w, seed=seed)
    trace = ista_solve(w, y, lambda_sup, mu, max_iters=ista_max_iters, tol=ista_tol)
    iters = trace.column_iterations
    ds = {
        "W": w,
        "Y_train": y[:, :t_train], "Y_test": y[:, t_train:],
        "X_train": trace.x[:, :t_train], "X_test": trace.x[:, t_train:],
        "P_train": planted[:, :t_train], "P_test": planted[:, t_train:],
        "seed": _s(seed), "k": _s(k), "noise_sigma": _s(noise_sigma),
        "lambda_sup": _s(lambda_sup), "kind": _s(KIND_SPARSE), "mu": _s(mu),
        "ista_mean_iters": _s(iters.mean() if iters.size else 0.0),
    }
    return ds


def gen_rpca_dataset(rows, cols, rank, density, amplitude, seed, h1=None, h2=None):
    """Low-rank ``A B^T`` plus Bernoulli-support ``+-amplitude`` sparse part.

    ``Y = H1 L + H2 S`` with identity measurement matrices unless given.
    """
    if not 0 <= rank <= min(rows, cols):
        raise ContractError(f"rank {rank} exceeds min({rows}, {cols})")
    if not 0.0 <= density <= 1.0:
        raise ContractError("density must lie in [0, 1]")
    rng = Rng(seed)
    a = gaussian_matrix(rows, rank, rng)
    b = gaussian_matrix(cols, rank, rng)
    low = matmul(a, transpose(b))
    sparse = np.zeros((rows, cols))
    for i in range(rows):
        for j in range(cols):
            if rng.uniform() < density:
                sparse[i, j] = amplitude if rng.uniform() < 0.5 else -amplitude
    h1 = eye(rows) if h1 is None else np.asarray(h1, dtype=np.float64)
    h2 = eye(rows) if h2 is None else np.asarray(h2, dtype=np.float64)
    y = matmul(h1, low) + matmul(h2, sparse)
    return {
        "Y": y, "H1": h1, "H2": h2, "Lmat": low, "Smat": sparse,
        "seed": _s(seed), "rank": _s(rank), "density": _s(density),
        "amplitude": _s(amplitude), "kind": _s(KIND_RPCA),
    }


def psf_dictionary(n, m, sigma=1.0, radius=3.0):
    """Map from an ``m x m`` emitter grid to ``n x n`` low-resolution pixels.

    Each column is a Gaussian spot (``sigma`` low-resolution pixels, zero
    beyond ``radius`` sigmas) drawn on the fine grid and block-averaged down
    by the factor ``m // n``. Columns follow the fine grid in row-major order.
    """
    if n < 1 or m % n:
        raise ContractError(f"fine grid {m} must be a positive multiple of {n}")
    f = m // n
    sd = sigma * f
    ii, jj = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    w = np.zeros((n * n, m * m))
    for p in range(m):
        for q in range(m):
            d2 = (ii - p) ** 2 + (jj - q) ** 2
            fine = np.where(d2 <= (radius * sd) ** 2, np.exp(-d2 / (2.0 * sd * sd)), 0.0)
            coarse = fine.reshape(n, f, n, f).mean(axis=(1, 3))
            w[:, p * m + q] = coarse.ravel()
    return w


def gen_lsparcom_dataset(n, m, emitters, t, seed, t_test=0, noise_sigma=0.0):
    """Variance-image pairs ``g_Y = W x`` with nonnegative sparse emitter maps."""
    if emitters < 0 or emitters > m * m:
        raise ContractError("emitter count out of range")
    w = psf_dictionary(n, m)
    rng = Rng(seed)
    total = t + t_test
    x = np.zeros((m * m, total))
    for c in range(total):
        for idx in _choose(rng, m * m, emitters):
            x[idx, c] = 0.5 + rng.uniform()
    g = matmul(w, x)
    if noise_sigma > 0:
        g = g + noise_sigma * gaussian_matrix(n * n, total, rng)
    return {
        "W": w, "Y_train": g[:, :t], "Y_test": g[:, t:],
        "X_train": x[:, :t], "X_test": x[:, t:], "P_train": x[:, :t], "P_test": x[:, t:],
        "seed": _s(seed), "k": _s(emitters), "noise_sigma": _s(noise_sigma),
        "grid_n": _s(n), "grid_m": _s(m), "kind": _s(KIND_LSPARCOM),
    }
