"""Threshold and proximal operators.

All operators use the convention ``prox(z) = argmin_u  lam * g(u) + 0.5 * ||u - z||^2``.
"""

import numpy as np

from .dense import as_matrix, matmul, svd, transpose
from .errors import ContractError

__all__ = [
    "soft_threshold", "hard_threshold_topk", "sigmoid_plus_threshold",
    "row_group_soft_threshold", "singular_value_threshold", "svt_with_values",
    "prox_bruteforce_oracle", "PENALTIES",
]


def _nonneg(lam, name="lambda"):
    lam = float(lam)
    if not lam >= 0.0:
        raise ContractError(f"{name} must be >= 0, got {lam}")
    return lam


def soft_threshold(x, lam):
    """Entrywise ``sign(x) * max(|x| - lam, 0)``."""
    lam = _nonneg(lam)
    x = as_matrix(x)
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def hard_threshold_topk(x, k):
    """Keep the ``k`` largest-magnitude entries of ``x``, zero the rest.

    Among equal magnitudes the entry with the lowest flat (row-major) index
    is kept first.
    """
    x = as_matrix(x)
    k = int(k)
    if not 0 <= k <= x.size:
        raise ContractError(f"k={k} outside [0, {x.size}]")
    flat = x.ravel()
    # stable sort on -|x| keeps lower indices ahead of ties
    keep = np.argsort(-np.abs(flat), kind="stable")[:k]
    out = np.zeros_like(flat)
    out[keep] = flat[keep]
    return out.reshape(x.shape)


def topk_mask(x, k):
    """Boolean mask selected by :func:`hard_threshold_topk`."""
    flat = np.asarray(x).ravel()
    mask = np.zeros(flat.shape, dtype=bool)
    mask[np.argsort(-np.abs(flat), kind="stable")[:int(k)]] = True
    return mask.reshape(np.shape(x))


def sigmoid_plus_threshold(x, alpha, beta):
    """Smooth one-sided threshold ``max(0, x) / (1 + exp(-beta (|x| - alpha)))``."""
    beta = float(beta)
    if not beta > 0.0:
        raise ContractError(f"beta must be > 0, got {beta}")
    x = as_matrix(x)
    gate = _sigmoid(beta * (np.abs(x) - float(alpha)))
    return np.maximum(x, 0.0) * gate


def _sigmoid(t):
    # split by sign so exp never overflows
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def row_group_soft_threshold(s, lam):
    """Shrink each row ``r`` to ``r * max(0, 1 - lam / ||r||_2)``."""
    lam = _nonneg(lam)
    s = as_matrix(s)
    norms = np.sqrt(np.sum(s * s, axis=1, keepdims=True))
    safe = np.where(norms > 0, norms, 1.0)
    factor = np.where(norms > lam, 1.0 - lam / safe, 0.0)
    return s * factor


def singular_value_threshold(x, lam):
    """Soft-threshold the singular values of ``x``."""
    return svt_with_values(x, lam)[0]


def svt_with_values(x, lam):
    """Like :func:`singular_value_threshold` but also returns the shrunk spectrum."""
    lam = _nonneg(lam)
    res = svd(x)
    shrunk = np.maximum(res.s - lam, 0.0)
    return matmul(res.u * shrunk[None, :], transpose(res.v)), shrunk


# penalty(u) evaluated on a scalar grid; group penalties are handled per row
PENALTIES = {
    "zero": lambda u: np.zeros_like(u),
    "l1": np.abs,
}


def _scalar_argmin(obj, lo, hi, step):
    grid = np.arange(lo, hi + step, step)
    vals = obj(grid)
    i = int(np.argmin(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, grid.size - 1)]
    for _ in range(100):
        if b - a < 1e-12:
            break
        m1 = a + (b - a) / 3.0
        m2 = b - (b - a) / 3.0
        if obj(np.array([m1]))[0] <= obj(np.array([m2]))[0]:
            b = m2
        else:
            a = m1
    return 0.5 * (a + b)


def _row_group_oracle(z, lam, step):
    """Minimize ``lam * ||u||_2 + 0.5 ||u - z||^2`` for one row.

    The minimizer lies on the ray through ``z`` (any orthogonal component only
    raises both terms), so a scan over the scalar ``t`` in ``u = t * z/||z||``
    covers it.
    """
    nz = np.linalg.norm(z)
    if nz == 0.0:
        return np.zeros_like(z)
    direction = z / nz
    hi = nz + 3.0 * lam

    def obj(t):
        return lam * np.abs(t) + 0.5 * (t - nz) ** 2

    t = _scalar_argmin(obj, -hi, hi, step)
    return t * direction


def prox_bruteforce_oracle(g, z, lam, grid_step=1e-4):
    """Grid-search minimizer of ``lam * g(u) + 0.5 * ||u - z||^2``.

    ``g`` is ``"zero"``, ``"l1"`` (separable, solved per coordinate) or
    ``"l12"`` (sum of row norms, solved per row). Each scalar problem is scanned
    over ``[-(|z|max + 3 lam), |z|max + 3 lam]`` and refined by ternary search.
    """
    z = as_matrix(z)
    lam = _nonneg(lam)
    if g == "zero":
        return z.copy()
    if g == "l12":
        return np.vstack([_row_group_oracle(row, lam, grid_step) for row in z])
    if g not in PENALTIES:
        raise ContractError(f"unsupported penalty kind {g!r}")
    pen = PENALTIES[g]
    bound = float(np.max(np.abs(z))) + 3.0 * lam
    out = np.empty_like(z)
    for idx, zi in np.ndenumerate(z):
        out[idx] = _scalar_argmin(lambda u: lam * pen(u) + 0.5 * (u - zi) ** 2,
                                  -bound, bound, grid_step)
    return out
