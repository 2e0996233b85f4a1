"""Classic iterative solvers: ISTA, IHT, proximal gradient, RPCA-ISTA, ADMM, MoDL.

Every solver accepts right-hand sides with several columns and treats each
column as an independent problem. Because :func:`dense.matmul` computes every
output column with its own fixed operation sequence, a batched run is
bit-identical to running the columns one at a time.
"""

from dataclasses import dataclass, field

import numpy as np

from .dense import as_matrix, cg_solve, eye, matmul, spd_solve, svd, transpose
from .errors import ContractError, ShapeError
from .prox import (
    hard_threshold_topk, row_group_soft_threshold, soft_threshold, svt_with_values,
)

__all__ = [
    "SolveTrace", "lasso_objective", "ista_solve", "iht_solve", "iht_step_matrices",
    "pgd_solve", "rpca_objective", "rpca_ista_solve", "admm_cs_solve",
    "modl_alternation", "DENOISERS",
]


@dataclass
class SolveTrace:
    x: np.ndarray
    objective: list
    iterations: int
    converged: bool
    iterates: list = None
    column_iterations: np.ndarray = None
    residuals: list = field(default_factory=list)


def _check_mu(mu):
    if not mu > 0:
        raise ContractError(f"step parameter mu must be > 0, got {mu}")


def _check_system(w, y):
    if w.shape[0] != y.shape[0]:
        raise ShapeError(f"dictionary {w.shape} does not match observations {y.shape}")


def lasso_objective(w, y, x, lam):
    r = matmul(w, x) - y
    return 0.5 * float(np.sum(r * r)) + lam * float(np.sum(np.abs(x)))


def ista_solve(w, y, lam, mu, max_iters=1000, tol=1e-8, keep_iterates=False):
    """ISTA for ``min 0.5||y - Wx||^2 + lam ||x||_1`` from ``x = 0``.

    Each step is ``x <- S_{lam/mu}(x - (1/mu) W^T (W x - y))``. A column stops
    moving once its update norm falls to ``tol``; the run ends when every
    column has stopped or ``max_iters`` is reached.
    """
    w, y = as_matrix(w, "W"), as_matrix(y, "y")
    _check_system(w, y)
    _check_mu(mu)
    wt = transpose(w)
    gamma = 1.0 / mu
    thr = lam * gamma
    x = np.zeros((w.shape[1], y.shape[1]))
    # per-column objective, refreshed only for columns that moved
    col_obj = 0.5 * np.sum(y * y, axis=0)
    active = np.ones(y.shape[1], dtype=bool)
    col_iters = np.zeros(y.shape[1], dtype=np.int64)
    trace = SolveTrace(x, [], 0, False, [] if keep_iterates else None)
    for it in range(max_iters):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        xa = x[:, idx]
        g = matmul(wt, matmul(w, xa) - y[:, idx])
        new = soft_threshold(xa - gamma * g, thr)
        step = np.sqrt(np.sum((new - xa) ** 2, axis=0))
        x = x.copy()
        x[:, idx] = new
        r = matmul(w, new) - y[:, idx]
        col_obj[idx] = 0.5 * np.sum(r * r, axis=0) + lam * np.sum(np.abs(new), axis=0)
        col_iters[idx] += 1
        active[idx[step <= tol]] = False
        trace.objective.append(float(np.sum(col_obj)))
        if keep_iterates:
            trace.iterates.append(x.copy())
        trace.iterations = it + 1
    trace.x = x
    trace.converged = not active.any()
    trace.column_iterations = col_iters
    return trace


def iht_step_matrices(w, mu):
    """Reparametrized IHT weights ``(I - W^T W / mu, W^T / mu)``."""
    w = as_matrix(w, "W")
    _check_mu(mu)
    wt = transpose(w)
    return eye(w.shape[1]) - matmul(wt, w) / mu, wt / mu


def _topk_columns(v, k):
    return np.hstack([hard_threshold_topk(v[:, j:j + 1], k) for j in range(v.shape[1])]) \
        if v.shape[1] else v.copy()


def iht_solve(w, y, k, mu, max_iters=100, tol=0.0, keep_iterates=False):
    """Iterative hard thresholding ``x <- H_k(W_t x + W_e y)`` from ``x = 0``.

    Runs in the reparametrized form; every iterate is ``k``-sparse per column.
    """
    w, y = as_matrix(w, "W"), as_matrix(y, "y")
    _check_system(w, y)
    if k < 1:
        raise ContractError("k must be >= 1")
    w_t, w_e = iht_step_matrices(w, mu)
    drive = matmul(w_e, y)
    x = np.zeros((w.shape[1], y.shape[1]))
    trace = SolveTrace(x, [], 0, False, [] if keep_iterates else None)
    for it in range(max_iters):
        new = _topk_columns(matmul(w_t, x) + drive, k)
        step = float(np.sqrt(np.sum((new - x) ** 2)))
        x = new
        r = matmul(w, x) - y
        trace.objective.append(0.5 * float(np.sum(r * r)))
        if keep_iterates:
            trace.iterates.append(x.copy())
        trace.iterations = it + 1
        if step <= tol:
            trace.converged = True
            break
    trace.x = x
    return trace


def pgd_solve(grad, prox, x0, gamma, max_iters, lam=1.0, objective=None, tol=None,
              keep_iterates=False):
    """Proximal gradient descent ``x <- prox(x - g_k grad(x), lam * g_k)``.

    ``gamma`` is a positive constant or a sequence/callable giving the step
    for iteration ``k`` (1-based). Without an ``objective`` callable the
    recorded objective values are NaN.
    """
    x = as_matrix(x0, "x0").copy()
    if callable(gamma):
        step_at = gamma
    elif np.ndim(gamma) == 0:
        step_at = lambda k: float(gamma)  # noqa: E731
    else:
        seq = list(gamma)
        step_at = lambda k: seq[k - 1]  # noqa: E731
    trace = SolveTrace(x, [], 0, False, [] if keep_iterates else None)
    for k in range(1, max_iters + 1):
        g_k = step_at(k)
        if not g_k > 0:
            raise ContractError(f"step size at iteration {k} must be > 0")
        new = prox(x - g_k * grad(x), lam * g_k)
        change = float(np.sqrt(np.sum((new - x) ** 2)))
        x = new
        trace.objective.append(objective(x) if objective else float("nan"))
        if keep_iterates:
            trace.iterates.append(x.copy())
        trace.iterations = k
        if tol is not None and change <= tol:
            trace.converged = True
            break
    trace.x = x
    return trace


def nuclear_norm(x):
    return float(np.sum(svd(x).s))


def mixed_norm_12(s):
    return float(np.sum(np.sqrt(np.sum(s * s, axis=1))))


def rpca_objective(y, h1, h2, low, sparse, lam1, lam2, low_nuclear=None):
    r = y - matmul(h1, low) - matmul(h2, sparse)
    nuc = nuclear_norm(low) if low_nuclear is None else low_nuclear
    return 0.5 * float(np.sum(r * r)) + lam1 * nuc + lam2 * mixed_norm_12(sparse)


def rpca_ista_solve(y, h1, h2, lam1, lam2, mu, max_iters=500, tol=0.0):
    """Generalized ISTA for low-rank plus row-sparse separation.

    Minimizes ``0.5||Y - H1 L - H2 S||_F^2 + lam1 ||L||_* + lam2 ||S||_{1,2}``
    with simultaneous updates of ``L`` (singular value thresholding) and ``S``
    (row-wise shrinkage) from zero. ``mu`` must bound the squared spectral
    norm of ``[H1 H2]``. Returns ``(L, S, trace)``.
    """
    y, h1, h2 = as_matrix(y, "Y"), as_matrix(h1, "H1"), as_matrix(h2, "H2")
    if h1.shape[0] != y.shape[0] or h2.shape[0] != y.shape[0]:
        raise ShapeError(f"H1 {h1.shape} / H2 {h2.shape} do not match Y {y.shape}")
    _check_mu(mu)
    gamma = 1.0 / mu
    h1t, h2t = transpose(h1), transpose(h2)
    low = np.zeros((h1.shape[1], y.shape[1]))
    sparse = np.zeros((h2.shape[1], y.shape[1]))
    trace = SolveTrace(None, [], 0, False)
    for it in range(max_iters):
        resid = matmul(h1, low) + matmul(h2, sparse) - y
        new_low, shrunk = svt_with_values(low - gamma * matmul(h1t, resid), lam1 * gamma)
        new_sparse = row_group_soft_threshold(sparse - gamma * matmul(h2t, resid),
                                              lam2 * gamma)
        change = float(np.sqrt(np.sum((new_low - low) ** 2) + np.sum((new_sparse - sparse) ** 2)))
        low, sparse = new_low, new_sparse
        trace.objective.append(rpca_objective(y, h1, h2, low, sparse, lam1, lam2,
                                              low_nuclear=float(np.sum(shrunk))))
        trace.iterations = it + 1
        if change <= tol:
            trace.converged = True
            break
    trace.x = np.vstack([low, sparse])
    return low, sparse, trace


def _as_list(v, c, name):
    if np.ndim(v) == 0:
        return [float(v)] * c
    v = [float(t) for t in v]
    if len(v) != c:
        raise ContractError(f"{name} needs {c} entries, got {len(v)}")
    return v


def admm_cs_solve(w, y, ds, lams, rhos, etas, max_iters=200, tol=0.0):
    """ADMM for ``min 0.5||Wx - y||^2 + sum_i lam_i ||D_i x||_1``.

    Scaled-dual iteration from ``z_i = alpha_i = 0``::

        x       = (W^T W + sum rho_i D_i^T D_i)^{-1} (W^T y + sum rho_i D_i^T (z_i - alpha_i))
        z_i     = S_{lam_i / rho_i}(D_i x + alpha_i)
        alpha_i = alpha_i + eta_i (D_i x - z_i)

    ``trace.residuals[l]`` lists the primal residuals ``||D_i x - z_i||``.
    """
    w, y = as_matrix(w, "W"), as_matrix(y, "y")
    _check_system(w, y)
    ds = [as_matrix(d, "D") for d in ds]
    c = len(ds)
    if c == 0:
        raise ContractError("at least one operator D_i is required")
    lams, rhos, etas = (_as_list(v, c, n) for v, n in ((lams, "lams"), (rhos, "rhos"),
                                                       (etas, "etas")))
    if any(r <= 0 for r in rhos):
        raise ContractError("rho_i must be positive")
    for d in ds:
        if d.shape[1] != w.shape[1]:
            raise ShapeError(f"operator {d.shape} does not act on x of size {w.shape[1]}")
    wt = transpose(w)
    dts = [transpose(d) for d in ds]
    system = matmul(wt, w)
    for rho, d, dt in zip(rhos, ds, dts):
        system = system + rho * matmul(dt, d)
    wty = matmul(wt, y)
    zs = [np.zeros((d.shape[0], y.shape[1])) for d in ds]
    alphas = [np.zeros_like(z) for z in zs]
    trace = SolveTrace(None, [], 0, False)
    x = np.zeros((w.shape[1], y.shape[1]))
    for it in range(max_iters):
        rhs = wty
        for rho, dt, z, a in zip(rhos, dts, zs, alphas):
            rhs = rhs + rho * matmul(dt, z - a)
        x = spd_solve(system, rhs)
        res = []
        for i, (lam, rho, eta, d) in enumerate(zip(lams, rhos, etas, ds)):
            dx = matmul(d, x)
            zs[i] = soft_threshold(dx + alphas[i], lam / rho)
            alphas[i] = alphas[i] + eta * (dx - zs[i])
            res.append(float(np.sqrt(np.sum((dx - zs[i]) ** 2))))
        trace.residuals.append(res)
        r = matmul(w, x) - y
        trace.objective.append(0.5 * float(np.sum(r * r))
                               + sum(lam * float(np.sum(np.abs(matmul(d, x))))
                                     for lam, d in zip(lams, ds)))
        trace.iterations = it + 1
        if tol and max(res) <= tol:
            trace.converged = True
            break
    trace.x = x
    return trace


def median3(x):
    """3-tap running median down each column, edges replicated."""
    x = as_matrix(x)
    padded = np.vstack([x[:1], x, x[-1:]])
    return np.median(np.stack([padded[:-2], padded[1:-1], padded[2:]]), axis=0)


DENOISERS = {
    "identity": lambda x: x.copy(),
    "soft": lambda x, lam=0.05: soft_threshold(x, lam),
    "median3": median3,
}


def modl_alternation(w, y, lam, denoiser, iterations, cg_tol=1e-10, x0=None,
                     cg_max_iters=1000, history=False):
    """Alternate ``z = denoiser(x)`` with the ridge data-consistency step.

    The step ``(W^T W + lam I) x = W^T y + lam z`` is solved by conjugate
    gradients, one column at a time. With ``history=True`` returns ``(x, [(z_k, rhs_k, x_{k+1}), ...])``.
    """
    w, y = as_matrix(w, "W"), as_matrix(y, "y")
    _check_system(w, y)
    if not lam > 0:
        raise ContractError("lam must be > 0")
    if iterations < 1:
        raise ContractError("need at least one iteration")
    wt = transpose(w)
    wty = matmul(wt, y)

    def normal_op(v):
        return matmul(wt, matmul(w, v)) + lam * v

    x = np.zeros((w.shape[1], y.shape[1])) if x0 is None else as_matrix(x0, "x0")
    steps = []
    for _ in range(iterations):
        z = as_matrix(denoiser(x), "denoiser output")
        rhs = wty + lam * z
        x = np.hstack([cg_solve(normal_op, rhs[:, j:j + 1], tol=cg_tol, max_iters=cg_max_iters)
                       for j in range(rhs.shape[1])]) if rhs.shape[1] else rhs.copy()
        steps.append((z, rhs, x))
    return (x, steps) if history else x
