"""Dense real linear algebra on 2-D float64 arrays.

Vectors are one-column matrices. Products accumulate over the inner index in
ascending order using separate multiply and add steps, so results do not
depend on the BLAS build and match a textbook triple loop bit-for-bit.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateInputError, NumericError, ShapeError
from .rng import Rng

__all__ = [
    "as_matrix", "zeros", "eye", "matmul", "add", "sub", "scale", "transpose",
    "frobenius_norm", "gaussian_matrix", "SvdResult", "svd", "power_iteration",
    "cg_solve", "spd_solve",
]


def as_matrix(a, name="matrix"):
    """Coerce ``a`` to a finite 2-D float64 array (1-D input becomes a column)."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(-1, 1)
    elif m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericError(f"{name} has non-finite entries")
    return m


def _finite(m, what):
    if not np.all(np.isfinite(m)):
        raise NumericError(f"{what} produced non-finite entries")
    return m


def zeros(rows, cols):
    return np.zeros((rows, cols))


def eye(n):
    return np.eye(n)


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]))
    term = np.empty_like(out)
    with np.errstate(over="ignore", invalid="ignore"):  # overflow is reported below
        for k in range(a.shape[1]):
            np.multiply(a[:, k:k + 1], b[k:k + 1, :], out=term)
            out += term
    return _finite(out, "matmul")


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a, b):
    _same_shape(a, b, "add")
    return _finite(a + b, "add")


def sub(a, b):
    _same_shape(a, b, "sub")
    return _finite(a - b, "sub")


def scale(a, c):
    return _finite(float(c) * a, "scale")


def transpose(a):
    return np.ascontiguousarray(np.asarray(a).T)


def frobenius_norm(a):
    a = np.asarray(a, dtype=np.float64)
    return float(np.sqrt(np.sum(a * a)))


def gaussian_matrix(rows, cols, rng):
    """Standard normal entries filled row-major from ``rng``."""
    return rng.gaussian_array(rows * cols).reshape(rows, cols)


@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def reconstruct(self):
        return matmul(self.u * self.s[None, :], transpose(self.v))


def _round_robin(n):
    """Disjoint index pairs for each round of a cyclic tournament schedule."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    p = len(players)
    rounds = []
    for _ in range(p - 1):
        pairs = []
        for i in range(p // 2):
            a, b = players[i], players[p - 1 - i]
            if a >= 0 and b >= 0:
                pairs.append((min(a, b), max(a, b)))
        rounds.append(np.array(pairs, dtype=np.intp).reshape(-1, 2))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _complete_basis(u, filled):
    """Replace columns of ``u`` not in ``filled`` by orthonormal completions."""
    m, r = u.shape
    basis = [u[:, j] for j in range(r) if filled[j]]
    candidates = iter(np.eye(m))
    for j in range(r):
        if filled[j]:
            continue
        while True:
            e = next(candidates).copy()
            for _ in range(2):
                for q in basis:
                    e -= (q @ e) * q
            nrm = np.linalg.norm(e)
            if nrm > 1e-8:
                break
        u[:, j] = e / nrm
        basis.append(u[:, j])
    return u


def svd(a, tol=1e-15, max_sweeps=1000):
    """Thin SVD by one-sided (Hestenes) Jacobi rotations.

    Columns of ``u`` are sign-normalized so their largest-magnitude entry is
    positive (ties go to the lowest row index); ``v`` is flipped to match.
    """
    a = as_matrix(a)
    transposed = a.shape[0] < a.shape[1]
    # rows of `cols` are the columns being orthogonalized
    cols = a.copy() if transposed else a.T.copy()
    n, m = cols.shape
    vt = np.eye(n)
    rounds = _round_robin(n) if n > 1 else []
    for _ in range(max_sweeps):
        rotated = False
        for pairs in rounds:
            i, j = pairs[:, 0], pairs[:, 1]
            ai, aj = cols[i], cols[j]
            alpha = np.einsum("ij,ij->i", ai, ai)
            beta = np.einsum("ij,ij->i", aj, aj)
            gamma = np.einsum("ij,ij->i", ai, aj)
            active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not active.any():
                continue
            rotated = True
            if not active.all():
                i, j = i[active], j[active]
                ai, aj = ai[active], aj[active]
                alpha, beta, gamma = alpha[active], beta[active], gamma[active]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = (1.0 / np.sqrt(1.0 + t * t))[:, None]
            s = c * t[:, None]
            vi, vj = vt[i], vt[j]
            cols[i] = c * ai - s * aj
            cols[j] = s * ai + c * aj
            vt[i] = c * vi - s * vj
            vt[j] = s * vi + c * vj
        if not rotated:
            break
    else:
        raise NumericError(f"Jacobi SVD did not converge in {max_sweeps} sweeps")
    work, v = cols.T, vt.T

    sv = np.sqrt(np.sum(work * work, axis=0))
    order = np.argsort(-sv, kind="stable")
    sv, work, v = sv[order], work[:, order], v[:, order]
    scale_ref = sv[0] if n else 0.0
    filled = sv > max(scale_ref, 1.0) * 1e-13
    u = np.zeros((m, n))
    u[:, filled] = work[:, filled] / sv[filled]
    sv = np.where(filled, sv, 0.0)
    if not np.all(filled):
        u = _complete_basis(u, filled)

    if transposed:
        u, v = v, u
    for j in range(n):
        idx = int(np.argmax(np.abs(u[:, j])))
        if u[idx, j] < 0:
            u[:, j] = -u[:, j]
            v[:, j] = -v[:, j]
    return SvdResult(u=u, s=sv, v=v)


def power_iteration(a, iters=200, seed=0):
    """Estimate the largest eigenvalue of ``a.T @ a`` (squared spectral norm).

    The returned Rayleigh quotient never exceeds the true value.
    """
    a = as_matrix(a)
    if not np.any(a):
        raise DegenerateInputError("power iteration on a zero matrix")
    at = transpose(a)
    x = gaussian_matrix(a.shape[1], 1, Rng(seed))
    x /= frobenius_norm(x)
    est = 0.0
    for _ in range(iters):
        y = matmul(at, matmul(a, x))
        nrm = frobenius_norm(y)
        if nrm == 0.0:
            # start vector in the null space; restart along the first basis vector
            x = np.zeros_like(x)
            x[int(np.argmax(np.sum(a * a, axis=0)))] = 1.0
            continue
        x = y / nrm
        est = frobenius_norm(matmul(a, x)) ** 2
    return est


def cg_solve(apply_a, b, tol=1e-10, max_iters=1000):
    """Conjugate gradient for a symmetric positive definite operator.

    ``apply_a`` maps a matrix to a matrix of the same shape; every column of
    ``b`` is solved jointly (the inner products run over all entries, so
    pass one column per call for independent systems).
    """
    b = as_matrix(b, "b")
    bnorm = frobenius_norm(b)
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return x
    r = b.copy()
    p = r.copy()
    rs = float(np.sum(r * r))
    for _ in range(max_iters):
        if np.sqrt(rs) <= tol * bnorm:
            return x
        ap = apply_a(p)
        pap = float(np.sum(p * ap))
        if pap <= 0.0:
            raise NumericError("operator is not positive definite", residual=np.sqrt(rs))
        step = rs / pap
        x = x + step * p
        r = r - step * ap
        rs_new = float(np.sum(r * r))
        p = r + (rs_new / rs) * p
        rs = rs_new
    if np.sqrt(rs) <= tol * bnorm:
        return x
    raise NumericError(
        f"CG did not reach tolerance in {max_iters} iterations",
        residual=float(np.sqrt(rs)),
    )


def spd_solve(a, b):
    """Solve ``a x = b`` for symmetric positive definite ``a`` via Cholesky.

    Raises :class:`NumericError` when the factorization fails.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[0] != a.shape[1] or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot solve {a.shape} system against {b.shape}")
    try:
        factor = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"system matrix is singular or indefinite: {exc}") from exc
    return _finite(scipy.linalg.cho_solve(factor, b, check_finite=False), "spd_solve")
