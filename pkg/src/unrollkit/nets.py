"""Unrolled networks: LISTA, learned IHT, LSPARCOM (fully connected) and unrolled ADMM.

Each parameter bundle exposes its trainable arrays through ``arrays()`` as an
ordered name -> ndarray mapping and rebuilds itself with ``with_arrays``.
Positive quantities (thresholds, sigmoid slopes, ADMM coefficients) are
stored as logarithms, so every trainable entry is unconstrained.

Forward passes take an optional :class:`~unrollkit.autodiff.Tape`. Without
one they return the output array; with one they return ``(output_var,
leaves)`` where ``leaves`` maps parameter names to their tape variables.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import (
    Tape, t_add, t_exp, t_hard_threshold, t_matmul, t_scale_by_param,
    t_sigmoid_plus_threshold, t_soft_threshold, t_solve, t_sub, t_transpose,
)
from .dense import as_matrix, eye, frobenius_norm, matmul, spd_solve, transpose
from .errors import ContractError, ShapeError

__all__ = [
    "ListaParams", "LihtParams", "LSparcomParams", "UnrolledAdmmParams",
    "lista_init_analytic", "liht_init_analytic", "lsparcom_init_analytic",
    "uadmm_init", "lista_forward", "liht_forward", "lsparcom_forward",
    "unrolled_admm_forward", "weight_coupling_residual", "variance_image",
    "forward", "MODEL_KINDS",
]


def _scalar(v):
    return np.array([[float(v)]])


class _Layered:
    """Shared plumbing for bundles of per-layer matrices."""

    tied: bool
    layers: int

    def _slot(self, l):
        return 0 if self.tied else l

    def arrays(self):
        out = {}
        for name in self._fields:
            for i, a in enumerate(getattr(self, name)):
                out[f"{name}.{i}"] = a
        return out

    def with_arrays(self, arrays):
        updates = {}
        for name in self._fields:
            n = len(getattr(self, name))
            updates[name] = [np.array(arrays[f"{name}.{i}"], dtype=np.float64) for i in range(n)]
        return replace(self, **updates)

    def count(self):
        return int(sum(a.size for a in self.arrays().values()))

    def _bind(self, tape):
        return {name: tape.leaf(a) for name, a in self.arrays().items()}


def _slots(layers, tied):
    return 1 if tied or layers == 0 else layers


@dataclass
class ListaParams(_Layered):
    layers: int
    tied: bool
    w_e: list
    w_t: list
    log_lam: list
    _fields = ("w_e", "w_t", "log_lam")

    @property
    def lam(self):
        return [float(np.exp(a[0, 0])) for a in self.log_lam]


@dataclass
class LihtParams(_Layered):
    layers: int
    tied: bool
    k: int
    w_e: list
    w_t: list
    _fields = ("w_e", "w_t")


@dataclass
class LSparcomParams(_Layered):
    layers: int
    tied: bool
    w_e: list
    w_t: list
    alpha: list
    log_beta: list
    _fields = ("w_e", "w_t", "alpha", "log_beta")


@dataclass
class UnrolledAdmmParams(_Layered):
    """Per-stage coefficients for ``C`` splitting operators.

    ``log_lam[l]`` etc. are ``C x 1`` columns; ``d[l]`` is a list of ``C``
    operators. Operators are trainable only when ``train_d`` is set.
    """

    layers: int
    log_lam: list
    log_rho: list
    log_eta: list
    d: list
    train_d: bool = False
    tied: bool = field(default=False)
    _fields = ("log_lam", "log_rho", "log_eta")

    @property
    def operators(self):
        return len(self.d[0]) if self.d else 0

    def arrays(self):
        out = super().arrays()
        if self.train_d:
            for l, ops in enumerate(self.d):
                for i, d in enumerate(ops):
                    out[f"d.{l}.{i}"] = d
        return out

    def with_arrays(self, arrays):
        new = super().with_arrays(arrays)
        if self.train_d:
            new = replace(new, d=[[np.array(arrays[f"d.{l}.{i}"], dtype=np.float64)
                                   for i in range(len(ops))] for l, ops in enumerate(self.d)])
        return new


def _check_mu(mu):
    if not mu > 0:
        raise ContractError(f"mu must be > 0, got {mu}")


def _coupled_weights(w, mu):
    w = as_matrix(w, "W")
    wt = transpose(w)
    return eye(w.shape[1]) - matmul(wt, w) / mu, wt / mu


def lista_init_analytic(w, mu, lam, layers, tied=False):
    """LISTA weights that reproduce ``layers`` ISTA steps with threshold ``lam/mu``."""
    _check_mu(mu)
    if lam <= 0:
        raise ContractError("lam must be > 0 (stored as a logarithm)")
    w_t, w_e = _coupled_weights(w, mu)
    n = _slots(layers, tied)
    return ListaParams(
        layers=layers, tied=tied,
        w_e=[w_e.copy() for _ in range(n)], w_t=[w_t.copy() for _ in range(n)],
        log_lam=[_scalar(np.log(lam / mu)) for _ in range(n)],
    )


def liht_init_analytic(w, mu, k, layers, tied=False):
    _check_mu(mu)
    w_t, w_e = _coupled_weights(w, mu)
    n = _slots(layers, tied)
    return LihtParams(layers=layers, tied=tied, k=int(k),
                      w_e=[w_e.copy() for _ in range(n)], w_t=[w_t.copy() for _ in range(n)])


def lsparcom_init_analytic(w, mu, alpha, beta, layers, tied=False):
    _check_mu(mu)
    if beta <= 0:
        raise ContractError("beta must be > 0")
    w_t, w_e = _coupled_weights(w, mu)
    n = _slots(layers, tied)
    return LSparcomParams(
        layers=layers, tied=tied,
        w_e=[w_e.copy() for _ in range(n)], w_t=[w_t.copy() for _ in range(n)],
        alpha=[_scalar(alpha) for _ in range(n)],
        log_beta=[_scalar(np.log(beta)) for _ in range(n)],
    )


def uadmm_init(ds, lams, rhos, etas, layers, train_d=False):
    """Unrolled ADMM with every stage set to the same classic coefficients."""
    ds = [as_matrix(d, "D") for d in ds]
    c = len(ds)

    def col(v, name):
        v = np.full(c, float(v)) if np.ndim(v) == 0 else np.asarray(v, dtype=np.float64)
        if v.shape != (c,) or np.any(v <= 0):
            raise ContractError(f"{name} needs {c} positive entries")
        return np.log(v).reshape(c, 1)

    ll, lr, le = col(lams, "lams"), col(rhos, "rhos"), col(etas, "etas")
    return UnrolledAdmmParams(
        layers=layers,
        log_lam=[ll.copy() for _ in range(layers)],
        log_rho=[lr.copy() for _ in range(layers)],
        log_eta=[le.copy() for _ in range(layers)],
        d=[[d.copy() for d in ds] for _ in range(layers)],
        train_d=train_d,
    )


def _run(forward_graph, params, y, tape):
    own = tape is None
    tape = Tape() if own else tape
    leaves = params._bind(tape)
    out = forward_graph(params, leaves, tape.leaf(y), tape)
    return out.value if own else (out, leaves)


def _check_input(w_e, y):
    if w_e.shape[1] != y.shape[0]:
        raise ShapeError(f"input has {y.shape[0]} rows, network expects {w_e.shape[1]}")


def params_rows(p):
    return p.w_t[0].shape[0] if p.w_t else 0


def lista_forward(params, y, tape=None):
    """``x <- S_{lam_l}(W_t^l x + W_e^l y)`` for each layer, from ``x = 0``."""
    y = as_matrix(y, "y")
    if params.layers:
        _check_input(params.w_e[0], y)

    def graph(p, leaves, yv, tp):
        x = tp.leaf(np.zeros((params_rows(p), y.shape[1])))
        for l in range(p.layers):
            s = p._slot(l)
            lam = t_exp(leaves[f"log_lam.{s}"])
            pre = t_add(t_matmul(leaves[f"w_t.{s}"], x), t_matmul(leaves[f"w_e.{s}"], yv))
            x = t_soft_threshold(pre, lam)
        return x

    return _run(graph, params, y, tape)


def liht_forward(params, y, tape=None):
    """``x <- H_k(W_t^l x + W_e^l y)`` per column, from ``x = 0``."""
    y = as_matrix(y, "y")
    if params.layers:
        _check_input(params.w_e[0], y)

    def graph(p, leaves, yv, tp):
        x = tp.leaf(np.zeros((params_rows(p), y.shape[1])))
        for l in range(p.layers):
            s = p._slot(l)
            pre = t_add(t_matmul(leaves[f"w_t.{s}"], x), t_matmul(leaves[f"w_e.{s}"], yv))
            x = t_hard_threshold(pre, p.k)
        return x

    return _run(graph, params, y, tape)


def lsparcom_forward(params, g_y, tape=None):
    """LISTA recursion with the smooth positive threshold; output is nonnegative."""
    g_y = as_matrix(g_y, "g_Y")
    if params.layers:
        _check_input(params.w_e[0], g_y)

    def graph(p, leaves, yv, tp):
        x = tp.leaf(np.zeros((params_rows(p), g_y.shape[1])))
        for l in range(p.layers):
            s = p._slot(l)
            beta = t_exp(leaves[f"log_beta.{s}"])
            pre = t_add(t_matmul(leaves[f"w_t.{s}"], x), t_matmul(leaves[f"w_e.{s}"], yv))
            x = t_sigmoid_plus_threshold(pre, leaves[f"alpha.{s}"], beta)
        return x

    return _run(graph, params, g_y, tape)


def _row(tape, var, i):
    """1x1 view of entry ``i`` of a ``C x 1`` column variable."""
    sel = np.zeros((1, var.shape[0]))
    sel[0, i] = 1.0
    return t_matmul(tape.leaf(sel), var)


def unrolled_admm_forward(params, w, y, tape=None):
    """Stages of (x-update, z-update, dual update) with per-stage coefficients.

    The x-update linear solve is differentiated through the adjoint system.
    Starts from ``z_i = alpha_i = 0``; with zero stages the output is ``x = 0``.
    """
    w = as_matrix(w, "W")
    y = as_matrix(y, "y")
    if w.shape[0] != y.shape[0]:
        raise ShapeError(f"W {w.shape} does not match y {y.shape}")
    wt = transpose(w)
    wtw, wty = matmul(wt, w), matmul(wt, y)

    def graph(p, leaves, yv, tp):
        m, b = w.shape[1], y.shape[1]
        x = tp.leaf(np.zeros((m, b)))
        if p.layers == 0:
            return x
        wtw_v, wty_v = tp.leaf(wtw), tp.leaf(wty)
        ops0 = p.d[0]
        zs = [tp.leaf(np.zeros((d.shape[0], b))) for d in ops0]
        alphas = [tp.leaf(np.zeros((d.shape[0], b))) for d in ops0]
        for l in range(p.layers):
            ds = [leaves[f"d.{l}.{i}"] if p.train_d else tp.leaf(p.d[l][i])
                  for i in range(len(p.d[l]))]
            log_lam, log_rho, log_eta = (leaves[f"{n}.{l}"] for n in ("log_lam", "log_rho", "log_eta"))
            rhos = [t_exp(_row(tp, log_rho, i)) for i in range(len(ds))]
            system, rhs = wtw_v, wty_v
            for d, rho, z, a in zip(ds, rhos, zs, alphas):
                dt = t_transpose(d)
                system = t_add(system, t_scale_by_param(t_matmul(dt, d), rho))
                rhs = t_add(rhs, t_scale_by_param(t_matmul(dt, t_sub(z, a)), rho))
            x = t_solve(system, rhs, solver=spd_solve)
            for i, d in enumerate(ds):
                dx = t_matmul(d, x)
                thr = t_exp(t_sub(_row(tp, log_lam, i), _row(tp, log_rho, i)))
                zs[i] = t_soft_threshold(t_add(dx, alphas[i]), thr)
                eta = t_exp(_row(tp, log_eta, i))
                alphas[i] = t_add(alphas[i], t_scale_by_param(t_sub(dx, zs[i]), eta))
        return x

    return _run(graph, params, y, tape)


def weight_coupling_residual(params, w):
    """Per-layer ``||W_t^l - (I - W_e^l W)||_F``."""
    w = as_matrix(w, "W")
    ident = eye(w.shape[1])
    out = []
    for l in range(params.layers):
        s = params._slot(l)
        w_e, w_t = params.w_e[s], params.w_t[s]
        if w_e.shape[1] != w.shape[0] or w_t.shape[0] != w.shape[1]:
            raise ShapeError(f"W {w.shape} does not match layer {l} weights")
        out.append(frobenius_norm(w_t - (ident - matmul(w_e, w))))
    return out


def variance_image(frames):
    """Unbiased per-pixel temporal variance of a stack of frames, as a column.

    Accumulated in one pass (Welford); pixels are flattened row-major.
    """
    frames = [np.asarray(f, dtype=np.float64) for f in frames]
    if len(frames) < 2:
        raise ContractError("need at least two frames")
    shape = frames[0].shape
    mean = np.zeros(shape)
    m2 = np.zeros(shape)
    for t, f in enumerate(frames, start=1):
        if f.shape != shape:
            raise ShapeError(f"frame {t - 1} has shape {f.shape}, expected {shape}")
        delta = f - mean
        mean = mean + delta / t
        m2 = m2 + delta * (f - mean)
    return (m2 / (len(frames) - 1)).reshape(-1, 1)


MODEL_KINDS = ("lista", "liht", "lsparcom", "uadmm")


def forward(kind, params, y, w=None, tape=None):
    """Dispatch on the model kind name used by configs and checkpoints."""
    if kind == "lista":
        return lista_forward(params, y, tape)
    if kind == "liht":
        return liht_forward(params, y, tape)
    if kind == "lsparcom":
        return lsparcom_forward(params, y, tape)
    if kind == "uadmm":
        if w is None:
            raise ContractError("unrolled ADMM needs the measurement matrix")
        return unrolled_admm_forward(params, w, y, tape)
    raise ContractError(f"unknown model kind {kind!r}")
