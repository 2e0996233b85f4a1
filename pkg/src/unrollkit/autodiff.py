"""Reverse-mode differentiation tape over the primitives unrolled networks use.

A :class:`Tape` records each primitive application as a node holding its
parents and whatever forward values its backward rule needs. Nodes are
appended in evaluation order, so parents always precede children and a single
reverse sweep visits every node exactly once.

Scalars (thresholds, log-parameters, losses) are 1x1 matrices.
"""

from dataclasses import dataclass, field

import numpy as np

from . import prox
from .dense import as_matrix, matmul, transpose
from .errors import ContractError, NumericError, ShapeError

__all__ = [
    "Tape", "Var", "backward", "finite_diff_grad",
    "t_matmul", "t_add", "t_sub", "t_transpose", "t_scale_by_param", "t_exp",
    "t_soft_threshold", "t_hard_threshold", "t_sigmoid_plus_threshold",
    "t_row_group_soft_threshold", "t_solve", "t_mse_loss", "t_masked_loss",
]


@dataclass
class _Node:
    kind: str
    parents: tuple
    backward: object  # callable(grad) -> tuple of parent grads (None = no flow)
    saved: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Var:
    tape: "Tape"
    index: int
    value: np.ndarray

    @property
    def shape(self):
        return self.value.shape


class Tape:
    def __init__(self):
        self.nodes = []

    def _push(self, kind, parents, value, backward, **saved):
        for p in parents:
            if p.tape is not self:
                raise ContractError("operands recorded on different tapes")
        self.nodes.append(_Node(kind, tuple(p.index for p in parents), backward, saved))
        return Var(self, len(self.nodes) - 1, value)

    def leaf(self, value):
        """Record an input; gradients are reported for every leaf."""
        value = as_matrix(value).copy()
        return self._push("leaf", (), value, None)

    const = leaf

    def __len__(self):
        return len(self.nodes)


def backward(tape, loss):
    """Gradients of the scalar ``loss`` with respect to every recorded node.

    Returns a dict ``node index -> ndarray``; nodes the loss does not depend
    on are absent. Contributions reaching a node are summed in ascending
    order of the child that produced them, so a loss built as a sum over
    samples accumulates its gradient in ascending sample order.
    """
    if loss.shape != (1, 1):
        raise ContractError(f"loss must be 1x1, got {loss.shape}")
    parts = {loss.index: [np.ones((1, 1))]}
    grads = {}
    for idx in range(loss.index, -1, -1):
        incoming = parts.pop(idx, None)
        if incoming is None:
            continue
        # children were visited in descending order; add them back ascending
        g = incoming[-1]
        for pg in reversed(incoming[:-1]):
            g = g + pg
        grads[idx] = g
        node = tape.nodes[idx]
        if node.backward is None:
            continue
        for parent, pg in zip(node.parents, node.backward(g)):
            if pg is not None:
                parts.setdefault(parent, []).append(pg)
    return grads


def finite_diff_grad(f, p, h=1e-6):
    """Central-difference gradient of scalar ``f`` at parameter vector ``p``."""
    if not h > 0:
        raise ContractError("h must be positive")
    p = np.array(p, dtype=np.float64)
    g = np.zeros_like(p)
    for i in np.ndindex(p.shape):
        old = p[i]
        p[i] = old + h
        fp = f(p)
        p[i] = old - h
        fm = f(p)
        p[i] = old
        g[i] = (fp - fm) / (2.0 * h)
    return g


def _scalar(v, name):
    if v.shape != (1, 1):
        raise ShapeError(f"{name} must be 1x1, got {v.shape}")
    return float(v.value[0, 0])


def t_matmul(a, b):
    out = matmul(a.value, b.value)
    av, bv = a.value, b.value
    return a.tape._push(
        "matmul", (a, b), out,
        lambda g: (matmul(g, transpose(bv)), matmul(transpose(av), g)),
    )


def t_add(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")
    return a.tape._push("add", (a, b), a.value + b.value, lambda g: (g, g))


def t_sub(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"sub: {a.shape} vs {b.shape}")
    return a.tape._push("sub", (a, b), a.value - b.value, lambda g: (g, -g))


def t_transpose(a):
    return a.tape._push("transpose", (a,), transpose(a.value), lambda g: (transpose(g),))


def t_scale_by_param(x, c):
    """``c * x`` for a 1x1 parameter ``c``."""
    cv = _scalar(c, "scale parameter")
    xv = x.value
    return x.tape._push(
        "scale", (x, c), cv * xv,
        lambda g: (cv * g, np.array([[np.sum(g * xv)]])),
    )


def t_exp(a):
    with np.errstate(over="ignore"):
        out = np.exp(a.value)
    if not np.all(np.isfinite(out)):
        raise NumericError("exp overflow")
    return a.tape._push("exp", (a,), out, lambda g: (g * out,))


def t_soft_threshold(x, lam):
    """Soft threshold with a 1x1 threshold ``lam``; subgradient 0 at kinks."""
    lv = _scalar(lam, "threshold")
    xv = x.value
    out = prox.soft_threshold(xv, lv)
    active = np.abs(xv) > lv

    def bw(g):
        gl = -np.sum(np.where(active, np.sign(xv) * g, 0.0))
        return np.where(active, g, 0.0), np.array([[gl]])

    return x.tape._push("soft_threshold", (x, lam), out, bw)


def t_hard_threshold(x, k):
    """Top-``k`` selection per column; gradient flows through kept entries."""
    xv = x.value
    mask = np.zeros(xv.shape, dtype=bool)
    for j in range(xv.shape[1]):
        mask[:, j] = prox.topk_mask(xv[:, j], k)
    out = np.where(mask, xv, 0.0)
    return x.tape._push("hard_threshold", (x,), out, lambda g: (np.where(mask, g, 0.0),))


def t_sigmoid_plus_threshold(x, alpha, beta):
    av = _scalar(alpha, "alpha")
    bv = _scalar(beta, "beta")
    xv = x.value
    out = prox.sigmoid_plus_threshold(xv, av, bv)
    pos = xv > 0  # x <= 0 takes the flat branch of max(0, x)
    sig = prox._sigmoid(bv * (np.abs(xv) - av))
    dsig = sig * (1.0 - sig)

    def bw(g):
        gx = np.where(pos, sig + xv * bv * dsig, 0.0) * g
        ga = np.sum(np.where(pos, -xv * bv * dsig, 0.0) * g)
        gb = np.sum(np.where(pos, xv * (xv - av) * dsig, 0.0) * g)
        return gx, np.array([[ga]]), np.array([[gb]])

    return x.tape._push("sigmoid_plus_threshold", (x, alpha, beta), out, bw)


def t_row_group_soft_threshold(x, lam):
    lv = _scalar(lam, "threshold")
    xv = x.value
    out = prox.row_group_soft_threshold(xv, lv)
    norms = np.sqrt(np.sum(xv * xv, axis=1, keepdims=True))
    active = norms > lv
    safe = np.where(active, norms, 1.0)

    def bw(g):
        rg = np.sum(xv * g, axis=1, keepdims=True)
        gx = (1.0 - lv / safe) * g + lv * rg * xv / safe ** 3
        gx = np.where(active, gx, 0.0)
        gl = -np.sum(np.where(active, rg / safe, 0.0))
        return gx, np.array([[gl]])

    return x.tape._push("row_group_soft_threshold", (x, lam), out, bw)


def t_solve(a, b, solver=None):
    """``a^{-1} b``; the backward pass solves the transposed system.

    ``solver(a, b)`` defaults to a dense LU solve.
    """
    solve = solver or _dense_solve
    av = a.value
    x = solve(av, b.value)

    def bw(g):
        gb = solve(transpose(av), g)
        return -matmul(gb, transpose(x)), gb

    return a.tape._push("solve", (a, b), x, bw)


def _dense_solve(a, b):
    try:
        return np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular system: {exc}") from exc


def t_mse_loss(pred, target):
    """Mean over columns of the squared column error norm."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse: {pred.shape} vs {target.shape}")
    diff = pred.value - target.value
    t = diff.shape[1]
    loss = np.array([[np.sum(diff * diff) / t]])
    return pred.tape._push(
        "mse_loss", (pred, target), loss,
        lambda g: (2.0 * g[0, 0] / t * diff, -2.0 * g[0, 0] / t * diff),
    )


def t_masked_loss(pred, target, lam_loss):
    """Emitter-masked loss averaged over entries of each column and over columns.

    Entries where the target is nonzero contribute squared error; the rest
    contribute ``lam_loss * |pred|``. No gradient flows to ``target``.
    """
    if pred.shape != target.shape:
        raise ShapeError(f"masked loss: {pred.shape} vs {target.shape}")
    p, t = pred.value, target.value
    mask = t != 0
    diff = p - t
    count = p.size
    loss = np.array([[(np.sum(np.where(mask, diff * diff, 0.0))
                       + lam_loss * np.sum(np.where(mask, 0.0, np.abs(p)))) / count]])

    def bw(g):
        gp = np.where(mask, 2.0 * diff, lam_loss * np.sign(p)) * (g[0, 0] / count)
        return gp, None

    return pred.tape._push("masked_loss", (pred, target), loss, bw)
