"""Losses, optimizers and the supervised training loop for unrolled networks."""

import hashlib
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nets
from .autodiff import Tape, backward, t_masked_loss, t_mse_loss
from .dense import as_matrix, eye, power_iteration
from .errors import ContractError, NumericError, ShapeError, TrainingError
from .rng import Rng

__all__ = [
    "TrainConfig", "TrainReport", "mse_loss", "masked_loss", "nmse",
    "optimizer_step", "init_model", "model_loss_and_grads", "train",
]


@dataclass
class TrainConfig:
    model: str = "lista"
    depth: int = 10
    tied: bool = False
    epochs: int = 10
    batch: int = 32
    lr: float = 1e-3
    optimizer: str = "adam"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 1
    loss: str = "mse"
    loss_lambda: float = 0.01
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.epochs < 1:
            raise ContractError("epochs must be >= 1")
        if self.batch < 1:
            raise ContractError("batch must be >= 1")
        if self.lr < 0 or self.eps <= 0:
            raise ContractError("learning rate must be >= 0 and eps > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ContractError(f"unknown optimizer {self.optimizer!r}")
        if self.loss not in ("mse", "masked"):
            raise ContractError(f"unknown loss {self.loss!r}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ContractError("val_fraction must be in [0, 1)")

    def digest(self):
        text = ";".join(f"{k}={v!r}" for k, v in sorted(asdict(self).items()))
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class TrainReport:
    train_loss: list
    val_nmse: list
    val_nmse_planted: list
    seconds: list
    params: object
    config_hash: str
    seed: int
    wall_seconds: float = 0.0
    initial_val_nmse: float = float("nan")
    extras: dict = field(default_factory=dict)


def _same(pred, target):
    pred, target = np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} vs target {target.shape}")
    return pred, target


def mse_loss(pred, target):
    """Batch mean of squared column errors; a single column gives ``||pred - target||^2``."""
    pred, target = _same(as_matrix(pred), as_matrix(target))
    d = pred - target
    return float(np.sum(d * d)) / d.shape[1]


def masked_loss(pred, target, lam_loss):
    """Squared error on target support plus ``lam_loss * |pred|`` elsewhere, per entry."""
    pred, target = _same(pred, target)
    if lam_loss < 0:
        raise ContractError("lam_loss must be >= 0")
    mask = target != 0
    d = pred - target
    return float((np.sum(np.where(mask, d * d, 0.0))
                  + lam_loss * np.sum(np.where(mask, 0.0, np.abs(pred)))) / pred.size)


def nmse(pred, target):
    pred, target = _same(pred, target)
    den = float(np.sum(target * target))
    if den == 0.0:
        raise ContractError("NMSE undefined for an all-zero target")
    d = pred - target
    return float(np.sum(d * d)) / den


def optimizer_step(params, grads, state, config):
    """One SGD-momentum or Adam update over a name -> array mapping.

    Returns new ``(params, state)``; inputs are not modified.
    """
    state = dict(state) if state else {}
    t = state.get("t", 0) + 1
    new_params, new_state = {}, {"t": t}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        if config.optimizer == "sgd":
            v = config.momentum * state.get(("v", name), np.zeros_like(p)) + g
            new_state[("v", name)] = v
            new_params[name] = p - config.lr * v
        else:
            m = config.beta1 * state.get(("m", name), np.zeros_like(p)) + (1 - config.beta1) * g
            s = config.beta2 * state.get(("s", name), np.zeros_like(p)) + (1 - config.beta2) * g * g
            new_state[("m", name)], new_state[("s", name)] = m, s
            m_hat = m / (1 - config.beta1 ** t)
            s_hat = s / (1 - config.beta2 ** t)
            new_params[name] = p - config.lr * m_hat / (np.sqrt(s_hat) + config.eps)
    return new_params, new_state


def init_model(kind, w, depth, tied=False, lam=0.1, k=3, mu=None, alpha=None, beta=50.0,
               rho=1.0, eta=1.0):
    """Analytic (classic-solver) initialization for each model kind."""
    w = as_matrix(w, "W")
    if mu is None:
        mu = 1.01 * power_iteration(w)
    if kind == "lista":
        return nets.lista_init_analytic(w, mu, lam, depth, tied)
    if kind == "liht":
        return nets.liht_init_analytic(w, mu, k, depth, tied)
    if kind == "lsparcom":
        return nets.lsparcom_init_analytic(w, mu, lam / mu if alpha is None else alpha,
                                           beta, depth, tied)
    if kind == "uadmm":
        return nets.uadmm_init([eye(w.shape[1])], lam, rho, eta, depth)
    raise ContractError(f"unknown model kind {kind!r}")


def _loss_var(config, pred, target):
    if config.loss == "masked":
        return t_masked_loss(pred, target, config.loss_lambda)
    return t_mse_loss(pred, target)


def model_loss_and_grads(kind, params, y, target, config, w=None):
    """Record one forward pass plus loss on a fresh tape and differentiate it.

    Returns ``(loss, grads)`` with ``grads`` keyed like ``params.arrays()``.
    """
    tape = Tape()
    out, leaves = nets.forward(kind, params, y, w=w, tape=tape)
    loss = _loss_var(config, out, tape.leaf(target))
    g = backward(tape, loss)
    grads = {name: g.get(v.index, np.zeros_like(v.value)) for name, v in leaves.items()}
    return float(loss.value[0, 0]), grads


def _split(count, fraction, rng):
    order = rng.permutation(count)
    n_val = int(round(fraction * count))
    return sorted(order[n_val:]), sorted(order[:n_val])


def train(kind, params, dataset, config, clock=time.perf_counter, on_batch=None):
    """Mini-batch training on ``dataset["Y_train"]`` / ``dataset["X_train"]``.

    The training columns are split once into fit/validation parts by a
    seeded shuffle; each epoch reshuffles the fit part (Fisher-Yates on the
    same stream) and visits it in batches whose columns are kept in ascending
    sample order. ``on_batch(epoch, batch_index, columns, grads)`` is called
    with the exact gradients handed to the optimizer.
    """
    y_all = as_matrix(dataset["Y_train"], "Y_train")
    x_all = as_matrix(dataset["X_train"], "X_train")
    planted = dataset.get("P_train")
    w = dataset.get("W")
    if y_all.shape[1] != x_all.shape[1]:
        raise ShapeError("Y_train and X_train column counts differ")
    rng = Rng(config.seed)
    fit_idx, val_idx = _split(y_all.shape[1], config.val_fraction, rng)
    if not fit_idx:
        raise ContractError("no training columns after the validation split")

    def val_scores(p):
        if not val_idx:
            return float("nan"), float("nan")
        pred = nets.forward(kind, p, y_all[:, val_idx], w=w)
        vs_target = nmse(pred, x_all[:, val_idx])
        vs_planted = nmse(pred, planted[:, val_idx]) if planted is not None else float("nan")
        return vs_target, vs_planted

    start = clock()
    report = TrainReport([], [], [], [], params, config.digest(), config.seed)
    report.initial_val_nmse = val_scores(params)[0]
    state = {}
    for epoch in range(1, config.epochs + 1):
        order = rng.shuffle(list(fit_idx))
        total = 0.0
        for b, lo in enumerate(range(0, len(order), config.batch)):
            cols = sorted(order[lo:lo + config.batch])
            try:
                loss, grads = model_loss_and_grads(kind, params, y_all[:, cols], x_all[:, cols],
                                                   config, w=w)
            except NumericError as exc:
                raise TrainingError(f"forward pass failed in epoch {epoch}: {exc}",
                                    epoch=epoch) from exc
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingError(f"non-finite loss or gradient in epoch {epoch}", epoch=epoch)
            if on_batch is not None:
                on_batch(epoch, b, cols, grads)
            total += loss * len(cols)
            new_arrays, state = optimizer_step(params.arrays(), grads, state, config)
            params = params.with_arrays(new_arrays)
        try:
            vs_target, vs_planted = val_scores(params)
        except NumericError as exc:
            raise TrainingError(f"validation failed in epoch {epoch}: {exc}", epoch=epoch) from exc
        if not np.isfinite(vs_target) and val_idx:
            raise TrainingError(f"validation output diverged in epoch {epoch}", epoch=epoch)
        report.train_loss.append(total / len(order))
        report.val_nmse.append(vs_target)
        report.val_nmse_planted.append(vs_planted)
        report.seconds.append(clock() - start)
    report.params = params
    report.wall_seconds = clock() - start
    return report
