"""Checkpoint layout on top of the URK1 container.

Trainable arrays are stored under ``param.<name>``; frozen ADMM operators
under ``fixed.d.<stage>.<i>``; structural metadata as 1x1 scalars under
``meta.<key>``.
"""

import numpy as np

from .. import nets
from ..errors import ContainerError


def _s(v):
    return np.array([[float(v)]])


def checkpoint_arrays(kind, params, extra=None):
    out = {"meta.model": _s(nets.MODEL_KINDS.index(kind)), "meta.depth": _s(params.layers),
           "meta.tied": _s(params.tied)}
    if kind == "liht":
        out["meta.k"] = _s(params.k)
    if kind == "uadmm":
        out["meta.train_d"] = _s(params.train_d)
        out["meta.operators"] = _s(params.operators)
        if not params.train_d:
            for l, ops in enumerate(params.d):
                for i, d in enumerate(ops):
                    out[f"fixed.d.{l}.{i}"] = d
    for name, a in params.arrays().items():
        out[f"param.{name}"] = a
    for key, value in (extra or {}).items():
        out[f"meta.{key}"] = _s(value)
    return out


def _meta(arrays, key):
    try:
        return arrays[f"meta.{key}"][0, 0]
    except KeyError:
        raise ContainerError(f"checkpoint lacks meta.{key}") from None


def params_from_checkpoint(arrays):
    """Rebuild ``(kind, params)`` from checkpoint arrays."""
    kind = nets.MODEL_KINDS[int(_meta(arrays, "model"))]
    layers = int(_meta(arrays, "depth"))
    tied = bool(_meta(arrays, "tied"))
    p = {k[len("param."):]: v for k, v in arrays.items() if k.startswith("param.")}

    def seq(name):
        out, i = [], 0
        while f"{name}.{i}" in p:
            out.append(p[f"{name}.{i}"])
            i += 1
        return out

    try:
        if kind == "lista":
            params = nets.ListaParams(layers, tied, seq("w_e"), seq("w_t"), seq("log_lam"))
        elif kind == "liht":
            params = nets.LihtParams(layers, tied, int(_meta(arrays, "k")), seq("w_e"), seq("w_t"))
        elif kind == "lsparcom":
            params = nets.LSparcomParams(layers, tied, seq("w_e"), seq("w_t"), seq("alpha"),
                                         seq("log_beta"))
        else:
            c = int(_meta(arrays, "operators"))
            train_d = bool(_meta(arrays, "train_d"))
            src = p if train_d else {k[len("fixed."):]: v for k, v in arrays.items()
                                     if k.startswith("fixed.")}
            d = [[src[f"d.{l}.{i}"] for i in range(c)] for l in range(layers)]
            params = nets.UnrolledAdmmParams(layers, seq("log_lam"), seq("log_rho"),
                                             seq("log_eta"), d, train_d=train_d)
    except KeyError as exc:
        raise ContainerError(f"checkpoint is missing array {exc}") from None
    return kind, params
