"""Evaluation metrics and plain-numeric CSV output."""

import math

import numpy as np

from ..errors import ContractError, ShapeError
from ..training import nmse

__all__ = ["nmse", "psnr", "format_number", "write_csv"]


def psnr(pred, target, peak):
    """``10 log10(peak^2 * count / ||pred - target||^2)``; ``inf`` on exact match."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} vs target {target.shape}")
    if not peak > 0:
        raise ContractError("peak must be > 0")
    err = float(np.sum((pred - target) ** 2))
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak * pred.size / err)


def format_number(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return repr(v)


def write_csv(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(v if isinstance(v, str) else format_number(v) for v in row) for row in rows]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
