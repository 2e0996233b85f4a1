"""Unrolled sparse-recovery networks, classic solvers and a tiny reverse-mode tape."""

from .errors import (ConfigError, ContainerError, ContractError, DegenerateInputError,
                     NumericError, ShapeError, TrainingError, UnrollError)
from .rng import Rng

__version__ = "0.1.0"
