"""Vast integrated volatility matrix estimation from high-frequency tick data,
PSD projection, and gross-exposure constrained portfolio allocation."""

from . import (
    backtest,
    concentration,
    estimators,
    portfolio,
    psdproject,
    simengine,
    sync,
    tickdata,
)
from ._kernels import backend, set_backend

__version__ = "0.1.0"

__all__ = [
    "backtest",
    "concentration",
    "estimators",
    "portfolio",
    "psdproject",
    "simengine",
    "sync",
    "tickdata",
    "backend",
    "set_backend",
    "__version__",
]
