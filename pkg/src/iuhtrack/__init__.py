"""Bayesian tracking of Gamma instantaneous unit hydrograph parameters."""

from iuhtrack.iuh_model import (
    DailySeries,
    DiscreteKernel,
    IuhParams,
    IuhType,
    Quantity,
    classify,
    convolve,
    gamma_kernel,
    idr,
)

__version__ = "0.1.0"

__all__ = [
    "DailySeries",
    "DiscreteKernel",
    "IuhParams",
    "IuhType",
    "Quantity",
    "classify",
    "convolve",
    "gamma_kernel",
    "idr",
]
