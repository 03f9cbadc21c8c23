"""Gamma instantaneous unit hydrograph: kernel, convolution and shape diagnostics.

Rainfall and runoff are both basin-average depths in mm/day, so the rescaling
factor ``lam`` is the dimensionless fraction of rainfall that leaves as runoff.
"""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc

DEFAULT_HORIZON = 14
IDR_EVAL_TIME = 0.05  # day; keeps (k - 1) / t finite


class Quantity(str, enum.Enum):
    RAINFALL = "rainfall-depth"
    RUNOFF = "runoff-depth"
    KERNEL = "kernel-weight"


class IuhType(str, enum.Enum):
    ADVECTION = "advection"
    DIFFUSION = "diffusion"


@dataclass(frozen=True)
class IuhParams:
    """Rescaling factor, Gamma shape and Gamma scale (days) of the IUH."""

    lam: float
    k: float
    theta: float

    def validate(self) -> "IuhParams":
        if not (self.lam >= 0 and self.k > 0 and self.theta > 0):
            raise ValueError(
                f"IUH parameters out of domain: lam={self.lam}, k={self.k}, theta={self.theta}"
            )
        return self

    def as_array(self) -> np.ndarray:
        return np.array([self.lam, self.k, self.theta], dtype=float)

    @classmethod
    def from_array(cls, values) -> "IuhParams":
        lam, k, theta = (float(v) for v in values)
        return cls(lam, k, theta)


@dataclass(frozen=True)
class DailySeries:
    start_date: dt.date
    values: np.ndarray
    quantity: Quantity = Quantity.RAINFALL

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("DailySeries values must be one-dimensional")
        if not np.all(np.isfinite(values)):
            raise ValueError("DailySeries values must be finite")
        if self.quantity in (Quantity.RAINFALL, Quantity.KERNEL) and np.any(values < 0):
            raise ValueError(f"{self.quantity.value} values must be non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=len(self.values) - 1)

    def dates(self) -> list[dt.date]:
        return [self.start_date + dt.timedelta(days=i) for i in range(len(self.values))]


@dataclass(frozen=True)
class DiscreteKernel:
    weights: np.ndarray
    horizon: int = DEFAULT_HORIZON

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape != (self.horizon + 1,):
            raise ValueError(f"kernel must have {self.horizon + 1} weights, got {weights.shape}")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())


def kernel_weights(params: np.ndarray, horizon: int = DEFAULT_HORIZON) -> np.ndarray:
    """Day-integrated kernel weights for a stack of parameter triples.

    Args:
        params: Array of shape ``(..., 3)`` holding ``(lam, k, theta)``.
        horizon: Largest lag ``T``; the output has ``T + 1`` columns.

    Returns:
        Array of shape ``(..., T + 1)`` where column ``tau`` is
        ``lam * (F(tau + 1) - F(tau))`` and ``F`` is the Gamma CDF.
    """
    params = np.asarray(params, dtype=float)
    lam = params[..., 0:1]
    k = params[..., 1:2]
    theta = params[..., 2:3]
    edges = np.arange(horizon + 2, dtype=float)
    cdf = gammainc(k, edges / theta)
    return lam * np.diff(cdf, axis=-1)


def gamma_kernel(params: IuhParams, horizon: int = DEFAULT_HORIZON) -> DiscreteKernel:
    """Discretize the rescaled Gamma IUH into daily weights at lags ``0..horizon``.

    Each weight is the kernel integrated over one day, which stays finite for
    ``k < 1`` where the density itself diverges at ``t = 0``.
    """
    params.validate()
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    weights = kernel_weights(params.as_array(), horizon)
    return DiscreteKernel(np.clip(weights, 0.0, None), horizon)


def convolve(rain: DailySeries, kernel: DiscreteKernel) -> DailySeries:
    """Causal convolution of rainfall with the kernel; lags before the start contribute zero."""
    values = np.convolve(rain.values, kernel.weights)[: len(rain)]
    return DailySeries(rain.start_date, values, Quantity.RUNOFF)


def lag_matrix(rain: np.ndarray, horizon: int = DEFAULT_HORIZON) -> np.ndarray:
    """Matrix ``L`` with ``L[t, tau] = rain[t - tau]`` (zero before the start).

    ``L @ weights`` reproduces :func:`convolve` and lets many kernels be
    evaluated against one rainfall series at once.
    """
    rain = np.asarray(rain, dtype=float)
    n = len(rain)
    out = np.zeros((n, horizon + 1))
    for tau in range(min(horizon + 1, n)):
        out[tau:, tau] = rain[: n - tau]
    return out


def idr(params: IuhParams) -> float:
    """Relative initial slope of the IUH, ``(k - 1) / t - 1 / theta`` at ``t = 0.05`` day."""
    if params.theta == 0:
        raise ValueError("theta must be non-zero")
    # grouped so that the advection/diffusion boundary k = 1 + t / theta is exact
    return (params.k - (1.0 + IDR_EVAL_TIME / params.theta)) / IDR_EVAL_TIME


def classify(params: IuhParams) -> IuhType:
    # zero IDR is a diffusion IUH
    return IuhType.ADVECTION if idr(params) > 0 else IuhType.DIFFUSION
