"""Standard-normal machinery and the closed-form limit law of the bandit walk statistic."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

from .core import InvalidArgumentError

__all__ = [
    "BanditParams",
    "std_normal_cdf",
    "std_normal_quantile",
    "bandit_pdf",
    "tab_rejection_probability",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _as_float_array(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if not np.isfinite(arr).all():
        raise InvalidArgumentError(f"{name} must be finite")
    return arr


def std_normal_cdf(z):
    """Phi(z), vectorized; absolute error well below 1e-12."""
    arr = ndtr(_as_float_array(z, "z"))
    return float(arr) if np.ndim(z) == 0 else arr


def std_normal_quantile(p):
    """Inverse of the standard-normal cdf on (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if not ((arr > 0.0) & (arr < 1.0)).all():
        raise InvalidArgumentError("probabilities must lie strictly inside (0, 1)")
    out = ndtri(arr)
    return float(out) if np.ndim(p) == 0 else out


@dataclass(frozen=True)
class BanditParams:
    """Parameters of the walk statistic's limiting distribution.

    kappa is the signal-to-noise drift (sqrt(n) * mean / sd of the raw
    pseudo-outcomes) and sigma0 >= 1 the shape scale sqrt(1 + mean^2 / sd^2).
    """

    kappa: float
    sigma0: float

    def __post_init__(self):
        if not math.isfinite(self.kappa):
            raise InvalidArgumentError("kappa must be finite")
        if not (math.isfinite(self.sigma0) and self.sigma0 >= 1.0):
            raise InvalidArgumentError("sigma0 must be finite and >= 1")


def bandit_pdf(y, params: BanditParams):
    """Density of the bandit limit law at y.

    At kappa=0, sigma0=1 this is the standard normal density; for kappa > 0 the
    mass splits into two symmetric peaks near +/- sigma0*kappa.  The product
    exp(2*kappa*|y|/sigma0) * Phi(-|y|/sigma0 - kappa) is evaluated in log
    domain: it stays finite even where each factor alone over/underflows.
    """
    ay = np.abs(_as_float_array(y, "y"))
    k = params.kappa
    s0 = params.sigma0
    gauss = np.exp(-((ay - s0 * k) ** 2) / (2.0 * s0 * s0)) / (_SQRT_2PI * s0)
    tail = np.exp(2.0 * k * ay / s0 + log_ndtr(-ay / s0 - k))
    out = gauss - (k / s0) * tail
    return float(out) if np.ndim(y) == 0 else out


def tab_rejection_probability(params: BanditParams, alpha: float) -> float:
    """Probability that |walk statistic| exceeds the two-sided normal cutoff.

    Equals the mass the bandit law places outside [-z, z] with z the
    (1 - alpha/2) normal quantile; alpha exactly at kappa=0, sigma0=1.
    """
    if not (0.0 < alpha < 1.0):
        raise InvalidArgumentError("alpha must lie strictly inside (0, 1)")
    z = float(ndtri(1.0 - alpha / 2.0))
    k = params.kappa
    s0 = params.sigma0
    p = float(ndtr(k - z / s0) + np.exp(2.0 * k * z / s0 + log_ndtr(-k - z / s0)))
    return min(max(p, 0.0), 1.0)
