"""IPW and AIPW pseudo-outcomes for the i.i.d. setting.

Each record gets a surrogate for its unobservable outcome difference; the
augmented (AIPW) form is unbiased for the average treatment effect whenever
either nuisance function is correct and is what the test pipeline feeds to the
walk statistic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import IidDataset, IidRecord, InvalidArgumentError, RngStream
from .nuisance import LearnerConfig, crossfit_predict

__all__ = [
    "PseudoOutcomes",
    "ipw_pseudo",
    "aipw_pseudo",
    "pseudo_from_predictions",
    "pseudo_from_models",
    "build_pseudo",
]


@dataclass(frozen=True)
class PseudoOutcomes:
    """Per-record effect surrogates with their sample mean and sample SD.

    Use :meth:`from_mu` in normal operation so that sigma_hat is exactly the
    (n-1)-denominator sample SD of mu_hat; direct construction exists to
    inject a known sigma in fixtures and degenerate cases.
    """

    mu_hat: np.ndarray
    sigma_hat: float
    mu_bar: float

    @classmethod
    def from_mu(cls, mu_hat) -> "PseudoOutcomes":
        mu = np.array(mu_hat, dtype=float)
        if mu.ndim != 1 or mu.size < 2:
            raise InvalidArgumentError("need a 1-d vector of at least 2 pseudo-outcomes")
        if not np.isfinite(mu).all():
            raise InvalidArgumentError("pseudo-outcomes must be finite")
        # exactly rounded sums make mean and SD invariant to the input order
        mu_bar = math.fsum(mu) / mu.size
        sigma_hat = math.sqrt(math.fsum((mu - mu_bar) ** 2) / (mu.size - 1))
        mu.setflags(write=False)
        return cls(mu, sigma_hat, mu_bar)

    @property
    def n(self) -> int:
        return len(self.mu_hat)


def ipw_pseudo(record: IidRecord, propensity) -> float:
    """Inverse-propensity-weighted surrogate for one record.

    The propensity model is assumed clipped, which bounds the weight by
    1/clip and keeps the value finite.
    """
    b1 = float(np.asarray(propensity.predict1(record.x[None, :]))[0])
    if record.a == 1:
        return (1.0 / b1) * record.y
    return -((1.0 / (1.0 - b1)) * record.y)


def aipw_pseudo(record: IidRecord, outcome, propensity) -> float:
    """Augmented IPW surrogate: regression difference plus a weighted residual.

    Written as weight-times-residual so the one-step dynamic pseudo-outcome
    reduces to it bit for bit.
    """
    x = record.x[None, :]
    m0 = float(np.asarray(outcome.predict(0, x))[0])
    m1 = float(np.asarray(outcome.predict(1, x))[0])
    b1 = float(np.asarray(propensity.predict1(x))[0])
    if record.a == 1:
        return (m1 - m0) + (1.0 / b1) * (record.y - m1)
    return (m1 - m0) - (1.0 / (1.0 - b1)) * (record.y - m0)


def pseudo_from_predictions(data: IidDataset, m0, m1, b1, estimator: str = "aipw") -> PseudoOutcomes:
    """Assemble pseudo-outcomes from per-record nuisance predictions, in record order."""
    m0 = np.asarray(m0, dtype=float)
    m1 = np.asarray(m1, dtype=float)
    b1 = np.asarray(b1, dtype=float)
    treated = data.a == 1
    if estimator == "ipw":
        mu = np.where(treated, (1.0 / b1) * data.y, -((1.0 / (1.0 - b1)) * data.y))
    elif estimator == "aipw":
        mu = np.where(
            treated,
            (m1 - m0) + (1.0 / b1) * (data.y - m1),
            (m1 - m0) - (1.0 / (1.0 - b1)) * (data.y - m0),
        )
    else:
        raise InvalidArgumentError(f"unknown estimator {estimator!r}")
    return PseudoOutcomes.from_mu(mu)


def pseudo_from_models(data: IidDataset, outcome, propensity, estimator: str = "aipw") -> PseudoOutcomes:
    """Pseudo-outcomes with externally fitted nuisance models (no cross-fitting)."""
    b1 = np.asarray(propensity.predict1(data.x), dtype=float)
    if estimator == "ipw":
        m0 = m1 = np.zeros(data.n)
    else:
        m0 = np.asarray(outcome.predict(0, data.x), dtype=float)
        m1 = np.asarray(outcome.predict(1, data.x), dtype=float)
    return pseudo_from_predictions(data, m0, m1, b1, estimator)


def build_pseudo(data: IidDataset, n_folds: int, config: LearnerConfig, rng: RngStream,
                 estimator: str = "aipw") -> PseudoOutcomes:
    """Cross-fitted pseudo-outcome construction; see :func:`crossfit_predict`.

    A zero sample SD is not an error here: it is recorded on the result and
    rejected only when a test statistic is requested.
    """
    cross = crossfit_predict(data, n_folds, config, rng)
    return pseudo_from_predictions(data, cross.m0, cross.m1, cross.b1, estimator)
