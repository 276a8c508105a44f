"""Outcome-regression and propensity nuisance fits with cross-fitting support.

Learners are deliberately small: per-arm ridge least squares (intercept
unpenalized, penalty chosen by generalized cross-validation unless given) for
the outcome, and logistic regression by iteratively reweighted least squares
for the propensity, with predictions clipped away from 0 and 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .core import InvalidArgumentError, MissingArmError, NumericError, RngStream, kfold_split

__all__ = [
    "FeatureMap",
    "OutcomeModel",
    "PropensityModel",
    "KnownPropensity",
    "LearnerConfig",
    "CrossfitResult",
    "fit_outcome",
    "fit_propensity",
    "crossfit_predict",
    "ridge_fit",
    "GCV_GRID",
]

GCV_GRID = tuple(np.logspace(-4.0, 2.0, 10))


@dataclass(frozen=True)
class FeatureMap:
    """Deterministic feature expansion applied before every linear fit.

    kind "linear" keeps the raw columns; "poly2" appends squares and pairwise
    products; "custom" stacks the provided callables (each mapping the (n, p)
    matrix to a column or block).  The intercept is added by the fitters, not
    here.
    """

    kind: str = "poly2"
    funcs: tuple = ()

    def __post_init__(self):
        if self.kind not in ("linear", "poly2", "custom"):
            raise InvalidArgumentError(f"unknown feature map kind {self.kind!r}")
        if self.kind == "custom" and not self.funcs:
            raise InvalidArgumentError("custom feature map needs at least one function")

    def expand(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2:
            raise InvalidArgumentError("feature map expects a 2-d matrix")
        if self.kind == "linear":
            return x
        if self.kind == "poly2":
            n, p = x.shape
            blocks = [x, x * x]
            for i in range(p):
                for j in range(i + 1, p):
                    blocks.append((x[:, i] * x[:, j])[:, None])
            return np.hstack(blocks)
        cols = [np.asarray(f(x), dtype=float).reshape(len(x), -1) for f in self.funcs]
        return np.hstack(cols)

    def dim(self, p: int) -> int:
        if self.kind == "linear":
            return p
        if self.kind == "poly2":
            return 2 * p + p * (p - 1) // 2
        return self.expand(np.zeros((1, p))).shape[1]


class _RidgePath:
    """Ridge solutions with an unpenalized intercept, reusable across penalties.

    Centering the design and response makes the intercept exactly unpenalized;
    one SVD then serves every candidate penalty, both for coefficients and for
    the generalized cross-validation criterion n * RSS / (n - edf)^2.
    """

    def __init__(self, z: np.ndarray, y: np.ndarray):
        self.n = z.shape[0]
        self.zmean = z.mean(axis=0)
        self.ymean = y.mean()
        zc = z - self.zmean
        yc = y - self.ymean
        u, s, vt = np.linalg.svd(zc, full_matrices=False)
        self.s = s
        self.vt = vt
        self.uty = u.T @ yc
        self.ycss = float(yc @ yc)

    def solve(self, lam: float) -> tuple[float, np.ndarray]:
        denom = self.s**2 + lam
        d = np.divide(self.s, denom, out=np.zeros_like(self.s), where=denom > 0)
        beta = self.vt.T @ (d * self.uty)
        intercept = self.ymean - self.zmean @ beta
        return float(intercept), beta

    def gcv(self, lam: float) -> float:
        denom = self.s**2 + lam
        shrink = np.divide(self.s**2, denom, out=np.zeros_like(self.s), where=denom > 0)
        rss = self.ycss - float((2.0 * shrink - shrink**2) @ self.uty**2)
        edf = 1.0 + float(shrink.sum())
        if self.n - edf <= 0:
            return np.inf
        return self.n * max(rss, 0.0) / (self.n - edf) ** 2

    def select(self, grid) -> float:
        crits = [self.gcv(lam) for lam in grid]
        finite = [(c, lam) for c, lam in zip(crits, grid) if np.isfinite(c)]
        if not finite:
            # rank-deficient everywhere: fall back to the smallest penalty
            return float(min(grid))
        return float(min(finite)[1])


def ridge_fit(features: np.ndarray, y: np.ndarray, lam: float | None = None,
              grid=GCV_GRID) -> tuple[float, np.ndarray, float]:
    """Ridge fit of y on features plus an unpenalized intercept.

    lam=None selects the penalty by generalized cross-validation over the
    grid.  Returns (intercept, coefficients, penalty used).
    """
    features = np.asarray(features, dtype=float)
    y = np.asarray(y, dtype=float)
    if lam is not None and lam < 0:
        raise InvalidArgumentError("ridge penalty must be >= 0")
    path = _RidgePath(features, y)
    lam_used = path.select(grid) if lam is None else float(lam)
    intercept, beta = path.solve(lam_used)
    return intercept, beta, lam_used


@dataclass(frozen=True)
class OutcomeModel:
    """Per-arm ridge regression of the outcome on expanded features."""

    coef0: np.ndarray  # intercept first, then feature coefficients
    coef1: np.ndarray
    fmap: FeatureMap
    ridge_lambda: tuple

    def predict(self, arm: int, x) -> np.ndarray:
        g = self.fmap.expand(np.asarray(x, dtype=float))
        c = self.coef1 if arm == 1 else self.coef0
        return c[0] + g @ c[1:]


@dataclass(frozen=True)
class PropensityModel:
    """Logistic propensity fit; predictions are clipped into [clip, 1 - clip]."""

    coef: np.ndarray  # intercept first
    fmap: FeatureMap
    clip: float
    converged: bool
    n_iter: int
    ll_path: tuple = field(repr=False, default=())

    def predict1(self, x) -> np.ndarray:
        g = self.fmap.expand(np.asarray(x, dtype=float))
        p = expit(self.coef[0] + g @ self.coef[1:])
        return np.clip(p, self.clip, 1.0 - self.clip)


@dataclass(frozen=True)
class KnownPropensity:
    """Known randomization probability P(A=1); bypasses estimation entirely."""

    p1: float

    def __post_init__(self):
        if not 0.0 < self.p1 < 1.0:
            raise InvalidArgumentError("known propensity must lie strictly inside (0, 1)")

    def predict1(self, x) -> np.ndarray:
        return np.full(len(x), self.p1)


def fit_outcome(data, fmap: FeatureMap, ridge_lambda: float | None = None) -> OutcomeModel:
    """Fit the outcome regression separately on each arm."""
    coefs = {}
    lams = {}
    for arm in (0, 1):
        rows = data.a == arm
        if not rows.any():
            raise MissingArmError(f"no records with treatment {arm}")
        g = fmap.expand(data.x[rows])
        intercept, beta, lam = ridge_fit(g, data.y[rows], ridge_lambda)
        coefs[arm] = np.concatenate(([intercept], beta))
        lams[arm] = lam
    return OutcomeModel(coefs[0], coefs[1], fmap, (lams[0], lams[1]))


def _penalized_ll(eta: np.ndarray, a: np.ndarray, beta: np.ndarray, penalty: float) -> float:
    ll = float(a @ eta - np.logaddexp(0.0, eta).sum())
    return ll - 0.5 * penalty * float(beta[1:] @ beta[1:])


def fit_propensity(data, fmap: FeatureMap, clip: float = 0.01, max_iter: int = 100,
                   tol: float = 1e-8, slope_penalty: float = 1e-6) -> PropensityModel:
    """Logistic regression of treatment on expanded features by IRLS.

    Newton steps are halved whenever they would decrease the (slope-penalized)
    log-likelihood, so the likelihood path is nondecreasing; the small slope
    penalty keeps separable data solvable.  Non-convergence is flagged on the
    returned model, never raised.
    """
    if not 0.0 < clip < 0.5:
        raise InvalidArgumentError("clip bound must lie in (0, 0.5)")
    for arm in (0, 1):
        if not (data.a == arm).any():
            raise MissingArmError(f"no records with treatment {arm}")
    g = fmap.expand(data.x)
    G = np.hstack([np.ones((len(g), 1)), g])
    a = data.a.astype(float)
    pen = np.full(G.shape[1], slope_penalty)
    pen[0] = 0.0
    beta = np.zeros(G.shape[1])
    ll = _penalized_ll(G @ beta, a, beta, slope_penalty)
    ll_path = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = G @ beta
        p = expit(eta)
        grad = G.T @ (a - p) - pen * beta
        if np.abs(grad).max() <= tol:
            converged = True
            break
        w = np.maximum(p * (1.0 - p), 1e-10)
        hess = G.T @ (G * w[:, None]) + np.diag(pen)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"IRLS normal equations are singular: {exc}") from exc
        scale = 1.0
        for _ in range(30):
            cand = beta + scale * step
            cand_ll = _penalized_ll(G @ cand, a, cand, slope_penalty)
            if cand_ll >= ll:
                break
            scale *= 0.5
        else:
            break  # no ascent direction left; report non-convergence
        beta = beta + scale * step
        ll = cand_ll
        ll_path.append(ll)
    return PropensityModel(beta, fmap, clip, converged, it, tuple(ll_path))


@dataclass(frozen=True)
class LearnerConfig:
    """Nuisance learner settings shared by the cross-fitting pipelines."""

    outcome_map: FeatureMap = FeatureMap("poly2")
    propensity_map: FeatureMap = FeatureMap("poly2")
    ridge_lambda: float | None = None  # None -> GCV over the default grid
    clip: float = 0.01
    known_propensity: float | None = None  # randomization probability, skips the logistic fit


@dataclass(frozen=True)
class CrossfitResult:
    """Out-of-fold nuisance predictions for every record, in record order."""

    m0: np.ndarray
    m1: np.ndarray
    b1: np.ndarray
    fold: np.ndarray
    irls_converged: tuple
    clip_rate: float


def crossfit_predict(data, n_folds: int, config: LearnerConfig, rng: RngStream) -> CrossfitResult:
    """Fit nuisances on each fold's complement and predict on the fold itself.

    Record i's predictions never depend on record i's own row, which is what
    downstream pseudo-outcome averaging relies on.
    """
    fold = kfold_split(data.n, n_folds, rng)
    m0 = np.empty(data.n)
    m1 = np.empty(data.n)
    b1 = np.empty(data.n)
    flags = []
    for k in range(n_folds):
        test = fold == k
        train = data.subset(~test)
        for arm in (0, 1):
            if not (train.a == arm).any():
                raise MissingArmError(f"fold {k}: training complement has no treatment {arm} records")
        outcome = fit_outcome(train, config.outcome_map, config.ridge_lambda)
        if config.known_propensity is not None:
            prop = KnownPropensity(config.known_propensity)
        else:
            prop = fit_propensity(train, config.propensity_map, clip=config.clip)
            flags.append(prop.converged)
        xt = data.x[test]
        m0[test] = outcome.predict(0, xt)
        m1[test] = outcome.predict(1, xt)
        b1[test] = prop.predict1(xt)
    if config.known_propensity is not None:
        clip_rate = 0.0
    else:
        at_bound = (b1 <= config.clip) | (b1 >= 1.0 - config.clip)
        clip_rate = float(at_bound.mean())
    return CrossfitResult(m0, m1, b1, fold, tuple(flags), clip_rate)
