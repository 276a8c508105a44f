"""Dynamic-setting pseudo-outcomes for panel experiments.

Per-day effect surrogates combine a step-1 value gap with per-step corrections
weighted by marginalized importance ratios: the ratio of the state-action
marginal under the deterministic always-arm policy to that under the behavior
policy.  Value functions come from backward per-step ridge regressions within
the matching arm; ratio backends model the per-step state marginals as
Gaussians (fitted, true-parameter, or a uniform diagnostic).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .core import (
    IidDataset,
    InvalidArgumentError,
    MissingArmError,
    PanelDataset,
    RngStream,
    Trajectory,
    kfold_split,
)
from .nuisance import FeatureMap, ridge_fit, fit_propensity
from .pseudo_iid import PseudoOutcomes
from .tab import z_test

__all__ = [
    "ArmValueFunction",
    "ValueModel",
    "GaussianDynamics",
    "BehaviorPolicy",
    "RatioModel",
    "DynamicCrossfit",
    "fit_value_backward",
    "fit_value_model",
    "fit_dynamics",
    "fit_mis_ratio",
    "drl_pseudo",
    "drl_pseudo_panel",
    "build_pseudo_dynamic",
    "crossfit_dynamic",
    "drl_z_test",
]

_LOG_HALF = math.log(0.5)


@dataclass(frozen=True)
class ArmValueFunction:
    """Value predictions for one arm: coef row t-1 gives step t, row T is zero.

    The zero row encodes the convention that the value beyond the horizon
    vanishes, so callers can uniformly ask for step T+1.
    """

    coef: np.ndarray  # (T+1, q+1), intercept first
    fmap: FeatureMap

    @property
    def horizon(self) -> int:
        return self.coef.shape[0] - 1

    def value(self, t: int, x) -> np.ndarray:
        if not 1 <= t <= self.horizon + 1:
            raise InvalidArgumentError(f"step must lie in 1..T+1, got {t}")
        c = self.coef[t - 1]
        if t == self.horizon + 1:
            return np.zeros(len(x))
        g = self.fmap.expand(np.asarray(x, dtype=float))
        return c[0] + g @ c[1:]


@dataclass(frozen=True)
class ValueModel:
    """Per-arm value functions sharing one basis."""

    arm0: ArmValueFunction
    arm1: ArmValueFunction

    @property
    def horizon(self) -> int:
        return self.arm0.horizon

    def value(self, arm: int, t: int, x) -> np.ndarray:
        return (self.arm1 if arm == 1 else self.arm0).value(t, x)

    @classmethod
    def from_affine(cls, c0, D0, c1, D1) -> "ValueModel":
        """Build from per-step affine values c[t] + D[t] @ x for t = 1..T.

        The zero post-horizon row is appended here; callers supply T rows
        (e.g. a linear-system oracle truncated to its horizon).
        """
        fmap = FeatureMap("linear")
        arms = []
        for c, D in ((np.asarray(c0, float), np.asarray(D0, float)),
                     (np.asarray(c1, float), np.asarray(D1, float))):
            if c.ndim != 1 or D.ndim != 2 or c.shape[0] != D.shape[0]:
                raise InvalidArgumentError("need c of shape (T,) and D of shape (T, d)")
            coef = np.vstack([np.hstack([c[:, None], D]), np.zeros(D.shape[1] + 1)])
            arms.append(ArmValueFunction(coef, fmap))
        return cls(arms[0], arms[1])


def fit_value_backward(panel: PanelDataset, arm: int, basis: FeatureMap,
                       ridge_lambda: float | None = None) -> ArmValueFunction:
    """Backward recursion t = T..1 of per-step ridge fits within the given arm.

    At each step the target is the immediate outcome plus the already-fitted
    next-step value evaluated at the next state; only days whose action at
    that step equals the arm enter the regression.
    """
    if arm not in (0, 1):
        raise InvalidArgumentError("arm must be 0 or 1")
    T, d = panel.horizon, panel.d
    q = basis.dim(d)
    coef = np.zeros((T + 1, q + 1))
    out = ArmValueFunction(coef, basis)
    next_values = np.zeros(panel.n)
    for t in range(T, 0, -1):
        rows = panel.a[:, t - 1] == arm
        if not rows.any():
            raise MissingArmError(f"no day with arm {arm} at step {t}")
        target = panel.y[rows, t - 1] + next_values[rows]
        g = basis.expand(panel.x[rows, t - 1])
        intercept, slope, _ = ridge_fit(g, target, ridge_lambda)
        coef[t - 1, 0] = intercept
        coef[t - 1, 1:] = slope
        if t > 1:
            next_values = out.value(t, panel.x[:, t - 1])
    coef.setflags(write=False)
    return out


def fit_value_model(panel: PanelDataset, basis: FeatureMap,
                    ridge_lambda: float | None = None) -> ValueModel:
    return ValueModel(fit_value_backward(panel, 0, basis, ridge_lambda),
                      fit_value_backward(panel, 1, basis, ridge_lambda))


@dataclass(frozen=True)
class GaussianDynamics:
    """Linear-Gaussian state system: initial law plus per-step affine transitions."""

    init_mean: np.ndarray   # (d,)
    init_cov: np.ndarray    # (d, d)
    phi: np.ndarray         # (T-1, d)
    Phi: np.ndarray         # (T-1, d, d)
    Gamma: np.ndarray       # (T-1, d)
    noise_cov: np.ndarray   # (T-1, d, d)
    regularized: bool = False

    @property
    def d(self) -> int:
        return self.init_mean.shape[0]

    @property
    def horizon(self) -> int:
        return self.phi.shape[0] + 1


def dynamics_from_coefficients(coef, noise_var: float, init_mean=None, init_cov=None) -> GaussianDynamics:
    """True-parameter dynamics for a simulated linear state system."""
    d = coef.d
    eye = np.eye(d)
    n_tr = coef.phi.shape[0]
    return GaussianDynamics(
        init_mean=np.zeros(d) if init_mean is None else np.asarray(init_mean, float),
        init_cov=eye.copy() if init_cov is None else np.asarray(init_cov, float),
        phi=coef.phi.copy(),
        Phi=coef.Phi.copy(),
        Gamma=coef.Gamma.copy(),
        noise_cov=np.tile(noise_var * eye, (n_tr, 1, 1)),
    )


def _spd_chol(cov: np.ndarray) -> tuple[np.ndarray, bool]:
    """Cholesky factor, regularizing by +1e-8 I when the matrix is not SPD."""
    try:
        return np.linalg.cholesky(cov), False
    except np.linalg.LinAlgError:
        return np.linalg.cholesky(cov + 1e-8 * np.eye(cov.shape[0])), True


def fit_dynamics(panel: PanelDataset) -> GaussianDynamics:
    """Least-squares linear-Gaussian dynamics fit, one transition per step.

    Requires the actions to vary at each step (the treatment column is
    otherwise collinear with the intercept).  Singular fitted covariances are
    ridged by +1e-8 I and flagged on the result.
    """
    n, T, d = panel.n, panel.horizon, panel.d
    phi = np.empty((T - 1, d))
    Phi = np.empty((T - 1, d, d))
    Gamma = np.empty((T - 1, d))
    noise = np.empty((T - 1, d, d))
    regularized = False
    for t0 in range(T - 1):
        design = np.hstack([np.ones((n, 1)), panel.x[:, t0], panel.a[:, t0, None].astype(float)])
        sol, *_ = np.linalg.lstsq(design, panel.x[:, t0 + 1], rcond=None)
        phi[t0] = sol[0]
        Phi[t0] = sol[1 : 1 + d].T
        Gamma[t0] = sol[1 + d]
        resid = panel.x[:, t0 + 1] - design @ sol
        cov = resid.T @ resid / max(n - (d + 2), 1)
        _, reg = _spd_chol(cov)
        if reg:
            cov = cov + 1e-8 * np.eye(d)
            regularized = True
        noise[t0] = cov
    init_mean = panel.x[:, 0].mean(axis=0)
    init_cov = np.cov(panel.x[:, 0], rowvar=False, ddof=1).reshape(d, d)
    _, reg = _spd_chol(init_cov)
    if reg:
        init_cov = init_cov + 1e-8 * np.eye(d)
        regularized = True
    return GaussianDynamics(init_mean, init_cov, phi, Phi, Gamma, noise, regularized)


@dataclass(frozen=True)
class BehaviorPolicy:
    """How treatments were assigned during the experiment.

    kind "switchback": each day is one of the two alternating sequences with
    equal probability.  kind "known": the action at step t is an independent
    coin with the given probability of treatment.  kind "estimated": per-step
    logistic fits of action on state (observational panels).
    """

    kind: str = "switchback"
    probs: np.ndarray | None = None  # (T,) P(A_t = 1), kind "known" only
    clip: float = 0.01

    def __post_init__(self):
        if self.kind not in ("switchback", "known", "estimated"):
            raise InvalidArgumentError(f"unknown behavior kind {self.kind!r}")
        if self.kind == "known":
            if self.probs is None:
                raise InvalidArgumentError("behavior kind 'known' needs per-step probabilities")
            probs = np.asarray(self.probs, dtype=float)
            if not ((probs >= self.clip) & (probs <= 1.0 - self.clip)).all():
                raise InvalidArgumentError("assignment probabilities must lie in [clip, 1-clip]")
            object.__setattr__(self, "probs", probs)
        elif self.probs is not None:
            raise InvalidArgumentError("probs applies only to behavior kind 'known'")
        if not 0.0 < self.clip < 0.5:
            raise InvalidArgumentError("clip bound must lie in (0, 0.5)")


class _GaussianSeq:
    """Per-step Gaussian state laws with cached Cholesky factors."""

    def __init__(self, means: np.ndarray, covs: np.ndarray):
        self.means = means
        self.chols = np.empty_like(covs)
        self.logdets = np.empty(len(covs))
        for t0 in range(len(covs)):
            chol, _ = _spd_chol(covs[t0])
            self.chols[t0] = chol
            self.logdets[t0] = 2.0 * np.log(np.diag(chol)).sum()

    def logpdf(self, t0: int, x: np.ndarray) -> np.ndarray:
        d = self.means.shape[1]
        delta = x - self.means[t0]
        z = solve_triangular(self.chols[t0], delta.T, lower=True)
        quad = (z * z).sum(axis=0)
        return -0.5 * (quad + self.logdets[t0] + d * math.log(2.0 * math.pi))


def _propagate(dyn: GaussianDynamics, actions: np.ndarray) -> _GaussianSeq:
    """Marginal state laws under a per-step action value in [0, 1].

    Deterministic policies use 0/1; probabilistic behaviors use the treatment
    probability, with a matched Bernoulli variance term added to the state
    covariance (moment matching of the mixture).
    """
    T = dyn.horizon
    d = dyn.d
    means = np.empty((T, d))
    covs = np.empty((T, d, d))
    means[0] = dyn.init_mean
    covs[0] = dyn.init_cov
    for t0 in range(T - 1):
        av = float(actions[t0])
        means[t0 + 1] = dyn.phi[t0] + dyn.Phi[t0] @ means[t0] + av * dyn.Gamma[t0]
        covs[t0 + 1] = (dyn.Phi[t0] @ covs[t0] @ dyn.Phi[t0].T + dyn.noise_cov[t0]
                        + av * (1.0 - av) * np.outer(dyn.Gamma[t0], dyn.Gamma[t0]))
    return _GaussianSeq(means, covs)


class RatioModel:
    """Marginalized importance ratios built from per-step Gaussian state laws.

    ratio(arm, t, x, a_obs) returns the estimated density ratio of the
    always-arm state-action law to the behavior law at step t, zero whenever
    the observed action differs from the arm, clipped into [0, omega_max].
    """

    def __init__(self, backend: str, behavior: BehaviorPolicy, dynamics: GaussianDynamics | None,
                 horizon: int, omega_max: float = 20.0, cond_models: tuple = (),
                 mean_probs: np.ndarray | None = None):
        if backend not in ("model_gaussian", "oracle", "plugin_uniform"):
            raise InvalidArgumentError(f"unknown ratio backend {backend!r}")
        if omega_max <= 0:
            raise InvalidArgumentError("omega_max must be positive")
        self.backend = backend
        self.behavior = behavior
        self.dynamics = dynamics
        self.omega_max = float(omega_max)
        self.horizon = horizon
        self._cond_models = cond_models
        self._mean_probs = mean_probs
        self._target: dict[int, _GaussianSeq] = {}
        self._patterns: dict[int, _GaussianSeq] = {}
        self._behavior_seq: _GaussianSeq | None = None
        if backend == "plugin_uniform":
            return
        if dynamics is None:
            raise InvalidArgumentError("gaussian backends need dynamics")
        T = horizon
        for arm in (0, 1):
            self._target[arm] = _propagate(dynamics, np.full(T, float(arm)))
        if behavior.kind == "switchback":
            for start in (0, 1):
                pattern = (start + np.arange(T)) % 2
                self._patterns[start] = _propagate(dynamics, pattern.astype(float))
        elif behavior.kind == "known":
            self._behavior_seq = _propagate(dynamics, behavior.probs)
        else:  # estimated
            self._behavior_seq = _propagate(dynamics, mean_probs)

    def _treat_prob(self, t0: int, x: np.ndarray) -> np.ndarray:
        """Behavior P(A_t = 1 | state) for factored behaviors."""
        if self.behavior.kind == "known":
            return np.full(len(x), self.behavior.probs[t0])
        model = self._cond_models[t0]
        return model.predict1(x)

    def _uniform_ratio(self, arm: int, t0: int, x: np.ndarray) -> np.ndarray:
        """Backend plugin_uniform: reciprocal action frequency, no state shift.

        Computed directly (not through logs) so that at horizon one the
        pseudo-outcome reduces bit for bit to the augmented IPW form.
        """
        if self.behavior.kind == "switchback":
            base = np.full(len(x), 2.0)
        else:
            p1 = np.clip(self._treat_prob(t0, x), self.behavior.clip, 1 - self.behavior.clip)
            base = 1.0 / (p1 if arm == 1 else 1.0 - p1)
        return np.minimum(base, self.omega_max)

    def log_ratio(self, arm: int, t: int, x: np.ndarray) -> np.ndarray:
        """Unclipped log density ratio at step t for rows already matching the arm."""
        t0 = t - 1
        if self.backend == "plugin_uniform":
            return np.log(self._uniform_ratio(arm, t0, x))
        lognum = self._target[arm].logpdf(t0, x)
        if self.behavior.kind == "switchback":
            start = arm ^ (t0 % 2)  # the unique pattern whose action at step t equals the arm
            logden = _LOG_HALF + self._patterns[start].logpdf(t0, x)
        else:
            p1 = np.clip(self._treat_prob(t0, x), self.behavior.clip, 1 - self.behavior.clip)
            prob = p1 if arm == 1 else 1.0 - p1
            logden = self._behavior_seq.logpdf(t0, x) + np.log(prob)
        return lognum - logden

    def ratio(self, arm: int, t: int, x, a_obs) -> np.ndarray:
        if arm not in (0, 1):
            raise InvalidArgumentError("arm must be 0 or 1")
        if not 1 <= t <= self.horizon:
            raise InvalidArgumentError(f"step must lie in 1..T, got {t}")
        x = np.asarray(x, dtype=float)
        a_obs = np.asarray(a_obs)
        out = np.zeros(len(x))
        rows = a_obs == arm
        if rows.any():
            if self.backend == "plugin_uniform":
                out[rows] = self._uniform_ratio(arm, t - 1, x[rows])
            else:
                logr = self.log_ratio(arm, t, x[rows])
                out[rows] = np.exp(np.minimum(logr, math.log(self.omega_max)))
        return out


def fit_mis_ratio(panel: PanelDataset | None, behavior: BehaviorPolicy,
                  backend: str = "model_gaussian", dynamics: GaussianDynamics | None = None,
                  omega_max: float = 20.0, horizon: int | None = None) -> RatioModel:
    """Build the ratio model for both arms.

    backend "model_gaussian" fits linear-Gaussian dynamics to the panel;
    "oracle" uses supplied true dynamics (simulation and testing); and
    "plugin_uniform" ignores the state shift entirely (diagnostic baseline).
    """
    if backend == "oracle":
        if dynamics is None:
            raise InvalidArgumentError("oracle backend needs the true dynamics")
    elif backend == "model_gaussian":
        if panel is None:
            raise InvalidArgumentError("model_gaussian backend needs a panel to fit")
        dynamics = fit_dynamics(panel)
    elif backend != "plugin_uniform":
        raise InvalidArgumentError(f"unknown ratio backend {backend!r}")
    if horizon is None:
        horizon = panel.horizon if panel is not None else dynamics.horizon
    cond_models = ()
    mean_probs = None
    if behavior.kind == "estimated":
        if panel is None:
            raise InvalidArgumentError("estimated behavior needs a panel to fit")
        models = []
        probs = []
        fmap = FeatureMap("linear")
        for t0 in range(horizon):
            step_data = IidDataset(panel.x[:, t0], panel.a[:, t0], np.zeros(panel.n))
            model = fit_propensity(step_data, fmap, clip=behavior.clip)
            models.append(model)
            probs.append(float(model.predict1(panel.x[:, t0]).mean()))
        cond_models = tuple(models)
        mean_probs = np.asarray(probs)
    return RatioModel(backend, behavior, dynamics, horizon, omega_max, cond_models, mean_probs)


def drl_pseudo_panel(x: np.ndarray, a: np.ndarray, y: np.ndarray,
                     values: ValueModel, ratios: RatioModel) -> np.ndarray:
    """Per-day pseudo-outcomes over a whole panel block, vectorized across days.

    mu_i = (1/T) * step-1 value gap + (1/T) * sum over steps and arms of the
    signed, ratio-weighted temporal-difference residual; the post-horizon
    value is zero by convention, so the last step's residual uses the outcome
    alone.
    """
    n, T = y.shape
    vals = {arm: np.empty((T + 1, n)) for arm in (0, 1)}
    for arm in (0, 1):
        for t0 in range(T):
            vals[arm][t0] = values.value(arm, t0 + 1, x[:, t0])
        vals[arm][T] = 0.0
    mu = (vals[1][0] - vals[0][0]) / T
    for t0 in range(T):
        for arm in (0, 1):
            w = ratios.ratio(arm, t0 + 1, x[:, t0], a[:, t0])
            bracket = y[:, t0] + vals[arm][t0 + 1] - vals[arm][t0]
            sign = 1.0 if arm == 1 else -1.0
            mu = mu + (sign / T) * (w * bracket)
    return mu


def drl_pseudo(traj: Trajectory, values: ValueModel, ratios: RatioModel) -> float:
    """Pseudo-outcome of a single trajectory."""
    return float(drl_pseudo_panel(traj.x[None], traj.a[None], traj.y[None], values, ratios)[0])


@dataclass(frozen=True)
class DynamicCrossfit:
    """Out-of-fold pseudo-outcomes plus fitting diagnostics."""

    mu_hat: np.ndarray
    fold: np.ndarray
    omega_clip_rate: float
    dynamics_regularized: bool


def crossfit_dynamic(panel: PanelDataset, n_folds: int, basis: FeatureMap,
                     behavior: BehaviorPolicy, backend: str, rng: RngStream,
                     ridge_lambda: float | None = None,
                     dynamics: GaussianDynamics | None = None,
                     omega_max: float = 20.0) -> DynamicCrossfit:
    """Fold-wise dynamic pseudo-outcome construction over days.

    Value and ratio models are fitted on each fold's complement days and
    evaluated on the fold's own days; results are assembled in day order.
    """
    fold = kfold_split(panel.n, n_folds, rng)
    mu = np.empty(panel.n)
    clipped = 0
    evaluated = 0
    regularized = False
    for k in range(n_folds):
        test = fold == k
        train = panel.subset(~test)
        try:
            values = fit_value_model(train, basis, ridge_lambda)
            ratios = fit_mis_ratio(train, behavior, backend, dynamics=dynamics,
                                   omega_max=omega_max, horizon=panel.horizon)
        except MissingArmError as exc:
            raise MissingArmError(f"fold {k}: {exc}") from exc
        if ratios.dynamics is not None and ratios.dynamics.regularized:
            regularized = True
        xb, ab, yb = panel.x[test], panel.a[test], panel.y[test]
        mu[test] = drl_pseudo_panel(xb, ab, yb, values, ratios)
        if backend != "plugin_uniform":
            cap = math.log(omega_max)
            for t in range(1, panel.horizon + 1):
                for arm in (0, 1):
                    rows = ab[:, t - 1] == arm
                    if rows.any():
                        logr = ratios.log_ratio(arm, t, xb[rows, t - 1])
                        clipped += int((logr > cap).sum())
                        evaluated += int(rows.sum())
    clip_rate = clipped / evaluated if evaluated else 0.0
    return DynamicCrossfit(mu, fold, float(clip_rate), regularized)


def build_pseudo_dynamic(panel: PanelDataset, n_folds: int, basis: FeatureMap,
                         behavior: BehaviorPolicy, backend: str, rng: RngStream,
                         ridge_lambda: float | None = None,
                         dynamics: GaussianDynamics | None = None,
                         omega_max: float = 20.0) -> PseudoOutcomes:
    """Cross-fitted dynamic pseudo-outcomes in day order.

    A zero sample SD is recorded on the result and rejected only when a test
    statistic is requested.
    """
    cross = crossfit_dynamic(panel, n_folds, basis, behavior, backend, rng,
                             ridge_lambda, dynamics, omega_max)
    return PseudoOutcomes.from_mu(cross.mu_hat)


# identical contract and implementation as the i.i.d. average test
drl_z_test = z_test
