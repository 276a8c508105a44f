"""Synthetic experiment environments and ground-truth effect oracles.

Covers the randomized and confounded i.i.d. families, the linear and
nonlinear Markov-decision-process panels with switchback assignment, the
closed-form average effect for linear dynamics, and a wild-bootstrap
environment builder that turns a single-policy source panel into a simulator
with a calibrated improvement.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    IidDataset,
    InvalidArgumentError,
    NumericError,
    PanelDataset,
    RngStream,
    SchemaError,
)
from .nuisance import ridge_fit

__all__ = [
    "IidDgpSpec",
    "MdpCoefficients",
    "MdpDgpSpec",
    "BootstrapEnv",
    "RAND_HYPOTHESES",
    "CONF_HYPOTHESES",
    "DELTA_GRID",
    "gen_randomized_iid",
    "gen_confounded_iid",
    "true_ate_iid",
    "switchback_assign",
    "switchback_assign_per_day",
    "draw_mdp_coefficients",
    "gen_mdp",
    "true_ate_linear",
    "true_ate_mdp",
    "true_value_affine",
    "build_bootstrap_env",
    "sample_bootstrap",
]

RAND_HYPOTHESES = ("H0_1", "H0_2", "H1_1", "H1_2", "H1_3")
CONF_HYPOTHESES = tuple(f"H{i}_{j}" for i in (0, 1) for j in range(1, 6))
RAND_PA = (0.3, 0.5)
RAND_SIGMA0 = (0.5, 1.0, 3.0)
CONF_SIGMA0 = (0.5, 1.0, 3.0)
CONF_DF = (3, 5, 10)
CONF_D = (3, 20, 50)
DELTA_GRID = (0.0, 0.015, 0.055, 0.1, 0.15, 0.25)

REWARD_NOISE_VAR = 1.5  # each of the i.i.d. and autocorrelated reward components
STATE_NOISE_VAR = 1.5
AR_RHO = 0.5

_ORACLE_STREAM = RngStream(0x5EED0A7E, 0)  # fixed stream for ground-truth Monte Carlo
_ORACLE_DRAWS = 1_000_000


@dataclass(frozen=True)
class IidDgpSpec:
    """Parameter set for one i.i.d. environment from the catalogs.

    family "randomized": two Gaussian covariates and a coin-flip treatment
    with success probability p_a.  family "confounded": d covariates with the
    treatment following Bernoulli(X1), Gaussian (sigma0) or Student-t (df)
    residuals.  Values are restricted to the catalog's listed sets.
    """

    family: str
    hypothesis: str
    n: int
    p_a: float | None = None
    sigma0: float | None = None
    df: int | None = None
    d: int | None = None

    def __post_init__(self):
        if self.n < 2:
            raise InvalidArgumentError("n must be >= 2")
        if self.family == "randomized":
            if self.hypothesis not in RAND_HYPOTHESES:
                raise InvalidArgumentError(f"unknown randomized hypothesis {self.hypothesis!r}")
            if self.p_a not in RAND_PA:
                raise InvalidArgumentError(f"p_a must be one of {RAND_PA}, got {self.p_a!r}")
            if self.sigma0 not in RAND_SIGMA0:
                raise InvalidArgumentError(f"sigma0 must be one of {RAND_SIGMA0}, got {self.sigma0!r}")
            if self.df is not None:
                raise InvalidArgumentError("df applies only to the confounded family")
            if self.d is None:
                object.__setattr__(self, "d", 2)
            elif self.d != 2:
                raise InvalidArgumentError("randomized covariates are two-dimensional")
        elif self.family == "confounded":
            if self.hypothesis not in CONF_HYPOTHESES:
                raise InvalidArgumentError(f"unknown confounded hypothesis {self.hypothesis!r}")
            if self.p_a is not None:
                raise InvalidArgumentError("p_a applies only to the randomized family")
            if (self.sigma0 is None) == (self.df is None):
                raise InvalidArgumentError("confounded family needs exactly one of sigma0 or df")
            if self.sigma0 is not None and self.sigma0 not in CONF_SIGMA0:
                raise InvalidArgumentError(f"sigma0 must be one of {CONF_SIGMA0}, got {self.sigma0!r}")
            if self.df is not None and self.df not in CONF_DF:
                raise InvalidArgumentError(f"df must be one of {CONF_DF}, got {self.df!r}")
            if self.d is None:
                object.__setattr__(self, "d", 3)
            elif self.d not in CONF_D:
                raise InvalidArgumentError(f"d must be one of {CONF_D}, got {self.d!r}")
        else:
            raise InvalidArgumentError(f"unknown family {self.family!r}")

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "hypothesis": self.hypothesis,
            "n": self.n,
            "p_a": self.p_a,
            "sigma0": self.sigma0,
            "df": self.df,
            "d": self.d,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "IidDgpSpec":
        return cls(
            family=payload["family"],
            hypothesis=payload["hypothesis"],
            n=int(payload["n"]),
            p_a=payload.get("p_a"),
            sigma0=payload.get("sigma0"),
            df=payload.get("df"),
            d=payload.get("d"),
        )


def _rand_scale(sigma0: float) -> float:
    return (0.2 if sigma0 == 0.5 else 1.0) * (0.3 if sigma0 == 1.0 else 1.0)


def _rand_cate(hypothesis: str, sigma0: float, x: np.ndarray) -> np.ndarray:
    z = x[:, 0] + x[:, 1]
    s = _rand_scale(sigma0)
    if hypothesis == "H0_1":
        return np.zeros(len(x))
    if hypothesis == "H0_2":
        return s * (math.sqrt(math.pi) / 16.0) * z**3
    if hypothesis == "H1_1":
        return s * 0.8 * np.maximum(1.0, z)
    if hypothesis == "H1_2":
        return s * 0.8 * np.abs(z)
    return s * 0.5 * z**2  # H1_3


def gen_randomized_iid(spec: IidDgpSpec, rng: RngStream) -> tuple[IidDataset, float]:
    """Sample a completely randomized study; also returns the true average effect."""
    if spec.family != "randomized":
        raise InvalidArgumentError("spec is not a randomized-family spec")
    gen = rng.generator()
    x = gen.standard_normal((spec.n, 2))
    a = (gen.random(spec.n) < spec.p_a).astype(np.int64)
    eps = spec.sigma0 * gen.standard_normal(spec.n)
    y = (x[:, 0] - x[:, 1] + 2.0) / 2.0 + a * _rand_cate(spec.hypothesis, spec.sigma0, x) + eps
    ate, _ = true_ate_iid(spec)
    return IidDataset(x, a, y), ate


_CONF_BERN_HYPS = ("H1_1", "H1_2")  # second/third covariates Bernoulli; extra Bernoulli noise


def _conf_covariates(hypothesis: str, d: int, gen: np.random.Generator, n: int) -> np.ndarray:
    x = np.empty((n, d))
    x[:, 0] = gen.random(n)
    if hypothesis in _CONF_BERN_HYPS:
        x[:, 1] = gen.integers(0, 2, size=n)
        x[:, 2] = gen.integers(0, 2, size=n)
    else:
        x[:, 1] = gen.uniform(-2.0, 2.0, size=n)
        x[:, 2] = gen.uniform(-2.0, 2.0, size=n)
    if d > 3:
        x[:, 3:] = gen.standard_normal((n, d - 3))
    return x


def _conf_noise_family(spec: IidDgpSpec) -> str:
    return "normal" if spec.sigma0 is not None else "t"


def _conf_baseline(hypothesis: str, family: str, x: np.ndarray) -> np.ndarray:
    x2 = x[:, 1]
    if hypothesis.startswith("H0"):
        return x2**2
    idx = int(hypothesis[-1])
    if idx == 1:
        return np.full(len(x), 0.3)
    if idx == 2:
        return np.full(len(x), 0.024 if family == "normal" else 0.015)
    if idx == 3:
        return x2.copy()
    return x2**2  # H1_4, H1_5


def _conf_cate(hypothesis: str, family: str, scale_param: float, x: np.ndarray) -> np.ndarray:
    x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
    q = np.pi * x2 / 4.0
    idx = int(hypothesis[-1])
    if hypothesis.startswith("H0"):
        tau0 = (
            x2**2 - 4.0 / 3.0 if idx == 1
            else x1 * x2**2 * x3 if idx == 2
            else 2.0 * x3 * np.cos(q) if idx == 3
            else 2.0 * x3 * np.sin(q) if idx == 4
            else 2.0 * np.sin(q)
        )
        if family == "normal":
            r = {0.5: 0.5, 1.0: 0.8, 3.0: 2.5}[scale_param]
            return r * tau0
        return np.asarray(tau0, dtype=float)
    if family == "normal":
        r = {0.5: 0.5, 1.0: 0.8, 3.0: 2.5}[scale_param]
        tau0 = (
            0.48 * (x1 <= 0.5) if idx == 1
            else np.full(len(x), 0.032) if idx == 2
            else 0.7 * x1 * x2**2 if idx == 3
            else 1.6 * x1 * np.cos(q) if idx == 4
            else 1.8 * x1 * np.cos(q) ** 2
        )
        return r * np.asarray(tau0, dtype=float)
    r = {3: 2.0, 5: 1.0, 10: 0.5}[int(scale_param)]
    tau = (
        0.48 * (x1 <= 0.5) if idx == 1
        else np.full(len(x), 0.1) if idx == 2
        else 0.8 * r * x1 * x2**2 if idx == 3
        else 2.0 * r * x1 * np.cos(q) if idx == 4
        else 2.0 * r * x1 * np.cos(q) ** 2
    )
    return np.asarray(tau, dtype=float)


def gen_confounded_iid(spec: IidDgpSpec, rng: RngStream) -> tuple[IidDataset, float]:
    """Sample a confounded observational study; also returns the true average effect."""
    if spec.family != "confounded":
        raise InvalidArgumentError("spec is not a confounded-family spec")
    family = _conf_noise_family(spec)
    scale_param = spec.sigma0 if family == "normal" else spec.df
    gen = rng.generator()
    x = _conf_covariates(spec.hypothesis, spec.d, gen, spec.n)
    a = (gen.random(spec.n) < x[:, 0]).astype(np.int64)
    m0 = _conf_baseline(spec.hypothesis, family, x)
    tau = _conf_cate(spec.hypothesis, family, scale_param, x)
    if family == "normal":
        eps = spec.sigma0 * gen.standard_normal(spec.n)
    else:
        eps = gen.standard_t(spec.df, size=spec.n)
    if spec.hypothesis in _CONF_BERN_HYPS:
        q = np.clip(m0 + a * tau, 0.0, 1.0)
        z = (gen.random(spec.n) < q).astype(float)
        # the Gaussian-residual catalog centers this term; the t catalog does not
        eps = eps + (z - q if family == "normal" else z)
    y = m0 + a * tau + eps
    ate, _ = true_ate_iid(spec)
    return IidDataset(x, a, y), ate


@functools.lru_cache(maxsize=None)
def _true_ate_iid_cached(family: str, hypothesis: str, sigma0, df) -> tuple[float, float]:
    gen = _ORACLE_STREAM.generator()
    n = _ORACLE_DRAWS
    if family == "randomized":
        if hypothesis == "H0_1":
            return 0.0, 0.0
        x = gen.standard_normal((n, 2))
        vals = _rand_cate(hypothesis, sigma0, x)
    else:
        noise = "normal" if sigma0 is not None else "t"
        scale_param = sigma0 if noise == "normal" else df
        x = _conf_covariates(hypothesis, 3, gen, n)
        tau = _conf_cate(hypothesis, noise, scale_param, x)
        vals = tau
        if hypothesis in _CONF_BERN_HYPS and noise == "t":
            # the uncentered Bernoulli term shifts the mean outcome per arm
            m0 = _conf_baseline(hypothesis, noise, x)
            vals = tau + np.clip(m0 + tau, 0.0, 1.0) - np.clip(m0, 0.0, 1.0)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))


def true_ate_iid(spec: IidDgpSpec) -> tuple[float, float]:
    """Ground-truth average effect for an i.i.d. spec, with its Monte Carlo SE.

    Computed once per (family, hypothesis, noise) from a fixed oracle stream
    with a million draws and cached for the process lifetime; effects do not
    depend on n, p_a, or inert extra covariates.
    """
    return _true_ate_iid_cached(spec.family, spec.hypothesis, spec.sigma0, spec.df)


def switchback_assign(n: int, T: int, rng: RngStream) -> np.ndarray:
    """Alternating assignment that continues across day boundaries.

    The very first action is a coin flip; afterwards every consecutive entry
    in row-major (day, step) order flips the previous one.
    """
    if n < 1 or T < 1:
        raise InvalidArgumentError("n and T must be >= 1")
    first = int(rng.generator().integers(0, 2))
    return ((first + np.arange(n * T)) % 2).reshape(n, T).astype(np.int64)


def switchback_assign_per_day(n: int, T: int, rng: RngStream) -> np.ndarray:
    """Alternating assignment with an independent coin flip starting each day.

    Unlike :func:`switchback_assign`, day patterns vary, so for every step both
    arms appear in roughly half the days, which per-step nuisance fits require;
    marginally each day is one of the two alternating sequences with equal
    probability.
    """
    if n < 1 or T < 1:
        raise InvalidArgumentError("n and T must be >= 1")
    first = rng.generator().integers(0, 2, size=n)
    return ((first[:, None] + np.arange(T)[None, :]) % 2).astype(np.int64)


@dataclass(frozen=True)
class MdpCoefficients:
    """Per-step coefficients of the linear state/reward system.

    Rewards use alpha, beta, gamma for steps 1..T; state transitions use phi,
    Phi, Gamma for steps 1..T-1 (states beyond the horizon are never used).
    """

    alpha: np.ndarray  # (T,)
    beta: np.ndarray   # (T, d)
    gamma: np.ndarray  # (T,)
    phi: np.ndarray    # (T-1, d)
    Phi: np.ndarray    # (T-1, d, d)
    Gamma: np.ndarray  # (T-1, d)

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "phi", "Phi", "Gamma"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        T, d = self.beta.shape
        if self.alpha.shape != (T,) or self.gamma.shape != (T,):
            raise InvalidArgumentError("alpha/gamma must have shape (T,)")
        if (self.phi.shape != (T - 1, d) or self.Phi.shape != (T - 1, d, d)
                or self.Gamma.shape != (T - 1, d)):
            raise InvalidArgumentError("transition arrays must have T-1 leading entries")

    @property
    def T(self) -> int:
        return self.beta.shape[0]

    @property
    def d(self) -> int:
        return self.beta.shape[1]

    def to_dict(self) -> dict:
        return {name: getattr(self, name).tolist()
                for name in ("alpha", "beta", "gamma", "phi", "Phi", "Gamma")}

    @classmethod
    def from_dict(cls, payload: dict) -> "MdpCoefficients":
        return cls(**{name: np.asarray(payload[name], dtype=float)
                      for name in ("alpha", "beta", "gamma", "phi", "Phi", "Gamma")})


def draw_mdp_coefficients(kind: str, delta: float, rng: RngStream, T: int = 24, d: int = 3) -> MdpCoefficients:
    """One coefficient draw for a panel environment.

    Drawn once per experiment configuration and reused across Monte Carlo
    replications, so replication noise never mixes with coefficient noise.
    """
    if kind not in ("linear", "nonlinear"):
        raise InvalidArgumentError(f"unknown MDP kind {kind!r}")
    if T < 1:
        raise InvalidArgumentError("T must be >= 1")
    gen = rng.generator()

    def signed_uniform(lo, hi, size):
        mag = gen.uniform(lo, hi, size=size)
        sign = np.where(gen.random(size=size) < 0.5, -1.0, 1.0)
        return sign * mag

    alpha = signed_uniform(0.5, 1.0, T)
    beta = signed_uniform(0.1, 0.3, (T, d))
    phi = signed_uniform(0.5, 1.0, (max(T - 1, 0), d))
    lim = 0.6 if kind == "nonlinear" else 0.3
    Phi = gen.uniform(-lim, lim, size=(max(T - 1, 0), d, d))
    Gamma = gen.normal(0.0, math.sqrt(0.5 * delta), size=(max(T - 1, 0), d)) if delta > 0 \
        else np.zeros((max(T - 1, 0), d))
    gamma = gen.uniform(0.1 * delta, 0.1 + 0.8 * delta, size=T) if delta > 0 else np.zeros(T)
    return MdpCoefficients(alpha, beta, gamma, phi, Phi, Gamma)


@dataclass(frozen=True)
class MdpDgpSpec:
    """A panel environment: kind, size, treatment strength, and its coefficient draw."""

    kind: str
    n: int
    delta: float
    coefficients: MdpCoefficients
    T: int = 24
    d: int = 3

    def __post_init__(self):
        if self.kind not in ("linear", "nonlinear"):
            raise InvalidArgumentError(f"unknown MDP kind {self.kind!r}")
        if self.n < 2:
            raise InvalidArgumentError("n must be >= 2")
        if self.delta not in DELTA_GRID:
            raise InvalidArgumentError(f"delta must be one of {DELTA_GRID}, got {self.delta!r}")
        if self.coefficients.T != self.T or self.coefficients.d != self.d:
            raise InvalidArgumentError("coefficient shapes do not match (T, d)")
        if self.delta == 0.0 and self.coefficients.gamma.any():
            raise InvalidArgumentError("delta = 0 requires all direct-effect coefficients to be zero")

    @classmethod
    def draw(cls, kind: str, n: int, delta: float, rng: RngStream, T: int = 24, d: int = 3) -> "MdpDgpSpec":
        return cls(kind, n, delta, draw_mdp_coefficients(kind, delta, rng, T, d), T, d)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "delta": self.delta,
                "T": self.T, "d": self.d, "coefficients": self.coefficients.to_dict()}

    @classmethod
    def from_dict(cls, payload: dict) -> "MdpDgpSpec":
        return cls(payload["kind"], int(payload["n"]), float(payload["delta"]),
                   MdpCoefficients.from_dict(payload["coefficients"]),
                   int(payload["T"]), int(payload["d"]))


def _reward_mean_step(kind: str, coef: MdpCoefficients, t0: int, x: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Conditional mean reward at step index t0 for states x (n, d) and actions a (n,)."""
    a = np.asarray(a, dtype=float)
    if kind == "linear":
        return coef.alpha[t0] + x @ coef.beta[t0] + coef.gamma[t0] * a
    sc = (np.sin(x) + np.cos(x)) ** 2
    ag = a * coef.gamma[t0]
    return (coef.alpha[t0] + 2.0 * (sc @ coef.beta[t0])
            + 3.0 * (x @ coef.beta[t0]) * ag + (ag + np.cos(ag)) ** 2)


def _ar_reward_chol(T: int) -> np.ndarray:
    lags = np.abs(np.subtract.outer(np.arange(T), np.arange(T)))
    return np.linalg.cholesky(REWARD_NOISE_VAR * AR_RHO**lags)


def gen_mdp(spec: MdpDgpSpec, rng: RngStream, chain_days: bool = False) -> PanelDataset:
    """Simulate a panel from the environment.

    Actions alternate every step; by default each day's starting arm is an
    independent coin flip (chain_days=True instead continues the alternation
    across day boundaries, which at even horizons locks every day into the
    same pattern and makes per-step two-arm fits impossible).  Reward noise is
    the sum of an i.i.d. and an autocorrelated within-day component.
    """
    n, T, d = spec.n, spec.T, spec.d
    coef = spec.coefficients
    assign = switchback_assign if chain_days else switchback_assign_per_day
    a = assign(n, T, rng.child(0))
    x = np.empty((n, T, d))
    x[:, 0] = rng.child(1).generator().standard_normal((n, d))
    state_sd = math.sqrt(STATE_NOISE_VAR)
    gen_state = rng.child(2).generator()
    for t0 in range(T - 1):
        noise = state_sd * gen_state.standard_normal((n, d))
        x[:, t0 + 1] = coef.phi[t0] + x[:, t0] @ coef.Phi[t0].T + a[:, t0, None] * coef.Gamma[t0] + noise
    gen_reward = rng.child(3).generator()
    eta = gen_reward.standard_normal((n, T)) @ _ar_reward_chol(T).T
    eps = math.sqrt(REWARD_NOISE_VAR) * gen_reward.standard_normal((n, T))
    y = np.empty((n, T))
    for t0 in range(T):
        y[:, t0] = _reward_mean_step(spec.kind, coef, t0, x[:, t0], a[:, t0])
    y += eta + eps
    return PanelDataset(x, a, y)


def true_ate_linear(coef: MdpCoefficients, T: int | None = None) -> float:
    """Closed-form average effect of always-treat vs never-treat for linear rewards.

    Direct term: the average of the per-step treatment coefficients.  Carryover
    term: treatment pushed through the state recursion into later rewards,
    with the empty transition product treated as the identity.
    """
    if T is None:
        T = coef.T
    elif T != coef.T:
        raise InvalidArgumentError("T does not match the coefficient arrays")
    direct = float(coef.gamma.mean())
    if T == 1:
        return direct
    carry = 0.0
    s = np.zeros(coef.d)
    for t in range(2, T + 1):
        s = coef.Gamma[0].copy() if t == 2 else coef.Phi[t - 2] @ s + coef.Gamma[t - 2]
        carry += float(coef.beta[t - 1] @ s)
    return direct + carry / T


def true_ate_mdp(spec: MdpDgpSpec, n_days: int = 100_000, rng: RngStream | None = None) -> tuple[float, float]:
    """Rollout estimate of the average effect: all-treat minus all-control days.

    Shares the state-noise draws between the two rollouts and drops the
    mean-zero reward noise, so the Monte Carlo error is small; returns
    (estimate, standard error).
    """
    if rng is None:
        rng = _ORACLE_STREAM.child(1)
    gen = rng.generator()
    coef = spec.coefficients
    T, d = spec.T, spec.d
    state_sd = math.sqrt(STATE_NOISE_VAR)
    x1 = gen.standard_normal((n_days, d))
    x0 = x1.copy()
    ones = np.ones(n_days)
    zeros = np.zeros(n_days)
    acc = np.zeros(n_days)
    for t0 in range(T):
        acc += _reward_mean_step(spec.kind, coef, t0, x1, ones)
        acc -= _reward_mean_step(spec.kind, coef, t0, x0, zeros)
        if t0 < T - 1:
            noise = state_sd * gen.standard_normal((n_days, d))
            x1 = coef.phi[t0] + x1 @ coef.Phi[t0].T + coef.Gamma[t0] + noise
            x0 = coef.phi[t0] + x0 @ coef.Phi[t0].T + noise
    diff = acc / T
    return float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(n_days))


def true_value_affine(coef: MdpCoefficients, arm: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact affine value function under always-arm for the linear system.

    Returns (c, D) with value(t, x) = c[t-1] + D[t-1] @ x for t = 1..T+1 and
    the convention that row T (the post-horizon value) is zero.  The slope D
    does not depend on the arm, so the step-1 value gap is constant in x and
    equals T times the closed-form average effect.
    """
    if arm not in (0, 1):
        raise InvalidArgumentError("arm must be 0 or 1")
    T, d = coef.T, coef.d
    c = np.zeros(T + 1)
    D = np.zeros((T + 1, d))
    for t0 in range(T - 1, -1, -1):
        if t0 == T - 1:
            D[t0] = coef.beta[t0]
            c[t0] = coef.alpha[t0] + coef.gamma[t0] * arm
        else:
            D[t0] = coef.beta[t0] + coef.Phi[t0].T @ D[t0 + 1]
            c[t0] = (coef.alpha[t0] + coef.gamma[t0] * arm + c[t0 + 1]
                     + D[t0 + 1] @ (coef.phi[t0] + coef.Gamma[t0] * arm))
    return c, D


@dataclass(frozen=True)
class BootstrapEnv:
    """Wild-bootstrap simulator fitted from a single-policy source panel.

    Reward and state models are per-step ridge fits; treatment-effect
    coefficients are calibrated so that the direct and carryover halves of the
    closed-form effect each contribute lam * mean-outcome / 2.  Residual banks
    are indexed by source day and step, and one shared sign/scale multiplier
    per simulated day preserves the source's cross-correlation structure.
    """

    alpha: np.ndarray        # (T,)
    beta: np.ndarray         # (T, d)
    gamma: np.ndarray        # (T,)
    phi: np.ndarray          # (T-1, d)
    Phi: np.ndarray          # (T-1, d, d)
    Gamma: np.ndarray        # (T-1, d)
    resid_y: np.ndarray      # (n_source, T)
    resid_x: np.ndarray      # (n_source, T-1, d)
    init_states: np.ndarray  # (n_source, d)
    lam: float
    ybar: float

    @property
    def T(self) -> int:
        return self.beta.shape[0]

    @property
    def d(self) -> int:
        return self.beta.shape[1]

    @property
    def n_source(self) -> int:
        return self.init_states.shape[0]

    def coefficients(self) -> MdpCoefficients:
        return MdpCoefficients(self.alpha, self.beta, self.gamma, self.phi, self.Phi, self.Gamma)

    def to_dict(self) -> dict:
        return {
            "lam": self.lam,
            "ybar": self.ybar,
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "gamma": self.gamma.tolist(),
            "phi": self.phi.tolist(),
            "Phi": self.Phi.tolist(),
            "Gamma": self.Gamma.tolist(),
            "resid_y": self.resid_y.tolist(),
            "resid_x": self.resid_x.tolist(),
            "init_states": self.init_states.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "BootstrapEnv":
        arrays = {k: np.asarray(payload[k], dtype=float)
                  for k in ("alpha", "beta", "gamma", "phi", "Phi", "Gamma",
                            "resid_y", "resid_x", "init_states")}
        return cls(lam=float(payload["lam"]), ybar=float(payload["ybar"]), **arrays)


def build_bootstrap_env(panel: PanelDataset, lam: float) -> BootstrapEnv:
    """Fit the wild-bootstrap environment and calibrate the improvement lam.

    The source panel must be single-policy (all actions 0); penalties come
    from generalized cross-validation per step.  The constant direct effect g
    solves g = lam * ybar / 2 and the constant state effect is aligned with
    the average reward slope and scaled so the carryover term matches the
    direct one exactly.
    """
    if lam < 0:
        raise InvalidArgumentError("improvement fraction must be >= 0")
    if (panel.a != 0).any():
        raise SchemaError("source panel must be single-policy (all actions 0)")
    n, T, d = panel.n, panel.horizon, panel.d
    if T < 2:
        raise InvalidArgumentError("need horizon T >= 2 to split direct and carryover effects")
    alpha = np.empty(T)
    beta = np.empty((T, d))
    resid_y = np.empty((n, T))
    for t0 in range(T):
        intercept, slope, _ = ridge_fit(panel.x[:, t0], panel.y[:, t0])
        alpha[t0] = intercept
        beta[t0] = slope
        resid_y[:, t0] = panel.y[:, t0] - intercept - panel.x[:, t0] @ slope
    phi = np.empty((T - 1, d))
    Phi = np.empty((T - 1, d, d))
    resid_x = np.empty((n, T - 1, d))
    for t0 in range(T - 1):
        for j in range(d):
            intercept, slope, _ = ridge_fit(panel.x[:, t0], panel.x[:, t0 + 1, j])
            phi[t0, j] = intercept
            Phi[t0, j] = slope
        resid_x[:, t0] = panel.x[:, t0 + 1] - phi[t0] - panel.x[:, t0] @ Phi[t0].T
    ybar = float(panel.y.mean())
    target = lam * ybar / 2.0
    gamma = np.full(T, target)
    if lam == 0.0:
        Gamma = np.zeros((T - 1, d))
    else:
        direction = beta.mean(axis=0)
        norm = float(np.linalg.norm(direction))
        if norm == 0.0:
            raise NumericError("average reward slope is zero; cannot orient the carryover effect")
        direction = direction / norm
        unit = MdpCoefficients(alpha, beta, np.zeros(T), phi, Phi,
                               np.tile(direction, (T - 1, 1)))
        carry_unit = true_ate_linear(unit)
        if not np.isfinite(carry_unit) or abs(carry_unit) < 1e-12:
            raise NumericError("carryover response is numerically zero; cannot calibrate")
        Gamma = np.tile((target / carry_unit) * direction, (T - 1, 1))
    return BootstrapEnv(alpha, beta, gamma, phi, Phi, Gamma, resid_y, resid_x,
                        panel.x[:, 0].copy(), float(lam), ybar)


def sample_bootstrap(env: BootstrapEnv, n: int, rng: RngStream,
                     chain_days: bool = False, xi: np.ndarray | None = None) -> PanelDataset:
    """Simulate n days from the bootstrap environment.

    Initial states are resampled with replacement from the source bank; the
    residual path of each simulated day comes from its initial state's source
    day, multiplied by one standard-normal draw per day (pass xi to replay a
    fixed multiplier, e.g. zeros for the deterministic recursion).
    """
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    T, d = env.T, env.d
    src = rng.child(0).generator().integers(0, env.n_source, size=n)
    if xi is None:
        xi = rng.child(1).generator().standard_normal(n)
    else:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (n,):
            raise InvalidArgumentError("xi must have shape (n,)")
    assign = switchback_assign if chain_days else switchback_assign_per_day
    a = assign(n, T, rng.child(2))
    x = np.empty((n, T, d))
    y = np.empty((n, T))
    x[:, 0] = env.init_states[src]
    for t0 in range(T):
        y[:, t0] = (env.alpha[t0] + x[:, t0] @ env.beta[t0] + env.gamma[t0] * a[:, t0]
                    + xi * env.resid_y[src, t0])
        if t0 < T - 1:
            x[:, t0 + 1] = (env.phi[t0] + x[:, t0] @ env.Phi[t0].T
                            + a[:, t0, None] * env.Gamma[t0] + xi[:, None] * env.resid_x[src, t0])
    return PanelDataset(x, a, y)
