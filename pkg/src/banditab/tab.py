"""The bandit-walk test: reward standardization, the sign-following walk,
permutation replicates, p-value combination, and the z-test baseline.

The walk pushes its partial sum away from zero: after a fair coin decides the
first arm, every later step adds the standardized reward when the running sum
is positive and subtracts it otherwise.  Under a zero mean the final sum is
standard normal; under a positive mean its absolute value drifts away from
zero, which is what the two-sided p-value 2*Phi(-|T_n|) picks up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DegenerateSampleError, InvalidArgumentError, RngStream
from .dist import std_normal_cdf
from .pseudo_iid import PseudoOutcomes

__all__ = [
    "WalkTrace",
    "TabStatistic",
    "CombinedTest",
    "standardize_rewards",
    "tab_walk",
    "walk_sums_batch",
    "tab_test",
    "permute",
    "cauchy_combine",
    "quantile_combine",
    "p_tab",
    "z_test",
]

P_CLAMP = 1e-15  # keeps tan((0.5 - p) * pi) finite at the endpoints


@dataclass(frozen=True)
class WalkTrace:
    """Full walk path: partial sums T_0..T_n, arms theta_1..theta_n, rewards."""

    partial_sums: np.ndarray
    arms: np.ndarray
    rewards: np.ndarray

    @property
    def t_n(self) -> float:
        return float(self.partial_sums[-1])


@dataclass(frozen=True)
class TabStatistic:
    """Single-pass walk statistic with its two-sided p-value."""

    t_n: float
    p_value: float
    theta1: int


@dataclass(frozen=True)
class CombinedTest:
    """Permutation-replicated walk test with the aggregated p-value."""

    method: str
    gamma: float | None
    per_perm_p: np.ndarray
    combined_p: float
    n_perm: int
    seed: RngStream


def standardize_rewards(pseudo: PseudoOutcomes) -> np.ndarray:
    """Per-record walk rewards mu_hat_i / (sqrt(n) * sigma_hat), in input order."""
    n = pseudo.n
    if n < 1:
        raise InvalidArgumentError("need at least one pseudo-outcome")
    if not pseudo.sigma_hat > 0.0:
        raise DegenerateSampleError("pseudo-outcomes have zero sample variance")
    return pseudo.mu_hat / (math.sqrt(n) * pseudo.sigma_hat)


def tab_walk(rewards, theta1: int) -> WalkTrace:
    """Run the sign-following walk over the rewards, starting from arm theta1.

    Arm 0 adds the reward, arm 1 subtracts it; from the second step on, arm 0
    is chosen exactly when the running sum is positive (ties go to arm 1).
    """
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size == 0:
        raise InvalidArgumentError("rewards must be nonempty")
    if not np.isfinite(rewards).all():
        raise InvalidArgumentError("rewards must be finite")
    if theta1 not in (0, 1):
        raise InvalidArgumentError("theta1 must be 0 or 1")
    n = rewards.size
    sums = np.empty(n + 1)
    arms = np.empty(n, dtype=np.int64)
    sums[0] = 0.0
    arms[0] = theta1
    t = rewards[0] if theta1 == 0 else -rewards[0]
    sums[1] = t
    for i in range(1, n):
        if t > 0.0:
            arms[i] = 0
            t = t + rewards[i]
        else:
            arms[i] = 1
            t = t - rewards[i]
        sums[i + 1] = t
    sums.setflags(write=False)
    arms.setflags(write=False)
    return WalkTrace(sums, arms, rewards)


def walk_sums_batch(rewards: np.ndarray, theta1: np.ndarray) -> np.ndarray:
    """Final walk sums for many reward rows at once; rewards (B, n), theta1 (B,).

    Step-for-step identical to :func:`tab_walk` on each row.
    """
    rewards = np.asarray(rewards, dtype=float)
    theta1 = np.asarray(theta1)
    if rewards.ndim != 2 or rewards.shape[1] == 0:
        raise InvalidArgumentError("rewards must have shape (B, n) with n >= 1")
    t = np.where(theta1 == 0, rewards[:, 0], -rewards[:, 0])
    for j in range(1, rewards.shape[1]):
        t = t + np.where(t > 0.0, rewards[:, j], -rewards[:, j])
    return t


def tab_test(pseudo: PseudoOutcomes, rng: RngStream, theta1: int | None = None) -> TabStatistic:
    """One walk over the pseudo-outcomes in their given order.

    The first arm is a fair coin flip from the stream unless forced (the
    p-value does not depend on it; the sign of the statistic does).
    """
    rewards = standardize_rewards(pseudo)
    if theta1 is None:
        theta1 = int(rng.generator().integers(0, 2))
    trace = tab_walk(rewards, theta1)
    p = 2.0 * std_normal_cdf(-abs(trace.t_n))
    return TabStatistic(trace.t_n, float(p), theta1)


def permute(n: int, rng: RngStream) -> np.ndarray:
    """Uniform random permutation of 0..n-1 (Fisher-Yates), deterministic per stream."""
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    return rng.generator().permutation(n)


def cauchy_combine(ps) -> float:
    """Aggregate p-values through the Cauchy transform; valid under dependence.

    Inputs are clamped into [1e-15, 1 - 1e-15] before the tangent transform,
    which preserves ordering while keeping the statistic finite.
    """
    ps = np.asarray(ps, dtype=float)
    if ps.size == 0:
        raise InvalidArgumentError("need at least one p-value")
    if not ((ps >= 0.0) & (ps <= 1.0)).all():
        raise InvalidArgumentError("p-values must lie in [0, 1]")
    clamped = np.clip(ps, P_CLAMP, 1.0 - P_CLAMP)
    # exactly rounded sum: the result is invariant under input permutations
    stat = math.fsum(np.tan((0.5 - clamped) * np.pi)) / ps.size
    return 0.5 - math.atan(stat) / math.pi


def quantile_combine(ps, gamma: float) -> float:
    """Aggregate p-values by the gamma-quantile of the rescaled values p_b / gamma.

    Convention: ascending order statistic at 1-based index ceil(gamma * B),
    capped at 1.
    """
    ps = np.asarray(ps, dtype=float)
    if ps.size == 0:
        raise InvalidArgumentError("need at least one p-value")
    if not ((ps >= 0.0) & (ps <= 1.0)).all():
        raise InvalidArgumentError("p-values must lie in [0, 1]")
    if not 0.0 < gamma < 1.0:
        raise InvalidArgumentError("gamma must lie strictly inside (0, 1)")
    scaled = np.sort(ps) / gamma
    idx = math.ceil(gamma * ps.size - 1e-12)  # guard fp noise in the product
    return float(min(1.0, scaled[idx - 1]))


def p_tab(pseudo: PseudoOutcomes, n_perm: int, rng: RngStream, combiner: str = "cauchy",
          gamma: float = 0.5) -> CombinedTest:
    """Permutation-replicated walk test.

    Each replicate b gets its own permutation and its own first-arm coin from
    distinct child streams, so replicates stay independent and the whole run
    is reproducible from (data, n_perm, combiner, seed) alone.  The sample SD
    is computed once on the unpermuted pseudo-outcomes; permutation leaves it
    unchanged, so reuse is exact.
    """
    if n_perm < 1:
        raise InvalidArgumentError("need at least one permutation replicate")
    if combiner not in ("cauchy", "quantile"):
        raise InvalidArgumentError(f"unknown combiner {combiner!r}")
    rewards = standardize_rewards(pseudo)
    n = rewards.size
    perm_rewards = np.empty((n_perm, n))
    theta1 = np.empty(n_perm, dtype=np.int64)
    for b in range(1, n_perm + 1):
        perm_rewards[b - 1] = rewards[permute(n, rng.child(b, 0))]
        theta1[b - 1] = int(rng.child(b, 1).generator().integers(0, 2))
    sums = walk_sums_batch(perm_rewards, theta1)
    per_perm_p = 2.0 * std_normal_cdf(-np.abs(sums))
    if combiner == "cauchy":
        combined = cauchy_combine(per_perm_p)
        gamma_used = None
    else:
        combined = quantile_combine(per_perm_p, gamma)
        gamma_used = gamma
    per_perm_p.setflags(write=False)
    return CombinedTest(combiner, gamma_used, per_perm_p, float(combined), n_perm, rng)


def z_test(pseudo: PseudoOutcomes) -> float:
    """One-sided p-value of the plain average: P(N(0,1) > sqrt(n) * mean / sd).

    Computed as Phi(-stat), the complementary form of 1 - Phi(stat).
    """
    if not pseudo.sigma_hat > 0.0:
        raise DegenerateSampleError("pseudo-outcomes have zero sample variance")
    stat = math.sqrt(pseudo.n) * pseudo.mu_bar / pseudo.sigma_hat
    return float(std_normal_cdf(-stat))
