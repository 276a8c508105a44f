"""Monte Carlo rejection-rate studies over the simulated environments.

One replication = simulate a dataset, build pseudo-outcomes once, then apply
the permuted walk test, the single-pass walk test, and the averaging baseline
to the same pseudo-outcomes.  Every replication owns a child stream derived
from the master seed and its index, so results are identical for any thread
count.

The comparison baseline is the normal test on the pseudo-outcome average:
two-sided in the i.i.d. studies ("dml") and one-sided in the dynamic studies
("drl"), matching the conventions of the benchmark tables these studies
reproduce.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import RngStream
from .dist import std_normal_cdf
from .drl import BehaviorPolicy, GaussianDynamics, build_pseudo_dynamic
from .nuisance import FeatureMap, LearnerConfig
from .pseudo_iid import build_pseudo
from .sim import IidDgpSpec, MdpDgpSpec, gen_confounded_iid, gen_mdp, gen_randomized_iid
from .tab import p_tab, tab_test, z_test

__all__ = ["StudyResult", "METHODS_IID", "METHODS_DYNAMIC",
           "two_sided_z_test", "iid_rejection_study", "mdp_rejection_study"]

METHODS_IID = ("p_tab", "tab", "dml")
METHODS_DYNAMIC = ("p_tab", "tab", "drl")

# purpose ids for child streams; appending new purposes never perturbs old draws
_DATA, _NUISANCE, _PTAB, _TAB = 1, 2, 3, 4


def two_sided_z_test(pseudo) -> float:
    """Two-sided p-value of the pseudo-outcome average: 2 * Phi(-|stat|)."""
    stat = math.sqrt(pseudo.n) * pseudo.mu_bar / pseudo.sigma_hat
    return 2.0 * float(std_normal_cdf(-abs(stat)))


@dataclass(frozen=True)
class StudyResult:
    """Rejection rates per method with binomial standard errors."""

    rates: dict
    ses: dict
    reps: int
    alpha: float

    def rate(self, method: str) -> float:
        return self.rates[method]

    def se(self, method: str) -> float:
        return self.ses[method]


def _aggregate(rejections: list, methods: tuple, reps: int, alpha: float) -> StudyResult:
    arr = np.asarray(rejections, dtype=float)  # (reps, 3)
    rates = arr.mean(axis=0)
    ses = np.sqrt(rates * (1.0 - rates) / reps)
    return StudyResult(
        rates=dict(zip(methods, map(float, rates))),
        ses=dict(zip(methods, map(float, ses))),
        reps=reps,
        alpha=alpha,
    )


def _run_reps(one_rep, reps: int, threads: int) -> list:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one_rep, range(reps)))
    return [one_rep(rep) for rep in range(reps)]


def iid_rejection_study(spec: IidDgpSpec, reps: int, seed: int, alpha: float = 0.05,
                        n_perm: int = 100, n_folds: int = 5,
                        config: LearnerConfig | None = None, combiner: str = "cauchy",
                        gamma: float = 0.5, threads: int = 1) -> StudyResult:
    """Empirical rejection rates of the three tests on an i.i.d. environment."""
    if config is None:
        config = LearnerConfig()
    gen_data = gen_randomized_iid if spec.family == "randomized" else gen_confounded_iid
    root = RngStream(seed)

    def one_rep(rep: int):
        stream = root.child(rep)
        data, _ = gen_data(spec, stream.child(_DATA))
        pseudo = build_pseudo(data, n_folds, config, stream.child(_NUISANCE))
        p_perm = p_tab(pseudo, n_perm, stream.child(_PTAB), combiner, gamma).combined_p
        p_single = tab_test(pseudo, stream.child(_TAB)).p_value
        p_base = two_sided_z_test(pseudo)
        return (p_perm < alpha, p_single < alpha, p_base < alpha)

    return _aggregate(_run_reps(one_rep, reps, threads), METHODS_IID, reps, alpha)


def mdp_rejection_study(spec: MdpDgpSpec, reps: int, seed: int, alpha: float = 0.05,
                        n_perm: int = 100, n_folds: int = 2,
                        basis: FeatureMap | None = None,
                        behavior: BehaviorPolicy | None = None,
                        backend: str = "model_gaussian",
                        dynamics: GaussianDynamics | None = None,
                        ridge_lambda: float | None = None, omega_max: float = 20.0,
                        combiner: str = "cauchy", gamma: float = 0.5,
                        threads: int = 1) -> StudyResult:
    """Empirical rejection rates of the three tests on a panel environment.

    The coefficient draw lives on the spec and is shared by all replications;
    only the panel noise and assignments vary across reps.
    """
    if basis is None:
        basis = FeatureMap("poly2")
    if behavior is None:
        behavior = BehaviorPolicy("switchback")
    root = RngStream(seed)

    def one_rep(rep: int):
        stream = root.child(rep)
        panel = gen_mdp(spec, stream.child(_DATA))
        pseudo = build_pseudo_dynamic(panel, n_folds, basis, behavior, backend,
                                      stream.child(_NUISANCE), ridge_lambda,
                                      dynamics, omega_max)
        p_perm = p_tab(pseudo, n_perm, stream.child(_PTAB), combiner, gamma).combined_p
        p_single = tab_test(pseudo, stream.child(_TAB)).p_value
        p_base = z_test(pseudo)
        return (p_perm < alpha, p_single < alpha, p_base < alpha)

    return _aggregate(_run_reps(one_rep, reps, threads), METHODS_DYNAMIC, reps, alpha)
