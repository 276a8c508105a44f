import math

import numpy as np
import pytest

from banditab.core import (
    IidDataset,
    IidRecord,
    MissingArmError,
    PanelDataset,
    RngStream,
    Trajectory,
)
from banditab.drl import (
    BehaviorPolicy,
    RatioModel,
    ValueModel,
    build_pseudo_dynamic,
    crossfit_dynamic,
    drl_pseudo,
    drl_pseudo_panel,
    drl_z_test,
    dynamics_from_coefficients,
    fit_dynamics,
    fit_mis_ratio,
    fit_value_backward,
)
from banditab.nuisance import FeatureMap, KnownPropensity, fit_outcome
from banditab.pseudo_iid import aipw_pseudo
from banditab.sim import (
    STATE_NOISE_VAR,
    MdpDgpSpec,
    gen_mdp,
    true_ate_linear,
    true_value_affine,
)
from banditab.tab import z_test


def linear_spec(seed, n=200, T=6, delta=0.15):
    return MdpDgpSpec.draw("linear", n, delta, RngStream(seed), T=T)


def oracle_ratio(spec, behavior=None, omega_max=np.inf):
    dyn = dynamics_from_coefficients(spec.coefficients, STATE_NOISE_VAR)
    if behavior is None:
        behavior = BehaviorPolicy("switchback")
    return fit_mis_ratio(None, behavior, "oracle", dynamics=dyn,
                         omega_max=omega_max, horizon=spec.T)


def oracle_values(spec):
    c0, d0 = true_value_affine(spec.coefficients, 0)
    c1, d1 = true_value_affine(spec.coefficients, 1)
    return ValueModel.from_affine(c0[:-1], d0[:-1], c1[:-1], d1[:-1])


class TestValueModel:
    def test_post_horizon_value_is_zero(self):
        spec = linear_spec(1, T=4)
        values = oracle_values(spec)
        x = RngStream(0).generator().standard_normal((5, 3))
        for arm in (0, 1):
            assert (values.value(arm, spec.T + 1, x) == 0.0).all()

    def test_zero_rewards_give_zero_values(self):
        gen = RngStream(2).generator()
        panel = PanelDataset(gen.standard_normal((30, 4, 2)),
                             gen.integers(0, 2, (30, 4)), np.zeros((30, 4)))
        for arm in (0, 1):
            vf = fit_value_backward(panel, arm, FeatureMap("poly2"))
            for t in range(1, 6):
                assert np.abs(vf.value(t, panel.x[:, 0])).max() <= 1e-9

    def test_horizon_one_is_within_arm_outcome_regression(self):
        gen = RngStream(3).generator()
        n = 80
        x = gen.standard_normal((n, 1, 2))
        a = gen.integers(0, 2, (n, 1))
        y = gen.standard_normal((n, 1))
        panel = PanelDataset(x, a, y)
        data = IidDataset(x[:, 0], a[:, 0], y[:, 0])
        lam = 0.1
        outcome = fit_outcome(data, FeatureMap("poly2"), lam)
        grid = gen.standard_normal((10, 2))
        for arm in (0, 1):
            vf = fit_value_backward(panel, arm, FeatureMap("poly2"), lam)
            assert np.abs(vf.value(1, grid) - outcome.predict(arm, grid)).max() <= 1e-12

    def test_recovers_affine_values_on_linear_system(self):
        # reward noise has variance 3 per step and compounds backward, so the
        # step-1 fit at n=500 carries RMS error around 0.3; assert that scale
        # and that a tenfold sample shrinks it
        def rms_error(n, arm, seed):
            spec = linear_spec(7, n=n, T=5, delta=0.1)
            panel = gen_mdp(spec, RngStream(seed))
            truth = oracle_values(spec)
            vf = fit_value_backward(panel, arm, FeatureMap("linear"), 1e-6)
            xs = panel.x[:, 0]
            err = vf.value(1, xs) - truth.value(arm, 1, xs)
            return math.sqrt((err**2).mean())

        for arm in (0, 1):
            small = rms_error(500, arm, 8)
            big = rms_error(5000, arm, 9)
            assert small <= 0.6
            assert big <= 0.6 * small

    def test_missing_arm_at_step_is_reported(self):
        spec = linear_spec(11, n=40, T=4, delta=0.0)
        panel = gen_mdp(spec, RngStream(12), chain_days=True)  # even horizon locks arms per step
        with pytest.raises(MissingArmError, match="step"):
            fit_value_backward(panel, int(1 - panel.a[0, 0]), FeatureMap("linear"))


class TestRatioModel:
    def test_first_step_switchback_ratio_is_two(self):
        spec = linear_spec(21, T=6)
        ratios = oracle_ratio(spec)
        x = RngStream(1).generator().standard_normal((40, 3))
        for arm in (0, 1):
            w = ratios.ratio(arm, 1, x, np.full(40, arm))
            assert np.abs(w - 2.0).max() <= 1e-10

    def test_indicator_structure(self):
        spec = linear_spec(22, T=5)
        ratios = oracle_ratio(spec)
        gen = RngStream(2).generator()
        x = gen.standard_normal((30, 3))
        a_obs = gen.integers(0, 2, 30)
        for t in range(1, 6):
            for arm in (0, 1):
                w = ratios.ratio(arm, t, x, a_obs)
                assert (w[a_obs != arm] == 0.0).all()

    def test_identical_state_laws_reduce_to_action_frequency(self):
        # with no treatment effect on states, target and behavior state laws
        # coincide, so the ratio is the reciprocal assignment probability
        spec = linear_spec(23, T=4, delta=0.0)
        probs = np.full(4, 0.25)
        behavior = BehaviorPolicy("known", probs=probs)
        ratios = oracle_ratio(spec, behavior)
        x = RngStream(3).generator().standard_normal((20, 3))
        for t in range(1, 5):
            w1 = ratios.ratio(1, t, x, np.ones(20))
            w0 = ratios.ratio(0, t, x, np.zeros(20))
            assert np.abs(w1 - 4.0).max() <= 1e-8
            assert np.abs(w0 - 4.0 / 3.0).max() <= 1e-8

    def test_behavior_mean_one(self):
        # change of measure: the behavior-weighted average of the ratio is one,
        # at every step separately and pooled over the panel
        spec = linear_spec(24, n=20_000, T=5, delta=0.1)
        panel = gen_mdp(spec, RngStream(25))
        ratios = oracle_ratio(spec, omega_max=1e9)
        for arm in (0, 1):
            pooled = []
            for t in range(1, spec.T + 1):
                vals = ratios.ratio(arm, t, panel.x[:, t - 1], panel.a[:, t - 1])
                se = vals.std(ddof=1) / math.sqrt(len(vals))
                assert abs(vals.mean() - 1.0) <= 3 * se, (arm, t)
                pooled.append(vals)
            pooled = np.concatenate(pooled)
            se = pooled.std(ddof=1) / math.sqrt(len(pooled))
            assert abs(pooled.mean() - 1.0) <= 3 * se

    def test_clipping(self):
        spec = linear_spec(26, T=6, delta=0.25)
        capped = oracle_ratio(spec, omega_max=1.5)
        x = RngStream(5).generator().standard_normal((50, 3)) * 3.0
        for t in range(1, 7):
            w = capped.ratio(1, t, x, np.ones(50))
            assert w.max() <= 1.5 + 1e-12

    def test_model_gaussian_close_to_oracle_on_large_panel(self):
        spec = linear_spec(27, n=4000, T=4, delta=0.1)
        panel = gen_mdp(spec, RngStream(28))
        fitted = fit_mis_ratio(panel, BehaviorPolicy("switchback"), "model_gaussian")
        oracle = oracle_ratio(spec)
        x = panel.x[:200, 1]
        a = panel.a[:200, 1]
        for arm in (0, 1):
            wf = fitted.ratio(arm, 2, x, a)
            wo = oracle.ratio(arm, 2, x, a)
            rows = a == arm
            assert np.abs(wf[rows] - wo[rows]).max() <= 0.25

    def test_plugin_uniform_switchback(self):
        spec = linear_spec(29, T=3)
        plug = fit_mis_ratio(None, BehaviorPolicy("switchback"), "plugin_uniform", horizon=3)
        x = np.zeros((8, 3))
        w = plug.ratio(1, 2, x, np.ones(8))
        assert (w == 2.0).all()


def random_one_step_fixture(gen):
    n_feat = int(gen.integers(1, 4))
    x = gen.standard_normal(n_feat)
    arm = int(gen.integers(0, 2))
    y = float(gen.standard_normal())
    q = float(gen.uniform(0.1, 0.9))
    coef0 = gen.standard_normal(n_feat + 1)
    coef1 = gen.standard_normal(n_feat + 1)
    return x, arm, y, q, coef0, coef1


class TestHorizonOneReduction:
    def test_bit_exact_against_aipw(self):
        gen = RngStream(424242).generator()
        for _ in range(1000):
            x, arm, y, q, coef0, coef1 = random_one_step_fixture(gen)
            values = ValueModel.from_affine(coef0[:1], coef0[None, 1:],
                                            coef1[:1], coef1[None, 1:])
            behavior = BehaviorPolicy("known", probs=np.array([q]))
            ratios = RatioModel("plugin_uniform", behavior, None, 1, omega_max=np.inf)
            traj = Trajectory(x[None, :], np.array([arm]), np.array([y]))
            dynamic_value = drl_pseudo(traj, values, ratios)

            class _Outcome:
                def predict(self, a, xs):
                    c = coef1 if a == 1 else coef0
                    return c[0] + np.asarray(xs) @ c[1:]

            record = IidRecord(x, arm, y)
            static_value = aipw_pseudo(record, _Outcome(), KnownPropensity(q))
            assert dynamic_value == static_value


class TestDrlPseudo:
    def test_all_zero_panel(self):
        values = ValueModel.from_affine(np.zeros(4), np.zeros((4, 3)),
                                        np.zeros(4), np.zeros((4, 3)))
        spec = linear_spec(31, T=4)
        ratios = oracle_ratio(spec)
        gen = RngStream(6).generator()
        x = gen.standard_normal((10, 4, 3))
        a = gen.integers(0, 2, (10, 4))
        mu = drl_pseudo_panel(x, a, np.zeros((10, 4)), values, ratios)
        assert (mu == 0.0).all()

    def test_hand_fixture(self):
        # two steps; constant values per arm and step; uniform ratio 2
        values = ValueModel.from_affine(c0=[1.0, 0.5], D0=np.zeros((2, 1)),
                                        c1=[3.0, 1.0], D1=np.zeros((2, 1)))
        ratios = RatioModel("plugin_uniform", BehaviorPolicy("switchback"), None, 2)
        traj = Trajectory(np.zeros((2, 1)), np.array([1, 0]), np.array([2.0, 1.0]))
        assert drl_pseudo(traj, values, ratios) == 0.5

    def test_panel_matches_per_day(self):
        spec = linear_spec(33, n=40, T=5, delta=0.1)
        panel = gen_mdp(spec, RngStream(34))
        values = oracle_values(spec)
        ratios = oracle_ratio(spec)
        mu = drl_pseudo_panel(panel.x, panel.a, panel.y, values, ratios)
        for i in range(0, panel.n, 7):
            # batched linear algebra may round dot products differently, so
            # equality holds to machine precision rather than bitwise
            single = drl_pseudo(panel.day(i), values, ratios)
            assert math.isclose(mu[i], single, rel_tol=1e-12, abs_tol=1e-12)

    def test_unbiased_with_oracle_nuisances(self):
        spec = linear_spec(35, n=20_000, T=6, delta=0.25)
        panel = gen_mdp(spec, RngStream(36))
        values = oracle_values(spec)
        ratios = oracle_ratio(spec, omega_max=1e9)
        mu = drl_pseudo_panel(panel.x, panel.a, panel.y, values, ratios)
        se = mu.std(ddof=1) / math.sqrt(panel.n)
        assert abs(mu.mean() - true_ate_linear(spec.coefficients)) <= 3 * se


class TestBuildPseudoDynamic:
    def test_zero_reward_panel_flags_degenerate(self):
        gen = RngStream(41).generator()
        panel = PanelDataset(gen.standard_normal((24, 4, 2)),
                             (gen.random((24, 4)) < 0.5).astype(int), np.zeros((24, 4)))
        pseudo = build_pseudo_dynamic(panel, 2, FeatureMap("poly2"),
                                      BehaviorPolicy("switchback"), "model_gaussian",
                                      RngStream(42))
        assert np.abs(pseudo.mu_hat).max() <= 1e-9
        assert pseudo.sigma_hat <= 1e-9

    def test_deterministic(self):
        spec = linear_spec(43, n=60, T=4, delta=0.1)
        panel = gen_mdp(spec, RngStream(44))
        args = (panel, 2, FeatureMap("poly2"), BehaviorPolicy("switchback"), "model_gaussian")
        a = build_pseudo_dynamic(*args, RngStream(45))
        b = build_pseudo_dynamic(*args, RngStream(45))
        assert (a.mu_hat == b.mu_hat).all()
        assert a.sigma_hat == b.sigma_hat

    def test_crossfit_reports_clip_rate(self):
        spec = linear_spec(46, n=60, T=4, delta=0.1)
        panel = gen_mdp(spec, RngStream(47))
        cross = crossfit_dynamic(panel, 2, FeatureMap("poly2"),
                                 BehaviorPolicy("switchback"), "model_gaussian",
                                 RngStream(48), omega_max=1.05)
        assert 0.0 <= cross.omega_clip_rate <= 1.0
        assert cross.omega_clip_rate > 0.0  # such a tight cap must bite

    def test_oracle_backend_cross_fitted_mean_near_truth(self):
        spec = linear_spec(49, n=3000, T=5, delta=0.25)
        panel = gen_mdp(spec, RngStream(50))
        dyn = dynamics_from_coefficients(spec.coefficients, STATE_NOISE_VAR)
        pseudo = build_pseudo_dynamic(panel, 2, FeatureMap("linear"),
                                      BehaviorPolicy("switchback"), "oracle",
                                      RngStream(51), dynamics=dyn)
        se = pseudo.sigma_hat / math.sqrt(pseudo.n)
        assert abs(pseudo.mu_bar - true_ate_linear(spec.coefficients)) <= 4 * se


class TestDynamics:
    def test_recovers_linear_system(self):
        spec = linear_spec(52, n=5000, T=4, delta=0.1)
        panel = gen_mdp(spec, RngStream(53))
        dyn = fit_dynamics(panel)
        coef = spec.coefficients
        assert np.abs(dyn.Phi - coef.Phi).max() <= 0.05
        assert np.abs(dyn.Gamma - coef.Gamma).max() <= 0.1
        assert np.abs(dyn.noise_cov[0] - STATE_NOISE_VAR * np.eye(3)).max() <= 0.15

    def test_drl_z_test_is_the_shared_z_test(self):
        assert drl_z_test is z_test
