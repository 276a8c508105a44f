import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.stats import chi2, kstest

from banditab.core import DegenerateSampleError, InvalidArgumentError, RngStream
from banditab.pseudo_iid import PseudoOutcomes
from banditab.tab import (
    cauchy_combine,
    p_tab,
    permute,
    quantile_combine,
    standardize_rewards,
    tab_test,
    tab_walk,
    walk_sums_batch,
    z_test,
)

# frozen with mpmath at 50 digits
TWO_PHI_MINUS_3 = 0.00269979606326018905330363
ONE_MINUS_PHI_1 = 0.1586552539314570514147675


def pseudo_with_sigma(mu, sigma):
    """Fixture helper: pseudo-outcomes with an injected (not recomputed) SD."""
    mu = np.asarray(mu, dtype=float)
    return PseudoOutcomes(mu, float(sigma), float(mu.mean()))


class TestStandardize:
    def test_hand_example(self):
        pseudo = PseudoOutcomes.from_mu([1.0, -1.0])
        assert pseudo.sigma_hat == math.sqrt(2.0)
        rewards = standardize_rewards(pseudo)
        assert np.allclose(rewards, [0.5, -0.5], rtol=0, atol=1e-15)

    def test_zero_variance_is_degenerate(self):
        with pytest.raises(DegenerateSampleError):
            standardize_rewards(PseudoOutcomes.from_mu([2.0, 2.0]))

    def test_zero_vector_with_injected_sigma(self):
        rewards = standardize_rewards(pseudo_with_sigma(np.zeros(5), 1.0))
        assert (rewards == 0.0).all()


class TestWalk:
    def test_tie_rule_keeps_right_arm(self):
        trace = tab_walk(np.zeros(6), 0)
        assert trace.t_n == 0.0
        assert (trace.arms[1:] == 1).all()

    def test_hand_trace_positive(self):
        trace = tab_walk([1.0, -0.5, 2.0], 0)
        assert np.array_equal(trace.partial_sums, [0.0, 1.0, 0.5, 2.5])
        assert np.array_equal(trace.arms, [0, 0, 0])

    def test_hand_trace_negative(self):
        trace = tab_walk([-1.0, 0.5], 0)
        assert np.array_equal(trace.partial_sums, [0.0, -1.0, -1.5])
        assert np.array_equal(trace.arms, [0, 1])

    def test_empty_rewards(self):
        with pytest.raises(InvalidArgumentError):
            tab_walk([], 0)

    def test_batch_matches_single(self):
        gen = RngStream(3).generator()
        rewards = gen.standard_normal((8, 40))
        theta1 = gen.integers(0, 2, 8)
        sums = walk_sums_batch(rewards, theta1)
        for b in range(8):
            assert sums[b] == tab_walk(rewards[b], int(theta1[b])).t_n

    @given(st.lists(st.integers(-64, 64), min_size=1, max_size=200), st.integers(0, 1))
    @settings(max_examples=200, deadline=None)
    def test_recursion_invariant(self, ints, theta1):
        rewards = np.array(ints, dtype=float) / 32.0
        trace = tab_walk(rewards, theta1)
        t = 0.0
        for i in range(len(rewards)):
            expected_arm = theta1 if i == 0 else (0 if t > 0 else 1)
            assert trace.arms[i] == expected_arm
            t = t + rewards[i] if expected_arm == 0 else t - rewards[i]
            assert trace.partial_sums[i + 1] == t

    @given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=200))
    @settings(max_examples=200, deadline=None)
    def test_sign_flip_negates_path(self, rewards):
        a = tab_walk(rewards, 0)
        b = tab_walk(rewards, 1)
        # the tie rule is not mirror-symmetric at exact zeros, so the identity
        # is claimed (and holds) only for tie-free paths
        assume(not (a.partial_sums[1:] == 0.0).any())
        assert np.array_equal(a.partial_sums, -b.partial_sums)
        assert abs(a.t_n) == abs(b.t_n)

    @given(st.lists(st.integers(-100, 100), min_size=1, max_size=100),
           st.sampled_from([0.125, 0.5, 2.0, 8.0]), st.integers(0, 1))
    @settings(max_examples=200, deadline=None)
    def test_scale_equivariance(self, ints, scale, theta1):
        # dyadic rewards and power-of-two scales make the identity exact
        rewards = np.array(ints, dtype=float) / 32.0
        a = tab_walk(rewards, theta1)
        b = tab_walk(scale * rewards, theta1)
        assert np.array_equal(b.partial_sums, scale * a.partial_sums)
        assert np.array_equal(a.arms, b.arms)


class TestTabTest:
    def test_all_zero_pseudo(self):
        stat = tab_test(pseudo_with_sigma(np.zeros(4), 1.0), RngStream(0))
        assert stat.t_n == 0.0 and stat.p_value == 1.0

    def test_single_point_forced_arm(self):
        stat = tab_test(pseudo_with_sigma([3.0], 1.0), RngStream(0), theta1=0)
        assert stat.t_n == 3.0
        assert abs(stat.p_value - TWO_PHI_MINUS_3) <= 1e-12

    def test_deterministic(self):
        pseudo = PseudoOutcomes.from_mu(RngStream(1).generator().standard_normal(50))
        a = tab_test(pseudo, RngStream(9, 2))
        b = tab_test(pseudo, RngStream(9, 2))
        assert a == b


class TestPermute:
    def test_identity_for_singleton(self):
        assert permute(1, RngStream(0)).tolist() == [0]

    def test_deterministic(self):
        assert (permute(20, RngStream(4, 1)) == permute(20, RngStream(4, 1))).all()

    def test_uniform_over_permutations(self):
        # chi-square over the 6 orderings of n=3 at 60000 draws
        root = RngStream(2024)
        counts = {}
        draws = 60_000
        for i in range(draws):
            key = tuple(permute(3, root.child(i)))
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 6
        expected = draws / 6.0
        stat = sum((c - expected) ** 2 / expected for c in counts.values())
        assert stat < chi2.ppf(1 - 1e-6, df=5)


class TestCombiners:
    def test_cauchy_fixed_point(self):
        assert abs(cauchy_combine([0.5, 0.5, 0.5]) - 0.5) <= 1e-15

    def test_cauchy_single_identity(self):
        assert abs(cauchy_combine([0.03]) - 0.03) <= 1e-12

    def test_cauchy_antisymmetry(self):
        assert abs(cauchy_combine([0.1, 0.9]) - 0.5) <= 1e-12

    def test_cauchy_extreme_inputs_are_clamped(self):
        assert 0.0 <= cauchy_combine([0.0, 1.0]) <= 1.0
        assert cauchy_combine([0.0]) < 1e-12

    def test_cauchy_permutation_invariant(self):
        ps = [0.01, 0.2, 0.77, 0.4]
        assert cauchy_combine(ps) == cauchy_combine(ps[::-1])

    def test_cauchy_validation(self):
        with pytest.raises(InvalidArgumentError):
            cauchy_combine([])
        with pytest.raises(InvalidArgumentError):
            cauchy_combine([0.5, 1.5])

    def test_quantile_all_ones(self):
        assert quantile_combine([1.0, 1.0, 1.0], 0.3) == 1.0

    def test_quantile_hand_example(self):
        assert quantile_combine([0.02, 0.04, 0.06, 0.08, 0.10], 0.5) == 0.12

    def test_quantile_single_element(self):
        assert quantile_combine([0.3], 0.5) == min(1.0, 0.6)
        assert quantile_combine([0.7], 0.5) == 1.0

    def test_quantile_permutation_invariant(self):
        ps = [0.4, 0.01, 0.9, 0.2]
        assert quantile_combine(ps, 0.5) == quantile_combine(ps[::-1], 0.5)

    def test_quantile_validation(self):
        with pytest.raises(InvalidArgumentError):
            quantile_combine([], 0.5)
        with pytest.raises(InvalidArgumentError):
            quantile_combine([0.5], 0.0)
        with pytest.raises(InvalidArgumentError):
            quantile_combine([0.5], 1.0)


class TestPTab:
    def test_single_replicate_identity(self):
        pseudo = PseudoOutcomes.from_mu(RngStream(6).generator().standard_normal(30))
        res = p_tab(pseudo, 1, RngStream(5), "cauchy")
        assert abs(res.combined_p - res.per_perm_p[0]) <= 1e-12

    def test_all_zero_pseudo_accepts(self):
        res = p_tab(pseudo_with_sigma(np.zeros(10), 1.0), 7, RngStream(1))
        assert (res.per_perm_p == 1.0).all()
        assert res.combined_p > 1.0 - 1e-9

    def test_bit_identical_reruns(self):
        pseudo = PseudoOutcomes.from_mu(RngStream(8).generator().standard_normal(64))
        a = p_tab(pseudo, 32, RngStream(3, 1), "quantile", 0.4)
        b = p_tab(pseudo, 32, RngStream(3, 1), "quantile", 0.4)
        assert a.combined_p == b.combined_p
        assert (a.per_perm_p == b.per_perm_p).all()

    def test_needs_positive_replicates(self):
        pseudo = PseudoOutcomes.from_mu([0.0, 1.0])
        with pytest.raises(InvalidArgumentError):
            p_tab(pseudo, 0, RngStream(0))

    def test_null_type_one_error(self):
        # standard-normal pseudo-outcomes, n=300, B=100, 500 replications
        root = RngStream(314159)
        rejections = 0
        reps = 500
        for rep in range(reps):
            stream = root.child(rep)
            mu = stream.child(0).generator().standard_normal(300)
            res = p_tab(PseudoOutcomes.from_mu(mu), 100, stream.child(1))
            rejections += res.combined_p < 0.05
        assert rejections / reps <= 0.075


class TestZTest:
    def test_centered(self):
        assert z_test(pseudo_with_sigma([1.0, -1.0], 1.0)) == 0.5

    def test_hand_example(self):
        p = z_test(pseudo_with_sigma([1.0, 1.0, 1.0, -1.0], 1.0))
        assert abs(p - ONE_MINUS_PHI_1) <= 1e-12

    def test_monotone_in_mean(self):
        lo = z_test(pseudo_with_sigma([10.0, 10.0], 1.0))
        hi = z_test(pseudo_with_sigma([100.0, 100.0], 1.0))
        assert hi < lo < 0.5
        assert z_test(pseudo_with_sigma([1e6, 1e6], 1.0)) < 1e-12

    def test_degenerate(self):
        with pytest.raises(DegenerateSampleError):
            z_test(PseudoOutcomes.from_mu([3.0, 3.0]))


class TestNullDistribution:
    def test_walk_is_asymptotically_standard_normal(self):
        # n=2000 steps, 1e5 replications in chunks; KS distance to Phi <= 0.01
        n, reps, chunk = 2000, 100_000, 10_000
        sd = 1.0 / math.sqrt(n)
        root = RngStream(271828)
        samples = []
        for c in range(reps // chunk):
            gen = root.child(c).generator()
            rewards = sd * gen.standard_normal((chunk, n))
            theta1 = gen.integers(0, 2, chunk)
            samples.append(walk_sums_batch(rewards, theta1))
        stat = kstest(np.concatenate(samples), "norm").statistic
        assert stat <= 0.01
