import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pigan.divergence import (
    DiscreteDistribution,
    adversarial_value,
    divergence_table,
    generator_cost,
    identity_residual,
    js_pi_divergence,
    kl_divergence,
    limit_ratio_profile,
    optimal_discriminator,
    pi_entropy_constant,
    scalar_log_maximizer,
)
from pigan.exceptions import (
    ConsistencyError,
    DimensionError,
    DomainError,
    UnsupportedLimitError,
)

LOG2 = math.log(2)


def _oracle_kl(p, q):
    return sum(a * math.log(a / b) for a, b in zip(p, q) if a > 0)


def _oracle_value(p, q, d, pi):
    real = sum(a * math.log(x) for a, x in zip(p, d) if a > 0)
    fake = sum(b * math.log(1 - x) for b, x in zip(q, d) if b > 0)
    return pi * real + (1 - pi) * fake


def _random_pair(rng, size):
    p = rng.uniform(0.01, 1.0, size)
    q = rng.uniform(0.01, 1.0, size)
    return DiscreteDistribution(p / p.sum()), DiscreteDistribution(q / q.sum())


positive_masses = st.lists(st.floats(0.001, 1.0), min_size=2, max_size=16)


class TestDistribution:
    def test_rejects_unnormalised(self):
        with pytest.raises(DomainError):
            DiscreteDistribution([0.5, 0.6])

    def test_rejects_negative(self):
        with pytest.raises(DomainError):
            DiscreteDistribution([1.5, -0.5])

    def test_rejects_empty(self):
        with pytest.raises(DimensionError):
            DiscreteDistribution([])

    def test_from_weights(self):
        d = DiscreteDistribution.from_weights([1, 3])
        assert d.support_size == 2
        np.testing.assert_allclose(d.masses, [0.25, 0.75])


class TestKL:
    def test_identical(self):
        assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0

    def test_point_mass(self):
        assert kl_divergence([1, 0], [0.5, 0.5]) == pytest.approx(LOG2, abs=1e-12)

    def test_summation_value(self):
        # 0.5 log(0.5/0.9) + 0.5 log(0.5/0.1)
        assert kl_divergence([0.5, 0.5], [0.9, 0.1]) == pytest.approx(0.5108256237659907, abs=1e-12)

    def test_infinite_marker(self):
        assert kl_divergence([0.5, 0.5], [1.0, 0.0]) == math.inf

    def test_dimension_error(self):
        with pytest.raises(DimensionError):
            kl_divergence([1.0], [0.5, 0.5])

    def test_asymmetry_exists(self):
        p, q = [0.98, 0.01, 0.01], [1 / 3, 1 / 3, 1 / 3]
        assert abs(kl_divergence(p, q) - kl_divergence(q, p)) > 0.1

    @given(positive_masses, positive_masses)
    def test_matches_oracle_and_nonnegative(self, a, b):
        n = min(len(a), len(b))
        p = DiscreteDistribution.from_weights(a[:n])
        q = DiscreteDistribution.from_weights(b[:n])
        value = kl_divergence(p, q)
        assert value >= 0
        assert value == pytest.approx(max(_oracle_kl(p.masses, q.masses), 0.0), abs=1e-12)


class TestJSPi:
    @pytest.mark.parametrize("pi", [0.01, 0.3, 0.5, 0.99])
    def test_identical_is_zero(self, pi):
        assert js_pi_divergence([0.3, 0.7], [0.3, 0.7], pi) == pytest.approx(0, abs=1e-15)

    def test_disjoint_half(self):
        assert js_pi_divergence([1, 0], [0, 1], 0.5) == pytest.approx(LOG2, abs=1e-12)

    def test_summation_value(self):
        # both KL terms against M = 0.3 p + 0.7 q, summed by hand
        assert js_pi_divergence([0.8, 0.2], [0.2, 0.8], 0.3) == pytest.approx(
            0.1636617030259203, abs=1e-12
        )

    def test_always_finite_on_disjoint(self):
        assert math.isfinite(js_pi_divergence([1, 0, 0], [0, 0, 1], 0.2))

    @pytest.mark.parametrize("pi", [0.0, 1.0, -0.1, 1.5])
    def test_endpoints_rejected(self, pi):
        with pytest.raises(DomainError):
            js_pi_divergence([0.5, 0.5], [0.5, 0.5], pi)

    @given(positive_masses, positive_masses, st.floats(0.001, 0.999))
    def test_nonnegative_and_zero_iff_equal(self, a, b, pi):
        n = min(len(a), len(b))
        p = DiscreteDistribution.from_weights(a[:n])
        q = DiscreteDistribution.from_weights(b[:n])
        value = js_pi_divergence(p, q, pi)
        assert value >= 0
        assert js_pi_divergence(p, p, pi) == pytest.approx(0, abs=1e-15)
        if not p.allclose(q, 1e-6):
            assert value > 0


class TestOptimalDiscriminator:
    def test_symmetric(self):
        np.testing.assert_allclose(optimal_discriminator([0.2, 0.8], [0.2, 0.8], 0.5), 0.5)

    def test_equals_pi_when_equal(self):
        np.testing.assert_allclose(optimal_discriminator([0.2, 0.8], [0.2, 0.8], 0.3), 0.3)

    def test_single_state(self):
        d = optimal_discriminator([0.2, 0.8], [0.6, 0.4], 0.5)
        assert d[0] == pytest.approx(0.25, abs=1e-15)

    def test_clamped(self):
        d = optimal_discriminator([1, 0], [0, 1], 0.5)
        assert 0 < d.min() and d.max() < 1

    def test_empty_state_is_domain_error(self):
        with pytest.raises(DomainError):
            optimal_discriminator([0.5, 0.5, 0.0], [0.5, 0.5, 0.0], 0.5)


class TestAdversarialValue:
    def test_half(self):
        v = adversarial_value([0.5, 0.5], [0.5, 0.5], [0.5, 0.5], 0.5)
        assert v == pytest.approx(-LOG2, abs=1e-12)

    def test_summation_value_and_below_optimum(self):
        p, q, pi = [0.9, 0.1], [0.1, 0.9], 0.2
        v = adversarial_value(p, q, [0.6, 0.4], pi)
        assert v == pytest.approx(-0.5513721345768072, abs=1e-12)
        at_star = adversarial_value(p, q, optimal_discriminator(p, q, pi), pi)
        assert at_star == pytest.approx(-0.2524284797982157, abs=1e-12)
        grid = np.arange(1, 100) / 100
        best = max(_oracle_value(p, q, (x, y), pi) for x in grid for y in grid)
        assert v < at_star
        assert best <= at_star + 1e-12

    def test_at_optimum_is_generator_cost(self):
        rng = np.random.default_rng(3)
        p, q = _random_pair(rng, 7)
        v = adversarial_value(p, q, optimal_discriminator(p, q, 0.37), 0.37)
        assert v == pytest.approx(generator_cost(p, q, 0.37), abs=1e-12)

    def test_boundary_profile_rejected(self):
        with pytest.raises(DomainError):
            adversarial_value([0.5, 0.5], [0.5, 0.5], [0.0, 0.5], 0.5)
        with pytest.raises(DomainError):
            adversarial_value([0.5, 0.5], [0.5, 0.5], [1.0, 0.5], 0.5)

    def test_boundary_allowed_without_mass(self):
        v = adversarial_value([1.0, 0.0], [0.0, 1.0], [1.0, 0.0], 0.5)
        assert v == 0.0

    def test_profile_length(self):
        with pytest.raises(DimensionError):
            adversarial_value([0.5, 0.5], [0.5, 0.5], [0.5], 0.5)


class TestGeneratorCost:
    def test_equal_half(self):
        assert generator_cost([0.4, 0.6], [0.4, 0.6], 0.5) == pytest.approx(-LOG2, abs=1e-12)

    def test_equal_09(self):
        assert generator_cost([0.4, 0.6], [0.4, 0.6], 0.9) == pytest.approx(-0.3250829733914482, abs=1e-12)

    def test_disjoint(self):
        assert generator_cost([1, 0], [0, 1], 0.5) == pytest.approx(0.0, abs=1e-10)

    def test_partial_overlap_with_empty_state(self):
        p, q = [0.5, 0.5, 0.0, 0.0], [0.0, 0.25, 0.75, 0.0]
        assert identity_residual(p, q, 0.2) < 1e-10
        generator_cost(p, q, 0.2)

    def test_consistency_error_on_broken_route(self, monkeypatch):
        import pigan.divergence as mod

        monkeypatch.setattr(mod, "js_pi_divergence", lambda p, q, pi: 1.0)
        with pytest.raises(ConsistencyError):
            mod.generator_cost([0.5, 0.5], [0.2, 0.8], 0.5)


class TestConstant:
    def test_half(self):
        assert pi_entropy_constant(0.5) == pytest.approx(-LOG2, abs=1e-15)

    def test_09(self):
        assert pi_entropy_constant(0.9) == pytest.approx(-0.3250829733914482, abs=1e-12)

    def test_small(self):
        # direct evaluation: 0.001 log 0.001 + 0.999 log 0.999
        assert pi_entropy_constant(0.001) == pytest.approx(-0.007907255112232087, abs=1e-12)

    @given(st.floats(1e-9, 1 - 1e-9))
    def test_range(self, pi):
        c = pi_entropy_constant(pi)
        assert -LOG2 - 1e-15 <= c < 0


class TestScalarMaximizer:
    @pytest.mark.parametrize("a,b,expected", [(1, 1, 0.5), (3, 1, 0.75), (0, 1, 0.0), (1, 0, 1.0)])
    def test_values(self, a, b, expected):
        assert scalar_log_maximizer(a, b) == pytest.approx(expected)

    def test_both_zero(self):
        with pytest.raises(DomainError):
            scalar_log_maximizer(0, 0)

    @settings(max_examples=30)
    @given(st.floats(0.01, 100), st.floats(0.01, 100))
    def test_grid_crosscheck(self, a, b):
        assert scalar_log_maximizer(a, b) == pytest.approx(a / (a + b))


class TestLimitProfile:
    def test_equal(self):
        rows = limit_ratio_profile([0.3, 0.7], [0.3, 0.7], [0.1, 0.01, 0.001])
        assert all(r == 0 and g == 0 for _, r, g in rows)

    def test_toward_zero(self):
        p, q = [0.7, 0.3], [0.4, 0.6]
        rows = limit_ratio_profile(p, q, [1e-1, 1e-2, 1e-3], "toward_zero")
        gaps = [g for _, _, g in rows]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[-1] < 1e-2 * _oracle_kl(p, q)

    def test_toward_one(self):
        p, q = [0.7, 0.3], [0.4, 0.6]
        rows = limit_ratio_profile(p, q, [0.9, 0.99, 0.999], "toward_one")
        gaps = [g for _, _, g in rows]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[-1] < 1e-2 * _oracle_kl(q, p)

    def test_infinite_target(self):
        with pytest.raises(UnsupportedLimitError):
            limit_ratio_profile([0.5, 0.5], [1.0, 0.0], [0.1, 0.01])

    def test_unsorted(self):
        with pytest.raises(DomainError):
            limit_ratio_profile([0.5, 0.5], [0.4, 0.6], [0.01, 0.1])


def test_table_columns_and_residual():
    rng = np.random.default_rng(0)
    p, q = _random_pair(rng, 5)
    rows = divergence_table(p, q, [0.1, 0.5, 0.9])
    assert list(rows[0]) == ["pi", "kl_pq", "kl_qp", "js_pi", "constant", "c_g", "identity_residual"]
    assert all(r["identity_residual"] < 1e-10 for r in rows)
