import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survlink.exceptions import ConditioningError, InsufficientDataError
from survlink.survival import (
    EmpiricalCdf,
    ReliabilityTarget,
    conditional_failure,
    empirical_cdf,
    solve_tau_star,
)
from survlink.weibull import WeibullParams


def uniform01(x):
    return np.clip(np.asarray(x, dtype=float), 0.0, 1.0)


class Exponential:
    def __init__(self, rate):
        self.rate = rate

    def __call__(self, x):
        return -np.expm1(-self.rate * np.maximum(x, 0.0))

    def logsf(self, x):
        return -self.rate * np.maximum(np.asarray(x, dtype=float), 0.0)


class TestEmpiricalCdf:
    def test_counting_rule(self):
        F = empirical_cdf([1.0, 2.0, 3.0])
        assert F(2.0) == pytest.approx(2 / 3)
        assert F(0.5) == 0.0
        assert F(10.0) == 1.0

    def test_right_continuous(self):
        F = EmpiricalCdf([1.0, 2.0])
        assert F(1.0) == 0.5
        assert F(np.nextafter(1.0, 0.0)) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(InsufficientDataError):
            EmpiricalCdf([])

    def test_inverse(self):
        F = EmpiricalCdf([3.0, 1.0, 2.0, 4.0])
        assert F.inverse(0.5) == 2.0
        assert F.inverse(0.51) == 3.0
        assert F.inverse(1.0) == 4.0

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=40),
           st.lists(st.floats(-10.0, 2e3), min_size=1, max_size=20))
    def test_matches_brute_force(self, data, queries):
        F = EmpiricalCdf(data)
        for q in queries:
            expected = sum(1 for x in data if x <= q) / len(data)
            assert F(q) == expected
        qs = np.sort(queries)
        assert np.all(np.diff(F(qs)) >= 0)
        assert F(min(data) - 1.0) == 0.0 and F(max(data)) == 1.0


class TestConditionalFailure:
    def test_zero_at_zero(self):
        assert conditional_failure(uniform01, 0.3, 0.0) == 0.0
        assert conditional_failure(Exponential(2.0), 5.0, 0.0) == 0.0

    def test_uniform(self):
        assert conditional_failure(uniform01, 0.5, 0.25) == pytest.approx(0.5)

    @pytest.mark.parametrize("t", [0.0, 0.7, 3.0, 40.0])
    def test_memoryless(self, t):
        tau = np.array([0.01, 0.5, 2.0])
        np.testing.assert_allclose(conditional_failure(Exponential(1.0), t, tau),
                                   -np.expm1(-tau), rtol=1e-12)

    def test_conditioning_on_null_event(self):
        with pytest.raises(ConditioningError):
            conditional_failure(uniform01, 1.0, 0.1)
        with pytest.raises(ConditioningError):
            conditional_failure(EmpiricalCdf([1.0, 2.0]), 2.0, 0.1)

    def test_negative_tau(self):
        with pytest.raises(ValueError):
            conditional_failure(uniform01, 0.1, -0.1)

    @settings(max_examples=80, deadline=None)
    @given(st.lists(st.floats(1e-3, 10.0), min_size=2, max_size=30), st.floats(0.0, 5.0))
    def test_is_a_cdf_in_tau(self, data, t):
        F = EmpiricalCdf(data)
        if F(t) >= 1.0:
            return
        tau = np.linspace(0.0, 12.0, 200)
        v = conditional_failure(F, t, tau)
        assert v[0] == 0.0
        assert np.all(np.diff(v) >= 0)
        assert np.all((v >= 0) & (v <= 1))
        assert v[-1] == 1.0


class TestSolveTauStar:
    @pytest.mark.parametrize("t", [0.0, 0.3, 2.0, 50.0])
    def test_exponential(self, t):
        res = solve_tau_star(Exponential(1.0), t, 0.1)
        assert res.status == "ok"
        assert res.tau == pytest.approx(-math.log(0.9), abs=1e-9)

    def test_uniform(self):
        assert solve_tau_star(uniform01, 0.0, 0.5).tau == pytest.approx(0.5, abs=1e-9)

    def test_weibull_closed_form(self):
        expected = math.sqrt(1.0 - math.log(0.9)) - 1.0
        res = solve_tau_star(WeibullParams(1.0, 2.0), 1.0, 0.1)
        assert abs(res.tau - expected) < 1e-9

    def test_round_trip(self):
        F = WeibullParams(0.7, 1.3)
        for t in (0.0, 0.4, 2.0):
            for eps in (1e-3, 0.05, 0.5):
                tau = solve_tau_star(F, t, eps).tau
                assert conditional_failure(F, t, tau) <= eps + 1e-12
                assert conditional_failure(F, t, tau + 1e-8) > eps

    def test_empirical_step_inversion(self):
        F = EmpiricalCdf([1.0, 2.0, 3.0, 4.0])
        # target = eps: first x with F(x) > 0.3 is 2.0
        assert solve_tau_star(F, 0.0, 0.3).tau == 2.0
        # t = 1.5: F(t) = 0.25, target 0.25 + 0.75 * 0.5 = 0.625, first F > target at 3
        assert solve_tau_star(F, 1.5, 0.5).tau == pytest.approx(1.5)

    def test_empirical_is_supremum(self):
        data = np.random.default_rng(1).exponential(size=200)
        F = EmpiricalCdf(data)
        for t in (0.0, 0.5):
            for eps in (0.01, 0.1, 0.3):
                tau = solve_tau_star(F, t, eps).tau
                target = eps + (1 - eps) * F(t)
                x = F.sorted_durations
                j = int(np.searchsorted(x, t + tau - 1e-12))
                # tau lands on a sample; everything strictly before it is feasible
                assert x[j] - t == pytest.approx(tau, abs=1e-12)
                assert F(x[j]) > target
                assert F(x[j - 1]) <= target

    def test_saturation_flag(self):
        res = solve_tau_star(uniform01, 0.0, 0.5, horizon=0.2)
        assert res.saturated and res.tau == 0.2

    def test_conditioning_error(self):
        with pytest.raises(ConditioningError):
            solve_tau_star(uniform01, 2.0, 0.1)

    @pytest.mark.parametrize("eps", [0.0, 1.0, -0.1, 1.5])
    def test_epsilon_domain(self, eps):
        with pytest.raises(ValueError):
            solve_tau_star(uniform01, 0.0, eps)


def test_reliability_target_validation():
    assert ReliabilityTarget(0.01).gamma == 0.95
    with pytest.raises(ValueError):
        ReliabilityTarget(0.0)
    with pytest.raises(ValueError):
        ReliabilityTarget(0.1, gamma=1.0)
