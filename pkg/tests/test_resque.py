import math

import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given, settings

from resque_opt.error_handler import DomainError
from resque_opt.problem_core import DistanceToPoint, ExactSubgradientOracle, QueryLedger
from resque_opt.resque import (ResqueSampler, SmoothedObjective, abs_smoothed_gradient, abs_smoothed_value,
                               difference_weight, log_density_ratio, presample_perturbations, resque_gradient,
                               smoothing_bias_bound, smoothness_constant, weight_moment_exact)


def _abs_sampler(rho):
    return ResqueSampler(np.zeros(1), rho, ExactSubgradientOracle(DistanceToPoint([0.0])))


def test_log_density_ratio_rows():
    u = np.array([[1.0, 0.0], [0.0, 0.0]])
    v = np.array([[0.0, 0.0], [0.0, 2.0]])
    assert np.allclose(log_density_ratio(u, v, 2.0), [-1.0 / 8.0, 4.0 / 8.0])


def test_invalid_radius_and_count():
    with pytest.raises(DomainError):
        log_density_ratio([0.0], [0.0], 0.0)
    with pytest.raises(DomainError):
        presample_perturbations(1.0, 2, -1, seed=0)
    with pytest.raises(DomainError):
        ResqueSampler(np.zeros(2), -1.0, None)


def test_weight_is_one_at_the_center():
    sampler = ResqueSampler(np.zeros(3), 0.5, None)
    xis = presample_perturbations(0.5, 3, 100, seed=1)
    assert np.allclose(sampler.weights(np.zeros(3), xis), 1.0)


def test_weight_guard():
    sampler = ResqueSampler(np.zeros(2), 0.1, None)
    sampler.weights(np.array([0.99, 0.0]), np.zeros((1, 2)))
    with pytest.raises(DomainError):
        sampler.weights(np.array([1.01, 0.0]), np.zeros((1, 2)))


def test_weight_moments_match_closed_form():
    v, rho = np.full(2, 0.1), 1.0
    xis = presample_perturbations(rho, 2, 200_000, seed=2)
    weights = np.exp(log_density_ratio(v - xis, xis, rho))
    assert weight_moment_exact(v, rho, 1) == 1.0
    assert np.mean(weights) == pytest.approx(1.0, abs=0.01)
    assert np.mean(weights ** 2) == pytest.approx(weight_moment_exact(v, rho, 2), rel=0.01)


def test_abs_smoothing_closed_form_against_quadrature():
    smoothed = SmoothedObjective(DistanceToPoint([0.0]), 0.5)
    for x in (-0.4, 0.0, 0.3, 1.2):
        assert smoothed.value_quadrature([x]) == pytest.approx(float(abs_smoothed_value(x, 0.5)), abs=3e-3)
        assert smoothed.gradient_quadrature([x])[0] == pytest.approx(float(abs_smoothed_gradient(x, 0.5)),
                                                                     abs=3e-3)
    assert float(abs_smoothed_value(0.0, 0.5)) == pytest.approx(0.5 * math.sqrt(2.0 / math.pi))


def test_coarse_quadrature_stays_near_closed_form():
    smoothed = SmoothedObjective(DistanceToPoint([0.0]), 0.5)
    for x in (-0.4, 0.0, 0.3, 1.2):
        exact = float(abs_smoothed_value(x, 0.5))
        coarse = smoothed.value_quadrature([x], nodes=64)
        assert coarse == pytest.approx(exact, abs=5e-3)


def test_quadrature_limited_to_two_dimensions():
    with pytest.raises(DomainError):
        SmoothedObjective(DistanceToPoint(np.zeros(3)), 0.5).value_quadrature(np.zeros(3))


def test_resque_estimate_is_unbiased_for_the_smoothed_gradient():
    rho, x, samples = 0.5, np.array([0.2]), 100_000
    sampler = _abs_sampler(rho)
    xis = presample_perturbations(rho, 1, samples, seed=3)
    ledger = QueryLedger(1)
    estimates = resque_gradient(sampler, x, xis, sampler.query(xis, ledger))[:, 0]
    stderr = estimates.std(ddof=1) / math.sqrt(samples)
    assert abs(estimates.mean() - float(abs_smoothed_gradient(0.2, rho))) <= 4.0 * stderr
    assert ledger.query_depth == 1 and ledger.total_queries == samples


def test_draw_records_one_batch():
    sampler = _abs_sampler(0.5)
    ledger = QueryLedger(1)
    samples = sampler.draw(np.array([0.1]), 8, ledger, seed=4)
    assert len(samples) == 8 and ledger.query_depth == 1
    for sample in samples:
        assert np.allclose(sample.gradient, sample.weight * np.sign(sample.xi))


def test_smoothing_constants():
    assert smoothing_bias_bound(2.0, 0.5, 4) == pytest.approx(2.0)
    assert smoothness_constant(3.0, 0.5) == pytest.approx(6.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3), st.floats(0.1, 2.0))
def test_difference_weight_vanishes_for_equal_points(x, rho):
    xis = presample_perturbations(rho, 3, 16, seed=5)
    assert np.allclose(difference_weight(x, x, np.zeros(3), xis, rho), 0.0)
