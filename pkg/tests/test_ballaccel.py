import math
from dataclasses import replace

import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given, settings

from resque_opt.ballaccel import (AccelState, derive_schedule, exact_quadratic_suite, growth_step,
                                  line_search_lambda, ms_step, query_point, run_ball_accel, run_ball_accel_nonprivate,
                                  trial_budget)
from resque_opt.error_handler import ConfigurationError, ContractError
from resque_opt.problem_core import QueryLedger

TARGET = np.array([0.3, -0.2])


def _quadratic_gap(x):
    return 0.5 * float(np.sum((np.asarray(x) - TARGET) ** 2))


def test_schedule_values():
    config = derive_schedule(1.0, 1.0, 0.01, 0.1, C_ba=8.0)
    assert config.kappa == pytest.approx(10.0)
    assert config.K == pytest.approx(100.0 ** (2.0 / 3.0))
    assert config.lambda_star == pytest.approx(0.1 * config.K ** 2 * math.log(10.0) ** 2)
    assert config.lambda_range == pytest.approx((config.lambda_star / 8.0, 80.0))
    assert config.max_iters == math.ceil(8.0 * config.K * math.log(10.0))
    assert not config.trivial


def test_schedule_floors_kappa_and_flags_trivial():
    assert derive_schedule(1.0, 1.0, 0.5, 0.9).kappa == pytest.approx(math.e)
    assert derive_schedule(1.0, 1.0, 0.5, 1.0).trivial


@pytest.mark.parametrize('args', [(1.0, 1.0, 2.0, 0.1), (1.0, 1.0, 0.0, 0.1), (1.0, 1.0, 0.1, 2.0),
                                  (1.0, 1.0, 1e-6, 0.5)])
def test_schedule_rejects(args):
    with pytest.raises(ConfigurationError):
        derive_schedule(*args)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 100.0), st.floats(0.01, 100.0))
def test_growth_step_solves_quadratic(A, lam):
    a = growth_step(A, lam)
    assert a > 0
    assert lam * a * a == pytest.approx(A + a, rel=1e-9)


def test_growth_step_needs_positive_lambda():
    with pytest.raises(ContractError):
        growth_step(1.0, 0.0)


def test_ms_step_updates():
    state = AccelState.start(2)
    assert np.allclose(query_point(state, 2.0), 0.0)
    nxt = ms_step(state, 2.0, np.zeros(2))
    assert nxt.A == pytest.approx(growth_step(0.0, 2.0))
    assert nxt.iter == 1 and nxt.lambda_history == (2.0,)
    assert np.allclose(nxt.v, 0.0)
    moved = ms_step(state, 2.0, np.zeros(2), dual_point=np.array([-10.0, 0.0]), radius=1.0, r=0.1)
    assert np.linalg.norm(moved.v) == pytest.approx(1.0)


def test_trial_budget():
    assert trial_budget((1.0, 8.0), 0.25, 1.0) == 5
    assert trial_budget((1.0, 1.0), 1.0, 1.0) == 2


def test_line_search_accepts_lower_end():
    result = line_search_lambda(AccelState.start(2), lambda c, lam, s: c, (0.5, 64.0), 0.1, 1.0)
    assert result.at_lower and result.accepted
    assert result.lam == 0.5 and result.trials == 1


def test_line_search_brackets_movement():
    unit = np.array([1.0, 0.0])
    result = line_search_lambda(AccelState.start(2), lambda c, lam, s: c + unit / lam, (0.5, 64.0), 0.1, 1.0)
    assert result.by_movement and result.accepted
    assert result.lam == pytest.approx(math.sqrt(8.0 * 16.0))
    assert 0.75 * 0.1 * 0.95 <= result.movement <= 0.1 * 0.95
    assert result.trials == 7


def test_exact_oracles_reach_target_accuracy():
    config = derive_schedule(2.0, 1.0, 0.2, 0.05)
    result = run_ball_accel(config, exact_quadratic_suite(1.0, TARGET, 0.2), QueryLedger(2), seed=1)
    assert result.converged
    assert result.state.A >= config.R ** 2 / config.eps_opt
    assert _quadratic_gap(result.point) <= config.eps_opt
    assert len(result.trial_counts) == result.iterations


def test_nonprivate_runner_with_exact_ball_oracle():
    config = derive_schedule(2.0, 1.0, 0.2, 0.05)
    suite = exact_quadratic_suite(1.0, TARGET, 0.2)
    result = run_ball_accel_nonprivate(config, suite.ball_opt, QueryLedger(2), seed=2)
    assert result.converged
    assert _quadratic_gap(result.point) <= config.eps_opt
    assert result.level_counts[0] > 0


def test_trivial_schedule_returns_origin():
    config = derive_schedule(1.0, 1.0, 0.5, 1.0)
    result = run_ball_accel(config, exact_quadratic_suite(1.0, TARGET, 0.5), QueryLedger(2))
    assert result.converged and result.iterations == 0
    assert np.allclose(result.point, 0.0)


def test_iteration_cap_is_logged(log_to_tmp):
    config = replace(derive_schedule(2.0, 1.0, 0.2, 0.05), max_iters=1)
    result = run_ball_accel(config, exact_quadratic_suite(1.0, TARGET, 0.2), QueryLedger(2))
    assert not result.converged and result.iterations == 1
    with open(log_to_tmp) as f:
        assert 'ball_accel.max_iters:loop=private' in f.read()


def test_capped_run_reports_its_error_bound(log_to_tmp):
    suite = exact_quadratic_suite(1.0, TARGET, 0.2)
    config = derive_schedule(2.0, 1.0, 0.2, 0.05)
    capped = run_ball_accel(replace(config, max_iters=2), suite, QueryLedger(2), seed=1)
    assert not capped.converged
    assert capped.error_bound == pytest.approx(config.R ** 2 / (2.0 * capped.state.A))
    assert capped.error_bound > config.eps_opt / 2.0
    assert _quadratic_gap(capped.point) <= capped.error_bound
    with open(log_to_tmp) as f:
        assert f'bound={capped.error_bound!r}' in f.read()

    full = run_ball_accel(config, suite, QueryLedger(2), seed=1)
    assert full.converged and full.error_bound <= config.eps_opt / 2.0 < capped.error_bound
