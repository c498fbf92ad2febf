import pytest

from resque_opt.error_handler import ConfigurationError
from resque_opt.verify import CheckResult, accountant_suite, aggregation_suite, mlmc_suite, run_suite


def test_check_line_format():
    assert CheckResult('drift_b1', True, 'max=1 bound=2').line() == 'PASS drift_b1 max=1 bound=2'
    assert CheckResult('aggregation_single', False).line() == 'FAIL aggregation_single'


def test_unknown_suite_rejected():
    with pytest.raises(ConfigurationError) as exc:
        run_suite('nope')
    assert 'accountant' in exc.value.details['known']


def test_accountant_suite_passes():
    results = accountant_suite(seed=0)
    assert all(check.passed for check in results), [c.line() for c in results if not c.passed]
    assert {'reject_mixed_alpha', 'conversion_delta'} <= {check.name for check in results}


def test_aggregation_suite_small():
    results = aggregation_suite(seed=1, instances=100)
    assert [check.name for check in results] == ['aggregation_clusters', 'aggregation_identical',
                                                 'aggregation_single']
    assert all(check.passed for check in results)


def test_drift_stays_under_bound():
    results = run_suite('drift', seed=0, trials=40)
    assert [check.name for check in results] == ['drift_b1', 'drift_b2', 'drift_b4']
    assert all(check.passed for check in results)


def test_moments_suite_passes():
    results = run_suite('moments', seed=0, draws=200_000)
    assert len(results) == 12
    assert all(check.passed for check in results), [c.line() for c in results if not c.passed]


def test_mlmc_suite_passes():
    results = mlmc_suite(seed=0, loops=2000)
    assert [check.name for check in results] == ['telescoping_mean', 'mlmc_variance', 'mlmc_gradient_counts',
                                                 'mlmc_scale_tail']
    assert all(check.passed for check in results), [c.line() for c in results if not c.passed]
