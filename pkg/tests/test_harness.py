import os

import pytest
from click.testing import CliRunner

from app import cli
from resque_opt.error_handler import ConfigurationError
from resque_opt.harness import (CSV_COLUMNS, ExperimentConfig, RunReport, RunRow, case_path, load_experiment,
                                parse_overrides, run_experiment, write_report)


def _rows():
    return [RunRow(kappa, seed, 0.01 * seed, int(round(10 * kappa ** (2.0 / 3.0))) * (1 + seed), 100, 40, 400)
            for kappa in (8.0, 27.0, 64.0) for seed in (0, 1)]


def test_parse_overrides():
    values = parse_overrides(['n=64', 'kappas=[2, 4]', 'constants.C_priv=0.5', 'profile=desk', 'out='])
    assert values == {'n': 64, 'kappas': [2, 4], 'constants': {'C_priv': 0.5}, 'profile': 'desk', 'out': None}
    with pytest.raises(ConfigurationError):
        parse_overrides(['novalue'])


def test_load_experiment_merges_constants(tmp_path):
    path = tmp_path / 'exp.yml'
    path.write_text('mode: parallel\nkappas: [4, 8]\nconstants:\n  C_ba: 4\n')
    config = load_experiment(str(path), {'constants': {'C_priv': 0.5}, 'seeds': 3})
    assert config.kappas == [4, 8] and config.seeds == [0, 1, 2]
    assert config.constants == {'C_ba': 4, 'C_priv': 0.5}
    assert config.cases() == [4, 8]


def test_load_experiment_rejects_unknown_keys(tmp_path):
    path = tmp_path / 'exp.yml'
    path.write_text('mode: parallel\nkapas: [4]\n')
    with pytest.raises(ConfigurationError) as info:
        load_experiment(str(path))
    assert info.value.details['unknown'] == ['kapas']
    with pytest.raises(ConfigurationError):
        load_experiment(None, {'n': 10})


@pytest.mark.parametrize('mapping', [
    {'mode': 'train'},
    {'mode': 'parallel', 'method': 'sgd'},
    {'mode': 'parallel', 'kappas': [0.5]},
    {'mode': 'dp_erm', 'kind': 'max_linear'},
    {'mode': 'verify', 'suite': 'everything'},
    {'mode': 'verify', 'seeds': []},
    {'mode': 'dp_sco', 'phase_budget': 'halving'},
])
def test_config_validation(mapping):
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_mapping(mapping)


def test_cases_per_mode():
    assert ExperimentConfig('dp_sco', ns=[64, 128]).cases() == [64, 128]
    assert ExperimentConfig('dp_sco', n=256).cases() == [256]
    assert ExperimentConfig('dp_erm').cases() == [None]


def test_report_statistics():
    report = RunReport(ExperimentConfig('parallel', kappas=[8.0, 27.0, 64.0]), _rows())
    means = report.means()
    assert means[8.0]['error'] == pytest.approx(0.005)
    low, high = report.confidence_intervals()[8.0]['error']
    assert low < 0.005 < high
    assert report.depth_slope() == pytest.approx(2.0 / 3.0, abs=0.05)


def test_write_report_is_deterministic(tmp_path):
    report = RunReport(ExperimentConfig('parallel', kappas=[8.0, 27.0, 64.0]), _rows(),
                       ledgers={(8.0, 0): 'total 2.0 0.1 0.0'})
    first, first_summary = write_report(report, str(tmp_path / 'a' / 'run.csv'))
    second, _ = write_report(report, str(tmp_path / 'b' / 'run.csv'))
    assert [os.path.basename(path) for path in first] == ['run_kappa8.csv', 'run_kappa27.csv', 'run_kappa64.csv']
    for path, other in zip(first, second):
        with open(path, 'rb') as f, open(other, 'rb') as g:
            assert f.read() == g.read()
    with open(first[0]) as f:
        lines = f.read().splitlines()
    assert lines[0] == 'seed,error,depth,total,comp_depth,comp_work,eps_total,delta_total,seconds'
    assert lines[0] == ','.join(CSV_COLUMNS)
    assert lines[1:] == ['0,0.0,40,100,40,400,0.0,0.0,0.0', '1,0.01,80,100,40,400,0.0,0.0,0.0']
    with open(first_summary) as f:
        summary = f.read()
    assert 'slope method=ac_sa d=4 depth_vs_kappa=' in summary
    assert 'band=[0.5, 0.85] PASS' in summary
    assert '# ledger case=8.0 seed=0\ntotal 2.0 0.1 0.0' in summary
    assert 'uncertified' not in summary


def test_single_case_writes_one_csv(tmp_path):
    rows = [RunRow(None, seed, 0.1, 3, 9, 3, 9, 0.8, 1e-5, certified=False) for seed in (0, 1)]
    report = RunReport(ExperimentConfig('dp_erm'), rows)
    paths, summary = write_report(report, str(tmp_path / 'erm.csv'))
    assert paths == [str(tmp_path / 'erm.csv')]
    with open(paths[0]) as f:
        assert f.read().splitlines()[1] == '0,0.1,3,9,3,9,0.8,1e-05,0.0'
    with open(summary) as f:
        assert '# uncertified: ledgers use C_priv below 60.0' in f.read()


def test_case_path_names_the_case():
    assert case_path('results/run.csv', 'parallel', 8.0) == 'results/run_kappa8.csv'
    assert case_path('results/run.csv', 'dp_sco', 1024) == 'results/run_n1024.csv'
    assert case_path('results/run', 'dp_sco', 256) == 'results/run_n256.csv'


def test_depth_slope_outside_band_fails(tmp_path):
    rows = [RunRow(kappa, 0, 0.0, int(kappa), 10, 1, 1) for kappa in (4.0, 16.0)]
    _, summary = write_report(RunReport(ExperimentConfig('parallel', kappas=[4.0, 16.0]), rows),
                              str(tmp_path / 'linear.csv'))
    with open(summary) as f:
        assert 'band=[0.5, 0.85] FAIL' in f.read()


def test_verify_mode_runs_accountant_suite(tmp_path, log_to_tmp):
    config = ExperimentConfig('verify', suite='accountant', seeds=[0], out=str(tmp_path / 'verify.csv'))
    report = run_experiment(config)
    assert report.checks and report.passed
    _, summary = write_report(report)
    with open(summary) as f:
        assert f.read().splitlines()[-1] == '# PASS'
    with open(log_to_tmp) as f:
        assert ':run_experiment:verify:' in f.read()


def test_cli_verify(tmp_path):
    result = CliRunner().invoke(cli, ['verify', '--suite', 'aggregation', '--seed', '3',
                                      '--out', str(tmp_path / 'agg.csv')])
    assert result.exit_code == 0
    assert 'PASS aggregation_clusters' in result.output
    assert (tmp_path / 'agg.csv.summary.txt').exists()


def test_cli_reports_configuration_errors(tmp_path):
    result = CliRunner().invoke(cli, ['parallel', '--override', 'method=sgd', '--out', str(tmp_path / 'x.csv')])
    assert result.exit_code == 2
    assert not (tmp_path / 'x.csv').exists()

