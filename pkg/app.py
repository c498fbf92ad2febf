import click

from resque_opt.error_handler import handle_cli_error
from resque_opt.harness import load_experiment, parse_overrides, run_experiment, write_report


def _run_mode(mode, config_path, seed, out, overrides, **extra):
    values = parse_overrides(overrides)
    values['mode'] = mode
    values.update({key: value for key, value in extra.items() if value is not None})
    if seed is not None:
        values['seeds'] = [seed]
    if out is not None:
        values['out'] = out
    config = load_experiment(config_path, values)
    report = run_experiment(config)
    csv_paths, summary_path = write_report(report)
    click.echo('\n'.join(csv_paths + [summary_path]))
    return report


def common_options(command):
    command = click.option('--override', 'overrides', multiple=True, metavar='KEY=VALUE',
                           help='Override one experiment key; constants.<name> overrides a solver '
                                'constant')(command)
    command = click.option('--out', type=click.Path(dir_okay=False), default=None, help='CSV output path')(command)
    command = click.option('--seed', type=int, default=None, help='Run a single seed')(command)
    command = click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False), default=None,
                           help='YAML experiment config')(command)
    return command


@click.group(name='resque-opt')
def cli():
    """Parallel and private stochastic convex optimization with ReSQue estimators."""


@cli.command('parallel')
@common_options
@handle_cli_error
def parallel(config_path, seed, out, overrides):
    _run_mode('parallel', config_path, seed, out, overrides)


@cli.command('dp_erm')
@common_options
@handle_cli_error
def dp_erm(config_path, seed, out, overrides):
    _run_mode('dp_erm', config_path, seed, out, overrides)


@cli.command('dp_sco')
@common_options
@handle_cli_error
def dp_sco(config_path, seed, out, overrides):
    _run_mode('dp_sco', config_path, seed, out, overrides)


@cli.command('verify')
@common_options
@click.option('--suite', type=str, default=None, help='moments, drift, aggregation, accountant or mlmc')
@handle_cli_error
def verify(config_path, seed, out, overrides, suite):
    report = _run_mode('verify', config_path, seed, out, overrides, suite=suite)
    for check in report.checks:
        click.echo(check.line())
    if not report.passed:
        raise SystemExit(1)


if __name__ == "__main__":
    cli()
