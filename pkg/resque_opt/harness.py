"""
Experiment harness: YAML experiment configs, seeded runs over a case grid, CSV and summary
emission, and the named verification suites.
"""
import csv
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import yaml

from .dp_solvers import PHASE_BUDGETS, ScoPhase, dp_erm, dp_sco, erm_alpha, localization_guarantee, rdp_budget
from .error_handler import ConfigurationError
from .logger import logger
from .parallel_solvers import METHODS, solve_parallel
from .privacy import CERTIFIED_C_PRIV, DpGuarantee, PrivacyLedger
from .problem_core import (OBJECTIVE_KINDS, LipschitzObjective, QueryLedger, SampledDataset,
                           make_abs_regression, make_synthetic_objective, reference_minimize)
from .utils import SolverConstants, create_folder_if_not_exist, derive_seed, load_constants, worker_count
from .verify import CheckResult, SUITES, run_suite

MODES = ('parallel', 'dp_erm', 'dp_sco', 'verify')
CSV_COLUMNS = ('seed', 'error', 'depth', 'total', 'comp_depth', 'comp_work', 'eps_total', 'delta_total', 'seconds')
CASE_KEYS = {'parallel': 'kappa', 'dp_sco': 'n'}
DEPTH_SLOPE_BAND = (0.5, 0.85)
Z_95 = 1.959963984540054


@dataclass
class ExperimentConfig:
    mode: str
    kind: str = 'abs_regression'
    n: int = 512
    d: int = 4
    kappas: List[float] = field(default_factory=lambda: [4.0, 8.0, 16.0, 32.0])
    ns: List[int] = field(default_factory=list)
    method: str = 'ac_sa'
    eps_dp: float = 0.9
    delta: float = 1e-5
    holdout: int = 4096
    seeds: List[int] = field(default_factory=lambda: [0])
    suite: str = 'accountant'
    profile: Optional[str] = None
    constants: Dict = field(default_factory=dict)
    out: str = 'results/experiment.csv'
    record_wall_time: bool = False
    phase_budget: str = 'disjoint'

    def __post_init__(self):
        if isinstance(self.seeds, int):
            self.seeds = list(range(self.seeds))
        self.seeds = [int(s) for s in self.seeds]
        self.validate()

    def validate(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"Unknown mode {self.mode}",
                                     details={'mode': self.mode, 'known': list(MODES)})
        if not self.seeds:
            raise ConfigurationError("Experiment needs at least one seed")
        if self.mode == 'parallel':
            if self.method not in METHODS:
                raise ConfigurationError(f"Unknown method {self.method}",
                                         details={'method': self.method, 'known': list(METHODS)})
            if self.kind not in OBJECTIVE_KINDS:
                raise ConfigurationError(f"Unknown objective kind {self.kind}",
                                         details={'kind': self.kind, 'known': list(OBJECTIVE_KINDS)})
            if not self.kappas or min(self.kappas) < 1:
                raise ConfigurationError("Parallel mode needs condition numbers >= 1",
                                         details={'kappas': self.kappas})
        if self.mode in ('dp_erm', 'dp_sco') and self.kind != 'abs_regression':
            raise ConfigurationError("Private modes run on the abs_regression dataset",
                                     details={'kind': self.kind})
        if self.mode == 'dp_sco' and self.phase_budget not in PHASE_BUDGETS:
            raise ConfigurationError(f"Unknown phase budget {self.phase_budget}",
                                     details={'phase_budget': self.phase_budget, 'known': list(PHASE_BUDGETS)})
        if self.mode == 'verify' and self.suite not in SUITES:
            raise ConfigurationError(f"Unknown verification suite {self.suite}",
                                     details={'suite': self.suite, 'known': sorted(SUITES)})

    @classmethod
    def from_mapping(cls, mapping: Dict) -> 'ExperimentConfig':
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ConfigurationError("Unknown experiment keys", details={'unknown': unknown})
        if 'mode' not in mapping:
            raise ConfigurationError("Experiment config needs a mode", details={'known': list(MODES)})
        return cls(**mapping)

    def cases(self) -> List[Optional[float]]:
        if self.mode == 'parallel':
            return list(self.kappas)
        if self.mode == 'dp_sco':
            return list(self.ns or [self.n])
        return [None]


def parse_overrides(pairs: Iterable[str]) -> Dict:
    """key=value pairs; values are parsed as YAML scalars or lists, `constants.` keys nest."""
    overrides: Dict = {}
    for pair in pairs or ():
        key, sep, raw = pair.partition('=')
        key = key.strip()
        if not sep or not key:
            raise ConfigurationError("Override must look like key=value", details={'override': pair})
        value = yaml.safe_load(raw) if raw.strip() else None
        if key.startswith('constants.'):
            overrides.setdefault('constants', {})[key[len('constants.'):]] = value
        else:
            overrides[key] = value
    return overrides


def load_experiment(path: Optional[str] = None, overrides: Optional[Dict] = None) -> ExperimentConfig:
    mapping: Dict = {}
    if path:
        with open(path, 'r') as file:
            mapping = yaml.safe_load(file) or {}
        if not isinstance(mapping, dict):
            raise ConfigurationError("Experiment config must be a mapping", details={'path': path})
    overrides = dict(overrides or {})
    constants = dict(mapping.get('constants') or {})
    constants.update(overrides.pop('constants', {}))
    mapping.update(overrides)
    if constants:
        mapping['constants'] = constants
    return ExperimentConfig.from_mapping(mapping)


@dataclass
class RunRow:
    case: Optional[float]
    seed: int
    error: float
    depth: int
    total: int
    comp_depth: int
    comp_work: int
    eps_total: float = 0.0
    delta_total: float = 0.0
    seconds: float = 0.0
    certified: bool = True

    def cells(self) -> List[str]:
        return [repr(getattr(self, name)) for name in CSV_COLUMNS]


@dataclass
class RunReport:
    config: ExperimentConfig
    rows: List[RunRow] = field(default_factory=list)
    ledgers: Dict[Tuple, str] = field(default_factory=dict)
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def by_case(self) -> Dict:
        grouped: Dict = {}
        for row in self.rows:
            grouped.setdefault(row.case, []).append(row)
        return grouped

    def means(self) -> Dict:
        numeric = CSV_COLUMNS[1:]
        return {case: {name: float(np.mean([getattr(r, name) for r in rows])) for name in numeric}
                for case, rows in self.by_case().items()}

    def confidence_intervals(self) -> Dict:
        """Normal-approximation 95% intervals per case and column."""
        intervals = {}
        for case, rows in self.by_case().items():
            intervals[case] = {}
            for name in CSV_COLUMNS[1:]:
                values = np.array([getattr(r, name) for r in rows], dtype=float)
                half = Z_95 * values.std(ddof=1) / math.sqrt(values.size) if values.size > 1 else 0.0
                intervals[case][name] = (float(values.mean() - half), float(values.mean() + half))
        return intervals

    def depth_slope(self) -> Optional[float]:
        """Least-squares slope of log mean depth against log κ."""
        means = self.means()
        cases = sorted(c for c in means if c is not None and means[c]['depth'] > 0)
        if len(cases) < 2:
            return None
        slope, _ = np.polyfit(np.log(cases), np.log([means[c]['depth'] for c in cases]), 1)
        return float(slope)


def _optimal_value(objective: LipschitzObjective) -> float:
    if isinstance(objective, SampledDataset):
        return objective.value(reference_minimize(objective))
    return objective.optimal_value


class ExperimentEngine():
    def __init__(self):
        self.config = None
        self.constants = None

    def set_config(self, config: ExperimentConfig):
        self.config = config
        self.set_constants(load_constants(config.profile, config.constants))

    def set_constants(self, constants: SolverConstants):
        self.constants = constants

    def get_config(self):
        return self.config

    def get_constants(self):
        return self.constants

    def run_case(self, case, seed: int) -> Tuple[RunRow, Optional[str]]:
        started = time.perf_counter()
        mode = self.config.mode
        if mode == 'parallel':
            row, ledger_text = self._run_parallel(case, seed)
        elif mode == 'dp_erm':
            row, ledger_text = self._run_dp_erm(seed)
        else:
            row, ledger_text = self._run_dp_sco(int(case), seed)
        if self.config.record_wall_time:
            row.seconds = time.perf_counter() - started
        return row, ledger_text

    @staticmethod
    def _row(case, seed, error, ledger: QueryLedger, guarantee: Optional[DpGuarantee] = None) -> RunRow:
        guarantee = guarantee or DpGuarantee(0.0, 0.0)
        return RunRow(case, seed, float(error), ledger.query_depth, ledger.total_queries, ledger.comp_depth,
                      ledger.comp_work, float(guarantee.eps_dp), float(guarantee.delta),
                      certified=guarantee.certified)

    def _run_parallel(self, kappa, seed):
        config = self.config
        objective = make_synthetic_objective(config.kind, config.d, seed, config.n)
        eps_opt = objective.lipschitz * objective.domain_radius / kappa
        ledger = QueryLedger(objective.dimension)
        point = solve_parallel(objective, eps_opt, config.method, ledger, seed, self.constants)
        return self._row(kappa, seed, objective.value(point) - _optimal_value(objective), ledger), None

    def _run_dp_erm(self, seed):
        config = self.config
        dataset = make_abs_regression(config.n, config.d, seed)
        privacy = PrivacyLedger(erm_alpha(config.eps_dp, config.delta), self.constants.C_priv,
                                budget=rdp_budget(config.eps_dp, config.delta))
        ledger = QueryLedger(dataset.dimension)
        point = dp_erm(dataset, config.eps_dp, config.delta, privacy, ledger, self.constants, seed)
        guarantee = privacy.to_dp(config.delta / 2.0) if privacy.events else None
        excess = dataset.value(point) - _optimal_value(dataset)
        text = privacy.report(config.delta / 2.0 if privacy.events else None)
        return self._row(None, seed, excess, ledger, guarantee), text

    def _run_dp_sco(self, n, seed):
        config = self.config
        dataset = make_abs_regression(n, config.d, seed)
        ledger = QueryLedger(dataset.dimension)
        phases: List[ScoPhase] = []
        point = dp_sco(dataset, config.eps_dp, config.delta, ledger, self.constants, seed, phases,
                       config.phase_budget)
        heldout = dataset.draw_fresh(config.holdout, derive_seed(seed, 0x686F))
        guarantee = localization_guarantee(phases, config.phase_budget)
        text = '\n'.join(_phase_text(phase) for phase in phases)
        return self._row(n, seed, heldout.value(point), ledger, guarantee), text


def _phase_text(phase: ScoPhase) -> str:
    header = f"# phase n={phase.indices.size} eps={phase.eps_dp!r} delta={phase.delta!r} lambda={phase.lam!r}"
    if phase.stopped is not None:
        header += f" stopped={phase.stopped}"
    return header + '\n' + phase.ledger.report()


@logger.log_run(extract_fields={
    'mode': lambda config: config.mode,
    'kind': lambda config: config.kind,
    'n': lambda config: config.n,
    'd': lambda config: config.d,
    'seeds': lambda config: len(config.seeds),
})
def run_experiment(config: ExperimentConfig) -> RunReport:
    """Every (case, seed) pair of the config; seeds run on RESQUE_THREADS workers, rows keep grid order."""
    report = RunReport(config)
    if config.mode == 'verify':
        for seed in config.seeds:
            report.checks.extend(verify_suite(config.suite, seed))
        return report

    engine = ExperimentEngine()
    engine.set_config(config)
    jobs = [(case, seed) for case in config.cases() for seed in config.seeds]
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(pool.map(lambda job: engine.run_case(*job), jobs))
    for (case, seed), (row, ledger_text) in zip(jobs, results):
        report.rows.append(row)
        if ledger_text is not None:
            report.ledgers[(case, seed)] = ledger_text
    return report


def verify_suite(name: str, seed: int = 0) -> List[CheckResult]:
    results = run_suite(name, seed)
    for check in results:
        if not check.passed:
            logger.log_event('verify.failed', suite=name, check=check.name, detail=check.detail)
    return results


def _summary_lines(report: RunReport) -> List[str]:
    config = report.config
    lines = [f"# mode {config.mode} kind {config.kind} d {config.d} seeds {len(config.seeds)}"]
    if config.mode == 'verify':
        lines.extend(check.line() for check in report.checks)
        lines.append(f"# {'PASS' if report.passed else 'FAIL'}")
        return lines
    intervals = report.confidence_intervals()
    for case, means in report.means().items():
        label = '' if case is None else repr(case)
        cells = ' '.join(f"{name}={means[name]!r} [{intervals[case][name][0]!r}, {intervals[case][name][1]!r}]"
                         for name in ('error', 'depth', 'total', 'comp_depth', 'eps_total', 'delta_total'))
        lines.append(' '.join(part for part in ('case', label, cells) if part))
    if config.mode == 'parallel':
        slope = report.depth_slope()
        line = f"slope method={config.method} d={config.d} depth_vs_kappa={slope!r}"
        if slope is not None:
            low, high = DEPTH_SLOPE_BAND
            line += f" band=[{low!r}, {high!r}] {'PASS' if low <= slope <= high else 'FAIL'}"
        lines.append(line)
    if not all(row.certified for row in report.rows):
        lines.append(f"# uncertified: ledgers use C_priv below {CERTIFIED_C_PRIV!r}, "
                     f"eps_total and delta_total are not a proved guarantee")
    for (case, seed), text in report.ledgers.items():
        lines.append(f"# ledger case={'' if case is None else case} seed={seed}")
        lines.append(text)
    return lines


def case_path(out: str, mode: str, case) -> str:
    """`results/run.csv` -> `results/run_kappa8.csv` for case 8 of a parallel grid."""
    root, ext = os.path.splitext(out)
    return f"{root}_{CASE_KEYS.get(mode, 'case')}{case:g}{ext or '.csv'}"


def write_report(report: RunReport, out: Optional[str] = None) -> Tuple[List[str], str]:
    """
    CSV files plus `<out>.summary.txt`; returns the CSV paths and the summary path.

    A config with a single case writes its rows to `out`. A grid writes one file per case
    next to it, named by `case_path`, so every CSV keeps the same columns.
    """
    out = out or report.config.out
    create_folder_if_not_exist(os.path.dirname(out))
    cases = report.config.cases()
    if len(cases) == 1:
        files = {out: report.rows}
    else:
        grouped = report.by_case()
        files = {case_path(out, report.config.mode, case): grouped.get(case, []) for case in cases}
    for path, rows in files.items():
        with open(path, 'w', newline='') as file:
            writer = csv.writer(file, lineterminator='\n')
            writer.writerow(CSV_COLUMNS)
            for row in rows:
                writer.writerow(row.cells())
    summary = out + '.summary.txt'
    with open(summary, 'w') as file:
        file.write('\n'.join(_summary_lines(report)) + '\n')
    return list(files), summary
