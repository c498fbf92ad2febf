"""
Private solvers for ball subproblems of an empirical risk, and the private ERM / SCO drivers.

Every subsampled solver queries per-sample subgradients only at x̄ + ξ, so the indices and
perturbations of a run do not depend on its iterates: they are drawn together, queried as one
batch, and the recursion only reweights them. Privacy events are recorded before a run starts,
so a ledger over budget stops the run before any sample is touched.
"""
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .ballaccel import BallAccelConfig, OracleSuite, derive_schedule, run_ball_accel, trial_budget
from .error_handler import ConfigurationError, InfeasibleError, PrivacyError
from .logger import logger
from .privacy import (CERTIFIED_C_PRIV, DpGuarantee, PrivacyLedger, SolverPrivacy, chernoff_event, compose_dp,
                      parallel_compose_dp, solver_rdp_event)
from .problem_core import QueryLedger, SampledDataset
from .resque import ResqueSampler
from .utils import SolverConstants, derive_seed, project_ball, substream

PSGD_STEP_OPS = 3
AGGREGATE_QUORUM = 0.51
BETA_HALVINGS = 40
DEFAULT_SOLVER_DELTA = 1e-6
PHASE_BUDGETS = ('disjoint', 'geometric')


@dataclass(frozen=True)
class SubsampledRunConfig:
    """One run of the epoch-halving subsampled solver on B_center(r)."""
    center: np.ndarray
    r: float
    rho: float
    beta: float
    T: int
    lam: float = 0.0
    seed: int = 0
    x0: Optional[np.ndarray] = None
    r_prime: Optional[float] = None
    anchor: Optional[np.ndarray] = None

    @property
    def t_hat(self) -> int:
        return 2 ** self.epoch_count

    @property
    def epoch_count(self) -> int:
        return int(math.floor(math.log2(self.T)))

    def step_size(self, L, d) -> float:
        radius = self.r if self.r_prime is None else self.r_prime
        return radius / L * min(1.0 / math.sqrt(self.T), self.beta / math.sqrt(d))

    def epochs(self, L, d) -> List[Tuple[int, float, float]]:
        """(T_i, η_i, σ_i) for epochs i = 1..k: T_i = T̂/2^i, η_i = η/4^i, σ_i = Lη_i/β."""
        eta = self.step_size(L, d)
        schedule = []
        for i in range(1, self.epoch_count + 1):
            eta_i = eta * 4.0 ** (-i)
            sigma = 0.0 if math.isinf(self.beta) else L * eta_i / self.beta
            schedule.append((self.t_hat // 2 ** i, eta_i, sigma))
        return schedule


def _validate_run(r, rho, beta, T, lam=0.0):
    if not r > 0 or not rho > 0:
        raise ConfigurationError("Ball and smoothing radii must be positive", details={'r': r, 'rho': rho})
    if not beta > 0:
        raise ConfigurationError("Noise parameter beta must be positive", details={'beta': beta})
    if T < 1:
        raise ConfigurationError("Step budget must be at least 1", details={'T': T})
    if lam < 0:
        raise ConfigurationError("Regularization must be nonnegative", details={'lambda': lam})


def _privacy_terms(dataset: SampledDataset, beta, T, delta, constants: SolverConstants, variant,
                   rho_over_r=None, zeta=None, log_horizon=None) -> SolverPrivacy:
    if dataset.n < constants.C_priv:
        raise ConfigurationError("Private solvers need n >= C_priv",
                                 details={'condition': 'n >= C_priv', 'n': dataset.n,
                                          'C_priv': constants.C_priv})
    return solver_rdp_event(beta, T, dataset.n, delta, constants.C_priv, variant, zeta=zeta,
                            rho_over_r=rho_over_r, log_horizon=log_horizon)


def _record(privacy_ledger: Optional[PrivacyLedger], terms: Optional[SolverPrivacy], label: str,
            scale: float = 1.0, runs: int = 1):
    """Solver event split into its RDP part and the index-count δ it holds with."""
    if privacy_ledger is None or terms is None:
        return
    event = terms.event(privacy_ledger.alpha, label, scale)
    privacy_ledger.record(replace(event, delta=0.0))
    privacy_ledger.record(chernoff_event(privacy_ledger.alpha, runs * terms.delta, f'{label}.chernoff'))


def _run_subsampled(dataset: SampledDataset, config: SubsampledRunConfig, query_ledger: QueryLedger,
                    tag: str) -> np.ndarray:
    d, L = dataset.dimension, dataset.lipschitz
    center = np.asarray(config.center, dtype=float)
    anchor = center if config.anchor is None else np.asarray(config.anchor, dtype=float)
    y = center.copy() if config.x0 is None else np.asarray(config.x0, dtype=float)
    epochs = config.epochs(L, d)
    total = sum(length for length, _, _ in epochs)

    rng = substream(config.seed, 0x7073)
    indices = rng.integers(dataset.n, size=total)
    xis = config.rho * rng.standard_normal((total, d))
    gradients = dataset.per_sample_subgradients(indices, center + xis) if total else np.zeros((0, d))
    query_ledger.record_batch(total, tag)
    sampler = ResqueSampler(center, config.rho, None)

    offset = 0
    for length, eta, sigma in epochs:
        path = np.zeros(d)
        for j in range(offset, offset + length):
            estimate = float(sampler.weights(y, xis[j])) * gradients[j]
            y = project_ball((y + eta * config.lam * anchor - eta * estimate) / (1.0 + eta * config.lam),
                             center, config.r)
            path += y
        offset += length
        y = path / length + sigma * rng.standard_normal(d)
    query_ledger.charge(PSGD_STEP_OPS * total, PSGD_STEP_OPS * total)
    return project_ball(y, center, config.r)


def subsampled_psgd_convex(dataset: SampledDataset, config: SubsampledRunConfig,
                           privacy_ledger: Optional[PrivacyLedger] = None,
                           query_ledger: Optional[QueryLedger] = None,
                           delta: float = DEFAULT_SOLVER_DELTA,
                           constants: Optional[SolverConstants] = None) -> np.ndarray:
    """
    Noisy epoch-halving projected SGD on f̂_ρ over B_x̄(r) with ReSQue estimates from sampled
    indices. Without a privacy ledger the run is unaccounted; β = inf switches the noise off.
    """
    _validate_run(config.r, config.rho, config.beta, config.T)
    if config.lam != 0.0:
        raise ConfigurationError("The convex solver takes no regularizer", details={'lambda': config.lam})
    constants = constants or SolverConstants()
    if privacy_ledger is not None:
        terms = _privacy_terms(dataset, config.beta, config.T, delta, constants, 'convex',
                               rho_over_r=config.rho / config.r)
        _record(privacy_ledger, terms, 'psgd_convex')
    return _run_subsampled(dataset, config, query_ledger or QueryLedger(dataset.dimension), 'psgd_convex')


def subsampled_psgd_regularized(dataset: SampledDataset, config: SubsampledRunConfig,
                                privacy_ledger: Optional[PrivacyLedger] = None,
                                query_ledger: Optional[QueryLedger] = None,
                                delta: float = DEFAULT_SOLVER_DELTA,
                                constants: Optional[SolverConstants] = None) -> np.ndarray:
    """The convex solver on f̂_ρ + λ/2||x − anchor||², started at x₀ with step radius r'."""
    _validate_run(config.r, config.rho, config.beta, config.T, config.lam)
    center = np.asarray(config.center, dtype=float)
    if config.x0 is not None and np.linalg.norm(np.asarray(config.x0) - center) > config.r * (1 + 1e-9):
        raise ConfigurationError("Start point must lie in the ball",
                                 details={'condition': 'x0 in B(center, r)', 'r': config.r})
    if config.r_prime is not None and config.r_prime > 2.0 * config.r:
        raise ConfigurationError("Step radius exceeds twice the ball radius",
                                 details={'condition': "r' <= 2 r", 'r_prime': config.r_prime, 'r': config.r})
    constants = constants or SolverConstants()
    if privacy_ledger is not None:
        terms = _privacy_terms(dataset, config.beta, config.T, delta, constants, 'convex',
                               rho_over_r=config.rho / (2.0 * config.r))
        _record(privacy_ledger, terms, 'psgd_regularized')
    return _run_subsampled(dataset, config, query_ledger or QueryLedger(dataset.dimension),
                           'psgd_regularized')


@dataclass(frozen=True)
class StronglyConvexSchedule:
    """Stage data for i = 0..k; stage i (1-based) runs with index i − 1."""
    k: int
    betas: Tuple[float, ...]
    steps: Tuple[float, ...]
    errors: Tuple[float, ...]
    bounds: Tuple[float, ...]

    def stage_steps(self, i: int) -> int:
        return max(1, int(math.floor(self.steps[i - 1])))


def strongly_convex_schedule(L, lam, beta, T, d, C_cvx=8.0) -> StronglyConvexSchedule:
    k = 1 if T <= 2 else max(1, int(math.ceil(math.log2(math.log2(T)))))
    betas = tuple(2.0 ** ((k - i) / 2.0) * beta for i in range(k + 1))
    steps = tuple(2.0 ** (i - k) * T for i in range(k + 1))
    errors = tuple(2.0 * C_cvx ** 2 * L ** 2 / lam * (math.sqrt(d) / (b * t) + 1.0 / math.sqrt(t)) ** 2
                   for b, t in zip(betas, steps))
    ratio = 2.0 * L ** 2 / (lam * 4.0 * errors[0])
    bounds = tuple(4.0 * errors[i] * ratio ** (2.0 ** -i) for i in range(k + 1))
    return StronglyConvexSchedule(k, betas, steps, errors, bounds)


def subsampled_strongly_convex(dataset: SampledDataset, center, r, rho, beta, lam, T,
                               privacy_ledger: Optional[PrivacyLedger] = None,
                               query_ledger: Optional[QueryLedger] = None, seed: int = 0,
                               anchor=None, delta: float = DEFAULT_SOLVER_DELTA,
                               constants: Optional[SolverConstants] = None,
                               label: str = 'psgd_strongly_convex') -> np.ndarray:
    """
    Stages of the regularized solver with shrinking radii √(2D/λ) and growing budgets, started
    at the projection of the anchor onto the ball.
    """
    _validate_run(r, rho, beta, T, lam)
    if not lam > 0:
        raise ConfigurationError("Strongly convex solver needs lambda > 0", details={'lambda': lam})
    constants = constants or SolverConstants()
    center = np.asarray(center, dtype=float)
    anchor = center if anchor is None else np.asarray(anchor, dtype=float)
    if privacy_ledger is not None:
        terms = _privacy_terms(dataset, beta, T, delta, constants, 'strongly_convex',
                               rho_over_r=rho / (2.0 * r))
        _record(privacy_ledger, terms, label)
    query_ledger = query_ledger or QueryLedger(dataset.dimension)
    schedule = strongly_convex_schedule(dataset.lipschitz, lam, beta, T, dataset.dimension, constants.C_cvx)

    x = project_ball(anchor, center, r)
    for i in range(1, schedule.k + 1):
        radius = min(2.0 * r, math.sqrt(2.0 * schedule.bounds[i - 1] / lam))
        stage = SubsampledRunConfig(center, r, rho, schedule.betas[i - 1], schedule.stage_steps(i), lam,
                                    derive_seed(seed, i), x0=x, r_prime=radius, anchor=anchor)
        x = _run_subsampled(dataset, stage, query_ledger, label)
    return x


@dataclass(frozen=True)
class MlmcConfig:
    T: int
    T_max: int
    j_max: int

    @property
    def loops(self) -> int:
        return self.j_max


def mlmc_config(n, T, C_priv) -> MlmcConfig:
    if T > n / (2.0 * C_priv):
        raise ConfigurationError("Bias-reduced prox needs T <= n/(2 C_priv)",
                                 details={'condition': 'T <= n/(2 C_priv)', 'T': T, 'n': n, 'C_priv': C_priv})
    T_max = int(math.floor(n / C_priv))
    return MlmcConfig(int(T), T_max, max(1, int(math.floor(math.log2(T_max / T)))))


def loop_level(seed) -> int:
    """J with Pr[J = j] = 2^{-j}, j >= 1."""
    return int(substream(seed, 0x6A).geometric(0.5))


@dataclass(frozen=True)
class LoopRecord:
    J: int
    estimate: np.ndarray
    gradients: int


def mlmc_loop(dataset: SampledDataset, center, r, rho, beta, lam, T, j_max, seed: int = 0,
              query_ledger: Optional[QueryLedger] = None, anchor=None,
              constants: Optional[SolverConstants] = None) -> LoopRecord:
    """x₀ + 2^J(x_J − x_{J−1}) with x_j the strongly convex solver at budget 2^j T, or x₀ past j_max."""
    query_ledger = query_ledger or QueryLedger(dataset.dimension)
    before = query_ledger.total_queries

    def solve(level, key):
        return subsampled_strongly_convex(dataset, center, r, rho, beta * 2.0 ** (-level / 2.0), lam,
                                          2 ** level * T, query_ledger=query_ledger,
                                          seed=derive_seed(seed, key), anchor=anchor,
                                          constants=constants, label='mlmc')

    J = loop_level(seed)
    estimate = solve(0, 0)
    if J <= j_max:
        estimate = estimate + 2.0 ** J * (solve(J, 1) - solve(J - 1, 2))
    return LoopRecord(J, estimate, query_ledger.total_queries - before)


def mlmc_loop_scale(J, j_max) -> float:
    """RDP multiple of one loop relative to a single strongly convex run at (β, T)."""
    if J > j_max:
        return 1.0
    return 1.0 + 2.0 ** J + 2.0 ** (J - 1)


def bias_reduced_prox(dataset: SampledDataset, center, r, rho, beta, lam, T,
                      privacy_ledger: Optional[PrivacyLedger] = None,
                      query_ledger: Optional[QueryLedger] = None, seed: int = 0, anchor=None,
                      delta: float = DEFAULT_SOLVER_DELTA,
                      constants: Optional[SolverConstants] = None, j_max: Optional[int] = None) -> np.ndarray:
    """Average of j_max independent multilevel loops; `j_max` lowers the depth below ⌊log₂(T_max/T)⌋."""
    constants = constants or SolverConstants()
    config = mlmc_config(dataset.n, T, constants.C_priv)
    if j_max is not None:
        config = replace(config, j_max=max(1, min(int(j_max), config.j_max)))
    terms = None
    if privacy_ledger is not None:
        terms = _privacy_terms(dataset, beta, T, delta, constants, 'strongly_convex',
                               rho_over_r=rho / (2.0 * r), log_horizon=max(dataset.n, config.T_max))
    query_ledger = query_ledger or QueryLedger(dataset.dimension)
    estimates = []
    for loop in range(config.loops):
        loop_seed = derive_seed(seed, loop)
        J = loop_level(loop_seed)
        _record(privacy_ledger, terms, 'mlmc_loop', mlmc_loop_scale(J, config.j_max),
                runs=3 if J <= config.j_max else 1)
        estimates.append(mlmc_loop(dataset, center, r, rho, beta, lam, T, config.j_max, loop_seed,
                                   query_ledger, anchor, constants).estimate)
    return np.mean(estimates, axis=0)


@dataclass(frozen=True)
class Aggregate:
    point: np.ndarray
    degraded: bool = False


def aggregate(points: Sequence, Delta: float) -> Aggregate:
    """
    First point with at least 0.51k of the points within 2Δ/3 of it; the coordinate median,
    flagged degraded, when none qualifies.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        raise ConfigurationError("Aggregation needs at least one point")
    if not Delta > 0:
        raise ConfigurationError("Aggregation radius must be positive", details={'Delta': Delta})
    k = points.shape[0]
    distances = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    counts = np.sum(distances <= 2.0 * Delta / 3.0, axis=1)
    qualified = np.nonzero(counts >= AGGREGATE_QUORUM * k)[0]
    if qualified.size:
        return Aggregate(points[qualified[0]].copy())
    logger.log_event('aggregate.degraded', k=k, Delta=Delta)
    return Aggregate(np.median(points, axis=0), degraded=True)


def replica_count(zeta) -> int:
    return int(math.ceil(20.0 * math.log(1.0 / zeta)))


def aggregation_radius(L, lam, beta, T, d, C_sc=32.0) -> float:
    return 9.0 * math.sqrt(2.0 * C_sc) * (L / lam) * math.sqrt(d / (beta * beta * T * T) + 1.0 / T)


def high_prob_solver(dataset: SampledDataset, center, r, rho, beta, lam, zeta, T,
                     privacy_ledger: Optional[PrivacyLedger] = None,
                     query_ledger: Optional[QueryLedger] = None, seed: int = 0, anchor=None,
                     delta: float = DEFAULT_SOLVER_DELTA,
                     constants: Optional[SolverConstants] = None) -> np.ndarray:
    """Aggregate of ⌈20 log(1/ζ)⌉ independent strongly convex runs."""
    if not 0 < zeta < 1:
        raise ConfigurationError("Failure probability must lie in (0, 1)", details={'zeta': zeta})
    constants = constants or SolverConstants()
    if privacy_ledger is not None:
        terms = _privacy_terms(dataset, beta, T, delta, constants, 'line_search', zeta=zeta,
                               rho_over_r=rho / (2.0 * r))
        _record(privacy_ledger, terms, 'high_prob')
    query_ledger = query_ledger or QueryLedger(dataset.dimension)
    runs = [subsampled_strongly_convex(dataset, center, r, rho, beta, lam, T, query_ledger=query_ledger,
                                       seed=derive_seed(seed, i), anchor=anchor, constants=constants,
                                       label='high_prob')
            for i in range(replica_count(zeta))]
    Delta = aggregation_radius(dataset.lipschitz, lam, beta, T, dataset.dimension, constants.C_sc)
    return aggregate(runs, Delta).point


def coupled_epoch_drift(dataset: SampledDataset, neighbor: SampledDataset, center, r, rho, eta,
                        steps: int, hits: int, seed: int = 0, index: int = 0) -> float:
    """
    ||y_T − y'_T||² after one noiseless epoch on two neighboring datasets that share indices and
    perturbations, with the differing sample drawn exactly `hits` times.
    """
    if not 0 <= hits <= steps:
        raise ConfigurationError("Hit count must lie in [0, steps]", details={'hits': hits, 'steps': steps})
    center = np.asarray(center, dtype=float)
    rng = substream(seed, 0x6466)
    others = np.delete(np.arange(dataset.n), index)
    indices = rng.choice(others, size=steps)
    indices[rng.choice(steps, size=hits, replace=False)] = index
    xis = rho * rng.standard_normal((steps, dataset.dimension))
    first = dataset.per_sample_subgradients(indices, center + xis)
    second = neighbor.per_sample_subgradients(indices, center + xis)
    sampler = ResqueSampler(center, rho, None)

    y, y_prime = center.copy(), center.copy()
    for j in range(steps):
        y = project_ball(y - eta * float(sampler.weights(y, xis[j])) * first[j], center, r)
        y_prime = project_ball(y_prime - eta * float(sampler.weights(y_prime, xis[j])) * second[j], center, r)
    return float(np.sum((y - y_prime) ** 2))


def erm_alpha(eps_dp, delta) -> float:
    return 4.0 * math.log(2.0 / delta) / eps_dp


def rdp_budget(eps_dp, delta) -> Tuple[float, float]:
    """RDP (ε, δ) at order erm_alpha that converts to (eps_dp, delta) with δ' = δ/2."""
    alpha = erm_alpha(eps_dp, delta)
    return eps_dp - math.log(2.0 / delta) / (alpha - 1.0), 0.5 * delta / (1.0 + math.exp(eps_dp))


@dataclass(frozen=True)
class DpErmParameters:
    n: int
    eps_opt: float
    alpha: float
    trivial: bool = False
    kappa: float = math.nan
    rho: float = math.nan
    r: float = math.nan
    K: float = math.nan
    beta: float = math.nan
    beta_nominal: float = math.nan
    zeta: float = math.nan
    T1: int = 0
    T2: int = 0
    T3: int = 0
    j_max: int = 0
    j_cap: int = 0
    schedule: Optional[BallAccelConfig] = None
    budget: Tuple[float, float] = (0.0, 0.0)
    calls: Tuple[int, int, int] = (0, 0, 0)
    per_call: Tuple[Tuple[float, float], ...] = ()

    @property
    def oracle_deltas(self) -> Tuple[float, float, float]:
        """δ parameter of each oracle call: line search, ball opt, one MLMC run."""
        (_, ls), (_, bo), (_, sp) = self.per_call
        return ls, bo, sp / 3.0


def _parameter_block(n, d, L, R, eps_dp, delta, constants: SolverConstants, beta=None) -> DpErmParameters:
    log_nd = math.log(n / delta)
    eps_opt = constants.opt * L * R * (1.0 / math.sqrt(n) + math.sqrt(d * math.log(1.0 / delta))
                                       * log_nd ** 1.5 * math.log(n) / (n * eps_dp))
    alpha = erm_alpha(eps_dp, delta)
    if eps_opt >= L * R:
        return DpErmParameters(n, eps_opt, alpha, trivial=True)
    kappa = max(L * R / eps_opt, math.e)
    log_kappa = math.log(kappa)
    rho = eps_opt / (L * math.sqrt(d))
    r = min(R, rho / (math.sqrt(constants.radius) * log_nd ** 2))
    K = (R / r) ** (2.0 / 3.0)
    beta_nominal = eps_dp / (constants.beta * log_nd * math.sqrt(math.log(1.0 / delta)))
    beta = beta_nominal if beta is None else beta
    zeta = 1.0 / (kappa * constants.C_ba * K * log_kappa)
    scale = math.sqrt(constants.budget)
    lead = kappa * math.sqrt(d) / (math.sqrt(K) * beta)
    raw = (scale * (lead / log_kappa ** 2 + kappa ** 2 / (K * log_kappa ** 3 * log_nd)),
           scale * (lead / math.sqrt(log_kappa) + kappa ** 2 / (K * log_kappa)),
           scale * (lead + kappa ** 2 / K))
    T1, T2, T3 = (max(constants.t_min, int(math.ceil(t))) for t in raw)
    return DpErmParameters(n, eps_opt, alpha, False, kappa, rho, r, K, beta, beta_nominal, zeta, T1, T2, T3)


def _oracle_failures(params: DpErmParameters, n, C_priv) -> list:
    rho_over_r = params.rho / (2.0 * params.r)
    d_ls, d_bo, d_sp = params.oracle_deltas
    loop_scale = mlmc_loop_scale(params.j_max, params.j_max)
    oracles = (
        ('line_search', dict(T=params.T1, delta=d_ls, variant='line_search', zeta=params.zeta), 1.0),
        ('ball_opt', dict(T=params.T2, delta=d_bo, variant='strongly_convex'), 1.0),
        ('stochastic_prox', dict(T=params.T3, delta=d_sp, variant='strongly_convex',
                                 log_horizon=max(n, n / C_priv)), loop_scale),
    )
    failed = []
    for (name, kwargs, scale), (eps_call, _) in zip(oracles, params.per_call):
        try:
            terms = solver_rdp_event(params.beta, n=n, C_priv=C_priv, rho_over_r=rho_over_r, **kwargs)
            cost = terms.event(params.alpha, name, scale).epsilon
        except (ConfigurationError, PrivacyError) as e:
            failed.append(dict(e.details, oracle=name))
            continue
        if cost > eps_call:
            failed.append({'condition': 'per-call RDP budget', 'oracle': name, 'cost': cost, 'budget': eps_call})
    return failed


def _fit_budget(params: DpErmParameters, dataset: SampledDataset, eps_dp, delta,
                constants: SolverConstants) -> Tuple[DpErmParameters, list]:
    """
    Attach schedule and per-call budgets; returns the failed conditions (empty when feasible).
    The multilevel depth is the largest one up to ⌊log₂(T_max/T₃)⌋ whose worst-case loop fits.
    """
    n, C_priv = dataset.n, constants.C_priv
    failed = []
    for name, T, cap in (('T1', params.T1, n / C_priv), ('T2', params.T2, n / C_priv),
                         ('T3', params.T3, n / (2.0 * C_priv))):
        if T > cap:
            failed.append({'condition': f'{name} <= cap', name: T, 'cap': cap})
    if failed:
        return params, failed
    try:
        schedule = derive_schedule(dataset.lipschitz, dataset.domain_radius, params.r, params.eps_opt,
                                   constants.C_ba)
    except ConfigurationError as e:
        return params, [dict(e.details, condition='ball acceleration schedule')]
    eps_budget, delta_budget = rdp_budget(eps_dp, delta)
    if not eps_budget > 0:
        return params, [{'condition': 'positive RDP budget', 'eps_budget': eps_budget}]

    j_cap = mlmc_config(n, params.T3, C_priv).j_max
    trials = trial_budget(schedule.lambda_range, schedule.r, schedule.R)
    for j_max in range(j_cap, 0, -1):
        calls = (schedule.max_iters * trials, schedule.max_iters, schedule.max_iters * j_max)
        per_call = tuple((eps_budget / 3.0 / c, delta_budget / 3.0 / c) for c in calls)
        trial = replace(params, j_max=j_max, j_cap=j_cap, schedule=schedule,
                        budget=(eps_budget, delta_budget), calls=calls, per_call=per_call)
        failed = _oracle_failures(trial, n, C_priv)
        if not any(f.get('oracle') == 'stochastic_prox' for f in failed):
            break
    return trial, failed


def erm_parameters(dataset: SampledDataset, eps_dp, delta,
                       constants: Optional[SolverConstants] = None) -> DpErmParameters:
    """
    The private ERM parameter block with worst-case per-call privacy budgets. When the block's
    β overspends a budget, β is halved until every call fits (its T budgets grow with 1/β);
    the regime is infeasible once a T cap breaks or no halving fits. The trivial regime never
    touches the data, so it is returned before any size check.
    """
    constants = constants or SolverConstants()
    if not 0 < eps_dp < 1 or not 0 < delta < 1.0 / 6.0:
        raise ConfigurationError("Private ERM needs eps_dp in (0, 1) and delta in (0, 1/6)",
                                 details={'eps_dp': eps_dp, 'delta': delta})
    n, d, L, R = dataset.n, dataset.dimension, dataset.lipschitz, dataset.domain_radius
    params = _parameter_block(n, d, L, R, eps_dp, delta, constants)
    if params.trivial:
        return params
    if n < constants.C_priv:
        raise InfeasibleError("Dataset smaller than C_priv",
                              details={'condition': 'n >= C_priv', 'n': n, 'C_priv': constants.C_priv})

    beta = params.beta
    for _ in range(BETA_HALVINGS):
        params, failed = _fit_budget(_parameter_block(n, d, L, R, eps_dp, delta, constants, beta),
                                     dataset, eps_dp, delta, constants)
        if not failed:
            if beta < params.beta_nominal:
                logger.log_event('dp_erm.beta_shrunk', beta=beta, beta_nominal=params.beta_nominal)
            if params.j_max < params.j_cap:
                logger.log_event('dp_erm.mlmc_depth', j_max=params.j_max, j_cap=params.j_cap)
            return params
        if any('cap' in f.get('condition', '') or 'schedule' in f.get('condition', '') for f in failed):
            break
        beta /= 2.0
    raise InfeasibleError("Private ERM parameters are infeasible for this regime",
                          details={'n': n, 'd': d, 'eps_dp': eps_dp, 'delta': delta, 'beta': beta,
                                   'failed': failed})


def dp_erm_gradient_cap(n, d, eps_dp, delta, constant=1.0) -> float:
    return constant * math.log(n / delta) ** 6 * (min(n, n * n * eps_dp ** 2 / d)
                                                  + min((n * d) ** (2.0 / 3.0) / eps_dp,
                                                        n ** (4.0 / 3.0) * eps_dp ** (1.0 / 3.0)))


def _private_erm(dataset: SampledDataset, eps_dp, delta, lam_reg, x_prime, privacy_ledger, query_ledger,
                 constants, seed) -> np.ndarray:
    constants = constants or SolverConstants()
    d = dataset.dimension
    x_prime = np.zeros(d) if x_prime is None else np.asarray(x_prime, dtype=float)
    if lam_reg < 0:
        raise ConfigurationError("Regularization must be nonnegative", details={'lambda': lam_reg})
    if np.linalg.norm(x_prime) > dataset.domain_radius * (1 + 1e-9):
        raise ConfigurationError("Regularization center must lie in B(R)",
                                 details={'condition': "x' in B(R)", 'R': dataset.domain_radius})
    params = erm_parameters(dataset, eps_dp, delta, constants)
    if params.trivial:
        return x_prime.copy()

    if privacy_ledger is None:
        privacy_ledger = PrivacyLedger(params.alpha, constants.C_priv, budget=params.budget)
    elif not math.isclose(privacy_ledger.alpha, params.alpha, rel_tol=1e-12):
        raise PrivacyError("Ledger order differs from the private ERM order",
                           details={'ledger_alpha': privacy_ledger.alpha, 'alpha': params.alpha})
    if not privacy_ledger.certified:
        logger.log_event('dp_erm.uncertified', C_priv=privacy_ledger.c_priv, certified_from=CERTIFIED_C_PRIV)
    query_ledger = query_ledger if query_ledger is not None else QueryLedger(d)
    r, rho, beta = params.r, params.rho, params.beta
    d_ls, d_bo, d_sp = params.oracle_deltas

    def anchor_for(center, lam):
        return (lam * np.asarray(center) + lam_reg * x_prime) / (lam + lam_reg)

    def line_search(center, lam, _accuracy, call_seed):
        return high_prob_solver(dataset, center, r, rho, beta, lam + lam_reg, params.zeta, params.T1,
                                privacy_ledger, query_ledger, call_seed, anchor_for(center, lam), d_ls, constants)

    def ball_opt(center, lam, _phi, call_seed):
        return subsampled_strongly_convex(dataset, center, r, rho, beta, lam + lam_reg, params.T2,
                                          privacy_ledger, query_ledger, call_seed, anchor_for(center, lam),
                                          d_bo, constants, label='ball_opt')

    def stochastic_prox(center, lam, _bias, _sigma, call_seed):
        return bias_reduced_prox(dataset, center, r, rho, beta, lam + lam_reg, params.T3, privacy_ledger,
                                 query_ledger, call_seed, anchor_for(center, lam), d_sp, constants, params.j_max)

    suite = OracleSuite(line_search, ball_opt, stochastic_prox)
    return run_ball_accel(params.schedule, suite, query_ledger, seed, d).point


_DP_FIELDS = {
    'n': lambda dataset, *a, **k: dataset.n,
    'd': lambda dataset, *a, **k: dataset.dimension,
    'eps_dp': lambda dataset, eps_dp, *a, **k: eps_dp,
    'delta': lambda dataset, eps_dp, delta, *a, **k: delta,
}


@logger.log_run(extract_fields=_DP_FIELDS)
def dp_erm(dataset: SampledDataset, eps_dp: float, delta: float,
           privacy_ledger: Optional[PrivacyLedger] = None, query_ledger: Optional[QueryLedger] = None,
           constants: Optional[SolverConstants] = None, seed: int = 0) -> np.ndarray:
    """(eps_dp, delta)-DP empirical risk minimizer over B(R) by private ball acceleration."""
    return _private_erm(dataset, eps_dp, delta, 0.0, None, privacy_ledger, query_ledger, constants, seed)


@logger.log_run(extract_fields=dict(_DP_FIELDS, lam=lambda dataset, eps_dp, delta, lam, *a, **k: lam))
def dp_erm_regularized(dataset: SampledDataset, eps_dp: float, delta: float, lam: float, x_prime,
                       privacy_ledger: Optional[PrivacyLedger] = None,
                       query_ledger: Optional[QueryLedger] = None,
                       constants: Optional[SolverConstants] = None, seed: int = 0) -> np.ndarray:
    """Private minimizer of f^erm + λ/2||x − x'||² over B(R)."""
    return _private_erm(dataset, eps_dp, delta, lam, x_prime, privacy_ledger, query_ledger, constants, seed)


@dataclass
class ScoPhase:
    indices: np.ndarray
    eps_dp: float
    delta: float
    lam: float
    ledger: PrivacyLedger
    stopped: Optional[str] = None

    @property
    def guarantee(self) -> DpGuarantee:
        if not self.ledger.events:
            return DpGuarantee(0.0, 0.0)
        return self.ledger.to_dp(self.delta / 2.0)


def phase_privacy(i: int, eps_dp, delta, phase_budget: str = 'disjoint') -> Tuple[float, float]:
    if phase_budget == 'geometric':
        return eps_dp / 2 ** i, delta / 2 ** i
    return eps_dp, delta


def localization_guarantee(phases: Sequence[ScoPhase], phase_budget: str = 'disjoint') -> DpGuarantee:
    guarantees = [phase.guarantee for phase in phases]
    if phase_budget == 'disjoint':
        return parallel_compose_dp(guarantees)
    return compose_dp(guarantees)


def _stop_condition(error: InfeasibleError) -> str:
    failed = error.details.get('failed') or [error.details]
    return str(failed[0].get('condition', error.message))


@logger.log_run(extract_fields=_DP_FIELDS)
def dp_sco(dataset: SampledDataset, eps_dp: float, delta: float,
           query_ledger: Optional[QueryLedger] = None, constants: Optional[SolverConstants] = None,
           seed: int = 0, phases: Optional[List[ScoPhase]] = None, phase_budget: str = 'disjoint') -> np.ndarray:
    """
    Iterative localization: phase i solves the private λ_i-regularized ERM on a fresh chunk of
    n/2^i samples around the previous output, with λ_i = 2^i L/(R√n).

    The chunks come from a data-independent permutation, so with the 'disjoint' budget every
    phase spends the full (ε, δ) and the phases compose in parallel; 'geometric' gives phase i
    (ε/2^i, δ/2^i) and composes sequentially. Localization stops at the first chunk with no
    feasible parameter block and returns the current point; that phase is kept with an empty
    ledger and its stop condition. Each phase output is projected onto B(R) before it centers
    the next phase. Phases are appended to `phases` when a list is given.
    """
    if phase_budget not in PHASE_BUDGETS:
        raise ConfigurationError(f"Unknown phase budget {phase_budget}",
                                 details={'phase_budget': phase_budget, 'known': list(PHASE_BUDGETS)})
    constants = constants or SolverConstants()
    n, d = dataset.n, dataset.dimension
    phases = phases if phases is not None else []
    lam0 = dataset.lipschitz / (dataset.domain_radius * math.sqrt(n))
    query_ledger = query_ledger if query_ledger is not None else QueryLedger(d)

    def phase(i, indices, center) -> Optional[np.ndarray]:
        eps_i, delta_i = phase_privacy(i, eps_dp, delta, phase_budget)
        ledger = PrivacyLedger(erm_alpha(eps_i, delta_i), constants.C_priv, budget=rdp_budget(eps_i, delta_i))
        record = ScoPhase(np.asarray(indices), eps_i, delta_i, lam0 * 2 ** i, ledger)
        phases.append(record)
        try:
            return dp_erm_regularized(dataset.subset(indices), eps_i, delta_i, record.lam, center, ledger,
                                      query_ledger, constants, derive_seed(seed, i))
        except InfeasibleError as e:
            record.stopped = _stop_condition(e)
            logger.log_event('dp_sco.stopped', phase=i, n=record.indices.size, condition=record.stopped)
            return None

    if n < 4:
        logger.log_event('dp_sco.single_phase', n=n)
        point = phase(0, np.arange(n), np.zeros(d))
        return np.zeros(d) if point is None else project_ball(point, np.zeros(d), dataset.domain_radius)

    order = substream(seed, 0x73636F).permutation(n)
    x, offset = np.zeros(d), 0
    for i in range(1, int(math.ceil(math.log2(n))) + 1):
        size = n // 2 ** i
        if size < 1:
            break
        point = phase(i, order[offset:offset + size], x)
        if point is None:
            break
        # ball acceleration may land in B(R + r); the next center must lie in B(R)
        x, offset = project_ball(point, np.zeros(d), dataset.domain_radius), offset + size
    return x
