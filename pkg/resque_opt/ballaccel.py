"""
Ball acceleration: an accelerated proximal-point outer loop whose proximal subproblems are
restricted to balls of radius r around the query point.
"""
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .error_handler import ConfigurationError, ContractError
from .logger import logger
from .problem_core import QueryLedger
from .utils import derive_seed, project_ball

LINE_SEARCH_TOLERANCE = 0.05
LOWER_MOVEMENT = 0.75


@dataclass(frozen=True)
class BallAccelConfig:
    L: float
    R: float
    r: float
    eps_opt: float
    C_ba: float
    kappa: float
    K: float
    lambda_star: float
    max_iters: int
    lambda_range: Tuple[float, float]
    trivial: bool = False

    @property
    def log_kappa(self) -> float:
        return math.log(self.kappa)

    @property
    def log_ratio(self) -> float:
        """log(Rκ/r), the log factor of the per-iteration call counts."""
        return math.log(self.R * self.kappa / self.r)

    @property
    def line_search_cap(self) -> float:
        return self.C_ba * self.log_ratio

    @property
    def line_search_accuracy(self) -> float:
        return self.r / self.C_ba

    def ball_opt_accuracy(self, lam: float) -> float:
        return lam * self.r ** 2 / (self.C_ba * self.log_kappa ** 3)

    @property
    def prox_bias(self) -> float:
        return self.eps_opt / (self.C_ba * self.R)

    @property
    def prox_sigma(self) -> float:
        return self.eps_opt * math.sqrt(self.K) / (self.C_ba * self.R)

    @property
    def max_level(self) -> int:
        return int(math.ceil(math.log2(self.K) + self.C_ba))

    def level_accuracy(self, lam: float, level: int) -> float:
        """Ball-opt accuracy at a level of the decaying schedule; level 0 is λr²/C_ba."""
        if level == 0:
            return lam * self.r ** 2 / self.C_ba
        return lam * self.r ** 2 * 2.0 ** (-level) / (self.C_ba * self.log_ratio ** 2)


def derive_schedule(L, R, r, eps_opt, C_ba=8.0) -> BallAccelConfig:
    if not (0 < r <= R):
        raise ConfigurationError("Ball radius must satisfy 0 < r <= R", details={'r': r, 'R': R})
    if not (0 < eps_opt <= L * R) or not L > 0 or not C_ba > 0:
        raise ConfigurationError("Target accuracy must satisfy 0 < eps_opt <= L R",
                                 details={'eps_opt': eps_opt, 'L': L, 'R': R, 'C_ba': C_ba})
    # κ floored at e keeps log κ >= 1
    kappa = max(L * R / eps_opt, math.e)
    K = (R / r) ** (2.0 / 3.0)
    lambda_star = eps_opt * K ** 2 * math.log(kappa) ** 2 / R ** 2
    max_iters = max(1, int(math.ceil(C_ba * K * math.log(kappa))))
    lambda_range = (lambda_star / C_ba, C_ba * L / eps_opt)
    if lambda_range[0] > lambda_range[1]:
        raise ConfigurationError("Empty lambda range", details={'lambda_range': list(lambda_range)})
    return BallAccelConfig(L, R, r, eps_opt, C_ba, kappa, K, lambda_star, max_iters,
                           lambda_range, trivial=eps_opt >= L * R)


@dataclass
class OracleSuite:
    """
    line_search(center, lam, delta, seed) -> point within delta of the ball prox point w.h.p.
    ball_opt(center, lam, phi, seed) -> point with expected regularized gap at most phi
    stochastic_prox(center, lam, bias, sigma, seed) -> low-bias, bounded-variance prox estimate
    """
    line_search: Callable
    ball_opt: Callable
    stochastic_prox: Callable


@dataclass(frozen=True)
class AccelState:
    A: float
    x: np.ndarray
    v: np.ndarray
    iter: int = 0
    lambda_history: Tuple[float, ...] = ()

    @classmethod
    def start(cls, dimension: int) -> 'AccelState':
        return cls(0.0, np.zeros(dimension), np.zeros(dimension))


def growth_step(A: float, lam: float) -> float:
    """Positive root a of λ a² = A + a."""
    if not lam > 0:
        raise ContractError("Proximal parameter must be positive", details={'lambda': lam})
    return (1.0 + math.sqrt(1.0 + 4.0 * lam * A)) / (2.0 * lam)


def query_point(state: AccelState, lam: float) -> np.ndarray:
    a = growth_step(state.A, lam)
    return (state.A * state.x + a * state.v) / (state.A + a)


def ms_step(state: AccelState, lam: float, prox_point, dual_point=None,
            radius: Optional[float] = None, r: float = 0.0) -> AccelState:
    """
    One Monteiro–Svaiter update around y = (A x + a v)/(A + a). The dual iterate moves along
    the gradient mapping λ(y − dual_point), which is the prox point unless a separate
    estimate is supplied. With a radius, v is kept in B(R) and x in B(R + r).
    """
    a = growth_step(state.A, lam)
    y = (state.A * state.x + a * state.v) / (state.A + a)
    prox_point = np.asarray(prox_point, dtype=float)
    dual_point = prox_point if dual_point is None else np.asarray(dual_point, dtype=float)
    x = prox_point
    v = state.v - a * lam * (y - dual_point)
    if radius is not None:
        origin = np.zeros_like(v)
        v = project_ball(v, origin, radius)
        x = project_ball(x, origin, radius + r)
    return replace(state, A=state.A + a, x=x, v=v, iter=state.iter + 1,
                   lambda_history=state.lambda_history + (lam,))


@dataclass(frozen=True)
class LineSearchResult:
    lam: float
    trials: int
    by_movement: bool
    movement: float
    at_lower: bool = False

    @property
    def accepted(self) -> bool:
        """One of the two line-search outcomes holds."""
        return self.by_movement or self.at_lower


def trial_budget(lambda_range, r: float, R: float) -> int:
    """Trial cap of one line search: doublings across the range plus bisections down to r."""
    lo, hi = lambda_range
    return max(2, int(math.ceil(math.log2(hi / lo))) + int(math.ceil(math.log2(R / r))))


def line_search_lambda(state: AccelState, hp_ball_oracle: Callable, lambda_range, r: float, R: float,
                       seed: int = 0, tolerance: float = LINE_SEARCH_TOLERANCE) -> LineSearchResult:
    """
    Smallest λ found whose ball-prox movement from y_λ is at most r(1 − tol), preferring one with
    movement at least 3r/4(1 − tol); the lower end of the range is accepted outright once its
    movement is under the cap. hp_ball_oracle(center, lam, seed) -> point.
    """
    lo, hi = lambda_range
    upper = r * (1.0 - tolerance)
    lower = LOWER_MOVEMENT * r * (1.0 - tolerance)
    budget = trial_budget(lambda_range, r, R)
    trials = 0

    def movement(lam):
        nonlocal trials
        y = query_point(state, lam)
        point = hp_ball_oracle(y, lam, derive_seed(seed, trials))
        trials += 1
        return float(np.linalg.norm(np.asarray(point) - y))

    moved = movement(lo)
    if moved <= upper:
        return LineSearchResult(lo, trials, False, moved, at_lower=True)

    bad, good, good_moved = lo, None, None
    lam = lo
    while trials < budget and lam < hi:
        lam = min(2.0 * lam, hi)
        moved = movement(lam)
        if moved <= upper:
            good, good_moved = lam, moved
            break
        bad = lam
    if good is None:
        return LineSearchResult(lam, trials, False, moved)

    while good_moved < lower and trials < budget:
        mid = math.sqrt(bad * good)
        moved = movement(mid)
        if moved <= upper:
            good, good_moved = mid, moved
        else:
            bad = mid
    return LineSearchResult(good, trials, good_moved >= lower, good_moved)


@dataclass
class AccelResult:
    point: np.ndarray
    state: AccelState
    converged: bool
    trial_counts: List[int] = field(default_factory=list)
    level_counts: Dict[int, int] = field(default_factory=dict)
    query_centers: List[np.ndarray] = field(default_factory=list)
    error_bound: float = math.inf

    @property
    def iterations(self) -> int:
        return self.state.iter


def _certified(config: BallAccelConfig, state: AccelState) -> bool:
    # potential argument: error <= ||v0 - x*||²/(2A) <= R²/(2A)
    return state.A >= config.R ** 2 / config.eps_opt


def error_bound(config: BallAccelConfig, state: AccelState) -> float:
    """R²/(2A); A only grows, so the latest iterate carries the smallest bound."""
    return config.R ** 2 / (2.0 * state.A) if state.A > 0 else math.inf


def _finish(config, state, converged, result_fields, tag):
    bound = error_bound(config, state)
    if not converged:
        logger.log_event('ball_accel.max_iters', loop=tag, iters=config.max_iters, A=state.A, bound=bound)
    return AccelResult(state.x, state, converged, error_bound=bound, **result_fields)


def run_ball_accel(config: BallAccelConfig, suite: OracleSuite, ledger: QueryLedger,
                   seed: int = 0, dimension: Optional[int] = None) -> AccelResult:
    dimension = dimension or ledger.dimension
    state = AccelState.start(dimension)
    if config.trivial:
        return AccelResult(state.x, state, True, error_bound=config.eps_opt)

    trials, centers = [], []
    converged = False
    for k in range(config.max_iters):
        search = line_search_lambda(
            state,
            lambda c, lam, s: suite.line_search(c, lam, config.line_search_accuracy, s),
            config.lambda_range, config.r, config.R, seed=derive_seed(seed, k, 0))
        lam = search.lam
        y = query_point(state, lam)
        centers.append(y)
        x_new = suite.ball_opt(y, lam, config.ball_opt_accuracy(lam), derive_seed(seed, k, 1))
        dual = suite.stochastic_prox(y, lam, config.prox_bias, config.prox_sigma, derive_seed(seed, k, 2))
        state = ms_step(state, lam, x_new, dual, radius=config.R, r=config.r)
        trials.append(search.trials)
        if _certified(config, state):
            converged = True
            break
    return _finish(config, state, converged, {'trial_counts': trials, 'query_centers': centers}, 'private')


def run_ball_accel_nonprivate(config: BallAccelConfig, ball_opt: Callable, ledger: QueryLedger,
                              seed: int = 0, dimension: Optional[int] = None,
                              aggregate: Optional[Callable] = None) -> AccelResult:
    """
    Ball acceleration from a single ball-opt callback ball_opt(center, lam, phi, seed).

    Line-search trials aggregate repeated level-0 runs; the dual iterate uses the multilevel
    estimate x₀ + 2^J(x_J − x_{J−1}) with Pr[J = j] = 2^{-j}, levels requesting accuracy
    λr²2^{-j}/(C_ba log²(Rκ/r)).
    """
    if aggregate is None:
        from .dp_solvers import aggregate
    dimension = dimension or ledger.dimension
    state = AccelState.start(dimension)
    if config.trivial:
        return AccelResult(state.x, state, True, error_bound=config.eps_opt)

    repeats = max(1, int(math.ceil(config.log_ratio)))
    levels: Dict[int, int] = {}
    trials, centers = [], []

    def request(center, lam, level, call_seed):
        levels[level] = levels.get(level, 0) + 1
        return np.asarray(ball_opt(center, lam, config.level_accuracy(lam, level), call_seed))

    def high_probability(center, lam, call_seed):
        runs = [request(center, lam, 0, derive_seed(call_seed, i)) for i in range(repeats)]
        if repeats == 1:
            return runs[0]
        delta = 9.0 * math.sqrt(2.0 * config.level_accuracy(lam, 0) / lam)
        return aggregate(runs, delta).point

    converged = False
    for k in range(config.max_iters):
        search = line_search_lambda(state, high_probability, config.lambda_range, config.r, config.R,
                                    seed=derive_seed(seed, k, 0))
        lam = search.lam
        y = query_point(state, lam)
        centers.append(y)
        x_new = request(y, lam, 0, derive_seed(seed, k, 1))
        level = int(np.random.default_rng(derive_seed(seed, k, 2)).geometric(0.5))
        dual = x_new
        if level <= config.max_level:
            upper = request(y, lam, level, derive_seed(seed, k, 3))
            lower = request(y, lam, level - 1, derive_seed(seed, k, 4))
            dual = x_new + 2.0 ** level * (upper - lower)
        state = ms_step(state, lam, x_new, dual, radius=config.R, r=config.r)
        trials.append(search.trials)
        if _certified(config, state):
            converged = True
            break
    return _finish(config, state, converged,
                   {'trial_counts': trials, 'level_counts': levels, 'query_centers': centers},
                   'nonprivate')


def exact_quadratic_suite(mu: float, target, r: float) -> OracleSuite:
    """Closed-form oracles for F(x) = μ/2 ||x − target||²."""
    target = np.asarray(target, dtype=float)

    def prox(center, lam, *_):
        center = np.asarray(center, dtype=float)
        return project_ball((mu * target + lam * center) / (mu + lam), center, r)

    return OracleSuite(line_search=prox, ball_opt=prox, stochastic_prox=prox)
