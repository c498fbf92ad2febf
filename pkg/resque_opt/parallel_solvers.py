"""
Parallel ball-optimization oracles and the end-to-end parallel solver.

Both oracles draw every perturbation up front and query the gradient oracle once, so each call
adds exactly one batch to the query ledger; the iterate recursion then only reweights.
"""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .ballaccel import derive_schedule, run_ball_accel_nonprivate
from .error_handler import ConfigurationError, ContractError
from .logger import logger
from .problem_core import (ExactSubgradientOracle, LipschitzObjective, QueryLedger, SampledDataset,
                           StochasticGradientOracle, SubsampledOracle)
from .resque import ResqueSampler, presample_perturbations, smoothness_constant
from .utils import SolverConstants, project_ball

METHODS = ('epoch_sgd', 'ac_sa')
EPOCH_SGD_STEP_OPS = 3
AC_SA_STEP_OPS = 4


@dataclass(frozen=True)
class EpochSgdParams:
    eta1: float
    T1: int
    T: int
    epochs: Tuple[Tuple[int, float], ...]

    @property
    def inner_steps(self) -> int:
        return sum(length - 1 for length, _ in self.epochs)


def epoch_sgd_params(L, lam, phi) -> EpochSgdParams:
    eta, length = 1.0 / (4.0 * lam), 16
    T = int(math.ceil(48.0 * L * L / (lam * phi)))
    epochs, used = [], 0
    while used + length <= T:
        epochs.append((length, eta))
        used += length
        length, eta = 2 * length, eta / 2.0
    return EpochSgdParams(1.0 / (4.0 * lam), 16, T, tuple(epochs))


@dataclass(frozen=True)
class AcSaParams:
    K: int
    T: int
    batch_sizes: Tuple[int, ...]
    truncated: bool = False

    @property
    def total(self) -> int:
        return self.T * sum(self.batch_sizes)

    @property
    def inner_steps(self) -> int:
        return self.T * self.K

    @staticmethod
    def alpha(t: int) -> float:
        return 2.0 / (t + 1.0)

    @staticmethod
    def gamma(t: int, curvature: float) -> float:
        return 4.0 * curvature / (t * (t + 1.0))


def ac_sa_params(L, r, rho, lam, phi, n_k_cap=2 ** 20) -> AcSaParams:
    K = max(0, int(math.ceil(math.log2(lam * r * r / phi))))
    T = int(math.ceil(4.0 * math.sqrt(L / (rho * lam) + 1.0)))
    sizes, truncated = [], False
    for k in range(1, K + 1):
        size = int(math.ceil(48.0 * 2 ** k * L * L / (lam * lam * r * r * T)))
        if size > n_k_cap:
            size, truncated = int(n_k_cap), True
        sizes.append(size)
    return AcSaParams(K, T, tuple(sizes), truncated)


def _check_oracle_args(r, rho, lam, phi):
    if not math.isclose(r, rho, rel_tol=1e-9):
        raise ContractError("Parallel ball oracles need rho = r", details={'r': r, 'rho': rho})
    if not lam > 0 or not phi > 0:
        raise ContractError("Ball oracle needs positive lambda and phi", details={'lambda': lam, 'phi': phi})


def _composite(points, anchor, lam, eta, gradient, center, r):
    """argmin over B_center(r) of <eta g, y> + ½||y − points||² + eta lam/2 ||y − anchor||²."""
    return project_ball((points + eta * lam * anchor - eta * gradient) / (1.0 + eta * lam), center, r)


def epoch_sgd(objective: LipschitzObjective, g: StochasticGradientOracle, center, r, rho, lam, phi,
              ledger: QueryLedger, seed: int = 0) -> np.ndarray:
    """Epoch-doubling projected SGD on f̂_ρ + λ/2||x − x̄||² over B_x̄(r), all queries in one batch."""
    _check_oracle_args(r, rho, lam, phi)
    center = np.asarray(center, dtype=float)
    params = epoch_sgd_params(objective.lipschitz, lam, phi)
    sampler = ResqueSampler(center, rho, g)
    xis = presample_perturbations(rho, center.size, 2 * params.T, seed)
    gradients = sampler.query(xis, ledger, 'epoch_sgd', seed)

    start, used = center.copy(), 0
    for length, eta in params.epochs:
        x = _composite(start, center, lam, eta, 0.0, center, r)
        total = x.copy()
        for t in range(1, length):
            i = used + t - 1
            estimate = sampler.weights(x, xis[i]) * gradients[i]
            x = _composite(x, center, lam, eta, estimate, center, r)
            total += x
        start = total / length
        used += length
    steps = params.inner_steps
    ledger.charge(EPOCH_SGD_STEP_OPS * steps, EPOCH_SGD_STEP_OPS * steps)
    return start


def ac_sa(objective: LipschitzObjective, g: StochasticGradientOracle, center, r, rho, lam, phi,
          ledger: QueryLedger, seed: int = 0, n_k_cap: int = 2 ** 20) -> np.ndarray:
    """
    Restarted minibatch AC-SA: K rounds of T accelerated steps, round k averaging N_k
    reweighted samples per step from its own slice of the presampled pool.
    """
    _check_oracle_args(r, rho, lam, phi)
    center = np.asarray(center, dtype=float)
    L = objective.lipschitz
    params = ac_sa_params(L, r, rho, lam, phi, n_k_cap)
    if params.K == 0:
        return center.copy()
    if params.truncated:
        logger.log_event('ac_sa.truncated', cap=n_k_cap, K=params.K, T=params.T)
    curvature = smoothness_constant(L, rho) + lam
    sampler = ResqueSampler(center, rho, g)
    xis = presample_perturbations(rho, center.size, params.total, seed)
    gradients = sampler.query(xis, ledger, 'ac_sa', seed)

    x_ag, offset, work = center.copy(), 0, 0
    for size in params.batch_sizes:
        x = x_ag.copy()
        for t in range(1, params.T + 1):
            alpha, gamma = params.alpha(t), params.gamma(t, curvature)
            denom = gamma + (1.0 - alpha * alpha) * lam
            x_md = ((1.0 - alpha) * (lam + gamma) * x_ag + alpha * ((1.0 - alpha) * lam + gamma) * x) / denom
            pool = slice(offset, offset + size)
            offset += size
            estimate = sampler.weights(x_md, xis[pool]) @ gradients[pool] / size
            full = estimate + lam * (x_md - center)
            a, b = gamma + lam * (1.0 - alpha), lam * alpha
            x = project_ball((a * x + b * x_md - alpha * full) / (a + b), center, r)
            x_ag = alpha * x + (1.0 - alpha) * x_ag
            work += AC_SA_STEP_OPS + size
    ledger.charge(AC_SA_STEP_OPS * params.inner_steps, work)
    return x_ag


def depth_cap(d, kappa, constant=1.0) -> float:
    return constant * d ** (1.0 / 3.0) * kappa ** (2.0 / 3.0) * math.log(d * kappa) ** 3


def default_oracle(objective: LipschitzObjective) -> StochasticGradientOracle:
    if isinstance(objective, SampledDataset):
        return SubsampledOracle(objective)
    return ExactSubgradientOracle(objective)


@logger.log_run(extract_fields={
    'kind': lambda objective, *a, **k: objective.kind,
    'd': lambda objective, *a, **k: objective.dimension,
    'eps_opt': lambda objective, eps_opt, *a, **k: eps_opt,
    'method': lambda objective, eps_opt, method='ac_sa', *a, **k: method,
})
def solve_parallel(objective: LipschitzObjective, eps_opt: float, method: str = 'ac_sa',
                   ledger: Optional[QueryLedger] = None, seed: int = 0,
                   constants: Optional[SolverConstants] = None,
                   oracle: Optional[StochasticGradientOracle] = None) -> np.ndarray:
    """
    ε_opt-optimal point for f by ball acceleration on f̂_ρ with r = ρ = (ε_opt/3)/(√d L);
    a third of the target goes to the smoothing bias, the rest to the smoothed problem.
    """
    if method not in METHODS:
        raise ConfigurationError(f"Unknown method {method}", details={'method': method, 'known': list(METHODS)})
    constants = constants or SolverConstants()
    d, L, R = objective.dimension, objective.lipschitz, objective.domain_radius
    ledger = ledger if ledger is not None else QueryLedger(d)
    if eps_opt >= L * R:
        return np.zeros(d)
    target = eps_opt / 3.0
    r = rho = target / (math.sqrt(d) * L)
    config = derive_schedule(L, R, r, target, constants.C_ba)
    oracle = oracle or default_oracle(objective)

    if method == 'epoch_sgd':
        def ball_opt(center, lam, phi, call_seed):
            return epoch_sgd(objective, oracle, center, r, rho, lam, phi, ledger, call_seed)
    else:
        def ball_opt(center, lam, phi, call_seed):
            return ac_sa(objective, oracle, center, r, rho, lam, phi, ledger, call_seed, constants.n_k_cap)

    return run_ball_accel_nonprivate(config, ball_opt, ledger, seed, d).point
