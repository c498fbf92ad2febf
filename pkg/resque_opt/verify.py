"""
Named verification batteries: each returns CheckResult lines and passes iff all lines pass.
Sizes are fixed so a battery is deterministic and finishes at desk scale.
"""
import math
from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from .error_handler import ConfigurationError, PrivacyError
from .privacy import (PrivacyLedger, RdpEvent, amplify_subsample, compose, gaussian_mechanism_rdp,
                      gaussian_renyi_divergence_mc, rdp_to_dp)
from .problem_core import ExactSubgradientOracle, QueryLedger, make_abs_regression, make_synthetic_objective
from .dp_solvers import (aggregate, coupled_epoch_drift, mlmc_loop, mlmc_loop_scale,
                         subsampled_strongly_convex)
from .resque import (ResqueSampler, SmoothedObjective, difference_weight, log_density_ratio,
                     presample_perturbations, weight_moment_exact)
from .utils import SolverConstants, derive_seed, substream


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ''

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name} {self.detail}".rstrip()


def _within(name, value, target, tolerance) -> CheckResult:
    return CheckResult(name, abs(value - target) <= tolerance,
                       f"value={value:.6g} target={target:.6g} tol={tolerance:.3g}")


def moments_suite(seed: int = 0, draws: int = 1_000_000, samples: int = 200_000) -> List[CheckResult]:
    """Weight moments on `draws` perturbations; difference moments and unbiasedness on `samples`."""
    results = []
    d, rho = 4, 1.0
    v = np.full(d, 0.15)
    xis = presample_perturbations(rho, d, draws, derive_seed(seed, 1))
    weights = np.exp(log_density_ratio(v - xis, xis, rho))
    for p in (2, 4):
        exact = weight_moment_exact(v, rho, p)
        results.append(_within(f"weight_moment_p{p}", float(np.mean(weights ** p)), exact, 0.05 * exact))

    center = np.zeros(d)
    x, x_prime = np.full(d, 0.1), np.full(d, -0.05)
    gap = float(np.linalg.norm(x - x_prime))
    differences = difference_weight(x, x_prime, center, xis[:samples], rho)
    for p in (2, 4):
        moment = float(np.mean(np.abs(differences) ** p))
        bound = (24.0 * p * gap / rho) ** p
        results.append(CheckResult(f"difference_moment_p{p}", moment <= bound,
                                   f"value={moment:.6g} bound={bound:.6g}"))

    for kind, dim in (('distance_to_point', 2), ('max_linear', 2), ('abs_regression', 2), ('max_linear', 8)):
        objective = make_synthetic_objective(kind, dim, derive_seed(seed, 2))
        smooth_rho = 0.2
        sampler = ResqueSampler(np.zeros(dim), smooth_rho, ExactSubgradientOracle(objective))
        point = np.full(dim, smooth_rho / (2.0 * math.sqrt(dim)))
        pert = presample_perturbations(smooth_rho, dim, samples, derive_seed(seed, 3))
        estimates = sampler.weights(point, pert)[:, None] * objective.subgradients(pert)
        mean = estimates.mean(axis=0)
        stderr = estimates.std(axis=0, ddof=1) / math.sqrt(samples)
        smoothed = SmoothedObjective(objective, smooth_rho)
        if dim <= 2:
            reference, reference_se = smoothed.gradient_quadrature(point), np.zeros(dim)
        else:
            reference, reference_se = smoothed.gradient_estimate(point, samples, derive_seed(seed, 4))
        tolerance = 3.0 * np.sqrt(stderr ** 2 + reference_se ** 2) + 1e-3
        gap_max = float(np.max(np.abs(mean - reference) - tolerance))
        results.append(CheckResult(f"unbiased_{kind}_d{dim}", gap_max <= 0.0, f"excess={gap_max:.3g}"))
        second = np.sum(estimates ** 2, axis=1)
        bound = 3.0 * objective.lipschitz ** 2 + 3.0 * second.std(ddof=1) / math.sqrt(samples)
        results.append(CheckResult(f"second_moment_{kind}_d{dim}", float(second.mean()) <= bound,
                                   f"value={second.mean():.6g} bound={bound:.6g}"))
    return results


def drift_suite(seed: int = 0, trials: int = 500) -> List[CheckResult]:
    dataset = make_abs_regression(64, 4, derive_seed(seed, 1))
    neighbor = dataset.neighbor(0, derive_seed(seed, 2))
    steps, r = 32, 0.05
    rho, eta = 20.0 * r, r / (dataset.lipschitz * math.sqrt(steps))
    center = np.zeros(dataset.dimension)
    results = []
    for hits in (1, 2, 4):
        drifts = [coupled_epoch_drift(dataset, neighbor, center, r, rho, eta, steps, hits,
                                      derive_seed(seed, hits, t)) for t in range(trials)]
        # the (1 − δ/log T) quantile is the maximum for any δ below log(T)/trials
        worst = float(np.max(drifts))
        bound = 1500.0 * hits ** 2 * (eta * dataset.lipschitz) ** 2
        results.append(CheckResult(f"drift_b{hits}", worst <= bound, f"max={worst:.6g} bound={bound:.6g}"))
    return results


def aggregation_suite(seed: int = 0, instances: int = 1000) -> List[CheckResult]:
    rng = substream(seed, 0x6167)
    failures = 0
    for _ in range(instances):
        d = int(rng.integers(1, 9))
        k = int(rng.integers(1, 101))
        inliers = int(math.ceil(0.51 * k))
        Delta = float(rng.uniform(0.1, 2.0))
        target = rng.standard_normal(d)
        directions = rng.standard_normal((k, d))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        radii = np.concatenate([Delta / 3.0 * rng.uniform(size=inliers), np.full(k - inliers, 10.0 * Delta)])
        points = target + radii[:, None] * directions
        points = points[rng.permutation(k)]
        if np.linalg.norm(aggregate(points, Delta).point - target) > Delta:
            failures += 1
    results = [CheckResult('aggregation_clusters', failures == 0, f"failures={failures}/{instances}")]
    same = np.ones((5, 3))
    results.append(CheckResult('aggregation_identical', bool(np.allclose(aggregate(same, 1.0).point, 1.0))))
    results.append(CheckResult('aggregation_single', bool(np.allclose(aggregate([[2.0, -1.0]], 1.0).point,
                                                                      [2.0, -1.0]))))
    return results


def _rejects(call) -> bool:
    try:
        call()
    except (PrivacyError, ConfigurationError):
        return True
    return False


def accountant_suite(seed: int = 0) -> List[CheckResult]:
    results = [
        _within('gaussian_mechanism', gaussian_mechanism_rdp(4.0, 2.0, 2.0), 2.0, 1e-12),
        _within('amplification', amplify_subsample(2.0, 0.1, 0.01), 13.0 * 1e-4 * 2.0 * 0.1, 1e-15),
    ]
    ledger = PrivacyLedger(8.0)
    compose(ledger, RdpEvent(8.0, 0.25, 1e-7))
    compose(ledger, RdpEvent(8.0, 0.5, 2e-7))
    epsilon, delta = ledger.totals()
    results.append(_within('composition_eps', epsilon, 0.75, 1e-12))
    results.append(_within('composition_delta', delta, 3e-7, 1e-18))
    guarantee = rdp_to_dp(8.0, 0.75, 3e-7, 1e-6)
    eps_dp = 0.75 + math.log(1e6) / 7.0
    results.append(_within('conversion_eps', guarantee.eps_dp, eps_dp, 1e-12))
    results.append(_within('conversion_delta', guarantee.delta, 1e-6 + (1.0 + math.exp(eps_dp)) * 3e-7, 1e-15))
    results.append(CheckResult('reject_mixed_alpha', _rejects(lambda: ledger.record(RdpEvent(4.0, 0.1, 0.0)))))
    results.append(CheckResult('reject_tau', _rejects(lambda: amplify_subsample(2.0, 0.5, 0.01))))
    results.append(CheckResult('reject_rate', _rejects(lambda: amplify_subsample(2.0, 0.1, 0.05))))
    results.append(CheckResult('reject_alpha', _rejects(lambda: amplify_subsample(40.0, 0.1, 0.01))))
    estimate, stderr = gaussian_renyi_divergence_mc(2.0, 0.5, 1.0, 400_000, derive_seed(seed, 1))
    results.append(_within('gaussian_divergence_mc', estimate, 0.25, 3.0 * stderr))
    return results


def mlmc_suite(seed: int = 0, loops: int = 10_000) -> List[CheckResult]:
    constants = SolverConstants(C_priv=1.0)
    dataset = make_abs_regression(64, 1, derive_seed(seed, 1))
    center, r, rho, lam, T = np.zeros(1), 0.5, 0.5, 1.0, 4
    j_max = 4
    ledger = QueryLedger(1)
    records = [mlmc_loop(dataset, center, r, rho, math.inf, lam, T, j_max, derive_seed(seed, 2, i), ledger,
                         constants=constants) for i in range(loops)]
    estimates = np.array([rec.estimate[0] for rec in records])
    top = np.array([subsampled_strongly_convex(dataset, center, r, rho, math.inf, lam, 2 ** j_max * T,
                                               seed=derive_seed(seed, 3, i), constants=constants)[0]
                    for i in range(loops // 5)])
    se = math.sqrt(estimates.var(ddof=1) / estimates.size + top.var(ddof=1) / top.size)
    results = [_within('telescoping_mean', float(estimates.mean()), float(top.mean()), 3.0 * se)]
    variance_bound = 4.0 * constants.C_var * dataset.lipschitz ** 2 / lam ** 2 / T
    results.append(CheckResult('mlmc_variance', float(estimates.var(ddof=1)) <= variance_bound,
                               f"value={estimates.var(ddof=1):.6g} bound={variance_bound:.6g}"))
    counts_ok = all(rec.gradients <= (2 ** (rec.J + 1) * T if rec.J <= j_max else T) for rec in records)
    results.append(CheckResult('mlmc_gradient_counts', counts_ok))
    results.append(CheckResult('mlmc_scale_tail', mlmc_loop_scale(j_max + 1, j_max) == 1.0))
    return results


SUITES: Dict[str, Callable[..., List[CheckResult]]] = {
    'moments': moments_suite,
    'drift': drift_suite,
    'aggregation': aggregation_suite,
    'accountant': accountant_suite,
    'mlmc': mlmc_suite,
}


def run_suite(name: str, seed: int = 0, **kwargs) -> List[CheckResult]:
    if name not in SUITES:
        raise ConfigurationError(f"Unknown verification suite {name}",
                                 details={'suite': name, 'known': sorted(SUITES)})
    return SUITES[name](seed, **kwargs)
