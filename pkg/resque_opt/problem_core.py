"""
Objectives, datasets, gradient oracles and the query ledger.

Every objective is batch-aware: `values` and `subgradients` take an (m, d) array of points
so a whole batch of oracle queries is one numpy call.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import linprog

from .error_handler import ConfigurationError, DomainError
from .utils import project_ball, substream

OBJECTIVE_KINDS = ('distance_to_point', 'max_linear', 'abs_regression')


def _as_batch(points, dimension):
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points.reshape(1, -1)
    if points.shape[-1] != dimension:
        raise DomainError("Point dimension mismatch",
                          details={'expected': dimension, 'got': int(points.shape[-1])})
    return points


def _unit_rows(rng, count, dimension):
    rows = rng.standard_normal((count, dimension))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


class LipschitzObjective:
    """Convex f with Lipschitz constant L on the ball of radius R."""
    kind = 'generic'

    def __init__(self, dimension: int, lipschitz: float = 1.0, domain_radius: float = 1.0,
                 optimum: Optional[np.ndarray] = None):
        if dimension < 1:
            raise ConfigurationError("Dimension must be at least 1", details={'d': dimension})
        self.dimension = int(dimension)
        self.lipschitz = float(lipschitz)
        self.domain_radius = float(domain_radius)
        self.optimum = None if optimum is None else np.asarray(optimum, dtype=float)

    def values(self, points) -> np.ndarray:
        raise NotImplementedError

    def subgradients(self, points) -> np.ndarray:
        raise NotImplementedError

    def value(self, x) -> float:
        return float(self.values(_as_batch(x, self.dimension))[0])

    def subgradient(self, x) -> np.ndarray:
        return self.subgradients(_as_batch(x, self.dimension))[0]

    @property
    def optimal_value(self) -> Optional[float]:
        return None if self.optimum is None else self.value(self.optimum)


class DistanceToPoint(LipschitzObjective):
    kind = 'distance_to_point'

    def __init__(self, center):
        center = np.asarray(center, dtype=float)
        super().__init__(center.size, optimum=center)
        self.center = center

    def values(self, points):
        points = _as_batch(points, self.dimension)
        return np.linalg.norm(points - self.center, axis=1)

    def subgradients(self, points):
        points = _as_batch(points, self.dimension)
        offset = points - self.center
        norms = np.linalg.norm(offset, axis=1, keepdims=True)
        # zero is a subgradient at the kink
        return np.where(norms > 1e-15, offset / np.maximum(norms, 1e-300), 0.0)


class MaxLinear(LipschitzObjective):
    """max_i <a_i, x> + b_i with unit-norm a_i."""
    kind = 'max_linear'

    def __init__(self, slopes, offsets, optimum=None):
        slopes = np.asarray(slopes, dtype=float)
        super().__init__(slopes.shape[1], lipschitz=float(np.max(np.linalg.norm(slopes, axis=1))),
                         optimum=optimum)
        self.slopes = slopes
        self.offsets = np.asarray(offsets, dtype=float)

    def values(self, points):
        points = _as_batch(points, self.dimension)
        return np.max(points @ self.slopes.T + self.offsets, axis=1)

    def subgradients(self, points):
        points = _as_batch(points, self.dimension)
        active = np.argmax(points @ self.slopes.T + self.offsets, axis=1)
        return self.slopes[active]


@dataclass(frozen=True)
class AbsRegressionLaw:
    """Generating law of the abs_regression samples: b = <a, x_gen> + noise."""
    generating_point: np.ndarray
    noise_scale: float = 0.1

    def sample(self, count: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        features = _unit_rows(rng, count, self.generating_point.size)
        noise = self.noise_scale * rng.standard_normal(count)
        return features, features @ self.generating_point + noise


class SampledDataset(LipschitzObjective):
    """
    Empirical risk (1/n) sum_i |<a_i, x> - b_i| over n samples (a_i, b_i) with ||a_i|| <= 1.

    The stored optimum is the population minimizer (the generating point); the empirical
    minimizer comes from `reference_minimize`.
    """
    kind = 'abs_regression'

    def __init__(self, features, targets, law: Optional[AbsRegressionLaw] = None,
                 lipschitz: float = 1.0, domain_radius: float = 1.0):
        features = np.asarray(features, dtype=float)
        targets = np.asarray(targets, dtype=float)
        if features.ndim != 2 or features.shape[0] != targets.shape[0]:
            raise ConfigurationError("Features and targets disagree",
                                     details={'features': list(features.shape),
                                              'targets': list(targets.shape)})
        if features.shape[0] > 0 and np.max(np.linalg.norm(features, axis=1)) > lipschitz + 1e-12:
            raise DomainError("Sample feature norm exceeds the Lipschitz constant",
                              details={'lipschitz': lipschitz})
        optimum = None if law is None else law.generating_point
        super().__init__(features.shape[1], lipschitz, domain_radius, optimum)
        self.features = features
        self.targets = targets
        self.law = law

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def samples(self) -> List[Tuple[np.ndarray, float]]:
        return list(zip(self.features, self.targets))

    def residuals(self, points) -> np.ndarray:
        points = _as_batch(points, self.dimension)
        return points @ self.features.T - self.targets

    def values(self, points):
        return np.mean(np.abs(self.residuals(points)), axis=1)

    def subgradients(self, points):
        return np.sign(self.residuals(points)) @ self.features / self.n

    def per_sample_values(self, indices, points) -> np.ndarray:
        points = _as_batch(points, self.dimension)
        indices = np.asarray(indices, dtype=int)
        return np.abs(np.einsum('ij,ij->i', self.features[indices], points) - self.targets[indices])

    def per_sample_subgradients(self, indices, points) -> np.ndarray:
        """Row j is a subgradient of f^{indices[j]} at points[j]."""
        points = _as_batch(points, self.dimension)
        indices = np.asarray(indices, dtype=int)
        rows = self.features[indices]
        signs = np.sign(np.einsum('ij,ij->i', rows, points) - self.targets[indices])
        return signs[:, None] * rows

    def per_sample_subgradient(self, index: int, x) -> np.ndarray:
        return self.per_sample_subgradients([index], x)[0]

    def subset(self, indices) -> 'SampledDataset':
        indices = np.asarray(indices, dtype=int)
        return SampledDataset(self.features[indices], self.targets[indices], self.law,
                              self.lipschitz, self.domain_radius)

    def neighbor(self, index: int = 0, seed: int = 0) -> 'SampledDataset':
        """A dataset that differs from this one in sample `index` only."""
        rng = substream(seed, 0x6E65)
        features = self.features.copy()
        targets = self.targets.copy()
        features[index] = _unit_rows(rng, 1, self.dimension)[0]
        targets[index] = float(rng.uniform(-1.0, 1.0))
        return SampledDataset(features, targets, self.law, self.lipschitz, self.domain_radius)

    def draw_fresh(self, count: int, seed: int) -> 'SampledDataset':
        if self.law is None:
            raise ConfigurationError("Dataset has no generating law to draw from")
        features, targets = self.law.sample(count, substream(seed, 0x6672))
        return SampledDataset(features, targets, self.law, self.lipschitz, self.domain_radius)


def make_abs_regression(n: int, d: int, seed: int, noise_scale: float = 0.1) -> SampledDataset:
    rng = substream(seed, 0x6162)
    direction = _unit_rows(rng, 1, d)[0]
    law = AbsRegressionLaw(0.5 * rng.uniform() ** (1.0 / d) * direction, noise_scale)
    features, targets = law.sample(n, rng)
    return SampledDataset(features, targets, law)


def make_synthetic_objective(kind: str, d: int, seed: int, n: int = 128) -> LipschitzObjective:
    if d < 1:
        raise ConfigurationError("Dimension must be at least 1", details={'d': d})
    rng = substream(seed, 0x6F62)
    if kind == 'distance_to_point':
        return DistanceToPoint(0.5 * rng.uniform() ** (1.0 / d) * _unit_rows(rng, 1, d)[0])
    if kind == 'max_linear':
        optimum = 0.5 * rng.uniform() ** (1.0 / d) * _unit_rows(rng, 1, d)[0]
        half = _unit_rows(rng, d + 1, d)
        # symmetric slope set: the max is nonnegative and vanishes only at the optimum
        slopes = np.vstack([half, -half])
        return MaxLinear(slopes, -slopes @ optimum, optimum=optimum)
    if kind == 'abs_regression':
        return make_abs_regression(n, d, seed)
    raise ConfigurationError(f"Unknown objective kind {kind}",
                             details={'kind': kind, 'known': list(OBJECTIVE_KINDS)})


class StochasticGradientOracle:
    """g with E g(x) in ∂f(x) and E ||g(x)||^2 <= L^2."""

    def __init__(self, objective: LipschitzObjective):
        self.objective = objective

    @property
    def dimension(self) -> int:
        return self.objective.dimension

    @property
    def second_moment_bound(self) -> float:
        return self.objective.lipschitz ** 2

    def sample(self, points, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


class ExactSubgradientOracle(StochasticGradientOracle):
    def sample(self, points, rng):
        return self.objective.subgradients(points)


class SubsampledOracle(StochasticGradientOracle):
    """Per-sample subgradient at a uniformly drawn index: unbiased for the empirical risk."""

    def __init__(self, dataset: SampledDataset):
        super().__init__(dataset)
        self.dataset = dataset

    def sample(self, points, rng):
        points = _as_batch(points, self.dimension)
        indices = rng.integers(self.dataset.n, size=points.shape[0])
        return self.dataset.per_sample_subgradients(indices, points)


@dataclass
class QueryLedger:
    """Batch-structured record of oracle calls; costs are in units of d-vector operations."""
    dimension: int = 1
    batches: List[Tuple[int, str]] = field(default_factory=list)
    total_queries: int = 0
    comp_depth: int = 0
    comp_work: int = 0

    @property
    def query_depth(self) -> int:
        return len(self.batches)

    def record_batch(self, size: int, tag: str):
        if size <= 0:
            return
        self.batches.append((int(size), tag))
        self.total_queries += int(size)

    def charge(self, depth_ops: int, work_ops: int):
        """Charge sequential (depth) and total (work) vector operations of length d."""
        self.comp_depth += int(depth_ops) * self.dimension
        self.comp_work += int(work_ops) * self.dimension


def oracle_query(oracle: StochasticGradientOracle, points, ledger: QueryLedger, tag: str,
                 seed: int = 0) -> np.ndarray:
    """One batch of gradient queries; the stream is keyed by (seed, batch index)."""
    if len(points) == 0:
        return np.zeros((0, oracle.dimension))
    points = _as_batch(points, oracle.dimension)
    if not np.all(np.isfinite(points)):
        raise DomainError("Oracle queried at a non-finite point", details={'tag': tag})
    rng = substream(seed, ledger.query_depth)
    gradients = oracle.sample(points, rng)
    ledger.record_batch(points.shape[0], tag)
    return gradients


def ledger_report(ledger: QueryLedger) -> Tuple[int, int, int, int]:
    return ledger.query_depth, ledger.total_queries, ledger.comp_depth, ledger.comp_work


def _lad_minimizer(dataset: SampledDataset) -> np.ndarray:
    # min (1/n) sum (u_i + v_i)  s.t.  A x - u + v = b,  u, v >= 0
    n, d = dataset.features.shape
    cost = np.concatenate([np.zeros(d), np.full(2 * n, 1.0 / n)])
    equality = np.hstack([dataset.features, -np.eye(n), np.eye(n)])
    bounds = [(None, None)] * d + [(0, None)] * (2 * n)
    result = linprog(cost, A_eq=equality, b_eq=dataset.targets, bounds=bounds, method='highs')
    if not result.success:
        raise DomainError("Reference LP solve failed", details={'status': result.message})
    return result.x[:d]


def reference_minimize(objective: LipschitzObjective, center=None, radius=None, lam: float = 0.0,
                       anchor=None, iters: int = 20000) -> np.ndarray:
    """
    High-accuracy deterministic minimizer of f(x) + lam/2 ||x - anchor||^2 over B_center(radius).

    Unregularized empirical risks are solved exactly as a linear program when the solution
    lands inside the ball; otherwise projected subgradient descent with weighted averaging
    (step 2/(lam (t+1)) when lam > 0, radius/(L sqrt t) otherwise), returning the best of the
    average and the best visited iterate.
    """
    d = objective.dimension
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    radius = objective.domain_radius if radius is None else float(radius)
    anchor = center if anchor is None else np.asarray(anchor, dtype=float)

    def total(x):
        return objective.value(x) + 0.5 * lam * float(np.sum((x - anchor) ** 2))

    if lam == 0.0 and isinstance(objective, SampledDataset):
        candidate = _lad_minimizer(objective)
        if np.linalg.norm(candidate - center) <= radius:
            return candidate

    x = project_ball(anchor, center, radius)
    best, best_value = x.copy(), total(x)
    average, weight_sum = np.zeros(d), 0.0
    for t in range(1, iters + 1):
        g = objective.subgradient(x) + lam * (x - anchor)
        step = 2.0 / (lam * (t + 1)) if lam > 0 else radius / (objective.lipschitz * np.sqrt(t))
        x = project_ball(x - step * g, center, radius)
        average += t * x
        weight_sum += t
        if t % 16 == 0:
            value = total(x)
            if value < best_value:
                best, best_value = x.copy(), value
    average /= weight_sum
    return average if total(average) <= best_value else best
