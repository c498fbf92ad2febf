"""
Approximate Rényi-DP accounting.

A ledger holds (α, ε, δ) events for one fixed α; composition adds ε and δ, and the totals
convert to an (ε_dp, δ) guarantee.

The solver privacy bounds are proved for C_priv >= 60 (T/n <= 1/60). A ledger kept with a
smaller C_priv still adds up its events, but its guarantee is marked uncertified.
"""
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .error_handler import ConfigurationError, PrivacyError
from .utils import substream

DRIFT_COEFFICIENT = 1500.0
AMPLIFICATION_COEFFICIENT = 13.0
MAX_SUBSAMPLING_RATE = 1.0 / 40.0
CERTIFIED_C_PRIV = 60.0


@dataclass(frozen=True)
class RdpEvent:
    alpha: float
    epsilon: float
    delta: float
    label: str = ''

    def __post_init__(self):
        if not self.alpha > 1:
            raise PrivacyError("RDP order must exceed 1", details={'alpha': self.alpha})
        if self.epsilon < 0:
            raise PrivacyError("RDP epsilon must be nonnegative", details={'epsilon': self.epsilon})
        if not 0 <= self.delta < 1:
            raise PrivacyError("RDP delta must lie in [0, 1)", details={'delta': self.delta})


@dataclass(frozen=True)
class DpGuarantee:
    eps_dp: float
    delta: float
    certified: bool = True


@dataclass
class PrivacyLedger:
    alpha: float
    c_priv: float = CERTIFIED_C_PRIV
    budget: Optional[Tuple[float, float]] = None
    events: List[RdpEvent] = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.c_priv >= CERTIFIED_C_PRIV

    def record(self, event: RdpEvent) -> 'PrivacyLedger':
        if not math.isclose(event.alpha, self.alpha, rel_tol=1e-12):
            raise PrivacyError("Event order differs from the ledger order",
                               details={'ledger_alpha': self.alpha, 'event_alpha': event.alpha,
                                        'label': event.label})
        if self.budget is not None:
            epsilon, delta = self.totals()
            if epsilon + event.epsilon > self.budget[0] * (1 + 1e-12) or \
                    delta + event.delta > self.budget[1] * (1 + 1e-12):
                raise PrivacyError("Event exceeds the ledger budget",
                                   details={'label': event.label, 'spent': [epsilon, delta],
                                            'event': [event.epsilon, event.delta],
                                            'budget': list(self.budget)})
        self.events.append(event)
        return self

    def totals(self) -> Tuple[float, float]:
        return (float(sum(e.epsilon for e in self.events)),
                float(sum(e.delta for e in self.events)))

    def to_dp(self, delta_prime: float) -> DpGuarantee:
        epsilon, delta = self.totals()
        return replace(rdp_to_dp(self.alpha, epsilon, delta, delta_prime), certified=self.certified)

    def report(self, delta_prime: Optional[float] = None) -> str:
        header = f"# C_priv {self.c_priv!r}"
        if not self.certified:
            header += f" uncertified (below {CERTIFIED_C_PRIV!r})"
        lines = [header]
        lines.extend(f"{e.label or '-'} {e.alpha!r} {e.epsilon!r} {e.delta!r}" for e in self.events)
        epsilon, delta = self.totals()
        lines.append(f"total {self.alpha!r} {epsilon!r} {delta!r}")
        if delta_prime is not None:
            guarantee = self.to_dp(delta_prime)
            lines.append(f"dp {guarantee.eps_dp!r} {guarantee.delta!r}")
        return '\n'.join(lines)


def compose(ledger: PrivacyLedger, event: RdpEvent) -> PrivacyLedger:
    return ledger.record(event)


def compose_dp(guarantees: Iterable[DpGuarantee]) -> DpGuarantee:
    """Sequential composition of (ε, δ)-DP guarantees."""
    guarantees = list(guarantees)
    return DpGuarantee(sum(g.eps_dp for g in guarantees), sum(g.delta for g in guarantees),
                       all(g.certified for g in guarantees))


def parallel_compose_dp(guarantees: Iterable[DpGuarantee]) -> DpGuarantee:
    """
    Guarantees of mechanisms run on disjoint parts of the data, in any adaptive order, where
    the split does not depend on the data: every sample pays for one mechanism only.
    """
    guarantees = list(guarantees)
    return DpGuarantee(max((g.eps_dp for g in guarantees), default=0.0),
                       max((g.delta for g in guarantees), default=0.0),
                       all(g.certified for g in guarantees))


def gaussian_mechanism_rdp(alpha, sensitivity, sigma) -> float:
    if not sigma > 0:
        raise PrivacyError("Gaussian noise scale must be positive", details={'sigma': sigma})
    if not alpha > 1:
        raise PrivacyError("RDP order must exceed 1", details={'alpha': alpha})
    return alpha * sensitivity ** 2 / (2.0 * sigma ** 2)


def rdp_to_dp(alpha, epsilon, delta, delta_prime) -> DpGuarantee:
    if not alpha > 1:
        raise PrivacyError("RDP order must exceed 1", details={'alpha': alpha})
    if not 0 < delta_prime < 1:
        raise PrivacyError("delta_prime must lie in (0, 1)", details={'delta_prime': delta_prime})
    eps_dp = epsilon + math.log(1.0 / delta_prime) / (alpha - 1.0)
    return DpGuarantee(eps_dp, delta_prime + (1.0 + math.exp(eps_dp)) * delta)


def amplify_subsample(alpha, tau, s) -> float:
    """13 s² α τ for sampling with replacement at rate s."""
    if not tau <= 1.0 / 3.0:
        raise PrivacyError("Amplification requires tau <= 1/3", details={'condition': 'tau <= 1/3', 'tau': tau})
    if not 0 < s < MAX_SUBSAMPLING_RATE:
        raise PrivacyError("Amplification requires 0 < s < 1/40", details={'condition': '0 < s < 1/40', 's': s})
    if not 1 < alpha < 3.0 / tau:
        raise PrivacyError("Amplification requires 1 < alpha < 3/tau",
                           details={'condition': '1 < alpha < 3/tau', 'alpha': alpha, 'tau': tau})
    return AMPLIFICATION_COEFFICIENT * s * s * alpha * tau


def drift_rdp_coefficient(beta, b) -> float:
    if b < 0:
        raise PrivacyError("Hit count must be nonnegative", details={'b': b})
    return DRIFT_COEFFICIENT * beta * beta * b * b


def chernoff_event(alpha, delta, label='chernoff') -> RdpEvent:
    return RdpEvent(alpha, 0.0, delta, label)


def _iterated_log(T) -> float:
    # log log T, floored at 1 so small budgets keep the log argument above 1/δ
    return max(1.0, math.log(max(math.log(max(T, 2.0)), 1.0)))


@dataclass(frozen=True)
class SolverPrivacy:
    """Validity data of a private solver: RDP τ per unit α and the largest admissible α."""
    tau: float
    alpha_max: float
    variant: str
    delta: float

    def event(self, alpha, label=None, scale: float = 1.0) -> RdpEvent:
        if not alpha < self.alpha_max:
            raise PrivacyError("RDP order beyond the solver's admissible range",
                               details={'alpha': alpha, 'alpha_max': self.alpha_max,
                                        'variant': self.variant})
        return RdpEvent(alpha, alpha * self.tau * scale, self.delta, label or self.variant)


def solver_rdp_event(beta, T, n, delta, C_priv, variant: str = 'convex', zeta: Optional[float] = None,
                     rho_over_r: Optional[float] = None, log_horizon: Optional[float] = None) -> SolverPrivacy:
    """
    τ and α_max for the subsampled solvers.

    variant 'convex':          log term log(1/δ)
    variant 'strongly_convex': log term log(log log T / δ), or log log of log_horizon when given
    variant 'line_search':     log term log(log(T/ζ)/δ) with τ scaled by log(1/ζ)
    """
    if not 0 < delta < 1.0 / 6.0:
        raise ConfigurationError("Private solver preconditions violated",
                                 details={'failed': [{'condition': 'delta in (0, 1/6)', 'delta': delta}]})
    failed = []
    if T / n > 1.0 / C_priv:
        failed.append({'condition': 'T/n <= 1/C_priv', 'T': T, 'n': n, 'C_priv': C_priv})

    if variant == 'convex':
        log_term = math.log(1.0 / delta)
        scale = 1.0
    elif variant == 'strongly_convex':
        log_term = math.log(_iterated_log(log_horizon or T) / delta)
        scale = 1.0
    elif variant == 'line_search':
        if zeta is None or not 0 < zeta < 1:
            raise ConfigurationError("Line-search variant needs a failure probability in (0, 1)",
                                     details={'zeta': zeta})
        log_term = math.log(math.log(max(T / zeta, math.e)) / delta)
        scale = math.log(1.0 / zeta)
    else:
        raise ConfigurationError(f"Unknown solver variant {variant}", details={'variant': variant})

    if beta * beta * log_term * log_term > 1.0 / C_priv:
        failed.append({'condition': 'beta^2 log^2 <= 1/C_priv', 'beta': beta, 'log_term': log_term,
                       'C_priv': C_priv})
    if rho_over_r is not None:
        required = C_priv * math.log(math.log(max(T, 2.0)) / delta) ** 2
        if rho_over_r < required:
            failed.append({'condition': 'rho/r >= C_priv log^2(log T/delta)',
                           'rho_over_r': rho_over_r, 'required': required})
    if failed:
        raise ConfigurationError("Private solver preconditions violated", details={'failed': failed})

    tau = C_priv * scale * (beta * log_term * T / n) ** 2
    alpha_max = 1.0 / (C_priv * beta * beta * log_term * log_term) if beta > 0 else math.inf
    return SolverPrivacy(tau, alpha_max, variant, delta)


def gaussian_renyi_divergence_mc(alpha, shift, sigma, draws=200000, seed=0) -> Tuple[float, float]:
    """
    Monte Carlo D_α(N(shift, σ²) || N(0, σ²)) via E_ν[(μ/ν)^α], with its delta-method
    standard error.
    """
    x = sigma * substream(seed, 0x7264).standard_normal(int(draws))
    log_ratio = (2.0 * x * shift - shift * shift) / (2.0 * sigma * sigma)
    moments = np.exp(alpha * log_ratio)
    mean = float(moments.mean())
    stderr = float(moments.std(ddof=1) / np.sqrt(draws))
    return math.log(mean) / (alpha - 1.0), stderr / (mean * (alpha - 1.0))
