"""Parallel and differentially private stochastic convex optimization with ReSQue estimators."""
from .error_handler import (ConfigurationError, ContractError, DomainError, InfeasibleError, PrivacyError,
                            ResqueError)
from .utils import SolverConstants, load_constants

__all__ = [
    'ConfigurationError', 'ContractError', 'DomainError', 'InfeasibleError', 'PrivacyError', 'ResqueError',
    'SolverConstants', 'load_constants',
]
