from functools import wraps
import json
import sys

import click
import yaml


class ResqueError(Exception):
    """Base exception for solver and harness errors"""
    exit_code = 1

    def __init__(self, message, exit_code=None, details=None):
        super().__init__(message)
        self.message = message
        if exit_code is not None:
            self.exit_code = exit_code
        self.details = details or {}


class ConfigurationError(ResqueError):
    """A precondition on parameters or configuration does not hold"""
    exit_code = 2


class DomainError(ResqueError):
    """Numeric input outside the domain of an operation"""
    exit_code = 3


class ContractError(ResqueError):
    """An oracle contract cannot be met with the given arguments"""
    exit_code = 4


class PrivacyError(ResqueError):
    """Accounting request outside the range where a bound is valid"""
    exit_code = 5


class InfeasibleError(ResqueError):
    """Parameter regime where the private solver guarantees do not hold"""
    exit_code = 6


def _emit(response, code):
    click.echo(json.dumps(response, default=str), err=True)
    sys.exit(code)


def handle_cli_error(f):
    """Simple error handling decorator for CLI commands"""
    @wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ResqueError as e:
            response = {
                'error': True,
                'message': str(e),
                'details': e.details
            }
            _emit(response, e.exit_code)
        except FileNotFoundError as e:
            response = {
                'error': True,
                'message': str(e),
                'details': {'path': str(e.filename or e)}
            }
            _emit(response, 2)
        except yaml.YAMLError as e:
            response = {
                'error': True,
                'message': 'Invalid YAML format',
                'details': {'error': str(e)}
            }
            _emit(response, 2)
        except Exception as e:
            response = {
                'error': True,
                'message': 'Internal error',
                'details': {'error': str(e)}
            }
            _emit(response, 1)
    return wrapper
