import os
from dataclasses import dataclass, fields, replace
from typing import Dict, Optional

import numpy as np
import yaml

from .error_handler import ConfigurationError

DEFAULT_CONFIG_FILE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'config.yml')


@dataclass(frozen=True)
class SolverConstants:
    """Universal constants the analysis leaves unnamed; all are configuration values."""
    C: float = 64.0
    C_ba: float = 8.0
    C_cvx: float = 8.0
    C_sc: float = 32.0
    C_ls: float = 16.0
    C_priv: float = 60.0
    C_bias: float = 8.0
    C_var: float = 32.0
    depth_cap: float = 1.0
    c_opt: Optional[float] = None
    c_radius: Optional[float] = None
    c_beta: Optional[float] = None
    c_budget: Optional[float] = None
    t_min: int = 16
    n_k_cap: int = 2 ** 20

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None and not value > 0:
                raise ConfigurationError(
                    f"Constant {f.name} must be positive",
                    details={'constant': f.name, 'value': value}
                )

    # The parameter block of the private ERM solver uses one constant C in four places;
    # each place can be calibrated on its own.
    @property
    def opt(self) -> float:
        return self.C if self.c_opt is None else self.c_opt

    @property
    def radius(self) -> float:
        return self.C if self.c_radius is None else self.c_radius

    @property
    def beta(self) -> float:
        return self.C if self.c_beta is None else self.c_beta

    @property
    def budget(self) -> float:
        return self.C if self.c_budget is None else self.c_budget

    def with_overrides(self, overrides: Optional[Dict] = None) -> 'SolverConstants':
        if not overrides:
            return self
        known = {f.name: f.type for f in fields(self)}
        unknown = sorted(set(overrides) - set(known))
        if unknown:
            raise ConfigurationError("Unknown solver constants", details={'unknown': unknown})
        cast = {}
        for key, value in overrides.items():
            cast[key] = int(value) if key in ('t_min', 'n_k_cap') else float(value)
        return replace(self, **cast)

    def as_dict(self) -> Dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def create_folder_if_not_exist(dir_path):
    """Create a directory if it doesn't exist"""
    if dir_path and not os.path.isdir(dir_path):
        os.makedirs(dir_path)


def detect_profile():
    return os.getenv('RESQUE_PROFILE', 'theory')


def load_config(config_file=None):
    with open(config_file or DEFAULT_CONFIG_FILE, 'r') as file:
        config_data = yaml.safe_load(file)
    return config_data


def load_constants(profile=None, overrides=None, config_file=None) -> SolverConstants:
    """Constants of a config.yml profile, with overrides applied last."""
    profile = profile or detect_profile()
    config = load_config(config_file)
    if profile not in config:
        raise ConfigurationError(f"Unknown profile {profile}", details={'profile': profile})
    section = config[profile].get('constants', {}) or {}
    return SolverConstants().with_overrides(section).with_overrides(overrides)


def worker_count() -> int:
    try:
        return max(1, int(os.getenv('RESQUE_THREADS', '1')))
    except ValueError:
        raise ConfigurationError("RESQUE_THREADS must be an integer",
                                 details={'RESQUE_THREADS': os.getenv('RESQUE_THREADS')})


def substream(seed, *keys) -> np.random.Generator:
    """Independent generator for (seed, keys); the same keys always give the same stream."""
    entropy = [int(seed) & 0xFFFFFFFF] + [int(k) & 0xFFFFFFFF for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def project_ball(points, center, radius):
    """Euclidean projection of a point (or each row of a matrix) onto B_center(radius)."""
    points = np.asarray(points, dtype=float)
    center = np.asarray(center, dtype=float)
    offset = points - center
    norms = np.linalg.norm(offset, axis=-1, keepdims=True)
    scale = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
    return center + offset * scale


def derive_seed(seed, *keys) -> int:
    """Integer seed for a child computation keyed by (seed, keys)."""
    entropy = [int(seed) & 0xFFFFFFFF] + [int(k) & 0xFFFFFFFF for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])
