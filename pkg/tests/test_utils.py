import os

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings

from resque_opt.error_handler import ConfigurationError
from resque_opt.utils import (SolverConstants, create_folder_if_not_exist, derive_seed, load_config,
                              load_constants, project_ball, substream, worker_count)


def test_default_constants():
    constants = SolverConstants()
    assert (constants.C, constants.C_ba, constants.C_priv, constants.C_sc) == (64.0, 8.0, 60.0, 32.0)
    assert constants.opt == constants.radius == constants.beta == constants.budget == 64.0


def test_constants_reject_nonpositive():
    with pytest.raises(ConfigurationError) as info:
        SolverConstants(C_priv=0.0)
    assert info.value.details['constant'] == 'C_priv'


def test_overrides_cast_and_reject_unknown():
    constants = SolverConstants().with_overrides({'t_min': '32', 'c_opt': 0.5})
    assert constants.t_min == 32 and isinstance(constants.t_min, int)
    assert constants.opt == 0.5 and constants.radius == 64.0
    with pytest.raises(ConfigurationError) as info:
        SolverConstants().with_overrides({'C_unknown': 1})
    assert info.value.details['unknown'] == ['C_unknown']


def test_desk_profile_merges_theory_constants():
    config = load_config()
    assert config['desk']['constants']['C_sc'] == config['theory']['constants']['C_sc']
    assert load_constants('theory') == SolverConstants(n_k_cap=1048576)
    desk = load_constants('desk', {'C_ba': 4})
    assert desk.C_priv == 0.01 and desk.C_ba == 4.0
    assert load_constants('desk').C_ba == 16.0


def test_profile_from_environment(monkeypatch):
    monkeypatch.setenv('RESQUE_PROFILE', 'desk')
    assert load_constants().C_priv == 0.01
    with pytest.raises(ConfigurationError):
        load_constants('nowhere')


def test_worker_count(monkeypatch):
    monkeypatch.setenv('RESQUE_THREADS', '4')
    assert worker_count() == 4
    monkeypatch.setenv('RESQUE_THREADS', '0')
    assert worker_count() == 1
    monkeypatch.setenv('RESQUE_THREADS', 'many')
    with pytest.raises(ConfigurationError):
        worker_count()


def test_substreams_are_keyed():
    first = substream(3, 1, 2).standard_normal(5)
    assert np.array_equal(first, substream(3, 1, 2).standard_normal(5))
    assert not np.array_equal(first, substream(3, 2, 1).standard_normal(5))
    assert derive_seed(3, 1) == derive_seed(3, 1) != derive_seed(3, 2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.floats(0.01, 5.0))
def test_projection_lands_in_ball(point, radius):
    center = np.array([0.5, -0.5, 0.0])
    projected = project_ball(point, center, radius)
    assert np.linalg.norm(projected - center) <= radius * (1 + 1e-9)
    if np.linalg.norm(np.asarray(point) - center) <= radius:
        assert np.allclose(projected, point)


def test_projection_is_row_wise():
    points = np.array([[3.0, 0.0], [0.1, 0.0]])
    projected = project_ball(points, np.zeros(2), 1.0)
    assert np.allclose(projected, [[1.0, 0.0], [0.1, 0.0]])


def test_create_folder(tmp_path):
    target = tmp_path / 'a' / 'b'
    create_folder_if_not_exist(str(target))
    create_folder_if_not_exist(str(target))
    assert os.path.isdir(target)
