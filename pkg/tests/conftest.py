import numpy as np
import pytest

from resque_opt.logger import logger
from resque_opt.problem_core import make_abs_regression
from resque_opt.utils import load_constants


@pytest.fixture(autouse=True)
def log_to_tmp(tmp_path):
    logger.log_file = str(tmp_path / 'logs' / 'resque_log')
    yield logger.log_file
    logger.log_file = None


@pytest.fixture
def desk():
    return load_constants('desk')


@pytest.fixture(scope='session')
def abs_dataset():
    return make_abs_regression(512, 4, seed=7)


@pytest.fixture
def origin():
    return np.zeros(4)
