import os

import numpy as np
import pytest

from adaptivediff.denoiser import GmmDenoiser, GmmModel
from adaptivediff.scheduler import (build_ddim_plan, build_euler_ve_plan,
                                    build_sde_euler_plan)


ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIG_DIR = os.path.join(ROOT, 'config')
GOLDEN_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)),
                          'golden')

FCONF = """
[Sampler]
name = euler-ve
T = 12
sigma_max = 5.0
sigma_min = 0.05

[Model]
components = 2
dim = 4
side = 2
mean_seed = 3
scale_range = 0.3, 0.8

[Controller]
delta = 0.01
c_max = 3

[SDE]
churn = 0.5
sde_delta = 0.02

[Run]
seed = 5
output = {output}
sweep_deltas = 0.0, 0.01, 1.0
sweep_c_max = 2, 4
sweep_seeds = 2
oracle_N = 0, 3
"""


@pytest.fixture
def mixture():
    return GmmModel.from_seed(3, 16, 7)


@pytest.fixture
def single_gaussian():
    rng = np.random.default_rng(1)
    return GmmModel([1.0], rng.standard_normal((1, 8)), [0.5])


@pytest.fixture
def denoiser(mixture):
    return GmmDenoiser(mixture)


@pytest.fixture
def euler_plan():
    return build_euler_ve_plan(50)


@pytest.fixture
def ddim_plan():
    return build_ddim_plan(50)


@pytest.fixture
def sde_plan():
    return build_sde_euler_plan(50)


@pytest.fixture
def config_location(tmp_path):
    fconfig = str(tmp_path / 'config.cfg')
    with open(fconfig, 'w') as f:
        f.write(FCONF.format(output=str(tmp_path / 'output')))
    return fconfig
