import os

import numpy as np
import pytest

from adaptivediff.latent import L2
from adaptivediff.param_parser import *
from adaptivediff.scheduler import DDIM, EULER_VE, SDE_EULER
from adaptivediff.utils import is_near as near

from conftest import CONFIG_DIR


def test_param_parser(config_location):
    """Read a config file.
    Test parsed values and fallback to the defaults.
    """
    param = ParamParser(config_location)
    assert(param.sampler['name'] == EULER_VE)
    assert(param.sampler['T'] == 12)
    assert(near(param.sampler['sigma_max'], 5.0))
    assert(param.sampler['beta_start'] == DEFAULTS['Sampler']['beta_start'])
    np.testing.assert_array_equal(param.model['scale_range'], [0.3, 0.8])
    assert(param.controller['warmup'] == 3)
    assert(param.controller['norm_kind'] == L2)
    np.testing.assert_array_equal(param.run['sweep_deltas'], [0.0, 0.01, 1.0])

    with pytest.raises(FileNotFoundError):
        ParamParser(os.path.join(CONFIG_DIR, 'missing.cfg'))


def test_parse_value():
    assert(parse_value(' 12 ') == 12)
    assert(parse_value('euler-ve') == 'euler-ve')
    assert(parse_value('None') is None)
    np.testing.assert_array_equal(parse_value('1, 2.5'), [1.0, 2.5])
    np.testing.assert_array_equal(parse_value('[[1, 0], [0, 1]]'), np.eye(2))


def test_run_config(config_location):
    """Assemble a run configuration.
    Test the plan, the model and the controller settings.
    """
    cfg = RunConfig(ParamParser(config_location), environ={})
    assert(cfg.sampler == EULER_VE and cfg.T == 12)
    assert(cfg.sampler_params == {'sigma_max': 5.0, 'sigma_min': 0.05})
    assert(cfg.model.K == 2 and cfg.model.dim == 4 and cfg.side == 2)
    assert(cfg.delta == 0.01 and cfg.c_max == 3 and cfg.warmup == 3)
    assert(cfg.churn == 0.5 and cfg.sde_delta == 0.02)
    assert(cfg.seed == 5 and cfg.jobs == 1)
    assert(cfg.sweep_c_max == [2, 4] and cfg.sweep_seeds == 2)
    assert(cfg.oracle_N == [0, 1, 2, 3])

    plan = cfg.build_plan()
    assert(plan.T == 12 and plan.name == EULER_VE)
    assert(cfg.build_plan(T=6).T == 6)
    x_T = cfg.initial_latent(plan, 0)
    assert(x_T.as_grid().shape == (2, 2))
    assert(cfg.controller_config(delta=0.5).delta == 0.5)
    assert(cfg.controller_config().c_max == 3)


def test_overrides(config_location):
    """Command line over environment over file over defaults.
    """
    param = ParamParser(config_location)
    env = {OUTPUT_ENV: '/tmp/from-env'}
    assert(RunConfig(param, environ=env).output == '/tmp/from-env')
    cfg = RunConfig(param, overrides={'output': '/tmp/from-cli',
                                      'delta': 0.0, 'c_max': None,
                                      'sampler': SDE_EULER, 'T': 20},
                    environ=env)
    assert(cfg.output == '/tmp/from-cli')
    assert(cfg.delta == 0.0 and cfg.c_max == 3)
    assert(cfg.build_plan().stochastic and cfg.build_plan().T == 20)
    assert(near(cfg.build_plan().sde_noise_scale[0],
                0.5*np.sqrt(cfg.build_plan().g[0])))

    with pytest.raises(ValueError):
        RunConfig(param, overrides={'sampler': 'heun'}, environ={})
    with pytest.raises(ValueError):
        RunConfig(param, overrides={'c_max': 0}, environ={})


def test_config_hash_stable(config_location):
    param = ParamParser(config_location)
    a = RunConfig(param, environ={})
    b = RunConfig(ParamParser(config_location), environ={'X': '1'})
    assert(a.hash == b.hash)
    assert(RunConfig(param, overrides={'delta': 0.5}, environ={}).hash !=
           a.hash)
    # the output location is not part of the run
    assert(RunConfig(param, overrides={'output': 'x'}, environ={}).hash ==
           a.hash)


@pytest.mark.parametrize('name', ['default.cfg', 'alternate.cfg', 'ddim.cfg',
                                  'sde.cfg'])
def test_shipped_configs(name):
    cfg = RunConfig(ParamParser(os.path.join(CONFIG_DIR, name)), environ={})
    plan = cfg.build_plan()
    assert(plan.T == cfg.T)
    x_T = cfg.initial_latent(plan, cfg.seed)
    assert(x_T.dim == cfg.model.dim)
    assert(cfg.sampler in (DDIM, EULER_VE, SDE_EULER))


def test_explicit_model():
    section = {'means': np.array([[0.0, 1.0], [1.0, 0.0]]),
               'scales': np.array([0.5, 0.7])}
    model = build_model(section)
    assert(model.K == 2 and np.all(model.weights == 0.5))
    with pytest.raises(ValueError):
        build_model({'means': np.zeros((2, 2))})
