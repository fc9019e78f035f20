import ast
import configparser
import logging
import os

import numpy as np

from adaptivediff.controller import ControllerConfig
from adaptivediff.denoiser import GmmDenoiser, GmmModel
from adaptivediff.latent import L2
from adaptivediff.scheduler import (DDIM, EULER_VE, SAMPLERS, SDE_EULER,
                                    build_plan, draw_initial_latent)
from adaptivediff.utils import config_hash


logger = logging.getLogger(__name__)

# Environment variable overriding the output directory of the config file
OUTPUT_ENV = 'ADAPTIVEDIFF_OUTPUT'

DEFAULTS = {
    'Sampler': {'name': EULER_VE, 'T': 50, 'sigma_max': 80.0,
                'sigma_min': 0.002, 'beta_start': 1.e-4, 'beta_end': 0.02,
                'train_steps': 1000},
    'Model': {'components': 3, 'dim': 16, 'mean_seed': 0, 'mean_spread': 1.0,
              'scale_range': (0.2, 1.0), 'side': None},
    'Controller': {'delta': 0.01, 'c_max': 4, 'warmup': 3, 'norm_kind': L2},
    'SDE': {'churn': 1.0, 'sde_delta': 0.01},
    'Run': {'seed': 0, 'output': 'output', 'jobs': 1,
            'sweep_deltas': (0.001, 0.005, 0.01, 0.05, 0.1),
            'sweep_c_max': (2, 4, 6), 'sweep_seeds': 10, 'oracle_N': (1, 5)},
}

SAMPLER_KEYS = {
    DDIM: ('beta_start', 'beta_end', 'train_steps'),
    EULER_VE: ('sigma_max', 'sigma_min'),
    SDE_EULER: ('sigma_max', 'sigma_min'),
}

OVERRIDE_SECTIONS = {'delta': 'Controller', 'c_max': 'Controller',
                     'seed': 'Run', 'output': 'Run', 'jobs': 'Run',
                     'T': 'Sampler', 'sampler': 'Sampler'}


class ParamParser(object):
    """
    Reads a run configuration file with the sections [Sampler], [Model],
    [Controller], [SDE] and [Run]. Missing sections and options fall back to
    DEFAULTS.

    Arguments
    ---------
    config_location : string
        Location of the .cfg file, None for defaults only
    """

    def __init__(self, config_location=None):
        self.config_location = config_location
        if config_location is not None and\
                not os.path.isfile(config_location):
            raise FileNotFoundError('Config file %s does not exist'
                                    % config_location)
        self.sampler, self.model, self.controller, self.sde, self.run =\
            self.get_params()


    def get_params(self):
        """
        Reads the config file into one dictionary per section.
        """
        config = configparser.ConfigParser()
        config.optionxform = str
        if self.config_location is not None:
            config.read(self.config_location)
        return tuple(ParamParser.get_section(config, section)
                     for section in ('Sampler', 'Model', 'Controller', 'SDE',
                                     'Run'))


    @staticmethod
    def get_section(config, section):
        """
        Get config file options from one section on top of the defaults.
        Values are read as Python literals, lists become numpy arrays and
        anything else is kept as a string.

        Arguments
        ---------
        config : configparser.ConfigParser
            Parsed config file
        section : string
            Name of the section to be read

        Returns
        -------
        return : dict
            Option values of the section
        """
        section_dict = dict(DEFAULTS[section])
        if not config.has_section(section):
            return section_dict
        for key, value in config.items(section):
            section_dict[key] = parse_value(value)
        return section_dict


def parse_value(value):
    """
    Parses one option value.
    """
    value = value.strip()
    try:
        parsed = ast.literal_eval(value)
    except (ValueError, SyntaxError):
        return value
    if isinstance(parsed, (list, tuple)):
        return np.array(parsed, dtype=np.float64)
    return parsed


class RunConfig(object):
    """
    Complete description of a run: sampler, model, controller, stochastic
    sampler settings, seed and output location. Equal configs give equal
    outputs.

    Arguments
    ---------
    param : ParamParser
        Parsed config file
    overrides : dict
        Values given on the command line, None entries are ignored
    environ : dict
        Environment, os.environ if None
    """

    def __init__(self, param, overrides=None, environ=None):
        sections = {'Sampler': dict(param.sampler), 'Model': dict(param.model),
                    'Controller': dict(param.controller),
                    'SDE': dict(param.sde), 'Run': dict(param.run)}
        environ = os.environ if environ is None else environ
        if environ.get(OUTPUT_ENV):
            sections['Run']['output'] = environ[OUTPUT_ENV]
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            section = OVERRIDE_SECTIONS[key]
            sections[section]['name' if key == 'sampler' else key] = value

        sampler = sections['Sampler']
        self.sampler = sampler['name']
        if self.sampler not in SAMPLERS:
            raise ValueError('Unknown sampler %r, expected one of %s'
                             % (self.sampler, SAMPLERS))
        self.T = int(sampler['T'])
        self.sampler_params = {key: _scalar(sampler[key])
                               for key in SAMPLER_KEYS[self.sampler]}
        if 'train_steps' in self.sampler_params:
            self.sampler_params['train_steps'] =\
                int(self.sampler_params['train_steps'])

        self.model_section = sections['Model']
        self.model = build_model(self.model_section)
        side = self.model_section.get('side')
        self.side = None if side is None else int(side)

        controller = sections['Controller']
        sde = sections['SDE']
        self.delta = float(controller['delta'])
        self.c_max = int(controller['c_max'])
        self.warmup = int(controller['warmup'])
        self.norm_kind = controller['norm_kind']
        self.churn = float(sde['churn'])
        self.sde_delta = float(sde['sde_delta'])
        # validates the controller settings early
        self.controller_config()

        run = sections['Run']
        self.seed = int(run['seed'])
        self.output = str(run['output'])
        self.jobs = int(run['jobs'])
        self.sweep_deltas = [float(d) for d in np.atleast_1d(
            run['sweep_deltas'])]
        self.sweep_c_max = [int(c) for c in np.atleast_1d(run['sweep_c_max'])]
        self.sweep_seeds = int(run['sweep_seeds'])
        # oracle_N is a single count or an inclusive range lo, hi
        bounds = [int(n) for n in np.atleast_1d(run['oracle_N'])]
        self.oracle_N = list(range(bounds[0], bounds[-1]+1))


    def controller_config(self, delta=None, c_max=None):
        return ControllerConfig(self.delta if delta is None else delta,
                                self.c_max if c_max is None else c_max,
                                self.warmup, self.norm_kind, self.sde_delta)


    def build_plan(self, T=None):
        params = dict(self.sampler_params)
        if self.sampler == SDE_EULER:
            params['churn'] = self.churn
        return build_plan(self.sampler, self.T if T is None else T, **params)


    def build_denoiser(self):
        return GmmDenoiser(self.model)


    def initial_latent(self, plan, seed):
        return draw_initial_latent(plan, self.model.dim, seed, side=self.side)


    def as_dict(self):
        """
        Canonical record of the config, the input of config_hash().
        """
        return {'sampler': self.sampler, 'T': self.T,
                'sampler_params': self.sampler_params,
                'model': self.model.as_dict(), 'side': self.side,
                'controller': self.controller_config().as_dict(),
                'churn': self.churn, 'seed': self.seed,
                'sweep_deltas': self.sweep_deltas,
                'sweep_c_max': self.sweep_c_max,
                'sweep_seeds': self.sweep_seeds, 'oracle_N': self.oracle_N}


    @property
    def hash(self):
        return config_hash(self.as_dict())


def _scalar(value):
    if isinstance(value, np.ndarray):
        raise ValueError('Expected a single value, got %s' % value)
    return float(value)


def build_model(section):
    """
    Builds the mixture of a [Model] section: explicit weights, means and
    scales if means are given, otherwise means drawn once from mean_seed.

    Arguments
    ---------
    section : dict
        Option values of the [Model] section

    Returns
    -------
    return : GmmModel
        Clean-data mixture
    """
    if 'means' in section:
        means = np.atleast_2d(np.asarray(section['means'], dtype=np.float64))
        K = means.shape[0]
        if 'scales' not in section:
            raise ValueError('[Model] with explicit means needs scales')
        scales = np.atleast_1d(np.asarray(section['scales'], dtype=np.float64))
        weights = section.get('weights')
        if weights is None:
            weights = np.full(K, 1.0/K)
        return GmmModel(np.atleast_1d(weights), means, scales)
    weights = section.get('weights')
    return GmmModel.from_seed(int(section['components']), int(section['dim']),
                              int(section['mean_seed']),
                              spread=float(section['mean_spread']),
                              scale_range=tuple(section['scale_range']),
                              weights=weights)
