import collections
import logging

import numpy as np

from adaptivediff.latent import LatentState
from adaptivediff.utils import read_csv, write_csv


logger = logging.getLogger(__name__)

VP = 'VP-alphabar'
VE = 'VE-sigma'

DDIM = 'ddim'
EULER_VE = 'euler-ve'
SDE_EULER = 'sde-euler'
SAMPLERS = (DDIM, EULER_VE, SDE_EULER)
STOCHASTIC_SAMPLERS = (SDE_EULER,)


NoiseLevel = collections.namedtuple('NoiseLevel', ['scale', 'sigma'])
NoiseLevel.__doc__ = """
Marginal x_i = scale*x_0 + sigma*n of the forward process at one step.
VE schedules have scale 1, VP schedules have sigma**2 + scale**2 = 1.
"""


def _frozen(values):
    values = np.array(values, dtype=np.float64)
    values.setflags(write=False)
    return values


class NoiseSchedule(object):
    """
    Noise schedule indexed by step, from index 0 (data side) to T (noise
    side).

    Arguments
    ---------
    kind : string
        VP ('VP-alphabar') or VE ('VE-sigma')
    values : array_like
        T+1 values of alphabar_i (VP) or sigma_i (VE)
    t_grid : array_like
        T+1 continuous timesteps t_i
    """

    def __init__(self, kind, values, t_grid):
        values = _frozen(values)
        t_grid = _frozen(t_grid)
        if values.shape != t_grid.shape or values.ndim != 1:
            raise ValueError('Schedule values and t_grid must be 1D arrays of '
                             'equal length')
        if kind == VP:
            if np.any(values <= 0) or np.any(values > 1):
                raise ValueError('alphabar must lie in (0, 1]')
            if np.any(np.diff(values) >= 0):
                raise ValueError('alphabar must increase strictly towards x_0')
        elif kind == VE:
            if np.any(values < 0):
                raise ValueError('sigma must be nonnegative')
            if np.any(np.diff(values) <= 0):
                raise ValueError('sigma must decrease strictly towards x_0')
        else:
            raise ValueError('Unknown schedule kind %r' % kind)
        self.kind = kind
        self.values = values
        self.t_grid = t_grid


    @property
    def T(self):
        return self.values.size - 1


    def noise_level(self, i):
        """
        Returns the NoiseLevel of step i.
        """
        if i < 0 or i > self.T:
            raise IndexError('Step %i outside schedule [0, %i]' % (i, self.T))
        if self.kind == VE:
            return NoiseLevel(1.0, float(self.values[i]))
        alphabar = float(self.values[i])
        return NoiseLevel(np.sqrt(alphabar), np.sqrt(1-alphabar))


class SchedulerPlan(object):
    """
    Precomputed coefficients of the general sampler update

        x_{i-1} = f(i-1)*x_i - g(i-1)*eps(x_i, t_i) + injected_i

    with f[n] = f(n) and g[n] = g(n) for n = 0, ..., T-1.

    Arguments
    ---------
    f : array_like
        T latent coefficients
    g : array_like
        T noise coefficients
    schedule : NoiseSchedule
        Noise schedule with T+1 entries
    name : string
        Sampler identifier
    sde_noise_scale : array_like
        T nonnegative scales of the injected noise, zero for ODE samplers
    """

    def __init__(self, f, g, schedule, name, sde_noise_scale=None):
        f = _frozen(f)
        g = _frozen(g)
        if sde_noise_scale is None:
            sde_noise_scale = np.zeros_like(f)
        sde_noise_scale = _frozen(sde_noise_scale)
        T = f.size
        assert g.size == T and sde_noise_scale.size == T,\
            'Plan needs {} values of f, g and sde_noise_scale'.format(T)
        assert schedule.T == T,\
            'Plan with {} steps needs a schedule with {} entries, found {}'\
            .format(T, T+1, schedule.values.size)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise ValueError('Plan coefficients must be finite')
        if np.any(sde_noise_scale < 0):
            raise ValueError('sde_noise_scale must be nonnegative')
        self.f = f
        self.g = g
        self.schedule = schedule
        self.name = name
        self.sde_noise_scale = sde_noise_scale


    @property
    def T(self):
        return self.f.size


    @property
    def stochastic(self):
        """
        True for samplers that inject noise, whether or not the scale is zero.
        """
        return self.name in STOCHASTIC_SAMPLERS


    @property
    def t_grid(self):
        return self.schedule.t_grid


    def noise_level(self, i):
        return self.schedule.noise_level(i)


    def __repr__(self):
        return 'SchedulerPlan(name=%r, T=%i)' % (self.name, self.T)


def ddim_coefficients(alphabar_prev, alphabar_curr):
    """
    Coefficients (f, g) of one deterministic DDIM step from alphabar_i to
    alphabar_{i-1}.

    Arguments
    ---------
    alphabar_prev : float or numpy.array
        alphabar_{i-1}
    alphabar_curr : float or numpy.array
        alphabar_i

    Returns
    -------
    return : tuple
        f = sqrt(alphabar_{i-1}/alphabar_i) and
        g = f*sqrt(1-alphabar_i) - sqrt(1-alphabar_{i-1})
    """
    f = np.sqrt(alphabar_prev/alphabar_curr)
    g = f*np.sqrt(1-alphabar_curr) - np.sqrt(1-alphabar_prev)
    return f, g


def euler_coefficients(sigma_curr, sigma_prev):
    """
    Coefficients (f, g) of one VE Euler step from sigma_i to sigma_{i-1}.
    """
    return np.ones_like(np.asarray(sigma_curr, dtype=np.float64)),\
        np.asarray(sigma_curr, dtype=np.float64) - sigma_prev


def build_ddim_plan(T, beta_start=1.e-4, beta_end=0.02, train_steps=1000):
    """
    Builds a deterministic DDIM plan on a linear beta schedule subsampled with
    a uniform stride.

    Arguments
    ---------
    T : int
        Number of sampling steps
    beta_start : float
        First beta of the training schedule
    beta_end : float
        Last beta of the training schedule
    train_steps : int
        Number of training steps of the virtual schedule

    Returns
    -------
    return : SchedulerPlan
        Plan with alphabar_0 = 1 and alphabar_T at the last training step
    """
    if not 0 < beta_start < beta_end < 1:
        raise ValueError('Need 0 < beta_start < beta_end < 1, got %s, %s'
                         % (beta_start, beta_end))
    if T < 1 or train_steps < 1:
        raise ValueError('T and train_steps must be positive')
    if T > train_steps:
        raise ValueError('Cannot sample %i steps from %i training steps'
                         % (T, train_steps))
    betas = np.linspace(beta_start, beta_end, train_steps, dtype=np.float64)
    alphas_cumprod = np.cumprod(1.0 - betas)

    stride = train_steps//T
    steps = np.arange(1, T+1)*stride
    alphabar = np.concatenate([[1.0], alphas_cumprod[steps-1]])
    t_grid = np.concatenate([[0.0], steps/train_steps])

    f, g = ddim_coefficients(alphabar[:-1], alphabar[1:])
    schedule = NoiseSchedule(VP, alphabar, t_grid)
    return SchedulerPlan(f, g, schedule, DDIM)


def _sigma_grid(T, sigma_max, sigma_min):
    if T < 1:
        raise ValueError('T must be positive')
    if not sigma_max > sigma_min > 0:
        raise ValueError('Need sigma_max > sigma_min > 0, got %s, %s'
                         % (sigma_max, sigma_min))
    sigmas = np.exp(np.linspace(np.log(sigma_min), np.log(sigma_max), T+1))
    sigmas[0], sigmas[-1] = sigma_min, sigma_max
    if np.any(np.diff(sigmas) <= 0):
        raise ValueError('Sigma grid is not strictly monotone for T = %i' % T)
    return sigmas


def build_euler_ve_plan(T, sigma_max=80.0, sigma_min=0.002):
    """
    Builds the Euler plan for the VE probability-flow ODE on a log-linear
    sigma grid: x_{i-1} = x_i - (sigma_i - sigma_{i-1})*eps.

    Arguments
    ---------
    T : int
        Number of sampling steps
    sigma_max : float
        Noise level at step T
    sigma_min : float
        Noise level at step 0

    Returns
    -------
    return : SchedulerPlan
        Plan with f = 1 and t_i = sigma_i
    """
    sigmas = _sigma_grid(T, sigma_max, sigma_min)
    f, g = euler_coefficients(sigmas[1:], sigmas[:-1])
    schedule = NoiseSchedule(VE, sigmas, sigmas.copy())
    return SchedulerPlan(f, g, schedule, EULER_VE)


def build_sde_euler_plan(T, sigma_max=80.0, sigma_min=0.002, churn=1.0):
    """
    Builds the stochastic Euler plan: the Euler-VE update plus an injected
    increment churn*sqrt(|sigma_i - sigma_{i-1}|)*z_i.

    Arguments
    ---------
    T : int
        Number of sampling steps
    sigma_max : float
        Noise level at step T
    sigma_min : float
        Noise level at step 0
    churn : float
        Nonnegative scale of the injected noise

    Returns
    -------
    return : SchedulerPlan
        Plan whose f, g and schedule equal the Euler-VE plan
    """
    if churn < 0:
        raise ValueError('churn must be nonnegative, got %s' % churn)
    sigmas = _sigma_grid(T, sigma_max, sigma_min)
    f, g = euler_coefficients(sigmas[1:], sigmas[:-1])
    scale = churn*np.sqrt(np.abs(g))
    schedule = NoiseSchedule(VE, sigmas, sigmas.copy())
    return SchedulerPlan(f, g, schedule, SDE_EULER, sde_noise_scale=scale)


def build_plan(sampler, T, **kwargs):
    """
    Builds a plan by sampler name, passing the remaining parameters on.
    """
    if sampler == DDIM:
        return build_ddim_plan(T, **kwargs)
    elif sampler == EULER_VE:
        kwargs.pop('churn', None)
        return build_euler_ve_plan(T, **kwargs)
    elif sampler == SDE_EULER:
        return build_sde_euler_plan(T, **kwargs)
    raise ValueError('Unknown sampler %r, expected one of %s'
                     % (sampler, SAMPLERS))


def apply_update(plan, i, x_i, noise, injected=None):
    """
    Applies one sampler update from step i to step i-1. Whether noise is a
    fresh prediction or a cached one is up to the caller.

    Arguments
    ---------
    plan : SchedulerPlan
        Sampler plan
    i : int
        Current step index, 1 <= i <= T
    x_i : LatentState
        Current latent
    noise : numpy.array
        Noise prediction used for this update
    injected : numpy.array
        Injected noise increment, None for zero

    Returns
    -------
    return : LatentState
        Latent x_{i-1}
    """
    if i < 1 or i > plan.T:
        raise IndexError('Step %i outside [1, %i]' % (i, plan.T))
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != x_i.values.shape:
        raise ValueError('Noise dimension %s does not match latent %s'
                         % (noise.shape, x_i.values.shape))
    values = plan.f[i-1]*x_i.values - plan.g[i-1]*noise
    if injected is not None:
        injected = np.asarray(injected, dtype=np.float64)
        if injected.shape != values.shape:
            raise ValueError('Injected dimension %s does not match latent %s'
                             % (injected.shape, values.shape))
        values = values + injected
    return LatentState(values, i-1, side=x_i.side)


class NoiseStream(object):
    """
    Counter-based stream of standard normal draws keyed by (seed, step), so
    a draw never depends on how many draws were made before it.

    Arguments
    ---------
    seed : int
        Run seed
    """

    def __init__(self, seed):
        self.seed = int(seed)


    def draw(self, step_index, dim):
        rng = np.random.default_rng([self.seed, int(step_index)])
        return rng.standard_normal(dim)


    def injected(self, plan, i, dim):
        """
        Returns the injected increment of the update from step i, or None if
        the plan injects nothing there.
        """
        scale = plan.sde_noise_scale[i-1]
        if scale == 0:
            return None
        return scale*self.draw(i, dim)


def draw_initial_latent(plan, dim, seed, side=None):
    """
    Draws x_T from the prior of the plan's schedule.

    Arguments
    ---------
    plan : SchedulerPlan
        Sampler plan
    dim : int
        Latent dimension
    seed : int
        Run seed
    side : int
        Optional square-grid side length

    Returns
    -------
    return : LatentState
        sigma_max*z for VE plans, z for VP plans
    """
    z = np.random.default_rng(seed).standard_normal(dim)
    if plan.schedule.kind == VE:
        z = plan.schedule.values[-1]*z
    return LatentState(z, plan.T, side=side)


PLAN_HEADER = ['i', 'f', 'g', 't', 'sigma_or_alphabar', 'sde_noise_scale']


def write_plan_csv(plan, filename, tag=None):
    """
    Dumps a plan as CSV. Row i holds f(i-1), g(i-1) and the injected scale of
    the update from step i together with t_i and the schedule value of step
    i; row 0 has no coefficients.
    """
    rows = [[0, '', '', float(plan.t_grid[0]),
             float(plan.schedule.values[0]), '']]
    for i in range(1, plan.T+1):
        rows.append([i, float(plan.f[i-1]), float(plan.g[i-1]),
                     float(plan.t_grid[i]), float(plan.schedule.values[i]),
                     float(plan.sde_noise_scale[i-1])])
    write_csv(filename, PLAN_HEADER, rows, tag=tag)


def read_plan_csv(filename, kind, name):
    """
    Reads a plan dumped by write_plan_csv().

    Arguments
    ---------
    filename : string
        CSV file name
    kind : string
        Schedule kind of the dumped plan
    name : string
        Sampler identifier of the dumped plan

    Returns
    -------
    return : SchedulerPlan
        Reconstructed plan
    """
    rows = sorted(read_csv(filename), key=lambda r: int(r['i']))
    t_grid = [float(r['t']) for r in rows]
    values = [float(r['sigma_or_alphabar']) for r in rows]
    f = [float(r['f']) for r in rows[1:]]
    g = [float(r['g']) for r in rows[1:]]
    scale = [float(r['sde_noise_scale']) for r in rows[1:]]
    return SchedulerPlan(f, g, NoiseSchedule(kind, values, t_grid), name,
                         sde_noise_scale=scale)
