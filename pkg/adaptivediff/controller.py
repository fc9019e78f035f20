import collections
import logging

import numpy as np

from adaptivediff.latent import (L2, NORM_KINDS, DiffWindow,
                                 NonFiniteLatentError, Trajectory,
                                 WindowUnderfilledError, first_diff,
                                 latent_norm, path_to_string, second_diff,
                                 third_diff)
from adaptivediff.metrics import final_errors
from adaptivediff.scheduler import NoiseStream, apply_update


logger = logging.getLogger(__name__)

# Norms below this are treated as zero when detecting a stationary trajectory
STATIONARY_TOL = 1.e-15


class ControllerConfig(object):
    """
    Hyperparameters of the third-order skip criterion.

    Arguments
    ---------
    delta : float
        Relative threshold: skip the next noise prediction while
        |Δ³x_{i-1}| < delta*|Δx_i|
    c_max : int
        Maximum number of consecutive skipped predictions
    warmup : int
        Number of leading updates that always evaluate, at least 3
    norm_kind : string
        'L2' (rms) or 'L1' (mean absolute value)
    sde_delta : float
        Threshold of the injected-noise criterion for stochastic samplers
    """

    def __init__(self, delta=0.01, c_max=4, warmup=3, norm_kind=L2,
                 sde_delta=0.01):
        if not delta >= 0:
            raise ValueError('delta must be nonnegative, got %s' % delta)
        if int(c_max) != c_max or c_max < 1:
            raise ValueError('c_max must be a positive integer, got %s'
                             % c_max)
        if int(warmup) != warmup or warmup < 3:
            raise ValueError('warmup must be an integer of at least 3, got %s'
                             % warmup)
        if norm_kind not in NORM_KINDS:
            raise ValueError('Unknown norm kind %r' % norm_kind)
        if not sde_delta >= 0:
            raise ValueError('sde_delta must be nonnegative, got %s'
                             % sde_delta)
        self.delta = float(delta)
        self.c_max = int(c_max)
        self.warmup = int(warmup)
        self.norm_kind = norm_kind
        self.sde_delta = float(sde_delta)


    def as_dict(self):
        return {'delta': self.delta, 'c_max': self.c_max,
                'warmup': self.warmup, 'norm_kind': self.norm_kind,
                'sde_delta': self.sde_delta}


class ControllerState(object):
    """
    Mutable state of one adaptive run.

    Arguments
    ---------
    stochastic : boolean
        True if the plan belongs to a stochastic sampler
    noise_active : boolean
        True if the plan injects any nonzero noise
    """

    def __init__(self, stochastic=False, noise_active=False):
        self.window = DiffWindow()
        self.noise_window = DiffWindow()
        self.cached_noise = None
        self.used_noises = collections.deque(maxlen=2)
        self.consecutive_skips = 0
        self.decisions = []
        self.stochastic = stochastic
        self.noise_active = noise_active


    def observe(self, latent, noise, evaluated, injected=None):
        """
        Records one executed update and the latent it produced.
        """
        self.decisions.append(bool(evaluated))
        self.used_noises.append(noise)
        if evaluated:
            self.cached_noise = noise
            self.consecutive_skips = 0
        else:
            self.consecutive_skips += 1
        self.window.push(latent)
        if self.stochastic:
            if injected is None:
                injected = np.zeros(latent.dim)
            self.noise_window.push(injected)


def criterion_terms(window, norm_kind=L2):
    """
    Returns (|Δx_i|, |Δ³x_{i-1}|) of a populated window.
    """
    return latent_norm(window.middle_diff(), norm_kind),\
        latent_norm(third_diff(window), norm_kind)


def _third_order_says_evaluate(window, delta, norm_kind):
    d1, d3 = criterion_terms(window, norm_kind)
    if delta > 0 and d1 < STATIONARY_TOL and d3 < STATIONARY_TOL:
        return False
    return bool(d3 >= delta*d1)


def should_evaluate(state, cfg):
    """
    Skip decision for the next step from the latent history:
    evaluate iff |Δ³x_{i-1}| >= delta*|Δx_i| or the run of consecutive skips
    has reached c_max. A stationary window (both norms below 1e-15) skips
    when delta > 0.

    Arguments
    ---------
    state : ControllerState
        State with a populated latent window
    cfg : ControllerConfig
        Criterion hyperparameters

    Returns
    -------
    return : boolean
        True to evaluate the noise prediction, False to reuse the cache
    """
    if not state.window.full:
        raise WindowUnderfilledError('Criterion needs four latents, have %i'
                                     % len(state.window.latents))
    if state.consecutive_skips >= cfg.c_max:
        return True
    return _third_order_says_evaluate(state.window, cfg.delta, cfg.norm_kind)


def noise_says_skip(state, cfg):
    """
    Injected-noise criterion: True while |Δ³n| < sde_delta*|Δn_i| over the
    scaled injected increments n.
    """
    d1, d3 = criterion_terms(state.noise_window, cfg.norm_kind)
    return bool(d3 < cfg.sde_delta*d1)


def sde_should_evaluate(state, cfg):
    """
    Skip decision for stochastic samplers: skip only if both the latent
    criterion and the injected-noise criterion say skip. An identically zero
    noise stream defers to the latent criterion.

    The noise window holds one increment fewer than the latent window, so the
    first update past warmup always evaluates. Injected increments are
    independent draws, which puts |Δ³n|/|Δn_i| near sqrt(10); at sde_delta
    well below 1 the noise criterion never says skip and a churned plan
    evaluates every update.

    Arguments
    ---------
    state : ControllerState
        State of a run on a stochastic plan
    cfg : ControllerConfig
        Criterion hyperparameters

    Returns
    -------
    return : boolean
        True to evaluate the noise prediction
    """
    if not state.stochastic:
        raise ValueError('sde_should_evaluate() needs a stochastic sampler '
                         'plan')
    latent_decision = should_evaluate(state, cfg)
    if not state.noise_active or latent_decision:
        return latent_decision
    if not state.noise_window.full:
        return True
    return not noise_says_skip(state, cfg)


class RunReport(object):
    """
    Summary of one sampling run against its paired full-step reference.
    """

    def __init__(self, seed, sampler, skip_path, eval_count, delta=None,
                 c_max=None, l1_err=0.0, rms_err=0.0, psnr=None):
        self.seed = seed
        self.sampler = sampler
        self.skip_path = list(skip_path)
        self.eval_count = int(eval_count)
        self.delta = delta
        self.c_max = c_max
        self.l1_err = l1_err
        self.rms_err = rms_err
        self.psnr = psnr
        self.trace = []


    @property
    def T(self):
        return len(self.skip_path)


    @property
    def skip_count(self):
        return self.T - sum(self.skip_path)


    @property
    def speedup(self):
        return self.T/self.eval_count


    def as_dict(self):
        return {'seed': self.seed, 'sampler': self.sampler,
                'delta': self.delta, 'c_max': self.c_max,
                'eval_count': self.eval_count,
                'skip_path': path_to_string(self.skip_path),
                'speedup': self.speedup, 'l1_err': self.l1_err,
                'rms_err': self.rms_err, 'psnr': self.psnr}


def integrate(plan, denoiser, x_T, seed, evaluate_at, observer=None):
    """
    Runs the reverse process from x_T to x_0, evaluating the denoiser where
    evaluate_at(j) is True and reusing the last prediction elsewhere. The
    latent update itself always runs.

    Arguments
    ---------
    plan : SchedulerPlan
        Sampler plan
    denoiser : Denoiser
        Noise prediction handle owned by this run
    x_T : LatentState
        Initial latent
    seed : int
        Seed of the injected-noise stream
    evaluate_at : callable
        Maps the update position j = T - i to a boolean
    observer : callable
        Called as observer(latent, noise, evaluated, injected) after every
        update

    Returns
    -------
    return : Trajectory
        Recorded trajectory
    """
    if x_T.step_index != plan.T:
        raise ValueError('Initial latent has step index %i, plan starts at %i'
                         % (x_T.step_index, plan.T))
    stream = NoiseStream(seed)
    trajectory = Trajectory([x_T])
    x = x_T
    cached = None
    for j in range(plan.T):
        i = plan.T - j
        evaluated = bool(evaluate_at(j))
        if evaluated:
            cached = denoiser.predict(plan, i, x)
        elif cached is None:
            raise ValueError('Update %i reuses a noise prediction but none '
                             'was evaluated before it' % j)
        injected = stream.injected(plan, i, x.dim)
        x = apply_update(plan, i, x, cached, injected)
        if not x.is_finite():
            norm = float(np.linalg.norm(x.values))
            logger.error('Non-finite latent at step %i (norm %s)',
                         x.step_index, norm)
            raise NonFiniteLatentError(x.step_index, norm)
        trajectory.latents.append(x)
        trajectory.noises.append(cached)
        trajectory.evaluated.append(evaluated)
        if observer is not None:
            observer(x, cached, evaluated, injected)
    return trajectory


def run_baseline(plan, denoiser, x_T, seed=0):
    """
    Full-step run evaluating the denoiser at every step.

    Arguments
    ---------
    plan : SchedulerPlan
        Sampler plan
    denoiser : Denoiser
        Noise prediction handle
    x_T : LatentState
        Initial latent
    seed : int
        Seed of the injected-noise stream

    Returns
    -------
    return : tuple
        Trajectory and RunReport
    """
    before = denoiser.eval_counter
    trajectory = integrate(plan, denoiser, x_T, seed, lambda j: True)
    report = RunReport(seed, plan.name, trajectory.evaluated,
                       denoiser.eval_counter - before)
    return trajectory, report


class AdaptiveController(object):
    """
    Drives the skip decisions of one adaptive run: warmup updates always
    evaluate, afterwards the decision taken after producing x_{i-1} governs
    the next update.

    Arguments
    ---------
    plan : SchedulerPlan
        Sampler plan
    cfg : ControllerConfig
        Criterion hyperparameters
    """

    def __init__(self, plan, cfg):
        self.plan = plan
        self.cfg = cfg
        self.state = ControllerState(
            stochastic=plan.stochastic,
            noise_active=bool(np.any(plan.sde_noise_scale > 0)))
        self.next_decision = True
        self.trace = []


    def start(self, x_T):
        self.state.window.push(x_T)


    def evaluate_at(self, j):
        if j < self.cfg.warmup:
            return True
        return self.next_decision


    def observe(self, latent, noise, evaluated, injected=None):
        self.state.observe(latent, noise, evaluated, injected)
        j_next = len(self.state.decisions)
        if j_next >= self.plan.T or j_next < self.cfg.warmup:
            return
        self.next_decision = self.decide(j_next)


    def decide(self, j_next):
        """
        Takes the decision for update j_next and records a trace row.
        """
        state, cfg = self.state, self.cfg
        if state.stochastic:
            decision = sde_should_evaluate(state, cfg)
        else:
            decision = should_evaluate(state, cfg)
        d1, d3 = criterion_terms(state.window, cfg.norm_kind)
        d2 = latent_norm(second_diff(state.window), cfg.norm_kind)
        # change between the predictions used by the last two updates
        previous, latest = state.used_noises
        eps_diff = latent_norm(first_diff(latest, previous), cfg.norm_kind)
        latent_decision = should_evaluate(state, cfg)
        noise_decision = None
        if state.stochastic and state.noise_active and state.noise_window.full:
            noise_decision = not noise_says_skip(state, cfg)
        self.trace.append({
            'step_index': self.plan.T - j_next,
            'position': j_next,
            'dx_norm': d1,
            'd2x_norm': d2,
            'd3x_norm': d3,
            'eps_diff': eps_diff,
            'ratio': d3/d1 if d1 > 0 else float('nan'),
            'consecutive_skips': state.consecutive_skips,
            'latent_decision': latent_decision,
            'noise_decision': noise_decision,
            'decision': decision})
        return decision


def run_adaptive(plan, denoiser, x_T, cfg, seed=0, reference=None):
    """
    Adaptive run: skips noise predictions by the third-order criterion and
    reuses the cached prediction in the latent update.

    Arguments
    ---------
    plan : SchedulerPlan
        Sampler plan
    denoiser : Denoiser
        Noise prediction handle owned by this run
    x_T : LatentState
        Initial latent
    cfg : ControllerConfig
        Criterion hyperparameters
    seed : int
        Seed of the injected-noise stream, shared with the reference run
    reference : Trajectory
        Paired full-step trajectory; run on a forked handle if None

    Returns
    -------
    return : tuple
        Trajectory and RunReport with errors against the reference
    """
    if reference is None:
        reference, _ = run_baseline(plan, denoiser.fork(), x_T, seed)
    controller = AdaptiveController(plan, cfg)
    controller.start(x_T)
    before = denoiser.eval_counter
    trajectory = integrate(plan, denoiser, x_T, seed, controller.evaluate_at,
                           observer=controller.observe)
    report = RunReport(seed, plan.name, trajectory.evaluated,
                       denoiser.eval_counter - before, delta=cfg.delta,
                       c_max=cfg.c_max)
    errors = final_errors(reference.final, trajectory.final)
    report.l1_err = errors['l1_err']
    report.rms_err = errors['rms_err']
    report.psnr = errors['psnr']
    report.trace = controller.trace
    logger.debug('Adaptive run seed=%s: %i of %i evaluations', seed,
                 report.eval_count, plan.T)
    return trajectory, report
