import itertools
import logging
import math

from tqdm import tqdm

from adaptivediff.controller import integrate
from adaptivediff.latent import (L1, NORM_KINDS, LatentState,
                                 NonFiniteLatentError, SearchGuardError,
                                 Trajectory, first_diff, latent_norm)
from adaptivediff.scheduler import NoiseStream, apply_update


logger = logging.getLogger(__name__)

# Largest number of candidate paths brute_force_search() enumerates
BRUTE_FORCE_LIMIT = 10**6


class SearchTask(object):
    """
    Oracle search problem: find the path with N skipped predictions whose
    final latent is closest to the full-step final latent.

    Arguments
    ---------
    plan : SchedulerPlan
        Sampler plan
    denoiser : Denoiser
        Live noise prediction handle
    x_T : LatentState
        Initial latent
    target_skips : int
        Number N of skipped predictions
    distance : string
        'L1' or 'L2' distance on final latents
    seed : int
        Seed of the injected-noise stream
    """

    def __init__(self, plan, denoiser, x_T, target_skips, distance=L1,
                 seed=0):
        if target_skips < 0 or target_skips > plan.T - 1:
            raise ValueError('Target skip count must lie in [0, %i], got %i'
                             % (plan.T - 1, target_skips))
        if distance not in NORM_KINDS:
            raise ValueError('Unknown distance %r' % distance)
        self.plan = plan
        self.denoiser = denoiser
        self.x_T = x_T
        self.target_skips = int(target_skips)
        self.distance = distance
        self.seed = seed
        self._reference = None


    @property
    def reference(self):
        """
        Final latent of the full-step run, computed once.
        """
        if self._reference is None:
            _, self._reference = run_with_path(self.plan, self.denoiser,
                                               self.x_T,
                                               [True]*self.plan.T, self.seed)
        return self._reference


    def distance_of(self, path):
        """
        Distance of the final latent under path to the full-step final latent.
        """
        _, final = run_with_path(self.plan, self.denoiser, self.x_T, path,
                                 self.seed)
        return latent_norm(first_diff(final, self.reference), self.distance)


def _check_path(plan, path):
    if len(path) != plan.T:
        raise ValueError('Path of length %i does not fit a plan with %i steps'
                         % (len(path), plan.T))
    if not path[0]:
        raise ValueError('The first update has no cached noise to reuse; '
                         'path[0] must be True')


def run_with_path(plan, denoiser, x_T, path, seed=0):
    """
    Executes a fixed skip path: the denoiser is evaluated exactly where the
    path is True and the last prediction is reused elsewhere.

    Arguments
    ---------
    plan : SchedulerPlan
        Sampler plan
    denoiser : Denoiser
        Noise prediction handle
    x_T : LatentState
        Initial latent
    path : list of boolean
        Skip path of length T
    seed : int
        Seed of the injected-noise stream

    Returns
    -------
    return : tuple
        Trajectory and its final latent
    """
    _check_path(plan, path)
    trajectory = integrate(plan, denoiser, x_T, seed, lambda j: path[j])
    return trajectory, trajectory.final


def run_frozen_path(plan, denoiser, x_T, path, seed=0):
    """
    Skips both the noise prediction and the latent update where the path is
    False: the latent is carried over unchanged and no noise is injected.

    Arguments
    ---------
    plan : SchedulerPlan
        Sampler plan
    denoiser : Denoiser
        Noise prediction handle
    x_T : LatentState
        Initial latent
    path : list of boolean
        Skip path of length T
    seed : int
        Seed of the injected-noise stream

    Returns
    -------
    return : tuple
        Trajectory and its final latent
    """
    _check_path(plan, path)
    stream = NoiseStream(seed)
    trajectory = Trajectory([x_T])
    x = x_T
    cached = None
    for j in range(plan.T):
        i = plan.T - j
        if path[j]:
            cached = denoiser.predict(plan, i, x)
            x = apply_update(plan, i, x, cached,
                             stream.injected(plan, i, x.dim))
            if not x.is_finite():
                norm = float(latent_norm(x.values))
                logger.error('Non-finite latent at step %i (norm %s)',
                             x.step_index, norm)
                raise NonFiniteLatentError(x.step_index, norm)
        else:
            x = LatentState(x.values, i-1, side=x.side)
        trajectory.latents.append(x)
        trajectory.noises.append(cached)
        trajectory.evaluated.append(bool(path[j]))
    return trajectory, trajectory.final


def greedy_search_trace(task, progress=False):
    """
    Greedy oracle search. Starting from the all-evaluate path, each round
    tentatively skips every still evaluated update except the first, runs the
    path and keeps the flip with the smallest final-latent distance (ties to
    the lowest index). Flipped updates are never re-enabled.

    Arguments
    ---------
    task : SearchTask
        Search problem
    progress : boolean
        Show a progress bar over the rounds

    Returns
    -------
    return : list
        (path, distance) after 0, 1, ..., N flips
    """
    plan = task.plan
    path = [True]*plan.T
    trace = [(list(path), 0.0)]
    for _ in tqdm(range(task.target_skips), desc='greedy', disable=not progress):
        best_index, best_distance = None, None
        for j in range(1, plan.T):
            if not path[j]:
                continue
            path[j] = False
            distance = task.distance_of(path)
            path[j] = True
            if best_distance is None or distance < best_distance:
                best_index, best_distance = j, distance
        path[best_index] = False
        logger.debug('Greedy flip %i at distance %s', best_index,
                     best_distance)
        trace.append((list(path), best_distance))
    return trace


def greedy_search(task, progress=False):
    """
    Returns the path of greedy_search_trace() with exactly N skips.
    """
    return greedy_search_trace(task, progress)[-1][0]


def brute_force_search(task, progress=False):
    """
    Exhaustive oracle: enumerates all paths with N skips (the first update
    always evaluated) and returns the distance-minimal one, ties going to the
    lexicographically smallest path.

    Arguments
    ---------
    task : SearchTask
        Search problem
    progress : boolean
        Show a progress bar over the candidates

    Returns
    -------
    return : tuple
        Optimal path and its distance
    """
    T, N = task.plan.T, task.target_skips
    count = math.comb(T-1, N)
    if count > BRUTE_FORCE_LIMIT:
        raise SearchGuardError(
            'Brute force over C(%i, %i) = %i paths exceeds the limit of %i; '
            'use a smaller T or N' % (T-1, N, count, BRUTE_FORCE_LIMIT))
    best_path, best_distance = None, None
    # combinations() yields skip sets in lexicographic path order
    for skips in tqdm(itertools.combinations(range(1, T), N), total=count,
                      desc='brute force', disable=not progress):
        path = [True]*T
        for j in skips:
            path[j] = False
        distance = task.distance_of(path)
        if best_distance is None or distance < best_distance:
            best_path, best_distance = path, distance
    return best_path, best_distance
