import collections
import logging

import numpy as np
from scipy.special import erfc
from scipy.stats import pearsonr

from adaptivediff.controller import run_baseline
from adaptivediff.denoiser import gmm_epsilon
from adaptivediff.latent import (L2, DiffWindow, ProtocolError, first_diff,
                                 latent_norm, second_diff, third_diff)
from adaptivediff.metrics import PSNR_CAP, final_errors, psnr
from adaptivediff.path_search import run_with_path
from adaptivediff.utils import write_csv


logger = logging.getLogger(__name__)

__all__ = ['PSNR_CAP', 'psnr', 'final_errors',
           'one_step_skip_error_exact', 'measured_differences',
           'estimate_time_lipschitz', 'k_step_coefficients',
           'k_step_error_bound', 'ErrorBoundReport', 'error_bound_report',
           'contiguous_skip_path', 'accumulation_curve',
           'third_order_relation_trace', 'INDICATORS', 'indicator_series',
           'indicator_path', 'score_indicators', 'ContingencyTable2x2',
           'build_contingency', 'chi2_2x2', 'chi2_record', 'path_histogram',
           'write_histogram_csv']

SKIP = 0
EVAL = 1


def one_step_skip_error_exact(plan, i, eps_prev, eps_curr, kind=L2):
    """
    Exact latent error |g(i-1)*(eps_prev - eps_curr)| of reusing the
    prediction of step i+1 in the update from step i.

    Arguments
    ---------
    plan : SchedulerPlan
        Sampler plan
    i : int
        Step whose prediction is skipped
    eps_prev : array_like
        Cached prediction eps(x_{i+1}, t_{i+1})
    eps_curr : array_like
        Skipped prediction eps(x_i, t_i)
    kind : string
        Norm kind

    Returns
    -------
    return : float
        Error of x_{i-1}
    """
    if i < 1 or i > plan.T:
        raise IndexError('Step %i outside [1, %i]' % (i, plan.T))
    return abs(float(plan.g[i-1]))*latent_norm(first_diff(eps_prev, eps_curr),
                                              kind)


def measured_differences(plan, trajectory, kind=L2):
    """
    Returns the arrays dx[j] = |x_j - x_{j+1}| and dt[j] = |t_j - t_{j+1}|,
    j = 0, ..., T-1, along a trajectory.
    """
    T = plan.T
    if trajectory.T != T:
        raise ValueError('Trajectory with %i updates does not fit plan with '
                         '%i steps' % (trajectory.T, T))
    # latents[m] holds x_{T-m}
    dx = np.array([latent_norm(first_diff(trajectory.latents[T-j],
                                          trajectory.latents[T-j-1]), kind)
                   for j in range(T)])
    dt = np.abs(np.diff(plan.t_grid))
    return dx, dt


def estimate_time_lipschitz(plan, model, trajectory, inflation=2.0, kind=L2):
    """
    Finite-difference estimate of the temporal Lipschitz constant of the
    mixture noise prediction along a trajectory,
    max_j |eps(x_j, t_{j+1}) - eps(x_j, t_j)|/|t_{j+1} - t_j|,
    inflated by a safety factor.

    Arguments
    ---------
    plan : SchedulerPlan
        Sampler plan
    model : GmmModel
        Clean-data mixture
    trajectory : Trajectory
        Full-step trajectory on plan
    inflation : float
        Factor applied to the largest difference quotient
    kind : string
        Norm kind

    Returns
    -------
    return : float
        Temporal Lipschitz estimate
    """
    T = plan.T
    quotients = []
    for j in range(T):
        x = trajectory.latents[T-j]
        dt = abs(plan.t_grid[j+1] - plan.t_grid[j])
        de = gmm_epsilon(model, x, plan.noise_level(j+1))\
            - gmm_epsilon(model, x, plan.noise_level(j))
        quotients.append(latent_norm(de, kind)/dt)
    return inflation*max(quotients)


def k_step_coefficients(plan, i, k):
    """
    Weights of the measured differences in the k-step skip bound.

    Skipping the predictions of steps i, ..., i-k+1 perturbs x_{i-k} by
    sum_m h(i-m)*(eps(x_{i+1}) - eps(x_{i-m+1})) with
    h(i-m) = |g(i-m)|*prod_{j=1..k-m}|f(i-m-j)|, and the difference of
    predictions telescopes over the differences l = 1, ..., m.

    Returns
    -------
    return : numpy.array
        c[l-1] = sum_{m=l..k} h(i-m), the weight of |Δx_{i-l+1}| and
        |Δt_{i-l+1}|
    """
    if k < 1:
        raise ValueError('k must be at least 1, got %i' % k)
    if i > plan.T - 1 or i - k < 0:
        raise ValueError('Skipping %i steps from step %i needs steps %i to %i '
                         'within [0, %i]' % (k, i, i-k, i+1, plan.T))
    h = np.empty(k)
    for m in range(1, k+1):
        h[m-1] = abs(plan.g[i-m])*np.prod(
            [abs(plan.f[i-m-j]) for j in range(1, k-m+1)])
    return np.cumsum(h[::-1])[::-1]


def k_step_error_bound(plan, dx, dt, L, i, k, L_t=None):
    """
    Upper bound on the error of x_{i-k} after skipping the predictions of the
    k updates from steps i, ..., i-k+1, assembled from measured differences.

    Arguments
    ---------
    plan : SchedulerPlan
        Sampler plan
    dx : array_like
        dx[j] = |x_j - x_{j+1}| along the full-step trajectory
    dt : array_like
        dt[j] = |t_j - t_{j+1}|
    L : float
        Spatial Lipschitz constant of the noise prediction
    i : int
        First skipped step
    k : int
        Number of consecutive skipped predictions
    L_t : float
        Temporal Lipschitz constant, L if None

    Returns
    -------
    return : float
        Error bound; for k = 1, |g(i-1)|*(L*dx[i] + L_t*dt[i])
    """
    if L_t is None:
        L_t = L
    coeffs = k_step_coefficients(plan, i, k)
    dx = np.asarray(dx, dtype=float)
    dt = np.asarray(dt, dtype=float)
    if dx.size < i+1 or dt.size < i+1:
        raise ValueError('History of %i differences is too short for step %i'
                         % (min(dx.size, dt.size), i))
    bound = 0.0
    for l in range(1, k+1):
        j = i - l + 1
        bound += coeffs[l-1]*(L*dx[j] + L_t*dt[j])
    return float(bound)


def contiguous_skip_path(T, start, length):
    """
    Path skipping the predictions of updates start, ..., start+length-1.
    """
    if start < 1 or length < 0 or start + length > T:
        raise ValueError('Cannot skip %i updates from position %i in %i steps'
                         % (length, start, T))
    path = [True]*T
    for j in range(start, start+length):
        path[j] = False
    return path


class ErrorBoundReport(object):
    """
    Measured and predicted error of one k-step skip experiment.

    Arguments
    ---------
    i : int
        First skipped step
    k : int
        Number of skipped predictions
    measured : float
        Paired-run error of x_{i-k}
    exact_one_step : float
        Exact one-step identity, the measured error at k = 1
    bound : float
        Assembled k-step bound
    """

    def __init__(self, i, k, measured, exact_one_step, bound):
        self.i = i
        self.k = k
        self.measured = measured
        self.exact_one_step = exact_one_step
        self.bound = bound


    @property
    def holds(self):
        return self.measured <= self.bound


def error_bound_report(plan, denoiser, x_T, i, k, L, L_t=None, seed=0):
    """
    Runs the full-step and the k-step skipped trajectory from x_T and compares
    the error of x_{i-k} with the exact one-step identity and the k-step
    bound.

    Arguments
    ---------
    plan : SchedulerPlan
        Sampler plan
    denoiser : Denoiser
        Noise prediction handle
    x_T : LatentState
        Initial latent
    i : int
        First skipped step
    k : int
        Number of skipped predictions
    L : float
        Spatial Lipschitz constant
    L_t : float
        Temporal Lipschitz constant, L if None
    seed : int
        Seed of the injected-noise stream

    Returns
    -------
    return : ErrorBoundReport
        Measured error, identity and bound
    """
    T = plan.T
    reference, _ = run_baseline(plan, denoiser, x_T, seed)
    path = contiguous_skip_path(T, T-i, k)
    skipped, _ = run_with_path(plan, denoiser, x_T, path, seed)
    measured = latent_norm(first_diff(skipped.latents[T-i+k],
                                      reference.latents[T-i+k]))
    exact = one_step_skip_error_exact(plan, i, reference.noise_for_step(i+1),
                                      reference.noise_for_step(i))
    dx, dt = measured_differences(plan, reference)
    bound = k_step_error_bound(plan, dx, dt, L, i, k, L_t)
    return ErrorBoundReport(i, k, measured, exact, bound)


def accumulation_curve(plan, denoiser, x_T, path, seed=0, kind=L2):
    """
    Per-step latent error of a skipped trajectory against its paired
    full-step trajectory.

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
    kind : string
        Norm kind

    Returns
    -------
    return : list
        (step index, error) for steps T, ..., 0
    """
    reference, _ = run_baseline(plan, denoiser.fork(), x_T, seed)
    skipped, _ = run_with_path(plan, denoiser, x_T, path, seed)
    return [(ref.step_index, latent_norm(first_diff(x, ref), kind))
            for x, ref in zip(skipped.latents, reference.latents)]


RelationRow = collections.namedtuple(
    'RelationRow', ['step', 'eps_diff', 'd3x', 'relative'])


def third_order_relation_trace(trajectory, kind=L2, fraction=1/3.):
    """
    Aligned series of the prediction change |eps(x_i) - eps(x_{i+1})| and
    the third-order difference |Δ³x_{i-1}| along a full-step trajectory, with
    their Pearson correlation over the last steps.

    Arguments
    ---------
    trajectory : Trajectory
        Trajectory that evaluated every step
    kind : string
        Norm kind
    fraction : float
        Share of the final rows used for the correlation

    Returns
    -------
    return : tuple
        List of RelationRow and the correlation, NaN when undefined
    """
    if not all(trajectory.evaluated):
        raise ValueError('Relation trace needs a trajectory without skips')
    window = DiffWindow()
    rows = []
    for p, latent in enumerate(trajectory.latents):
        window.push(latent)
        if not window.full:
            continue
        # window holds latents[p-3..p] = x_{i+2}, x_{i+1}, x_i, x_{i-1}
        d1 = latent_norm(window.middle_diff(), kind)
        d3 = latent_norm(third_diff(window), kind)
        de = latent_norm(first_diff(trajectory.noises[p-1],
                                    trajectory.noises[p-2]), kind)
        rows.append(RelationRow(latent.step_index, de, d3,
                                d3/d1 if d1 > 0 else float('nan')))
    tail = rows[len(rows) - int(round(fraction*len(rows))):]
    return rows, _correlation([r.eps_diff for r in tail],
                              [r.d3x for r in tail])


def _correlation(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.size < 2 or np.std(a) == 0 or np.std(b) == 0:
        return float('nan')
    return float(pearsonr(a, b)[0])


INDICATORS = ('eps1', 'x1', 'x2', 'x3')


def _relative(a, b):
    if b > 0:
        return a/b
    return 0.0 if a == 0 else np.inf


def indicator_series(trajectory, order, kind=L2):
    """
    Relative size of a skip indicator at every update position of a
    full-step trajectory; small values mark steps that are cheap to skip.

    'eps1' is |eps(x_i) - eps(x_{i+1})|/|eps(x_{i+1})| and 'x1' is
    |Δx_i|/|x_i|. 'x2' and 'x3' are the second and third differences of
    the last four latents relative to their middle first difference, 'x3'
    being the ratio the skip criterion compares with delta.

    Arguments
    ---------
    trajectory : Trajectory
        Trajectory that evaluated every step
    order : string
        One of INDICATORS
    kind : string
        Norm kind

    Returns
    -------
    return : numpy.array
        Value per position j = T - i, NaN where the history is too short
    """
    if order not in INDICATORS:
        raise ValueError('Unknown indicator %r, expected one of %s'
                         % (order, INDICATORS))
    if not all(trajectory.evaluated):
        raise ValueError('Indicators need a trajectory without skips')
    latents, noises = trajectory.latents, trajectory.noises
    values = np.full(trajectory.T, np.nan)
    window = DiffWindow()
    for j in range(trajectory.T):
        window.push(latents[j])
        if j == 0:
            continue
        if order == 'eps1':
            values[j] = _relative(
                latent_norm(first_diff(noises[j], noises[j-1]), kind),
                latent_norm(noises[j-1], kind))
        elif order == 'x1':
            values[j] = _relative(
                latent_norm(first_diff(latents[j], latents[j-1]), kind),
                latent_norm(latents[j], kind))
        elif window.full:
            d1 = latent_norm(window.middle_diff(), kind)
            dk = second_diff(window) if order == 'x2' else third_diff(window)
            values[j] = _relative(latent_norm(dk, kind), d1)
    return values


def indicator_path(values, skips):
    """
    Skip path that skips the positions with the smallest indicator values,
    ties going to the earlier position.

    Arguments
    ---------
    values : array_like
        Indicator per position, NaN for positions that cannot skip
    skips : int
        Number of skipped predictions

    Returns
    -------
    return : list of boolean
        True for evaluate
    """
    values = np.asarray(values, dtype=float)
    candidates = [j for j in range(values.size) if not np.isnan(values[j])]
    if skips < 0 or skips > len(candidates):
        raise ValueError('Cannot skip %i of %i candidate positions'
                         % (skips, len(candidates)))
    candidates.sort(key=lambda j: (values[j], j))
    path = [True]*values.size
    for j in candidates[:skips]:
        path[j] = False
    return path


def score_indicators(trajectory, oracle_path, kind=L2, orders=INDICATORS):
    """
    Agreement of the paths picked by each indicator with an oracle path of
    the same skip count. Indicators with too few candidate positions are left
    out.

    Arguments
    ---------
    trajectory : Trajectory
        Full-step trajectory the oracle path was searched on
    oracle_path : list of boolean
        Oracle skip path with at least one skip
    kind : string
        Norm kind
    orders : sequence of string
        Indicators to score

    Returns
    -------
    return : collections.OrderedDict
        Indicator to chi2_record() plus 'agreement', the share of positions
        with equal decisions
    """
    if len(oracle_path) != trajectory.T:
        raise ProtocolError('Oracle path of length %i for a trajectory of %i '
                            'steps' % (len(oracle_path), trajectory.T))
    skips = len(oracle_path) - sum(bool(v) for v in oracle_path)
    scores = collections.OrderedDict()
    for order in orders:
        values = indicator_series(trajectory, order, kind)
        if skips > np.count_nonzero(~np.isnan(values)):
            logger.debug('Indicator %s cannot skip %i steps', order, skips)
            continue
        table = build_contingency(indicator_path(values, skips), oracle_path)
        record = chi2_record(table)
        record['agreement'] = float(np.trace(table.counts))/table.total
        scores[order] = record
    return scores


class ContingencyTable2x2(object):
    """
    Agreement of an estimated and an oracle skip path. Rows are the estimated
    decision and columns the oracle decision, index 0 for skip and 1 for
    evaluate.

    Arguments
    ---------
    counts : array_like
        2 x 2 nonnegative integer counts
    """

    labels = ('skip', 'eval')

    def __init__(self, counts):
        counts = np.array(counts)
        if counts.shape != (2, 2):
            raise ValueError('Contingency table must be 2 x 2, got %s'
                             % (counts.shape,))
        if np.any(counts < 0) or np.any(counts != np.round(counts)):
            raise ValueError('Counts must be nonnegative integers')
        counts = counts.astype(int)
        if counts.sum() == 0:
            raise ValueError('Contingency table is empty')
        self.counts = counts


    @property
    def total(self):
        return int(self.counts.sum())


    def expected(self):
        """
        Expected counts under independence of the marginals.
        """
        rows = self.counts.sum(axis=1)
        cols = self.counts.sum(axis=0)
        return np.outer(rows, cols)/float(self.total)


    def as_list(self):
        return self.counts.tolist()


def build_contingency(estimated, oracle):
    """
    Counts the steps where the estimated decision is r and the oracle
    decision is c.

    Arguments
    ---------
    estimated : list of boolean
        Estimated skip path, True for evaluate
    oracle : list of boolean
        Oracle skip path with the same number of skips

    Returns
    -------
    return : ContingencyTable2x2
        Agreement table
    """
    if len(estimated) != len(oracle):
        raise ProtocolError('Paths of length %i and %i cannot be paired'
                            % (len(estimated), len(oracle)))
    skips = [len(p) - sum(bool(v) for v in p) for p in (estimated, oracle)]
    if skips[0] != skips[1]:
        raise ProtocolError('Estimated path skips %i steps, oracle path %i'
                            % tuple(skips))
    counts = np.zeros((2, 2), dtype=int)
    for e, o in zip(estimated, oracle):
        counts[EVAL if e else SKIP, EVAL if o else SKIP] += 1
    return ContingencyTable2x2(counts)


def chi2_2x2(table):
    """
    Pearson chi-square test of independence with one degree of freedom and no
    continuity correction.

    Arguments
    ---------
    table : ContingencyTable2x2
        Agreement table

    Returns
    -------
    return : tuple
        Statistic and p-value erfc(sqrt(chi2/2))
    """
    counts = table.counts
    if np.any(counts.sum(axis=0) == 0) or np.any(counts.sum(axis=1) == 0):
        raise ProtocolError('Contingency table %s has a zero marginal'
                            % table.as_list())
    expected = table.expected()
    chi2 = float(np.sum((counts - expected)**2/expected))
    p = float(erfc(np.sqrt(chi2/2)))
    return chi2, min(1.0, max(0.0, p))


def chi2_record(table):
    chi2, p = chi2_2x2(table)
    return {'chi2': chi2, 'p': p, 'dof': 1, 'table': table.as_list()}


def path_histogram(reports):
    """
    Frequency of evaluation counts over a collection of runs.

    Arguments
    ---------
    reports : iterable of RunReport
        Run reports

    Returns
    -------
    return : collections.OrderedDict
        Evaluation count to number of runs, sorted by count
    """
    counter = collections.Counter(r.eval_count for r in reports)
    if not counter:
        raise ValueError('Histogram needs at least one run')
    return collections.OrderedDict(sorted(counter.items()))


def write_histogram_csv(filename, histogram, tag=None):
    write_csv(filename, ['eval_count', 'runs'], histogram.items(), tag=tag)
