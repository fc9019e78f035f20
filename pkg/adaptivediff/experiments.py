"""
Experiment commands behind the command-line front end. Every command takes a
RunConfig and an output directory and returns the list of files it wrote.
"""

import collections
import logging
import math
import os
import time
from multiprocessing import Pool

import numpy as np
from tqdm import tqdm

from adaptivediff.analysis import (ContingencyTable2x2, accumulation_curve,
                                   build_contingency, chi2_record,
                                   path_histogram, score_indicators,
                                   third_order_relation_trace,
                                   write_histogram_csv)
from adaptivediff.controller import run_adaptive, run_baseline
from adaptivediff.latent import (LatentState, ProtocolError, SearchGuardError,
                                 path_from_string, path_to_string,
                                 write_trajectory)
from adaptivediff.metrics import final_errors
from adaptivediff.path_search import (BRUTE_FORCE_LIMIT, SearchTask,
                                      brute_force_search, greedy_search_trace,
                                      run_frozen_path)
from adaptivediff.scheduler import write_plan_csv
from adaptivediff.utils import (config_hash, derive_seed, ensure_dir,
                                read_csv, write_csv, write_json)


logger = logging.getLogger(__name__)

TRACE_HEADER = ['step_index', 'position', 'dx_norm', 'd2x_norm', 'd3x_norm',
                'eps_diff', 'ratio', 'consecutive_skips', 'latent_decision',
                'noise_decision', 'decision']
SWEEP_HEADER = ['delta', 'c_max', 'seed_index', 'seed', 'eval_count',
                'skip_count', 'speedup', 'l1_err', 'rms_err', 'psnr',
                'skip_path']
SUMMARY_HEADER = ['delta', 'c_max', 'runs', 'mean_eval_count',
                  'mean_speedup', 'mean_rms_err', 'mean_psnr']
ORACLE_HEADER = ['N', 'path', 'distance']
INDICATOR_HEADER = ['N', 'indicator', 'chi2', 'p', 'agreement']
RELATION_HEADER = ['step_index', 'eps_diff', 'd3x_norm', 'relative']
COMPARE_HEADER = ['variant', 'strategy', 'T', 'eval_count', 'l1_err',
                  'rms_err', 'psnr']


def _output(cfg, out):
    return ensure_dir(cfg.output if out is None else out)


def cmd_sample(cfg, out=None):
    """
    Runs the full-step baseline and the adaptive sampler from the same x_T
    and noise stream and writes both trajectories, the report and the
    per-step decision trace.

    Arguments
    ---------
    cfg : RunConfig
        Run configuration
    out : string
        Output directory, cfg.output if None

    Returns
    -------
    return : list of string
        Written files
    """
    out = _output(cfg, out)
    tag = cfg.hash
    start = time.perf_counter()
    plan = cfg.build_plan()
    denoiser = cfg.build_denoiser()
    x_T = cfg.initial_latent(plan, cfg.seed)

    baseline, baseline_report = run_baseline(plan, denoiser.fork(), x_T,
                                             cfg.seed)
    adaptive, report = run_adaptive(plan, denoiser, x_T,
                                    cfg.controller_config(), cfg.seed,
                                    reference=baseline)

    files = [os.path.join(out, name) for name in
             ('plan.csv', 'baseline.jsonl', 'adaptive.jsonl', 'report.json',
              'trace.csv', 'relation.csv')]
    write_plan_csv(plan, files[0], tag=tag)
    write_trajectory(baseline, files[1])
    write_trajectory(adaptive, files[2])
    write_json(files[3], {'config_hash': tag, 'config': cfg.as_dict(),
                          'baseline': baseline_report.as_dict(),
                          'adaptive': report.as_dict()})
    write_csv(files[4], TRACE_HEADER,
              ([row[key] for key in TRACE_HEADER] for row in report.trace),
              tag=tag)
    relation, correlation = third_order_relation_trace(baseline)
    write_csv(files[5], RELATION_HEADER, relation, tag=tag)
    logger.info('sample: correlation of prediction change and third-order '
                'difference over the last steps %.3f', correlation)
    logger.info('sample: %i of %i evaluations, speedup %.3f, psnr %.2f dB',
                report.eval_count, plan.T, report.speedup, report.psnr)
    logger.info('sample: wall-clock %.3f s', time.perf_counter() - start)
    return files


def _oracle_values(cfg, n_values):
    n_values = cfg.oracle_N if n_values is None else list(n_values)
    for n in n_values:
        if n < 0 or n > cfg.T - 1:
            raise ValueError('Skip target N = %i outside [0, %i]'
                             % (n, cfg.T - 1))
    return sorted(set(n_values))


def cmd_oracle(cfg, n_values=None, brute_force=False, out=None,
               progress=False):
    """
    Greedy oracle paths for each skip target N from one greedy run, with an
    optional exhaustive cross-check. indicators.csv scores the first- to
    third-order skip indicators of the full-step run against every oracle
    path with at least one skip.

    Arguments
    ---------
    cfg : RunConfig
        Run configuration
    n_values : list of int
        Skip targets, cfg.oracle_N if None
    brute_force : boolean
        Add the exhaustive optimum to every row
    out : string
        Output directory, cfg.output if None
    progress : boolean
        Show progress bars

    Returns
    -------
    return : list of string
        Written files
    """
    n_values = _oracle_values(cfg, n_values)
    if brute_force:
        for n in n_values:
            if math.comb(cfg.T - 1, n) > BRUTE_FORCE_LIMIT:
                raise SearchGuardError(
                    'Brute force over C(%i, %i) paths exceeds the limit of '
                    '%i; use a smaller T or N' % (cfg.T - 1, n,
                                                  BRUTE_FORCE_LIMIT))
    out = _output(cfg, out)
    plan = cfg.build_plan()
    x_T = cfg.initial_latent(plan, cfg.seed)
    task = SearchTask(plan, cfg.build_denoiser(), x_T, max(n_values),
                      seed=cfg.seed)
    trace = greedy_search_trace(task, progress=progress)

    header = list(ORACLE_HEADER)
    if brute_force:
        header += ['brute_force_path', 'brute_force_distance']
    rows = []
    for n in n_values:
        path, distance = trace[n]
        row = [n, path_to_string(path), distance]
        if brute_force:
            exact = SearchTask(plan, cfg.build_denoiser(), x_T, n,
                               seed=cfg.seed)
            best_path, best_distance = brute_force_search(exact, progress)
            row += [path_to_string(best_path), best_distance]
        rows.append(row)
    filename = os.path.join(out, 'oracle.csv')
    write_csv(filename, header, rows, tag=cfg.hash)

    baseline, _ = run_baseline(plan, cfg.build_denoiser(), x_T, cfg.seed)
    scores = []
    for n in n_values:
        if n == 0:
            continue
        for order, record in score_indicators(baseline, trace[n][0]).items():
            scores.append([n, order, record['chi2'], record['p'],
                           record['agreement']])
    indicators = os.path.join(out, 'indicators.csv')
    write_csv(indicators, INDICATOR_HEADER, scores, tag=cfg.hash)
    return [filename, indicators]


def _sweep_seed(args):
    """
    Runs one seed of a sweep: a single baseline and one adaptive run per
    (delta, c_max) cell.
    """
    cfg, deltas, c_maxes, seed_index = args
    seed = derive_seed(cfg.seed, seed_index)
    plan = cfg.build_plan()
    denoiser = cfg.build_denoiser()
    x_T = cfg.initial_latent(plan, seed)
    baseline, _ = run_baseline(plan, denoiser.fork(), x_T, seed)
    results = []
    for delta in deltas:
        for c_max in c_maxes:
            _, report = run_adaptive(plan, denoiser.fork(), x_T,
                                     cfg.controller_config(delta, c_max),
                                     seed, reference=baseline)
            results.append((seed_index, report))
    return results


def run_sweep(cfg, deltas=None, c_maxes=None, seeds=None, jobs=None,
              no_cap=False, progress=False):
    """
    Runs the sweep grid and returns (seed_index, RunReport) pairs sorted by
    (delta, c_max, seed_index).

    Arguments
    ---------
    cfg : RunConfig
        Run configuration
    deltas : list of float
        Threshold grid, cfg.sweep_deltas if None
    c_maxes : list of int
        Skip cap grid, cfg.sweep_c_max if None
    seeds : int
        Number of seeds, cfg.sweep_seeds if None
    jobs : int
        Worker processes, cfg.jobs if None
    no_cap : boolean
        Replace the skip cap grid by c_max = T
    progress : boolean
        Show a progress bar

    Returns
    -------
    return : list
        Sorted (seed_index, RunReport) pairs
    """
    deltas = cfg.sweep_deltas if deltas is None else list(deltas)
    c_maxes = cfg.sweep_c_max if c_maxes is None else list(c_maxes)
    seeds = cfg.sweep_seeds if seeds is None else int(seeds)
    jobs = cfg.jobs if jobs is None else int(jobs)
    if no_cap:
        c_maxes = [cfg.T]
    if not deltas or not c_maxes or seeds < 1:
        raise ValueError('Sweep needs a nonempty delta grid, c_max grid and '
                         'seed count')
    tasks = [(cfg, deltas, c_maxes, s) for s in range(seeds)]
    results = []
    if jobs > 1:
        with Pool(jobs) as pool:
            for chunk in tqdm(pool.imap_unordered(_sweep_seed, tasks),
                              total=len(tasks), desc='sweep',
                              disable=not progress):
                results.extend(chunk)
    else:
        for task in tqdm(tasks, desc='sweep', disable=not progress):
            results.extend(_sweep_seed(task))
    results.sort(key=lambda r: (r[1].delta, r[1].c_max, r[0]))
    return results


def cmd_sweep(cfg, deltas=None, c_maxes=None, seeds=None, jobs=None,
              no_cap=False, out=None, progress=False):
    """
    Writes the sweep rows, the per-cell means and the histogram of
    evaluation counts. See run_sweep() for the arguments.

    Returns
    -------
    return : list of string
        Written files
    """
    out = _output(cfg, out)
    start = time.perf_counter()
    results = run_sweep(cfg, deltas, c_maxes, seeds, jobs, no_cap, progress)
    tag = cfg.hash
    rows = []
    cells = collections.OrderedDict()
    for seed_index, r in results:
        rows.append([r.delta, r.c_max, seed_index, r.seed, r.eval_count,
                     r.skip_count, r.speedup, r.l1_err, r.rms_err, r.psnr,
                     path_to_string(r.skip_path)])
        cells.setdefault((r.delta, r.c_max), []).append(r)
    summary = []
    for (delta, c_max), reports in cells.items():
        summary.append([delta, c_max, len(reports),
                        float(np.mean([r.eval_count for r in reports])),
                        float(np.mean([r.speedup for r in reports])),
                        float(np.mean([r.rms_err for r in reports])),
                        float(np.mean([r.psnr for r in reports]))])
    files = [os.path.join(out, name) for name in
             ('sweep.csv', 'sweep_summary.csv', 'histogram.csv')]
    write_csv(files[0], SWEEP_HEADER, rows, tag=tag)
    write_csv(files[1], SUMMARY_HEADER, summary, tag=tag)
    write_histogram_csv(files[2], path_histogram(r for _, r in results),
                        tag=tag)
    logger.info('sweep: %i runs, wall-clock %.3f s', len(results),
                time.perf_counter() - start)
    return files


def _path_column(row):
    for key in ('skip_path', 'path'):
        if key in row:
            return path_from_string(row[key])
    raise ProtocolError('Row %s has no path column' % row)


def pair_paths(estimated_rows, oracle_rows):
    """
    Pairs every estimated path with the oracle path of the same skip count.

    Arguments
    ---------
    estimated_rows : list of dict
        Rows with a 'skip_path' or 'path' column
    oracle_rows : list of dict
        Rows with a 'path' column, one per skip count

    Returns
    -------
    return : collections.OrderedDict
        Skip count to list of (estimated, oracle) path pairs
    """
    oracle = {}
    for row in oracle_rows:
        path = _path_column(row)
        skips = len(path) - sum(path)
        if skips in oracle:
            raise ProtocolError('Oracle file holds two paths with %i skips'
                                % skips)
        oracle[skips] = path
    pairs = collections.defaultdict(list)
    unmatched = []
    for index, row in enumerate(estimated_rows):
        path = _path_column(row)
        skips = len(path) - sum(path)
        if skips == 0:
            logger.warning('Row %i skips nothing and is left out', index)
            continue
        if skips not in oracle:
            unmatched.append('row %i (%i skips)' % (index, skips))
            continue
        pairs[skips].append((path, oracle[skips]))
    if unmatched:
        raise ProtocolError('No oracle path with a matching skip count for '
                            + ', '.join(unmatched))
    return collections.OrderedDict(sorted(pairs.items()))


def cmd_stats(estimated_file, oracle_file, out):
    """
    Chi-square agreement of estimated and oracle skip paths per skip count.
    The tables of all estimated paths with one skip count are summed.

    Arguments
    ---------
    estimated_file : string
        CSV with estimated paths, typically sweep.csv
    oracle_file : string
        CSV with oracle paths, typically oracle.csv
    out : string
        Output directory

    Returns
    -------
    return : list of string
        Written files
    """
    estimated_rows = read_csv(estimated_file)
    oracle_rows = read_csv(oracle_file)
    tag = config_hash({'estimated': estimated_rows, 'oracle': oracle_rows})
    series = []
    for skips, pairs in pair_paths(estimated_rows, oracle_rows).items():
        counts = sum(build_contingency(e, o).counts for e, o in pairs)
        record = chi2_record(ContingencyTable2x2(counts))
        record.update({'skip_count': skips, 'pairs': len(pairs)})
        series.append(record)
    out = ensure_dir(out)
    files = [os.path.join(out, 'stats.json'), os.path.join(out, 'stats.csv')]
    write_json(files[0], {'config_hash': tag, 'series': series})
    write_csv(files[1], ['skip_count', 'pairs', 'chi2', 'p'],
              ([r['skip_count'], r['pairs'], r['chi2'], r['p']]
               for r in series), tag=tag)
    return files


def cmd_compare_strategies(cfg, out=None):
    """
    Compares four update strategies on one x_T: (a) the full-step baseline,
    (b) the adaptive sampler skipping predictions but keeping every update,
    (c) a baseline with half the steps and (d) skipping both prediction and
    update at the steps (b) skipped.

    Arguments
    ---------
    cfg : RunConfig
        Run configuration
    out : string
        Output directory, cfg.output if None

    Returns
    -------
    return : list of string
        Written files
    """
    out = _output(cfg, out)
    plan = cfg.build_plan()
    denoiser = cfg.build_denoiser()
    x_T = cfg.initial_latent(plan, cfg.seed)

    full, report_a = run_baseline(plan, denoiser.fork(), x_T, cfg.seed)
    adaptive, report_b = run_adaptive(plan, denoiser.fork(), x_T,
                                      cfg.controller_config(), cfg.seed,
                                      reference=full)
    if plan.T % 2:
        logger.warning('Odd T = %i, the half-step baseline uses %i steps',
                       plan.T, plan.T//2)
    half_plan = cfg.build_plan(max(1, plan.T//2))
    x_half = LatentState(x_T.values, half_plan.T, side=x_T.side)
    half, report_c = run_baseline(half_plan, denoiser.fork(), x_half,
                                  cfg.seed)
    frozen_denoiser = denoiser.fork()
    frozen, _ = run_frozen_path(plan, frozen_denoiser, x_T, adaptive.evaluated,
                                cfg.seed)

    rows = []
    variants = [('a', 'full', plan.T, report_a.eval_count, full),
                ('b', 'skip-noise-keep-update', plan.T, report_b.eval_count,
                 adaptive),
                ('c', 'half-steps', half_plan.T, report_c.eval_count, half),
                ('d', 'skip-noise-and-update', plan.T,
                 frozen_denoiser.eval_counter, frozen)]
    for variant, strategy, T, evals, trajectory in variants:
        errors = final_errors(full.final, trajectory.final)
        rows.append([variant, strategy, T, evals, errors['l1_err'],
                     errors['rms_err'], errors['psnr']])
    files = [os.path.join(out, 'compare.csv'),
             os.path.join(out, 'accumulation.csv')]
    write_csv(files[0], COMPARE_HEADER, rows, tag=cfg.hash)
    curve = accumulation_curve(plan, denoiser.fork(), x_T, adaptive.evaluated,
                               cfg.seed)
    write_csv(files[1], ['step_index', 'error'], curve, tag=cfg.hash)
    return files
