"""
Figures from the CSV files written by the experiment commands. Only
postprocess.py imports this module; the commands themselves never plot.
"""

import logging

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np

from adaptivediff.latent import path_from_string
from adaptivediff.utils import read_csv


logger = logging.getLogger(__name__)


def _column(rows, key):
    return np.array([float(r[key]) if r[key] != '' else np.nan for r in rows])


def _save(fig, output):
    logger.info('Saving plot to %s', output)
    fig.tight_layout()
    fig.savefig(output)
    plt.close(fig)


def plot_trace(trace_file, output):
    """
    Plots the first- to third-order latent differences, the prediction
    change and the decisions of an adaptive run.

    Arguments
    ---------
    trace_file : string
        trace.csv written by the sample command
    output : string
        File name to store plot
    """
    rows = read_csv(trace_file)
    step = _column(rows, 'step_index')
    decision = _column(rows, 'decision').astype(bool)
    fig, (ax, ax_ratio) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    ax.semilogy(step, _column(rows, 'dx_norm'), label='|Δx|')
    ax.semilogy(step, _column(rows, 'd2x_norm'), label='|Δ²x|')
    ax.semilogy(step, _column(rows, 'd3x_norm'), label='|Δ³x|')
    ax.semilogy(step, _column(rows, 'eps_diff'), ':', label='|Δε|')
    ax.legend()
    ax_ratio.plot(step, _column(rows, 'ratio'), 'k-')
    ax_ratio.plot(step[~decision], _column(rows, 'ratio')[~decision], 'o',
                  color='tab:red', label='skipped')
    ax_ratio.set_xlabel('step')
    ax_ratio.set_ylabel('|Δ³x|/|Δx|')
    ax_ratio.set_yscale('log')
    ax_ratio.legend()
    ax.invert_xaxis()
    _save(fig, output)


def plot_relation(relation_file, output):
    """
    Plots the prediction change and the third-order difference against the
    step index.
    """
    rows = read_csv(relation_file)
    step = _column(rows, 'step_index')
    fig = plt.figure(figsize=(8, 4))
    ax = fig.gca()
    ax.semilogy(step, _column(rows, 'eps_diff'), label='|Δε|')
    ax.semilogy(step, _column(rows, 'd3x_norm'), label='|Δ³x|')
    ax.set_xlabel('step')
    ax.invert_xaxis()
    ax.legend()
    _save(fig, output)


def plot_accumulation(accumulation_file, output):
    rows = read_csv(accumulation_file)
    fig = plt.figure(figsize=(8, 4))
    ax = fig.gca()
    ax.plot(_column(rows, 'step_index'), _column(rows, 'error'), 'k.-')
    ax.set_xlabel('step')
    ax.set_ylabel('latent error')
    ax.invert_xaxis()
    _save(fig, output)


def plot_paths(paths_file, output, column='path', label='N'):
    """
    Shows skip paths as an image, one row per path, evaluated steps dark.

    Arguments
    ---------
    paths_file : string
        CSV with a column of E/S path strings
    output : string
        File name to store plot
    column : string
        Name of the path column
    label : string
        Column used to label the rows
    """
    rows = read_csv(paths_file)
    M = np.array([path_from_string(r[column]) for r in rows], dtype=float)
    fig = plt.figure(figsize=(8, 1 + 0.3*len(rows)))
    ax = fig.gca()
    ax.imshow(M, cmap='Greys', aspect='auto', interpolation='nearest')
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels([r[label] for r in rows])
    ax.set_xlabel('update position')
    ax.set_ylabel(label)
    _save(fig, output)


def plot_histogram(histogram_file, output):
    rows = read_csv(histogram_file)
    fig = plt.figure(figsize=(6, 4))
    ax = fig.gca()
    ax.bar(_column(rows, 'eval_count'), _column(rows, 'runs'), width=0.8)
    ax.set_xlabel('denoiser evaluations')
    ax.set_ylabel('runs')
    _save(fig, output)


def plot_stats(stats_file, output):
    """
    Plots chi-square statistic and p-value against the skip count.
    """
    rows = read_csv(stats_file)
    skips = _column(rows, 'skip_count')
    fig, (ax, ax_p) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    ax.plot(skips, _column(rows, 'chi2'), 'k.-')
    ax.set_ylabel('χ²')
    ax_p.semilogy(skips, _column(rows, 'p'), 'k.-')
    ax_p.set_xlabel('skip count')
    ax_p.set_ylabel('p')
    _save(fig, output)


def plot_indicators(indicators_file, output):
    """
    Plots the agreement of each skip indicator with the oracle paths against
    the skip count.
    """
    rows = read_csv(indicators_file)
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in sorted(set(r['indicator'] for r in rows)):
        subset = [r for r in rows if r['indicator'] == name]
        ax.plot(_column(subset, 'N'), _column(subset, 'agreement'), '.-',
                label=name)
    ax.set_xlabel('skip count')
    ax.set_ylabel('agreement with oracle')
    ax.legend()
    _save(fig, output)
