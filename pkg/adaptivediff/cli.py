import argparse
import logging
import sys

from adaptivediff.experiments import (cmd_compare_strategies, cmd_oracle,
                                      cmd_sample, cmd_stats, cmd_sweep)
from adaptivediff.latent import AdaptiveDiffusionError
from adaptivediff.param_parser import ParamParser, RunConfig


logger = logging.getLogger('adaptivediff')


def _float_list(value):
    return [float(v) for v in value.split(',') if v.strip()]


def _int_list(value):
    return [int(v) for v in value.split(',') if v.strip()]


def _n_range(value):
    lo, _, hi = value.partition('..')
    return list(range(int(lo), int(hi or lo)+1))


def build_parser():
    """
    Command-line parser with one subcommand per experiment.
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='run configuration (.cfg)')
    common.add_argument('--seed', type=int, help='master seed')
    common.add_argument('--out', help='output directory')
    common.add_argument('--jobs', type=int, help='worker processes')
    common.add_argument('--delta', type=float, help='skipping threshold')
    common.add_argument('--c-max', dest='c_max', type=int,
                        help='maximum consecutive skips')
    common.add_argument('-v', '--verbose', action='count', default=0)
    common.add_argument('-q', '--quiet', action='store_true')

    parser = argparse.ArgumentParser(
        prog='adaptivediff',
        description='Adaptive skipping of noise predictions in diffusion '
                    'samplers')
    sub = parser.add_subparsers(dest='command', required=True)

    sub.add_parser('sample', parents=[common],
                   help='baseline and adaptive run from one x_T')

    oracle = sub.add_parser('oracle', parents=[common],
                            help='greedy oracle skip paths')
    group = oracle.add_mutually_exclusive_group()
    group.add_argument('--n', type=_int_list, dest='n_values',
                       help='skip targets, comma separated')
    group.add_argument('--n-range', type=_n_range, dest='n_values',
                       help='inclusive skip target range lo..hi')
    oracle.add_argument('--brute-force', action='store_true',
                        help='add the exhaustive optimum')

    sweep = sub.add_parser('sweep', parents=[common],
                           help='delta x c_max x seed grid')
    sweep.add_argument('--deltas', type=_float_list)
    sweep.add_argument('--c-maxes', dest='c_maxes', type=_int_list)
    sweep.add_argument('--seeds', type=int, help='number of seeds')
    sweep.add_argument('--no-cap', action='store_true',
                       help='use c_max = T')

    stats = sub.add_parser('stats', parents=[common],
                           help='chi-square agreement of skip paths')
    stats.add_argument('estimated', help='CSV with estimated paths')
    stats.add_argument('oracle', help='CSV with oracle paths')

    sub.add_parser('compare', parents=[common],
                   help='compare four update strategies')
    return parser


def configure_logging(verbose=0, quiet=False):
    level = logging.WARNING if quiet else\
        (logging.DEBUG if verbose else logging.INFO)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format='%(asctime)s %(name)s %(levelname)s '
                               '%(message)s')


def run(args):
    """
    Executes a parsed command and returns the written files.
    """
    overrides = {'seed': args.seed, 'output': args.out, 'jobs': args.jobs,
                 'delta': args.delta, 'c_max': args.c_max}
    cfg = RunConfig(ParamParser(args.config), overrides)
    progress = sys.stderr.isatty() and not args.quiet
    if args.command == 'sample':
        return cmd_sample(cfg)
    elif args.command == 'oracle':
        return cmd_oracle(cfg, args.n_values, args.brute_force,
                          progress=progress)
    elif args.command == 'sweep':
        return cmd_sweep(cfg, args.deltas, args.c_maxes, args.seeds,
                         no_cap=args.no_cap, progress=progress)
    elif args.command == 'stats':
        return cmd_stats(args.estimated, args.oracle, cfg.output)
    return cmd_compare_strategies(cfg)


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        files = run(args)
    except (AdaptiveDiffusionError, ValueError, OSError) as e:
        logger.error('%s: %s', type(e).__name__, e)
        return 1
    for filename in files:
        logger.info('Wrote %s', filename)
    return 0


if __name__ == '__main__':
    sys.exit(main())
