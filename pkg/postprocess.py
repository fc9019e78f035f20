import logging
import os
import sys

from adaptivediff.plotting import (plot_accumulation, plot_histogram,
                                   plot_indicators, plot_paths, plot_relation,
                                   plot_stats, plot_trace)


PLOTS = [
    ('trace.csv', plot_trace, {}),
    ('relation.csv', plot_relation, {}),
    ('accumulation.csv', plot_accumulation, {}),
    ('oracle.csv', plot_paths, {}),
    ('sweep.csv', plot_paths, {'column': 'skip_path', 'label': 'seed_index'}),
    ('histogram.csv', plot_histogram, {}),
    ('stats.csv', plot_stats, {}),
    ('indicators.csv', plot_indicators, {}),
]


def main(data_location):
    """
    Renders a figure next to every known CSV file in an output directory.

    :param string data_location: Output directory of the experiment commands.
    """
    for name, plot, kwargs in PLOTS:
        filename = os.path.join(data_location, name)
        if not os.path.isfile(filename):
            continue
        plot(filename, os.path.splitext(filename)[0] + '.png', **kwargs)


if __name__ == '__main__':
    logging.basicConfig(level=logging.INFO)
    main(sys.argv[1])
