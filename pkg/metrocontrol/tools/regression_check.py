"""Checks that a configuration still reproduces its stored run report."""

import argparse
import hashlib
import json
import os
import shutil
import sys

import appdirs
import numpy as np

from metrocontrol import config as config_utils
from metrocontrol.errors import ConfigurationError, NumericalError
from metrocontrol.experiment import Experiment
from metrocontrol.utils import io as io_utils

APP_NAME = 'metrocontrol_regression_check'
DEFAULT_TOLERANCE = 1e-6


def report_path(storage_dir, config):
    """Stored report of a configuration, keyed by its canonical JSON."""
    digest = hashlib.sha256(json.dumps(config.source, sort_keys=True).encode()).hexdigest()
    return os.path.join(storage_dir, '{}.json'.format(digest))


def current_report(config):
    """QFIM part of the run report of config, with the brute-force cache bypassed."""
    with Experiment(config, use_cache=False) as experiment:
        payload, _ = experiment.run()
    return io_utils.jsonable({'control': payload['control'], 'qfim': payload['qfim']})


def save_report(output_file, report):
    """Saves report to the given file path."""
    print('Saving reference report...')
    assert not os.path.isfile(output_file)
    io_utils.atomic_write(output_file, io_utils.dumps(report))
    print('Report saved.')


def _values(entry):
    return np.asarray(entry, dtype=float)


def compare_report(input_file, report, tolerance=DEFAULT_TOLERANCE):
    """Compares report to the one stored in input_file.

    Every deviation is printed on stderr.

    Returns:
        The list of deviating quantity names.
    """
    assert os.path.isfile(input_file)

    with open(input_file, 'r') as report_file:
        reference = json.load(report_file)

    deviations = []
    if reference['control'] != report['control']:
        print('control changed from {} to {}.'.format(reference['control'], report['control']),
              file=sys.stderr)
        deviations.append('control')

    for key in ('J', 'J_opt', 'gap', 'weighted_gap'):
        old, new = _values(reference['qfim'][key]), _values(report['qfim'][key])
        if old.shape != new.shape:
            difference = np.inf
        else:
            difference = float(np.max(np.abs(old - new), initial=0.0))
        if not difference <= tolerance:
            print('{} deviates by {:.3e}: stored {}, now {}.'.format(
                key, difference, old.tolist(), new.tolist()), file=sys.stderr)
            deviations.append(key)

    return deviations


def get_argparser():
    """Returns a ArgumentParser object used in main()."""
    parser = argparse.ArgumentParser(
        description='Checks that a configuration still reproduces its stored run report.'
    )
    parser.add_argument('-c', '--config',
                        help='Experiment configuration; required unless --cleanup is given')
    parser.add_argument('--data-dir', default=appdirs.user_data_dir(APP_NAME),
                        help='Directory holding the stored reports (default: %(default)s)')
    parser.add_argument('--tolerance', type=float, default=DEFAULT_TOLERANCE,
                        help='Largest accepted absolute deviation (default: %(default)s)')
    parser.add_argument('--reference',
                        help='Compare against this report file instead of the stored one')
    parser.add_argument('--cleanup', action='store_true',
                        help=('Remove any stored reports. Next time the checker is run, '
                              'the reports will be regenerated.'))
    return parser


def main(argv=None):
    """Main function of the script"""
    parser = get_argparser()
    args = parser.parse_args(argv)
    storage_dir = args.data_dir

    if args.cleanup:
        if os.path.isdir(storage_dir):
            shutil.rmtree(storage_dir)
            print('regression_check data folder removed.')
        else:
            print('regression_check data folder did not exist.')
        return 0

    if not args.config:
        parser.error('--config is required')

    try:
        config = config_utils.load_config(args.config)
        report = current_report(config)
    except (ConfigurationError, NumericalError) as exc:
        print('metrocontrol-regression-check: {}'.format(exc), file=sys.stderr)
        return 2 if isinstance(exc, ConfigurationError) else 3

    if args.reference:
        if not os.path.isfile(args.reference):
            print('metrocontrol-regression-check: no report at {}'.format(args.reference),
                  file=sys.stderr)
            return 2
        file_name = args.reference
    else:
        os.makedirs(storage_dir, exist_ok=True)
        file_name = report_path(storage_dir, config)
        if not os.path.isfile(file_name):
            save_report(file_name, report)
            return 0

    deviations = compare_report(file_name, report, args.tolerance)
    if deviations:
        return 1
    print('Report matches {}.'.format(file_name))
    return 0


if __name__ == '__main__':
    sys.exit(main())
