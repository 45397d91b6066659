"""metrocontrol entrypoint"""
import argparse
import dataclasses
import logging
import os
import shutil
import sys

from metrocontrol import config as config_utils
from metrocontrol import control
from metrocontrol import dynamics
from metrocontrol.errors import ConfigurationError, NumericalError
from metrocontrol.experiment import Experiment
from metrocontrol.utils import io as io_utils

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_ERROR = 3


def _emit(text, out_path):
    """Writes text to out_path atomically, or to stdout when out_path is None."""
    if out_path:
        io_utils.atomic_write(out_path, text)
        print('Wrote {}.'.format(out_path))
    else:
        sys.stdout.write(text)


def run(args):
    """Evaluates the configured control and emits its QFIM and CFIM report as JSON."""
    config = config_utils.load_config(args.config)
    with Experiment(config, use_cache=not args.no_cache) as experiment:
        payload, evaluation = experiment.run()

    _emit(io_utils.dumps(payload), args.out or config.output)
    if args.schedule:
        io_utils.atomic_write(args.schedule,
                              io_utils.dumps(control.schedule_to_dict(evaluation.schedule)))
        print('Wrote schedule {}.'.format(args.schedule), file=sys.stderr)
    return EXIT_OK


def sweep(args):
    """Evaluates every compared control at every sweep duration and emits a CSV table."""
    config = config_utils.load_config(args.config)
    out_path = args.out or config.output
    with Experiment(config, use_cache=not args.no_cache) as experiment:
        if out_path:
            print('Evaluating {} durations x {} controls...'.format(
                len(config.sweep or (config.t_max,)), len(config.compare)))
        text = experiment.sweep_csv()
    _emit(text, out_path)
    return EXIT_OK


def verify(args):
    """Runs the verification battery; prints a JSON check report.

    Returns:
        EXIT_OK if every check passed, EXIT_VERIFY_FAILED otherwise.
    """
    config = config_utils.load_config(args.config)
    with Experiment(config, use_cache=not args.no_cache) as experiment:
        checks = experiment.verify()

    failed = [check for check in checks if not check.passed]
    report = {
        'scenario': config.scenario,
        'control': config.control.label,
        'passed': not failed,
        'checks': [dataclasses.asdict(check) for check in checks],
    }
    sys.stdout.write(io_utils.dumps(report))
    if failed:
        print('metrocontrol: check {} failed ({} vs tolerance {})'.format(
            failed[0].name, failed[0].value, failed[0].tolerance), file=sys.stderr)
        return EXIT_VERIFY_FAILED
    return EXIT_OK


def scenarios(_args):
    """Lists the built-in field models."""
    for name in sorted(dynamics.MODELS):
        model = dynamics.get_model(name)
        print('{}: {}'.format(name, model.formula))
        print('\tparameters: {}'.format(', '.join(
            '{}={}'.format(param, default)
            for param, default in zip(model.param_names, model.defaults))))
    return EXIT_OK


def cleanup(_args):
    """Removes the brute-force schedule cache, namely Experiment's storage_dir"""
    if os.path.isdir(Experiment.storage_dir):
        shutil.rmtree(Experiment.storage_dir)
        print('metrocontrol cache folder removed.')
    else:
        print('metrocontrol cache folder did not exist.')
    return EXIT_OK


def get_argparser():
    """Returns the ArgumentParser object used in main."""
    parser = argparse.ArgumentParser(
        prog='metrocontrol',
        description='Control-enhanced multiparameter estimation of a qubit field'
    )
    parser.add_argument('-v', '--verbose', help='Log debug diagnostics', action='store_true')
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND')
    subparsers.required = True

    def add_command(name, handler, help_text, config=True):
        subparser = subparsers.add_parser(name, help=help_text)
        subparser.set_defaults(handler=handler)
        if config:
            subparser.add_argument('-c', '--config', required=True,
                                   help='Experiment configuration (JSON)')
            subparser.add_argument('--no-cache', action='store_true',
                                   help='Neither read nor store cached brute-force schedules')
        return subparser

    run_parser = add_command('run', run, 'Evaluate one control and report its QFIM and CFIM')
    run_parser.add_argument('-o', '--out',
                            help='Write the JSON report here instead of stdout')
    run_parser.add_argument('--schedule', metavar='FILE',
                            help='Also write the synthesized schedule as JSON')

    sweep_parser = add_command('sweep', sweep, 'Tabulate controls over the sweep durations')
    sweep_parser.add_argument('-o', '--out', help='Write the CSV table here instead of stdout')

    add_command('verify', verify, 'Run the cross-method verification checks')
    add_command('scenarios', scenarios, 'List the built-in field models', config=False)
    add_command('cleanup', cleanup, 'Remove cached brute-force schedules ({})'.format(
        Experiment.storage_dir), config=False)
    return parser


def main(argv=None):
    """metrocontrol driver"""
    parser = get_argparser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)

    try:
        return args.handler(args)
    except ConfigurationError as exc:
        print('metrocontrol: {}'.format(exc), file=sys.stderr)
        for problem in exc.errors[1:]:
            print('\t{}'.format(problem), file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except NumericalError as exc:
        print('metrocontrol: {}'.format(exc), file=sys.stderr)
        return EXIT_NUMERICAL_ERROR

# __name__ is metrocontrol.__main__ usually, __main__ if
# called with -m flag

# include __main__ guard to prevent main() from being called twice from console
# script entrypoint
if __name__ == '__main__':
    sys.exit(main())
