"""
Command-line entry point.

::

    curvlab verify algebra --seed 42
    curvlab run pole-residue --param k=2 --format csv --out residue.csv
    curvlab report residue.json --format csv

Exit status is 0 when every check passes, 1 when any check fails and 2
on configuration, parse or domain errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Dict, Optional, Sequence

from . import __version__
from .conf import ENV_VAR, ExperimentConfig
from .errors import WorkbenchError, WorkbenchErrorCode
from .experiments import EXPERIMENTS, run_experiment
from .report import Report, emit
from .suites import SUITES, run_suite

__all__ = ['main', 'build_parser']

_LOG = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_ERROR = 2


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument('--config', help='sectioned config file')
    sub.add_argument('--param', action='append', default=[],
                     metavar='KEY=VALUE', help='override a config key')
    sub.add_argument('--chart', help='chart catalog name')
    sub.add_argument('--nodes', help='quadrature node count')
    sub.add_argument('--seed', help='random seed')
    _add_output(sub)


def _add_output(sub: argparse.ArgumentParser) -> None:
    sub.add_argument('--format', choices=('json', 'csv'),
                     help='report format (default json)')
    sub.add_argument('--out', help='report path, "-" for stdout')
    sub.add_argument('-v', '--verbose', action='count', default=0,
                     help='log INFO, twice for DEBUG')
    sub.add_argument('-q', '--quiet', action='store_true',
                     help='log errors only')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='curvlab',
        description='Curvature-operator identities in dimension four.')
    parser.add_argument('--version', action='version',
                        version=f'%(prog)s {__version__}')
    subs = parser.add_subparsers(dest='verb', required=True)

    verify = subs.add_parser('verify', help='run an identity suite')
    verify.add_argument('name', choices=sorted(SUITES))
    _add_common(verify)

    run = subs.add_parser('run', help='run a named experiment')
    run.add_argument('name', choices=sorted(EXPERIMENTS))
    _add_common(run)

    report = subs.add_parser('report', help='re-emit a saved JSON report')
    report.add_argument('path')
    _add_output(report)
    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    if args.quiet:
        level = logging.ERROR
    elif args.verbose >= 2:
        level = logging.DEBUG
    elif args.verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(
        level=level, stream=sys.stderr,
        format='%(levelname)s %(name)s: %(message)s')


def _overrides(args: argparse.Namespace) -> Dict[str, str]:
    raw: Dict[str, str] = {}
    for item in args.param:
        key, sep, value = item.partition('=')
        if not sep or not key.strip():
            raise WorkbenchError(
                WorkbenchErrorCode.ConfigError,
                f'Bad --param "{item}": expected KEY=VALUE.')
        raw[key.strip()] = value
    for flag in ('chart', 'nodes', 'seed', 'format', 'out'):
        value = getattr(args, flag)
        if value is not None:
            raw[flag] = value
    return raw


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """File, then ``CURVLAB_CONF``, then flags; the verb and name win."""
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
    elif os.environ.get(ENV_VAR):
        cfg = ExperimentConfig.from_env()
    else:
        cfg = ExperimentConfig()
    return cfg.with_values(kind=args.verb, name=args.name,
                           **_overrides(args))


def _emit(report: Report, fmt: str, out: Optional[str]) -> None:
    text = emit(report, fmt, out)
    if out is None or out == '-':
        sys.stdout.write(text)


def _run(args: argparse.Namespace) -> int:
    if args.verb == 'report':
        try:
            with open(args.path, 'r', encoding='utf-8') as f:
                report = Report.from_json(f.read())
        except OSError as oe:
            raise WorkbenchError(
                WorkbenchErrorCode.OutputError,
                f'Could not read report "{args.path}": {oe}.') from oe
        _emit(report, args.format or 'json', args.out)
    else:
        cfg = load_config(args)
        if args.verb == 'verify':
            report = run_suite(cfg.name, cfg)
        else:
            report = run_experiment(cfg)
        _emit(report, cfg.get('format', 'json'), cfg.get('out'))
    for check in report.failures:
        _LOG.warning('FAIL %s: computed %.17g, expected %.17g, error %.3g '
                     '> %.3g', check.name, check.computed, check.expected,
                     check.abs_error, check.tolerance)
    return EXIT_PASS if report.passed else EXIT_FAIL


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    try:
        return _run(args)
    except WorkbenchError as we:
        _LOG.debug('exit on %s', we.code, exc_info=True)
        sys.stderr.write(f'curvlab: error: {we}\n')
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
