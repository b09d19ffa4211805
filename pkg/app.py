#!/usr/bin/env python3
"""
Null hypersurface identity checker (CLI)

    python app.py check config/desitter_distance_graph.toml --format human
    python app.py catalog list
    python app.py catalog describe cylinder_l2
    python app.py report results.json --format csv

Exit codes: 0 all identities pass, 1 an identity fails, 2 construction
error, 3 configuration error.
"""

import argparse
import logging
import sys
from pathlib import Path

from core.catalog import catalog_names, describe
from core.engine import run_scenario
from core.errors import ConfigError, NullGeometryError
from core.parser import ScenarioParser, apply_overrides, parse_tolerance_overrides
from core.report import FORMATS, Report, ReportGenerator

logger = logging.getLogger('nullgeo')


def configure_logging(verbose=False, quiet=False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s', stream=sys.stderr)


def write_output(data, output=None):
    if output:
        Path(output).write_bytes(data)
        logger.info(f"✅ Wrote {output}")
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def error_report(error, scenario=None):
    payload = error.to_dict() if isinstance(error, NullGeometryError) else {
        'error': type(error).__name__, 'message': str(error), 'context': {}}
    payload['exit_code'] = getattr(error, 'exit_code', 2)
    return Report(scenario=scenario or {}, error=payload)


def check_command(args):
    parser = ScenarioParser()
    scenario = None
    try:
        scenario = parser.parse_file(args.scenario)
        scenario = apply_overrides(scenario, parse_tolerance_overrides(args.tol), seed=args.seed)
        report = run_scenario(scenario, threads=args.threads)
    except NullGeometryError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        echo = scenario.to_dict() if scenario is not None else {'source': str(args.scenario)}
        report = error_report(e, echo)

    write_output(ReportGenerator.emit(report, args.format), args.output)
    return report.exit_code


def catalog_command(args):
    if args.catalog_verb == 'list':
        text = '\n'.join(catalog_names()) + '\n'
    else:
        text = describe(args.name) + '\n'
    write_output(text.encode('utf-8'), args.output)
    return 0


def report_command(args):
    try:
        report = ReportGenerator.read_json(Path(args.report).read_bytes())
    except (OSError, ValueError) as e:
        raise ConfigError(f"Cannot read report {args.report}: {e}")
    write_output(ReportGenerator.emit(report, args.format), args.output)
    return report.exit_code


def build_parser():
    parser = argparse.ArgumentParser(
        description="Check the identities of null hypersurfaces in Lorentzian space forms and GRW spacetimes",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument('--verbose', '-v', action='store_true', help="Debug logging")
    parser.add_argument('--quiet', '-q', action='store_true', help="Warnings and errors only")
    sub = parser.add_subparsers(dest='command', required=True)

    check = sub.add_parser('check', help="Run a scenario file")
    check.add_argument('scenario', help="Scenario TOML file")
    check.add_argument('--tol', action='append', default=[], metavar='NAME=VALUE',
                       help="Override a tolerance (identity name, group or 'default'); repeatable")
    check.add_argument('--seed', type=int, default=None, help="Override the scenario seed")
    check.add_argument('--threads', type=int, default=None, help="Worker threads (default NULLGEO_THREADS)")
    check.add_argument('--format', choices=FORMATS, default='json')
    check.add_argument('--output', '-o', default=None, help="Write the report here instead of stdout")
    check.set_defaults(func=check_command)

    catalog = sub.add_parser('catalog', help="Inspect the built-in hypersurfaces")
    catalog_sub = catalog.add_subparsers(dest='catalog_verb', required=True)
    catalog_sub.add_parser('list', help="List entry names")
    describe_parser = catalog_sub.add_parser('describe', help="Describe one entry")
    describe_parser.add_argument('name', choices=catalog_names())
    catalog.add_argument('--output', '-o', default=None)
    catalog.set_defaults(func=catalog_command)

    report = sub.add_parser('report', help="Re-emit a JSON report in another format")
    report.add_argument('report', help="JSON report written by 'check'")
    report.add_argument('--format', choices=FORMATS, default='human')
    report.add_argument('--output', '-o', default=None)
    report.set_defaults(func=report_command)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2 on usage errors; those are configuration errors here
        return 0 if e.code == 0 else ConfigError.exit_code
    configure_logging(args.verbose, args.quiet)
    try:
        return args.func(args)
    except NullGeometryError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return e.exit_code


if __name__ == '__main__':
    sys.exit(main())
