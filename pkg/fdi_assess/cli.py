'''
Command line entry point ``assess``.

Every sweep option may come from a JSON config file (``--config``); flags
given on the command line win. Exit codes: 0 all cells completed, 1 any
other failure (including failed cells and usage errors), 2 invariant
violation.
'''

import argparse
import logging
import sys

from .assess import ALGORITHMS, AssessmentConfig, InvariantViolation, run_assessment, write_reports
from .case_io import load_case
from .config import load_config_json
from .grid_model import build_matrices, export_matrix_csv
from .opt_kernel import BACKENDS

__all__ = [
    'main',
    'make_parser',
]

L = lambda: logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVARIANT = 2


class _Parser(argparse.ArgumentParser):
    '''Usage errors exit with 1; 2 is reserved for invariant violations.'''

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_FAILURE, '%s: error: %s\n' % (self.prog, message))


def make_parser():
    parser = _Parser(
        prog='assess',
        description='Worst-case stealthy false-data-injection attacks on DC grid lines.',
    )
    # defaults stay None so that config-file values are not overridden
    parser.add_argument('--config', help='JSON file with any of the options below')
    parser.add_argument('--case', help='MATPOWER case file or bundled case name (case2, case3, case6)')
    parser.add_argument('--algorithms', help='comma-separated subset of %s (default rg,rcg,dm,mbd)'
                        % ','.join(ALGORITHMS))
    parser.add_argument('--targets', help='"critical" (default) or comma-separated line indices')
    parser.add_argument('--threshold', help='critical-line loading fraction (default 0.9)')
    parser.add_argument('--n1', help='l1 budgets, list "a,b" or range "start:step:stop" '
                        '(default 0.1:0.1:1.0)')
    parser.add_argument('--load-shift', dest='load_shift', help='load shift fractions (default 0.1)')
    parser.add_argument('--sigma', help='l1 penalty weight (default 1e-3)')
    parser.add_argument('--big-m', dest='big_m', help='one big-M for every row (default per row)')
    parser.add_argument('--scale', help='uniform line rating multiplier (default 1.0)')
    parser.add_argument('--reference-bus', dest='reference_bus', help='override the reference bus')
    parser.add_argument('--jobs', help='worker processes (default 1)')
    parser.add_argument('--seed', help='recorded in the report metadata')
    parser.add_argument('--time-limit', dest='time_limit', help='wall-clock seconds per algorithm run on one cell (default 300)')
    parser.add_argument('--backend', choices=BACKENDS, help='LP/MILP backend (default simplex)')
    parser.add_argument('--out', help='CSV report path')
    parser.add_argument('--json', help='JSON report path')
    parser.add_argument('--trace', help='append per-iteration records to this JSON-lines file')
    parser.add_argument('--export-ptdf', dest='export_ptdf', metavar='PATH',
                        help='write the PTDF matrix as CSV and continue')
    parser.add_argument('--export-h', dest='export_h', metavar='PATH',
                        help='write the injection matrix H as CSV and continue')
    parser.add_argument('-v', '--verbose', action='count', default=0)
    parser.add_argument('-q', '--quiet', action='store_true')
    return parser


def _settings(args):
    settings = load_config_json(args.config) if args.config else {}
    cli = vars(args)
    for key in list(settings) + list(cli):
        if key in ('config', 'verbose', 'quiet', 'export_ptdf', 'export_h'):
            continue
        if cli.get(key) is not None:
            settings[key] = cli[key]
    return settings


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.quiet:
        level = logging.WARNING
    else:
        level = logging.DEBUG if args.verbose > 1 else logging.INFO
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')

    try:
        settings = _settings(args)
        if not settings.get('case'):
            parser.error('--case is required (on the command line or in the config file)')
        cfg = AssessmentConfig.from_dict(settings)
        if args.export_ptdf or args.export_h:
            case = load_case(cfg.case)
            ptdf, H = build_matrices(case, cfg.reference_bus)
            if args.export_ptdf:
                export_matrix_csv(ptdf, args.export_ptdf)
            if args.export_h:
                export_matrix_csv(H, args.export_h)
        report = run_assessment(cfg)
        write_reports(report, cfg)
    except InvariantViolation as e:
        L().error('%s', e)
        return EXIT_INVARIANT
    except Exception as e:
        L().error('%s: %s', type(e).__name__, e)
        L().debug('Traceback', exc_info=True)
        return EXIT_FAILURE
    failed = report.failed
    if failed:
        L().error('%d of %d cells failed', len(failed), len(report.cells))
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
