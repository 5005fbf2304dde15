'''
Batch vulnerability assessment.

:any:`run_assessment` sweeps targets x N1 x load shift x algorithm. One
*group* is a (target, N1, L_S) triple; all requested algorithms run on it
and their results are checked against each other::

    dm lower <= rcg, mbd <= rg = milp <= dm upper

A violation beyond the tolerance raises :any:`InvariantViolation`; the
cells involved carry ``consistent = False``. A capped rcg run below the
dm lower bound is only flagged. A solver whose result fails its own audit
(complementarity, stealth, LP optimality) raises, and that cell is
recorded with an ``error``, like any other failure of a single algorithm;
the sweep goes on. Each algorithm run gets ``time_limit`` seconds of wall
clock (:any:`.opt_kernel.Deadline`); a run cut short reports its best
attack as a lower bound with ``timed_out`` set.

Reports are written by :any:`emit_report` as CSV (one row per cell, fixed
column order, see :any:`COLUMNS`) or JSON (cells plus run metadata).

.. default-role:: py:obj
'''

__all__ = [
    'ALGORITHMS',
    'COLUMNS',
    'AssessmentConfig',
    'AssessmentReport',
    'ReportCell',
    'InvariantViolation',
    'run_assessment',
    'check_group',
    'emit_report',
    'write_reports',
    'read_report_csv',
]

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import attr
import numpy as np

from . import attack_milp, mbd
from .attack_milp import (
    EXACT,
    AttackInstance,
    solve_original_milp,
    solve_rcg,
    solve_rg,
)
from .case_io import (
    CaseError,
    find_radial_generator_lines,
    load_case,
    scale_ratings,
    validate_case,
)
from .convert import float_list, fraction, gt0, name_list, nullable
from .dcopf import solve_dcopf
from .dm_bounds import solve_dm
from .event import JsonLinesTrace
from .grid_model import build_matrices, find_critical_lines, unobservability_audit
from .opt_kernel import BACKENDS, Deadline, SolverOptions, set_backend

L = lambda: logging.getLogger(__name__)

ALGORITHMS = ('rg', 'rcg', 'dm', 'mbd', 'milp')
L0_TOL = 1e-6
SANDWICH_TOL = 1e-4
CELL_TIME_LIMIT = 300.0


class InvariantViolation(AssertionError):
    '''Results of different algorithms contradict each other.'''


def _targets(x):
    if isinstance(x, str) and x.strip().lower() == 'critical':
        return 'critical'
    if isinstance(x, int):
        return [x]
    return [int(v) for v in float_list(float)(x)]


def _threshold(x):
    x = float(x)
    if not 0 < x <= 1:
        raise ValueError('Expected number in (0, 1]')
    return x


def _backend(x):
    if x not in BACKENDS:
        raise ValueError('Unknown backend %r, expected one of %s' % (x, ', '.join(BACKENDS)))
    return x


@attr.s
class AssessmentConfig:
    '''Sweep definition. Every field accepts the CLI string form as well.

    ``case`` is a file path or the name of a bundled case. ``targets`` is
    ``'critical'`` (lines loaded at ``threshold`` of their rating or more
    before the attack) or a list of line indices.
    '''
    case = attr.ib()
    algorithms = attr.ib(default='rg,rcg,dm,mbd', converter=name_list(ALGORITHMS))
    targets = attr.ib(default='critical', converter=_targets)
    threshold = attr.ib(default=0.9, converter=_threshold)
    n1 = attr.ib(default='0.1:0.1:1.0', converter=float_list(gt0(float)))
    load_shift = attr.ib(default=0.1, converter=float_list(fraction(float)))
    sigma = attr.ib(default=1e-3, converter=gt0(float))
    big_m = attr.ib(default=None, converter=nullable(gt0(float)))
    scale = attr.ib(default=1.0, converter=gt0(float))
    reference_bus = attr.ib(default=None, converter=nullable(int))
    jobs = attr.ib(default=1, converter=gt0(int))
    seed = attr.ib(default=0, converter=int)
    time_limit = attr.ib(default=CELL_TIME_LIMIT, converter=nullable(gt0(float)))
    backend = attr.ib(default='simplex', converter=_backend)
    out = attr.ib(default=None, converter=nullable(Path))
    json = attr.ib(default=None, converter=nullable(Path))
    trace = attr.ib(default=None, converter=nullable(Path))

    @classmethod
    def from_dict(cls, d):
        '''``None`` values fall back to the defaults.'''
        return cls(**{key: value for key, value in d.items() if value is not None})


def _opt_float(x):
    return None if x in ('', None) else float(x)


def _opt_int(x):
    return None if x in ('', None) else int(float(x))


def _opt_bool(x):
    if x in ('', None):
        return None
    if isinstance(x, bool):
        return x
    return str(x).lower() == 'true'


def _opt_str(x):
    return None if x in ('', None) else str(x)


@attr.s
class ReportCell:
    '''One (target, N1, L_S, algorithm) result.

    ``objective`` is the oriented target flow in MW (for ``dm`` the lower
    bound, with the upper bound in ``upper_bound``). ``l0`` counts entries
    of the attack vector above ``L0_TOL``. Failed cells carry ``error`` and
    leave the result columns empty.
    '''
    target = attr.ib(converter=int)
    n1 = attr.ib(converter=float)
    load_shift = attr.ib(converter=float)
    algorithm = attr.ib(converter=str)
    objective = attr.ib(default=None, converter=_opt_float)
    upper_bound = attr.ib(default=None, converter=_opt_float)
    bound_type = attr.ib(default=None, converter=_opt_str)
    rating = attr.ib(default=None, converter=_opt_float)
    overflow = attr.ib(default=None, converter=_opt_bool)
    pre_attack_flow = attr.ib(default=None, converter=_opt_float)
    orientation = attr.ib(default=None, converter=_opt_int)
    l0 = attr.ib(default=None, converter=_opt_int)
    l1 = attr.ib(default=None, converter=_opt_float)
    iterations = attr.ib(default=None, converter=_opt_int)
    binaries = attr.ib(default=None, converter=_opt_int)
    wall_time = attr.ib(default=None, converter=_opt_float)
    converged = attr.ib(default=None, converter=_opt_bool)
    timed_out = attr.ib(default=None, converter=_opt_bool)
    consistent = attr.ib(default=True, converter=_opt_bool)
    radial_immune = attr.ib(default=False, converter=_opt_bool)
    notes = attr.ib(default=None, converter=_opt_str)
    error = attr.ib(default=None, converter=_opt_str)
    # not part of the CSV
    c = attr.ib(default=None, eq=False, repr=False)

    @property
    def key(self):
        return (self.target, self.n1, self.load_shift, self.algorithm)


def _retrieve(obj, source):
    '''Column value: attribute name, or callable applied to ``obj``.'''
    if callable(source):
        return source(obj)
    return getattr(obj, source)


def _csv_value(value):
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value)
    return str(value)


COLUMNS = [
    (field.name, field.name)
    for field in attr.fields(ReportCell)
    if field.name != 'c'
]


@attr.s(eq=False)
class AssessmentReport:
    cells = attr.ib(factory=list)
    metadata = attr.ib(factory=dict)

    def cell(self, target, n1, load_shift, algorithm):
        for cell in self.cells:
            if cell.key == (target, float(n1), float(load_shift), algorithm):
                return cell
        raise KeyError((target, n1, load_shift, algorithm))

    @property
    def failed(self):
        return [cell for cell in self.cells if cell.error is not None]


@attr.s(eq=False)
class _Group:
    '''Everything a worker needs for one (target, N1, L_S) triple.'''
    case = attr.ib()
    ptdf = attr.ib()
    H = attr.ib()
    baseline = attr.ib()
    target = attr.ib()
    n1 = attr.ib()
    load_shift = attr.ib()
    cfg = attr.ib()
    radial = attr.ib()


def _solve(algorithm, group, inst):
    cfg = group.cfg
    args = (group.case, group.ptdf, group.H, inst)
    if algorithm == 'dm':
        return solve_dm(*args, baseline=group.baseline)
    kwargs = dict(baseline=group.baseline, deadline=Deadline(cfg.time_limit))
    if algorithm == 'rg':
        return solve_rg(*args, threshold=cfg.threshold, **kwargs)
    if algorithm == 'rcg':
        return solve_rcg(*args, threshold=cfg.threshold, **kwargs)
    if algorithm == 'milp':
        return solve_original_milp(*args, **kwargs)
    if algorithm == 'mbd':
        return mbd.solve_mbd_attack(*args, **kwargs)
    raise ValueError('Unknown algorithm %r' % algorithm)


def _cell_from(group, algorithm, result):
    case = group.case
    l = group.target
    base = dict(
        target=l, n1=group.n1, load_shift=group.load_shift, algorithm=algorithm,
        rating=float(case.ratings[l]),
        pre_attack_flow=float(group.baseline.physical_flows[l]),
        radial_immune=l in group.radial,
    )
    if algorithm == 'dm':
        notes = [name for name in ('tight', 'dcopf_infeasible', 'vertex_dependent')
                 if getattr(result, name)]
        attack = result.to_attack_result()
        base.update(upper_bound=float(result.upper_bound), notes=';'.join(notes) or None)
    else:
        attack = result
    c = np.asarray(attack.c, dtype=float)
    return ReportCell(
        objective=float(attack.objective),
        bound_type=attack.bound_type,
        overflow=bool(attack.overflow),
        orientation=int(attack.orientation),
        l0=int(np.count_nonzero(np.abs(c) > L0_TOL)),
        l1=float(np.abs(c).sum()),
        iterations=int(attack.iterations),
        binaries=int(attack.binaries),
        wall_time=float(attack.wall_time),
        converged=bool(attack.converged),
        timed_out=bool(attack.timed_out),
        c=c,
        **base
    )


def _run_group(group):
    '''Worker entry point: all algorithms on one triple. Returns a list of cells.'''
    cfg = group.cfg
    set_backend(cfg.backend, SolverOptions())
    trace = JsonLinesTrace(cfg.trace) if cfg.trace else None
    if trace:
        attack_milp.on_iteration += trace
        mbd.on_iteration += trace
    try:
        inst = AttackInstance(
            target_line=group.target, N1=group.n1, L_S=group.load_shift,
            sigma=cfg.sigma, big_M=cfg.big_m,
        )
        cells = []
        for algorithm in cfg.algorithms:
            try:
                result = _solve(algorithm, group, inst)
            except Exception as e:
                L().error('%s on line %d (N1=%g, L_S=%g) failed: %s',
                          algorithm, group.target, group.n1, group.load_shift, e)
                cells.append(ReportCell(
                    target=group.target, n1=group.n1, load_shift=group.load_shift,
                    algorithm=algorithm, radial_immune=group.target in group.radial,
                    error='%s: %s' % (type(e).__name__, e),
                ))
                continue
            cells.append(_cell_from(group, algorithm, result))
        return cells
    finally:
        if trace:
            attack_milp.on_iteration -= trace
            mbd.on_iteration -= trace


def _add_note(cell, note):
    notes = cell.notes.split(';') if cell.notes else []
    if note not in notes:
        cell.notes = ';'.join(notes + [note])


def check_group(cells, H, case, sigma):
    '''Cross-algorithm and stealth checks for the cells of one triple.

    Returns a list of violation messages. Every cell involved in a failed
    comparison gets ``consistent = False`` and a note naming the check.
    ``dm lower <= rcg`` is only a hard violation when rcg converged; a
    capped rcg run below the dm lower bound is flagged and left in the
    report.
    '''
    problems = []
    done = {cell.algorithm: cell for cell in cells if cell.error is None}
    for cell in done.values():
        for msg in unobservability_audit(H, case, cell.c, cell.load_shift, cell.n1):
            problems.append('%s, line %d, N1=%g: %s' % (cell.algorithm, cell.target, cell.n1, msg))
    if not done:
        return problems
    any_cell = next(iter(done.values()))
    rating = any_cell.rating
    tol = SANDWICH_TOL * max(1.0, rating) + sigma * any_cell.n1

    def le(lower, upper, what, involved, hard=True):
        if lower <= upper + tol:
            return
        for cell in involved:
            cell.consistent = False
            _add_note(cell, what.replace(' ', '_'))
        msg = ('line %d, N1=%g, L_S=%g: %s (%.6f > %.6f)'
               % (any_cell.target, any_cell.n1, any_cell.load_shift, what, lower, upper))
        if hard:
            problems.append(msg)
        else:
            L().warning('Inconsistent results: %s', msg)

    dm = done.get('dm')
    rcg = done.get('rcg')
    exact = [done[name] for name in ('rg', 'milp')
             if name in done and done[name].bound_type == EXACT]
    if dm is not None:
        le(dm.objective, dm.upper_bound, 'dm lower above dm upper', [dm])
        for name, cell in done.items():
            if name != 'dm':
                le(cell.objective, dm.upper_bound, '%s above dm upper' % name, [cell, dm])
        if rcg is not None:
            le(dm.objective, rcg.objective, 'dm lower above rcg', [dm, rcg],
               hard=bool(rcg.converged))
    for reference in exact:
        for name in ('dm', 'rcg', 'mbd'):
            if name in done:
                le(done[name].objective, reference.objective,
                   '%s above %s' % (name, reference.algorithm), [done[name], reference])
    if len(exact) == 2:
        le(exact[0].objective, exact[1].objective, 'rg above milp', exact)
        le(exact[1].objective, exact[0].objective, 'milp above rg', exact)
    return problems


def _prepare_case(cfg):
    case = load_case(cfg.case)
    if cfg.reference_bus is not None:
        case = case.with_reference(cfg.reference_bus)
    if cfg.scale != 1.0:
        case = scale_ratings(case, cfg.scale)
    problems = validate_case(case)
    if problems:
        raise CaseError('Case %s is invalid: %s' % (cfg.case, '; '.join(problems)))
    return case


def run_assessment(cfg):
    '''Run the sweep described by ``cfg`` (an :any:`AssessmentConfig` or dict).

    Raises :any:`InvariantViolation` when results contradict each other,
    :any:`.case_io.CaseError` for an unusable case.
    '''
    if not isinstance(cfg, AssessmentConfig):
        cfg = AssessmentConfig.from_dict(cfg)
    started = time.time()
    set_backend(cfg.backend, SolverOptions())
    case = _prepare_case(cfg)
    ptdf, H = build_matrices(case)
    baseline = solve_dcopf(case, ptdf, H=H)
    if cfg.targets == 'critical':
        targets = sorted(find_critical_lines(baseline.physical_flows, case, cfg.threshold))
        L().info('Critical lines at %g of rating: %s', cfg.threshold, targets)
    else:
        targets = list(cfg.targets)
    radial = find_radial_generator_lines(case)
    groups = [
        _Group(case=case, ptdf=ptdf, H=H, baseline=baseline, target=target, n1=n1,
               load_shift=load_shift, cfg=cfg, radial=radial)
        for target in targets
        for n1 in cfg.n1
        for load_shift in cfg.load_shift
    ]
    L().info('Assessing %s: %d targets, %d groups, algorithms %s, %d jobs',
             case.name, len(targets), len(groups), ','.join(cfg.algorithms), cfg.jobs)
    if cfg.jobs > 1 and len(groups) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_group, groups))
    else:
        results = [_run_group(group) for group in groups]

    cells = []
    problems = []
    for group_cells in results:
        problems.extend(check_group(group_cells, H, case, cfg.sigma))
        cells.extend(group_cells)
    report = AssessmentReport(
        cells=cells,
        metadata=dict(
            case=str(cfg.case),
            case_name=case.name,
            n_bus=case.n_bus,
            n_branch=case.n_branch,
            n_gen=case.n_gen,
            reference_bus=case.reference_bus,
            algorithms=list(cfg.algorithms),
            targets=targets,
            radial_immune=sorted(radial),
            n1=list(cfg.n1),
            load_shift=list(cfg.load_shift),
            sigma=cfg.sigma,
            scale=cfg.scale,
            threshold=cfg.threshold,
            backend=cfg.backend,
            seed=cfg.seed,
            jobs=cfg.jobs,
            started=started,
            wall_time=time.time() - started,
            failed_cells=sum(1 for cell in cells if cell.error is not None),
        ),
    )
    if problems:
        for msg in problems:
            L().error('Invariant violation: %s', msg)
        raise InvariantViolation(
            '%d invariant violation(s), first: %s' % (len(problems), problems[0])
        )
    L().info('Assessment finished: %d cells, %d failed',
             len(cells), report.metadata['failed_cells'])
    return report


def _json_value(value):
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def emit_report(report, fmt, path):
    '''Write ``report`` to ``path`` as ``'csv'`` or ``'json'``. Returns the path.'''
    path = Path(path)
    if fmt == 'csv':
        with path.open('w', newline='') as fp:
            writer = csv.writer(fp)
            writer.writerow([name for name, _ in COLUMNS])
            for cell in report.cells:
                writer.writerow([_csv_value(_retrieve(cell, source)) for _, source in COLUMNS])
    elif fmt == 'json':
        d = {
            'metadata': report.metadata,
            'cells': [
                {name: _json_value(_retrieve(cell, source)) for name, source in COLUMNS}
                for cell in report.cells
            ],
        }
        with path.open('w') as fp:
            json.dump(d, fp, indent=2, sort_keys=True)
    else:
        raise ValueError('Unknown report format %r' % (fmt,))
    L().info('Wrote %d cells to %s', len(report.cells), path)
    return path


def write_reports(report, cfg):
    '''Emit the CSV and/or JSON files named in ``cfg``.'''
    written = []
    if cfg.out:
        written.append(emit_report(report, 'csv', cfg.out))
    if cfg.json:
        written.append(emit_report(report, 'json', cfg.json))
    return written


def read_report_csv(path):
    '''Parse a CSV written by :any:`emit_report` back into a list of `ReportCell`.'''
    with Path(path).open(newline='') as fp:
        reader = csv.DictReader(fp)
        return [
            ReportCell(**{name: (row[name] if row[name] != '' else None) for name, _ in COLUMNS})
            for row in reader
        ]
