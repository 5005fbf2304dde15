'''
Backend-neutral linear and mixed-binary programming.

.. default-role:: py:obj

Every optimisation problem in the package is built as an `LpProblem` (or a
`MilpProblem`, an LP plus a set of binary columns) and handed to
`solve_lp` / `solve_milp`. The actual work is done by a backend:

* ``simplex`` (default): bounded-variable primal simplex with
  branch-and-bound, `.opt_kernel_simplex.SimplexSolver`;
* ``highs``: scipy's HiGHS interface, `.opt_kernel_highs.HighsSolver`.

Select one with `set_backend` before solving. Tolerances are collected in
`SolverOptions`.

Dual sign convention
--------------------

Every row dual and every reduced cost is the derivative of the optimal
objective value with respect to the row's right-hand side (resp. the
active variable bound). For a minimisation this means ``>=`` rows have
duals ``>= 0`` and ``<=`` rows duals ``<= 0``; for a maximisation the signs
are reversed. Reduced costs always satisfy ``d = c - A^T y``.

`audit_lp_solution` checks all of that on an independent code path.
'''

import logging
import math
import re
import time

import attr
import numpy as np

from .convert import ge0, gt0, nullable

__all__ = [
    'LpProblem',
    'MilpProblem',
    'LpSolution',
    'MilpResult',
    'SolverOptions',
    'Deadline',
    'LpBuilder',
    'SolverBase',
    'SolverError',
    'SolverLimitError',
    'InfeasibleError',
    'UnboundedError',
    'set_backend',
    'get_backend',
    'solve_lp',
    'solve_milp',
    'audit_lp_solution',
    'to_lp_text',
    'OPTIMAL',
    'INFEASIBLE',
    'UNBOUNDED',
]

L = lambda: logging.getLogger(__name__)

OPTIMAL = 'optimal'
INFEASIBLE = 'infeasible'
UNBOUNDED = 'unbounded'

LE, GE, EQ = '<=', '>=', '='

# seconds granted to a solve started after its deadline
MIN_SOLVE_TIME = 1.0
_SENSES = (LE, GE, EQ)


class SolverError(RuntimeError):
    '''Numerical failure or iteration limit; never returned as a status.'''


class SolverLimitError(SolverError):
    '''Node or time limit hit before any integer-feasible solution was found.'''


class InfeasibleError(SolverError):
    '''Problem proven infeasible where a solution was required.'''


class UnboundedError(SolverError):
    '''Problem proven unbounded where a finite optimum was required.'''


def _float_array(value):
    return np.array(value, dtype=float)


@attr.s(eq=False)
class LpProblem:
    '''``sense`` ``c^T x + objective_constant`` subject to ``A x (senses) b``, ``lb <= x <= ub``.

    ``senses`` holds one of ``'<='``, ``'>='``, ``'='`` per row. Infinite
    bounds are ``-inf`` / ``inf``.
    '''
    c = attr.ib(converter=_float_array)
    A = attr.ib(converter=_float_array)
    senses = attr.ib(converter=tuple)
    b = attr.ib(converter=_float_array)
    lb = attr.ib(default=None)
    ub = attr.ib(default=None)
    sense = attr.ib(default='min')
    objective_constant = attr.ib(default=0.0, converter=float)
    var_names = attr.ib(default=None)
    row_names = attr.ib(default=None)
    # name -> column indices, filled by LpBuilder
    blocks = attr.ib(factory=dict)

    def __attrs_post_init__(self):
        n = self.c.shape[0]
        if self.A.size == 0:
            self.A = self.A.reshape((len(self.b), n))
        if self.lb is None:
            self.lb = np.zeros(n)
        if self.ub is None:
            self.ub = np.full(n, np.inf)
        self.lb = _float_array(self.lb)
        self.ub = _float_array(self.ub)
        self.validate()

    @property
    def n_vars(self):
        return self.c.shape[0]

    @property
    def n_rows(self):
        return self.b.shape[0]

    def validate(self):
        '''Raises ``ValueError`` if the problem is malformed.'''
        n, m = self.n_vars, self.n_rows
        if self.sense not in ('min', 'max'):
            raise ValueError('Objective sense must be "min" or "max", got %r' % (self.sense,))
        if self.A.shape != (m, n):
            raise ValueError('Constraint matrix has shape %s, expected (%d, %d)' % (self.A.shape, m, n))
        if len(self.senses) != m:
            raise ValueError('Got %d row senses for %d rows' % (len(self.senses), m))
        bad = [s for s in self.senses if s not in _SENSES]
        if bad:
            raise ValueError('Unknown row sense %r' % bad[0])
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError('Bounds must have length %d' % n)
        if not np.all(np.isfinite(self.c)):
            raise ValueError('Objective coefficients must be finite')
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError('Constraint data must be finite')
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)):
            raise ValueError('NaN in variable bounds')
        if self.var_names is not None and len(self.var_names) != n:
            raise ValueError('Got %d variable names for %d variables' % (len(self.var_names), n))
        if self.row_names is not None and len(self.row_names) != m:
            raise ValueError('Got %d row names for %d rows' % (len(self.row_names), m))

    def objective(self, x):
        return float(self.c @ x) + self.objective_constant


@attr.s(eq=False)
class MilpProblem:
    '''An `LpProblem` whose columns ``binaries`` must be 0 or 1.'''
    lp = attr.ib()
    binaries = attr.ib(converter=lambda v: np.array(sorted(v), dtype=int))

    def __attrs_post_init__(self):
        lb, ub = self.lp.lb[self.binaries], self.lp.ub[self.binaries]
        if np.any(lb != 0) or np.any(ub != 1):
            raise ValueError('Binary variables must carry bounds [0, 1]')

    @property
    def n_binaries(self):
        return len(self.binaries)

    @property
    def blocks(self):
        return self.lp.blocks


@attr.s(eq=False)
class LpSolution:
    status = attr.ib()
    x = attr.ib(default=None)
    # row duals, sign convention see module docstring
    duals = attr.ib(default=None)
    reduced_costs = attr.ib(default=None)
    objective = attr.ib(default=math.nan)
    # phase-1 row duals certifying infeasibility (simplex backend only)
    farkas = attr.ib(default=None)
    iterations = attr.ib(default=0)

    @property
    def optimal(self):
        return self.status == OPTIMAL


@attr.s(eq=False)
class MilpResult:
    '''Incumbent plus bound report of a branch-and-bound run.

    ``bound`` is the best proven bound in the problem's sense (an upper bound
    for maximisation). ``gap`` is relative to ``max(1, |objective|)``.
    ``limit_hit`` is ``None``, ``'nodes'`` or ``'time'``.
    '''
    solution = attr.ib()
    bound = attr.ib()
    gap = attr.ib(default=0.0)
    nodes = attr.ib(default=0)
    branched = attr.ib(default=0)
    limit_hit = attr.ib(default=None)

    @property
    def objective(self):
        return self.solution.objective


@attr.s(frozen=True)
class SolverOptions:
    feas_tol = attr.ib(default=1e-7, converter=gt0(float))
    opt_tol = attr.ib(default=1e-9, converter=gt0(float))
    gap_tol = attr.ib(default=1e-6, converter=ge0(float))
    cs_tol = attr.ib(default=1e-6, converter=gt0(float))
    pivot_tol = attr.ib(default=1e-9, converter=gt0(float))
    int_tol = attr.ib(default=1e-6, converter=gt0(float))
    node_limit = attr.ib(default=20000, converter=gt0(int))
    time_limit = attr.ib(default=None, converter=nullable(gt0(float)))
    max_iterations = attr.ib(default=None, converter=nullable(gt0(int)))
    scale = attr.ib(default=True, converter=bool)
    # audit every optimum returned by solve_lp / solve_milp
    audit = attr.ib(default=True, converter=bool)


class LpBuilder:
    '''Incremental construction of an `LpProblem` / `MilpProblem` from named blocks.

    ::

        lp = LpBuilder('max')
        x = lp.add_vars('x', 2, ub=1)
        lp.add_row({x[0]: 1, x[1]: 1}, '<=', 1.5, 'cap')
        problem = lp.build()

    `add_vars` returns the column indices of the new block; the indices are
    also kept in `blocks` by name.
    '''

    def __init__(self, sense='min'):
        self.sense = sense
        self.blocks = {}
        self._c = []
        self._lb = []
        self._ub = []
        self._names = []
        self._binaries = []
        self._rows = []
        self._senses = []
        self._rhs = []
        self._row_names = []
        self.objective_constant = 0.0

    @property
    def n_vars(self):
        return len(self._c)

    @property
    def n_rows(self):
        return len(self._rows)

    def add_vars(self, name, n, lb=0.0, ub=np.inf, obj=0.0, binary=False):
        start = len(self._c)
        idx = np.arange(start, start + n)
        self._c.extend(np.broadcast_to(np.asarray(obj, dtype=float), (n,)).tolist())
        self._lb.extend(np.broadcast_to(np.asarray(lb, dtype=float), (n,)).tolist())
        self._ub.extend(np.broadcast_to(np.asarray(ub, dtype=float), (n,)).tolist())
        self._names.extend('%s[%d]' % (name, i) for i in range(n))
        if binary:
            self._binaries.extend(idx.tolist())
        self.blocks[name] = idx
        return idx

    def add_objective(self, cols, coeffs):
        '''Adds ``coeffs`` to the objective coefficients of ``cols``.'''
        cols = np.atleast_1d(cols)
        coeffs = np.broadcast_to(np.asarray(coeffs, dtype=float), cols.shape)
        for j, v in zip(cols, coeffs):
            self._c[int(j)] += float(v)

    def add_row(self, coeffs, sense, rhs, name=None):
        '''``coeffs``: mapping column -> coefficient (repeated columns add up).'''
        if sense not in _SENSES:
            raise ValueError('Unknown row sense %r' % (sense,))
        row = {}
        for j, v in coeffs.items():
            row[int(j)] = row.get(int(j), 0.0) + float(v)
        self._rows.append(row)
        self._senses.append(sense)
        self._rhs.append(float(rhs))
        self._row_names.append(name or 'r%d' % len(self._row_names))
        return len(self._rows) - 1

    def add_dense_rows(self, cols, matrix, sense, rhs, name):
        '''Adds one row per line of ``matrix`` over columns ``cols``. Returns row indices.

        All-zero lines are added as well; callers filter them if needed.
        '''
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), (matrix.shape[0],))
        rows = []
        for i, (line, r) in enumerate(zip(matrix, rhs)):
            nz = np.flatnonzero(line)
            rows.append(self.add_row(
                dict(zip(np.asarray(cols)[nz], line[nz])), sense, r, '%s[%d]' % (name, i)
            ))
        return np.array(rows, dtype=int)

    def build(self):
        n, m = len(self._c), len(self._rows)
        A = np.zeros((m, n))
        for i, row in enumerate(self._rows):
            for j, v in row.items():
                A[i, j] = v
        lp = LpProblem(
            c=self._c, A=A, senses=self._senses, b=self._rhs,
            lb=self._lb, ub=self._ub, sense=self.sense,
            objective_constant=self.objective_constant,
            var_names=list(self._names), row_names=list(self._row_names),
            blocks=dict(self.blocks),
        )
        if self._binaries:
            return MilpProblem(lp=lp, binaries=self._binaries)
        return lp


class SolverBase:
    '''Interface every backend implements.

    Backends are constructed with a `SolverOptions` instance and must honour
    the dual sign convention of this module.
    '''
    name = ''

    def __init__(self, options=None):
        self.options = options or SolverOptions()

    def solve_lp(self, problem):
        '''Solve ``problem``, return `LpSolution`.

        Infeasibility and unboundedness are reported through
        ``LpSolution.status``; numerical trouble raises `SolverError`. Unless
        ``options.audit`` is off, an optimum failing `audit_lp_solution` raises
        `SolverError` as well.
        '''
        solution = self._solve_lp(problem)
        if self.options.audit and solution.optimal:
            self._raise_on_audit(problem, solution, 'LP')
        return solution

    def solve_milp(self, problem):
        '''Solve ``problem`` (`MilpProblem`), return `MilpResult`.

        Raises `InfeasibleError` if no integer solution exists, and
        `SolverLimitError` if a limit is hit before the first incumbent.
        ``result.solution.duals`` are the duals of the LP with all binaries
        fixed at their incumbent values. The incumbent is audited against
        that fixed LP.
        '''
        result = self._solve_milp(problem)
        if self.options.audit:
            x = result.solution.x
            values = np.round(x[problem.binaries])
            lb, ub = problem.lp.lb.copy(), problem.lp.ub.copy()
            lb[problem.binaries] = values
            ub[problem.binaries] = values
            fixed = attr.evolve(problem.lp, lb=lb, ub=ub)
            self._raise_on_audit(fixed, result.solution, 'MILP incumbent')
        return result

    def _raise_on_audit(self, problem, solution, what):
        problems = audit_lp_solution(problem, solution, self.options)
        if problems:
            L().warning('%s %s solution fails the audit: %s', self.name, what, '; '.join(problems[:3]))
            raise SolverError('%s solution from %s backend fails the audit: %s'
                              % (what, self.name, problems[0]))

    def _solve_lp(self, problem):
        raise NotImplementedError('Abstract method')

    def _solve_milp(self, problem):
        raise NotImplementedError('Abstract method')


_BACKEND_NAME = 'simplex'
_BACKEND_OPTIONS = SolverOptions()
BACKENDS = ('simplex', 'highs')


def set_backend(backend_name, options=None):
    '''Set the solver backend and its options.

    Backend name can be ``simplex`` or ``highs``. ``options`` is a
    `SolverOptions` instance or a ``dict`` of its fields.
    '''
    backend_name = backend_name.lower()
    if backend_name not in BACKENDS:
        raise ValueError('Unsupported backend "%s"' % backend_name)
    if isinstance(options, dict):
        options = SolverOptions(**options)
    global _BACKEND_NAME
    global _BACKEND_OPTIONS
    _BACKEND_NAME = backend_name
    _BACKEND_OPTIONS = options or SolverOptions()
    L().debug('Solver backend: %s', backend_name)


def get_backend(options=None):
    '''Get backend instance as previously set; ``options`` overrides the global ones.'''
    options = options or _BACKEND_OPTIONS
    if _BACKEND_NAME == 'simplex':
        from .opt_kernel_simplex import SimplexSolver
        return SimplexSolver(options)
    elif _BACKEND_NAME == 'highs':
        from .opt_kernel_highs import HighsSolver
        return HighsSolver(options)


@attr.s(eq=False)
class Deadline:
    '''Wall-clock budget shared by every solver call of one task.

    ``seconds=None`` never expires. ``clock`` returns seconds; the budget
    starts counting when the deadline is created.
    '''
    seconds = attr.ib(default=None, converter=nullable(gt0(float)))
    clock = attr.ib(default=time.monotonic, repr=False)
    start = attr.ib(default=None)

    def __attrs_post_init__(self):
        if self.start is None:
            self.start = self.clock()

    @property
    def remaining(self):
        if self.seconds is None:
            return None
        return self.seconds - (self.clock() - self.start)

    @property
    def expired(self):
        remaining = self.remaining
        return remaining is not None and remaining <= 0

    def solver_options(self, options=None):
        '''``options`` (default: the backend's) with ``time_limit`` capped at the remaining time.'''
        options = options or _BACKEND_OPTIONS
        remaining = self.remaining
        if remaining is None:
            return options
        remaining = max(remaining, MIN_SOLVE_TIME)
        if options.time_limit is not None:
            remaining = min(remaining, options.time_limit)
        return attr.evolve(options, time_limit=remaining)


def get_backend_name():
    return _BACKEND_NAME


def solve_lp(problem, options=None):
    return get_backend(options).solve_lp(problem)


def solve_milp(problem, options=None):
    return get_backend(options).solve_milp(problem)


def _row_activity(problem, x):
    return problem.A @ x if problem.n_rows else np.zeros(0)


def audit_lp_solution(problem, solution, options=None):
    '''Independent check of an optimal `LpSolution`.

    Returns a list of violation messages (empty = pass) covering primal
    feasibility (``feas_tol``), dual signs and reduced costs (``opt_tol``
    scaled), complementary slackness (``cs_tol``) and the primal-dual
    objective gap (``gap_tol``, relative). All tolerances are relative to the
    magnitude of the data involved. A solution without duals is checked
    for primal feasibility and its reported objective only.
    '''
    options = options or SolverOptions()
    if solution.status != OPTIMAL:
        return ['solution status is %s, not optimal' % solution.status]
    x = np.asarray(solution.x, dtype=float)
    problems = []
    ax = _row_activity(problem, x)
    b = problem.b
    row_scale = 1.0 + np.abs(b)
    if problem.n_rows:
        row_scale = row_scale + np.abs(problem.A) @ np.abs(x)
    ftol = options.feas_tol * 10
    for i, (s, act, rhs, sc) in enumerate(zip(problem.senses, ax, b, row_scale)):
        viol = {LE: act - rhs, GE: rhs - act, EQ: abs(act - rhs)}[s]
        if viol > ftol * sc:
            problems.append('row %d: activity %.9g violates %s %.9g' % (i, act, s, rhs))
    for j in np.flatnonzero(x < problem.lb - ftol * (1 + np.abs(problem.lb))):
        problems.append('variable %d: %.9g below lower bound %.9g' % (j, x[j], problem.lb[j]))
    for j in np.flatnonzero(x > problem.ub + ftol * (1 + np.abs(problem.ub))):
        problems.append('variable %d: %.9g above upper bound %.9g' % (j, x[j], problem.ub[j]))

    reported = solution.objective
    if abs(reported - problem.objective(x)) > 1e-6 * max(1.0, abs(reported)):
        problems.append('reported objective %.12g differs from c^T x %.12g'
                        % (reported, problem.objective(x)))
    if solution.duals is not None:
        problems.extend(_audit_duals(problem, solution, x, ax, row_scale, options))
    return problems


def _audit_duals(problem, solution, x, ax, row_scale, options):
    problems = []
    b = problem.b
    # bring duals to minimisation form
    sgn = 1.0 if problem.sense == 'min' else -1.0
    c = sgn * problem.c
    ym = sgn * np.asarray(solution.duals, dtype=float)
    d = c - (problem.A.T @ ym if problem.n_rows else 0.0)
    if solution.reduced_costs is not None:
        rc = sgn * np.asarray(solution.reduced_costs, dtype=float)
        for j in np.flatnonzero(np.abs(rc - d) > 1e-6 * (1 + np.abs(c))):
            problems.append('variable %d: reported reduced cost differs from c - A^T y' % j)
    dscale = 1.0 + np.abs(c).max(initial=0.0)
    dtol = options.cs_tol * dscale
    for i, (s, yi) in enumerate(zip(problem.senses, ym)):
        if s == GE and yi < -dtol:
            problems.append('row %d (>=): dual %.9g has wrong sign' % (i, sgn * yi))
        if s == LE and yi > dtol:
            problems.append('row %d (<=): dual %.9g has wrong sign' % (i, sgn * yi))

    # complementary slackness on rows
    for i, (yi, act, rhs, sc) in enumerate(zip(ym, ax, b, row_scale)):
        if problem.senses[i] != EQ and abs(yi) * abs(act - rhs) > options.cs_tol * sc * dscale:
            problems.append('row %d: complementary slackness violated (dual %.3g, slack %.3g)'
                            % (i, sgn * yi, rhs - act))

    # bounds: d > 0 needs x at lb, d < 0 needs x at ub
    dual_obj = float(b @ ym) if problem.n_rows else 0.0
    # size of the terms summed into dual_obj; the gap is judged against it
    magnitude = float(np.abs(b) @ np.abs(ym)) if problem.n_rows else 0.0
    lb, ub = problem.lb, problem.ub
    for j in range(problem.n_vars):
        dj = d[j]
        if dj > dtol:
            if not np.isfinite(lb[j]) or (x[j] - lb[j]) * dj > options.cs_tol * (1 + abs(lb[j])) * dscale:
                problems.append('variable %d: reduced cost %.3g but not at lower bound' % (j, sgn * dj))
            elif np.isfinite(lb[j]):
                dual_obj += dj * lb[j]
                magnitude += abs(dj * lb[j])
        elif dj < -dtol:
            if not np.isfinite(ub[j]) or (ub[j] - x[j]) * -dj > options.cs_tol * (1 + abs(ub[j])) * dscale:
                problems.append('variable %d: reduced cost %.3g but not at upper bound' % (j, sgn * dj))
            elif np.isfinite(ub[j]):
                dual_obj += dj * ub[j]
                magnitude += abs(dj * ub[j])
        else:
            dual_obj += dj * x[j]
            magnitude += abs(dj * x[j])
    primal_obj = float(c @ x)
    gap_tol = max(options.gap_tol, 1e-6) * 10
    if abs(primal_obj - dual_obj) > gap_tol * max(1.0, abs(primal_obj), magnitude):
        problems.append('duality gap: primal %.12g, dual %.12g' % (sgn * primal_obj, sgn * dual_obj))
    return problems


_re_name = re.compile(r'[^A-Za-z0-9_.]')


def _lp_name(name):
    name = _re_name.sub('_', name)
    if not name or name[0].isdigit() or name[0] in '.eE':
        name = 'v' + name
    return name


def _lp_terms(coeffs, names):
    parts = []
    for j, v in coeffs:
        sign = '-' if v < 0 else '+'
        parts.append('%s %s %s' % (sign, repr(abs(float(v))), names[j]))
    text = ' '.join(parts) if parts else '0 %s' % names[0] if names else '0'
    if text.startswith('+ '):
        text = text[2:]
    return text


def to_lp_text(problem):
    '''CPLEX LP-format text of an `LpProblem` or `MilpProblem`.'''
    binaries = []
    if isinstance(problem, MilpProblem):
        binaries = problem.binaries
        problem = problem.lp
    n = problem.n_vars
    names = [_lp_name(nm) for nm in (problem.var_names or ['x%d' % j for j in range(n)])]
    row_names = [_lp_name(nm) for nm in (problem.row_names or ['r%d' % i for i in range(problem.n_rows)])]
    out = ['\\ generated by fdi_assess']
    if problem.objective_constant:
        out.append('\\ objective constant %r' % problem.objective_constant)
    out.append('Maximize' if problem.sense == 'max' else 'Minimize')
    nz = [(j, v) for j, v in enumerate(problem.c) if v != 0]
    out.append(' obj: ' + _lp_terms(nz, names))
    out.append('Subject To')
    for i in range(problem.n_rows):
        row = problem.A[i]
        terms = [(j, row[j]) for j in np.flatnonzero(row)]
        out.append(' %s: %s %s %r' % (row_names[i], _lp_terms(terms, names), problem.senses[i], float(problem.b[i])))
    out.append('Bounds')
    binary_set = set(int(j) for j in binaries)
    for j in range(n):
        if j in binary_set:
            continue
        lo, hi = problem.lb[j], problem.ub[j]
        if lo == -np.inf and hi == np.inf:
            out.append(' %s free' % names[j])
        elif lo == hi:
            out.append(' %s = %r' % (names[j], float(lo)))
        else:
            lo_s = '-inf' if lo == -np.inf else repr(float(lo))
            hi_s = '+inf' if hi == np.inf else repr(float(hi))
            out.append(' %s <= %s <= %s' % (lo_s, names[j], hi_s))
    if binary_set:
        out.append('Binaries')
        out.append(' ' + ' '.join(names[j] for j in sorted(binary_set)))
    out.append('End')
    return '\n'.join(out) + '\n'
