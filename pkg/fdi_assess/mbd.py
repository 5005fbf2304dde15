'''
Modified Benders decomposition for attacker-defender bi-level LPs.

Generic form, all rows ``>=``::

    minimise    c1' x + d1' y*
    subject to  A1 x >= b1
                y* in argmin { d2' y : A2 x + A3 y >= b2 }

The master problem (MP) optimises ``x`` and a cost-to-go estimate ``alpha``
under the cuts collected so far. The subproblem (SP) fixes ``x`` and picks,
among the defender's optimal responses, the one with least ``d1' y``: primal
feasibility, dual feasibility (``A3' beta = d2``, ``beta >= 0``) and a
strong-duality row tie ``y`` and ``beta`` together. Its duals give a cut that
is linear in ``x``. The strong-duality row also depends on ``x``; the cut
ignores that part, so the method finds a good attack but cannot certify the
global optimum. Results are lower bounds.

:any:`to_adblp` maps an attack instance to the generic form with
``x = (c, s)`` and ``y = P_G``; :any:`solve_mbd_attack` runs the whole
chain and returns an :any:`.attack_milp.AttackResult`.
'''

import logging
import time

import attr
import numpy as np

from .attack_milp import (
    LOWER_BOUND,
    _check_target,
    _result,
    add_attack_vector,
    orientation,
)
from .dcopf import solve_dcopf
from .event import event
from .grid_model import attackable_buses, fit_to_budget
from .opt_kernel import (
    EQ,
    GE,
    INFEASIBLE,
    LE,
    OPTIMAL,
    UNBOUNDED,
    Deadline,
    InfeasibleError,
    LpBuilder,
    SolverError,
    UnboundedError,
    get_backend,
)

__all__ = [
    'AdblpProblem',
    'BendersCut',
    'SpSolution',
    'MbdResult',
    'MbdIteration',
    'OPTIMALITY',
    'FEASIBILITY',
    'to_adblp',
    'solve_sp',
    'solve_mbd',
    'solve_mbd_attack',
    'on_iteration',
]

L = lambda: logging.getLogger(__name__)

OPTIMALITY = 'optimality'
FEASIBILITY = 'feasibility'

IDENTITY_TOL = 1e-6


def _array(value):
    return np.asarray(value, dtype=float)


def _matrix(value):
    return np.atleast_2d(np.asarray(value, dtype=float))


@attr.s(eq=False)
class AdblpProblem:
    '''Attacker-defender bi-level LP in the generic ``>=`` form.

    ``x_lb``/``x_ub`` default to free attacker variables; the defender
    variables are always free (their bounds belong in ``A3``).
    ``objective_constant`` is added to reported objectives. ``a_big`` bounds
    ``alpha`` from below in the first master problems.
    '''
    c1 = attr.ib(converter=_array)
    d1 = attr.ib(converter=_array)
    d2 = attr.ib(converter=_array)
    A1 = attr.ib(converter=_matrix)
    b1 = attr.ib(converter=_array)
    A2 = attr.ib(converter=_matrix)
    A3 = attr.ib(converter=_matrix)
    b2 = attr.ib(converter=_array)
    x_lb = attr.ib(default=None)
    x_ub = attr.ib(default=None)
    objective_constant = attr.ib(default=0.0)
    a_big = attr.ib(default=None)
    x_names = attr.ib(factory=list)
    y_names = attr.ib(factory=list)
    row_names = attr.ib(factory=list)

    def __attrs_post_init__(self):
        if self.x_lb is None:
            self.x_lb = np.full(self.n_x, -np.inf)
        if self.x_ub is None:
            self.x_ub = np.full(self.n_x, np.inf)
        self.x_lb = _array(self.x_lb)
        self.x_ub = _array(self.x_ub)
        if self.a_big is None:
            scale = np.abs(self.b2).sum() + np.abs(self.d1).sum()
            self.a_big = 10.0 * max(1.0, float(scale))
        self.validate()

    @property
    def n_x(self):
        return self.c1.shape[0]

    @property
    def n_y(self):
        return self.d1.shape[0]

    @property
    def n_coupled(self):
        return self.b2.shape[0]

    def validate(self):
        n_x, n_y, m = self.n_x, self.n_y, self.n_coupled
        if self.d2.shape != (n_y,):
            raise ValueError('d2 has shape %s, expected (%d,)' % (self.d2.shape, n_y))
        if self.A1.shape != (self.b1.shape[0], n_x):
            if not (self.b1.shape[0] == 0 and self.A1.size == 0):
                raise ValueError('A1 has shape %s, expected (%d, %d)'
                                 % (self.A1.shape, self.b1.shape[0], n_x))
            self.A1 = np.zeros((0, n_x))
        if self.A2.shape != (m, n_x):
            raise ValueError('A2 has shape %s, expected (%d, %d)' % (self.A2.shape, m, n_x))
        if self.A3.shape != (m, n_y):
            raise ValueError('A3 has shape %s, expected (%d, %d)' % (self.A3.shape, m, n_y))
        if self.x_lb.shape != (n_x,) or self.x_ub.shape != (n_x,):
            raise ValueError('Attacker bounds must have length %d' % n_x)

    def residuals(self, x, y):
        '''``(A1 x - b1, A2 x + A3 y - b2)``; feasible iff both are nonnegative.'''
        x, y = _array(x), _array(y)
        return self.A1 @ x - self.b1, self.A2 @ x + self.A3 @ y - self.b2

    def attacker_objective(self, x, y):
        return float(self.c1 @ x + self.d1 @ y + self.objective_constant)


@attr.s(eq=False)
class BendersCut:
    '''``alpha >= constant + linear x`` (optimality) or ``0 >= constant + linear x`` (feasibility).'''
    kind = attr.ib()
    gamma = attr.ib()
    lambda_sp = attr.ib()
    constant = attr.ib()
    linear = attr.ib()
    iteration = attr.ib(default=0)

    def value(self, x):
        return float(self.constant + self.linear @ x)


@attr.s(eq=False)
class SpSolution:
    '''Subproblem outcome at a fixed ``x``.

    Feasible: ``y``, ``beta`` and the duals ``gamma`` (coupled rows),
    ``lambda_sp`` (dual-feasibility rows) and ``delta`` (strong-duality row).
    Infeasible: ``cut`` holds the feasibility cut.
    '''
    feasible = attr.ib()
    objective = attr.ib(default=np.nan)
    y = attr.ib(default=None)
    beta = attr.ib(default=None)
    gamma = attr.ib(default=None)
    lambda_sp = attr.ib(default=None)
    delta = attr.ib(default=0.0)
    identity_gap = attr.ib(default=0.0)
    cut = attr.ib(default=None)


@attr.s(eq=False)
class MbdResult:
    '''Best consistent ``(x, y)`` found and the run statistics.

    ``objective`` includes the problem's ``objective_constant``.
    ``master_objectives`` holds the MP optimum per iteration (without the
    constant).
    '''
    x = attr.ib()
    y = attr.ib()
    objective = attr.ib()
    iterations = attr.ib()
    converged = attr.ib()
    cuts = attr.ib(factory=list)
    master_objectives = attr.ib(factory=list)
    gap = attr.ib(default=np.inf)
    timed_out = attr.ib(default=False)


@attr.s(frozen=True)
class MbdIteration:
    iteration = attr.ib()
    master_objective = attr.ib()
    alpha = attr.ib()
    sp_objective = attr.ib()
    gap = attr.ib()
    cut_kind = attr.ib()


@event
def on_iteration(record):
    '''Fired after every master/subproblem round with an `MbdIteration`.'''


def _coupled_rhs(p, x):
    return p.b2 - p.A2 @ x


def _phase_one(p, rhs, options):
    '''``min 1'v  s.t.  A3 y + v >= rhs``; duals give the feasibility cut.'''
    lp = LpBuilder('min')
    y = lp.add_vars('y', p.n_y, lb=-np.inf)
    v = lp.add_vars('v', p.n_coupled, obj=1.0)
    rows = []
    for i in range(p.n_coupled):
        coeffs = {y[j]: p.A3[i, j] for j in np.flatnonzero(p.A3[i])}
        coeffs[v[i]] = 1.0
        rows.append(lp.add_row(coeffs, GE, rhs[i], 'gamma[%d]' % i))
    sol = get_backend(options).solve_lp(lp.build())
    if sol.status != OPTIMAL:
        raise SolverError('Feasibility LP is %s' % sol.status)
    return sol, np.asarray(rows)


def solve_sp(p, x_star, *, options=None):
    '''Defender's best response to ``x_star`` that is best for the attacker.

    Returns an :any:`SpSolution`; an infeasible defender block yields a
    feasibility cut instead of raising. Raises :any:`.opt_kernel.UnboundedError`
    if the subproblem is unbounded, :any:`.opt_kernel.SolverError` if it is
    infeasible for another reason than the coupled rows.
    '''
    x_star = _array(x_star)
    if x_star.shape != (p.n_x,):
        raise ValueError('x has shape %s, expected (%d,)' % (x_star.shape, p.n_x))
    rhs = _coupled_rhs(p, x_star)
    lp = LpBuilder('min')
    y = lp.add_vars('y', p.n_y, lb=-np.inf, obj=p.d1)
    beta = lp.add_vars('beta', p.n_coupled)
    coeffs = {beta[i]: rhs[i] for i in np.flatnonzero(rhs)}
    for j in np.flatnonzero(p.d2):
        coeffs[y[j]] = -p.d2[j]
    delta_row = lp.add_row(coeffs, GE, 0.0, 'delta')
    gamma_rows = lp.add_dense_rows(y, p.A3, GE, rhs, 'gamma')
    lambda_rows = lp.add_dense_rows(beta, p.A3.T, EQ, p.d2, 'lambda')
    sol = get_backend(options).solve_lp(lp.build())

    if sol.status == UNBOUNDED:
        raise UnboundedError(
            'Subproblem is unbounded: the attacker objective is not bounded over the '
            "defender's optimal responses (|x|=%d, |y|=%d, %d coupled rows)"
            % (p.n_x, p.n_y, p.n_coupled)
        )
    if sol.status == INFEASIBLE:
        phase1, rows = _phase_one(p, rhs, options)
        if phase1.objective <= 1e-7 * max(1.0, float(np.abs(rhs).max(initial=0.0))):
            raise SolverError('Subproblem is infeasible but the defender block is feasible: '
                              'the defender problem is unbounded')
        gamma = np.maximum(phase1.duals[rows], 0.0)
        cut = BendersCut(
            kind=FEASIBILITY,
            gamma=gamma,
            lambda_sp=np.zeros(p.n_y),
            constant=float(gamma @ p.b2),
            linear=-(gamma @ p.A2),
        )
        L().debug('SP infeasible, violation %.6g', phase1.objective)
        return SpSolution(feasible=False, objective=np.inf, cut=cut)
    if sol.status != OPTIMAL:
        raise SolverError('Subproblem is %s' % sol.status)

    gamma = sol.duals[gamma_rows]
    lambda_sp = sol.duals[lambda_rows]
    objective = float(p.d1 @ sol.x[y])
    dual_value = float(gamma @ rhs + lambda_sp @ p.d2)
    identity_gap = abs(objective - dual_value)
    if identity_gap > IDENTITY_TOL * max(1.0, abs(objective)):
        L().warning('SP strong duality off by %.3g (primal %.9g, dual %.9g)',
                    identity_gap, objective, dual_value)
    cut = BendersCut(
        kind=OPTIMALITY,
        gamma=gamma,
        lambda_sp=lambda_sp,
        constant=float(gamma @ p.b2 + lambda_sp @ p.d2),
        linear=-(gamma @ p.A2),
    )
    return SpSolution(
        feasible=True,
        objective=objective,
        y=sol.x[y],
        beta=sol.x[beta],
        gamma=gamma,
        lambda_sp=lambda_sp,
        delta=float(sol.duals[delta_row]),
        identity_gap=identity_gap,
        cut=cut,
    )


def _master(p, cuts):
    lp = LpBuilder('min')
    x = lp.add_vars('x', p.n_x, lb=p.x_lb, ub=p.x_ub, obj=p.c1)
    alpha = lp.add_vars('alpha', 1, lb=-p.a_big, obj=1.0)[0]
    lp.add_dense_rows(x, p.A1, GE, p.b1, 'attacker')
    for k, cut in enumerate(cuts):
        coeffs = {x[j]: -cut.linear[j] for j in np.flatnonzero(cut.linear)}
        if cut.kind == OPTIMALITY:
            coeffs[alpha] = 1.0
        lp.add_row(coeffs, GE, cut.constant, '%s_cut[%d]' % (cut.kind, k))
    return lp.build(), x, alpha


def solve_mbd(p, eps=1e-4, max_iters=200, *, options=None, deadline=None):
    '''Alternate master problem and subproblem until ``d1'y - alpha < eps``.

    Adds one cut per iteration and never drops cuts. Returns the best
    feasible ``(x, y)`` seen as an :any:`MbdResult`; ``converged`` is false
    when ``max_iters`` or the ``deadline`` ran out first.

    Raises :any:`.opt_kernel.InfeasibleError` if the master problem is
    infeasible (inconsistent attacker constraints) or no iterate admits a
    defender response.
    '''
    deadline = deadline or Deadline()
    cuts = []
    timed_out = False
    master_objectives = []
    best = None
    converged = False
    gap = np.inf
    seen_optimality_cut = False
    iteration = 0
    for iteration in range(1, max_iters + 1):
        if best is not None and deadline.expired:
            timed_out = True
            break
        step_options = deadline.solver_options(options)
        master, xs, alpha_col = _master(p, cuts)
        msol = get_backend(step_options).solve_lp(master)
        if msol.status == INFEASIBLE:
            raise InfeasibleError('Master problem is infeasible: attacker constraints '
                                  'and feasibility cuts are inconsistent')
        if msol.status != OPTIMAL:
            raise SolverError('Master problem is %s' % msol.status)
        x = msol.x[xs]
        alpha = float(msol.x[alpha_col])
        master_objectives.append(float(msol.objective))
        if seen_optimality_cut and alpha <= -p.a_big + 1e-9 * p.a_big:
            L().warning('MBD iteration %d: alpha sits at its artificial bound %.6g',
                        iteration, -p.a_big)

        sp = solve_sp(p, x, options=step_options)
        if sp.feasible:
            gap = sp.objective - alpha
            total = float(p.c1 @ x) + sp.objective
            if best is None or total < best[2]:
                best = (x, sp.y, total)
            kind = None if gap < eps else OPTIMALITY
        else:
            gap = np.inf
            kind = FEASIBILITY
        on_iteration(MbdIteration(
            iteration=iteration,
            master_objective=master_objectives[-1],
            alpha=alpha,
            sp_objective=sp.objective,
            gap=gap,
            cut_kind=kind,
        ))
        L().debug('MBD iteration %d: MP %.9g, SP %.9g, gap %.3g, cut %s',
                  iteration, master_objectives[-1], sp.objective, gap, kind)
        if kind is None:
            converged = True
            break
        sp.cut.iteration = iteration
        cuts.append(sp.cut)
        seen_optimality_cut = seen_optimality_cut or kind == OPTIMALITY
    if best is None:
        raise InfeasibleError('No master iterate admits a defender response')
    if timed_out:
        L().warning('MBD ran out of time after %d iterations, gap %.3g', len(master_objectives), gap)
    elif not converged:
        L().warning('MBD stopped after %d iterations, gap %.3g', iteration, gap)
    x, y, total = best
    return MbdResult(
        x=x,
        y=y,
        objective=total + p.objective_constant,
        iterations=len(master_objectives),
        converged=converged,
        cuts=cuts,
        master_objectives=master_objectives,
        gap=gap,
        timed_out=timed_out,
    )


def _to_ge(problem):
    '''Rows of an :any:`.opt_kernel.LpProblem` as ``(A, b)`` in ``>=`` form.'''
    blocks_A, blocks_b = [], []
    for row, sense, rhs in zip(problem.A, problem.senses, problem.b):
        if sense in (GE, EQ):
            blocks_A.append(row)
            blocks_b.append(rhs)
        if sense in (LE, EQ):
            blocks_A.append(-row)
            blocks_b.append(-rhs)
    n = problem.n_vars
    if not blocks_A:
        return np.zeros((0, n)), np.zeros(0)
    return np.array(blocks_A), np.array(blocks_b)


def to_adblp(case, ptdf, H, inst, *, baseline=None, options=None):
    '''The attack on ``inst.target_line`` as an :any:`AdblpProblem`.

    ``x = (c on the attackable buses, s)``, ``y = P_G``. The attacker
    objective ``rho P_l - sigma sum(s)`` is negated into a minimisation;
    ``objective_constant`` holds the load-dependent part of ``-rho P_l``.
    Coupled rows, in order: balance (two rows), upper and lower limit of
    every rated line, upper and lower limit of every generator.
    '''
    _check_target(case, inst)
    if baseline is None:
        baseline = solve_dcopf(case, ptdf, H=H, options=options)
    l = inst.target_line
    rho = orientation(baseline.physical_flows[l])
    A = attackable_buses(case)
    n_a = len(A)

    lp = LpBuilder('min')
    c_cols, s_cols = add_attack_vector(lp, case, H, inst, penalty=inst.sigma)
    attacker = lp.build()
    A1, b1 = _to_ge(attacker)

    loads = case.loads
    S = ptdf.entries @ case.gen_bus_matrix
    G = ptdf.entries @ H.entries[:, A]
    f_load = ptdf.entries @ (-loads)
    ratings = case.ratings
    n_g = case.n_gen
    n_x = attacker.n_vars

    rows_A2, rows_A3, rhs, names = [], [], [], []

    def add(a2_c, a3, b, name):
        a2 = np.zeros(n_x)
        a2[c_cols] = a2_c
        rows_A2.append(a2)
        rows_A3.append(a3)
        rhs.append(b)
        names.append(name)

    zero_c = np.zeros(n_a)
    ones = np.ones(n_g)
    add(zero_c, ones, loads.sum(), 'balance_lo')
    add(zero_c, -ones, -loads.sum(), 'balance_up')
    for k in case.rated_lines:
        add(-G[k], -S[k], -ratings[k] + f_load[k], 'line_up[%d]' % k)
        add(G[k], S[k], -ratings[k] - f_load[k], 'line_lo[%d]' % k)
    eye = np.eye(n_g)
    for g in range(n_g):
        add(zero_c, -eye[g], -case.pmax[g], 'gen_up[%d]' % g)
        add(zero_c, eye[g], case.pmin[g], 'gen_lo[%d]' % g)

    finite = ratings[np.isfinite(ratings)]
    a_big = 10.0 * max(float(finite.sum()), float(case.pmax.sum()), 1.0)
    problem = AdblpProblem(
        c1=attacker.c,
        d1=-rho * S[l],
        d2=case.costs,
        A1=A1,
        b1=b1,
        A2=np.array(rows_A2),
        A3=np.array(rows_A3),
        b2=np.array(rhs),
        x_lb=attacker.lb,
        x_ub=attacker.ub,
        objective_constant=-rho * f_load[l],
        a_big=a_big,
        x_names=list(attacker.var_names),
        y_names=['p_g[%d]' % g for g in range(n_g)],
        row_names=names,
    )
    L().debug('ADBLP for line %d: |x|=%d, |y|=%d, %d attacker rows, %d coupled rows',
              l, problem.n_x, problem.n_y, len(b1), problem.n_coupled)
    return problem


def solve_mbd_attack(case, ptdf, H, inst, *, baseline=None, eps=1e-4, max_iters=200,
                     options=None, deadline=None):
    '''Run :any:`solve_mbd` on the attack instance; returns a lower-bound AttackResult.'''
    start = time.monotonic()
    _check_target(case, inst)
    if baseline is None:
        baseline = solve_dcopf(case, ptdf, H=H, options=options)
    problem = to_adblp(case, ptdf, H, inst, baseline=baseline, options=options)
    run = solve_mbd(problem, eps, max_iters, options=options, deadline=deadline)
    A = attackable_buses(case)
    n_a = len(A)
    c = np.zeros(case.n_bus)
    c[A] = run.x[:n_a]
    c = fit_to_budget(c, inst.N1)
    s = np.zeros(case.n_bus)
    s[A] = run.x[n_a:2 * n_a]
    return _result(
        'mbd', case, ptdf, H, inst, c, s, run.y, baseline, LOWER_BOUND, start,
        iterations=run.iterations, converged=run.converged, timed_out=run.timed_out,
    )
