'''
Worst-case unobservable attack on a target line, as a single-level MILP.

The attacker picks a state perturbation ``c`` (nonzero only on attackable
buses, see :any:`.grid_model.attackable_buses`) subject to

* ``sum |c_i| <= N1`` (linearised with slacks ``-s <= c <= s``),
* ``|(H c)_i| <= L_S * P_Di`` at every bus,

and wants to maximise the *physical* flow on the target line after the
operator re-dispatches against the counterfeit loads, minus a small penalty
``sigma * sum(s)``. The operator's DCOPF is replaced by its KKT conditions;
complementary slackness is linearised with binaries and big-M rows.

If the target's pre-attack flow is negative, the attack drives it further
negative: the orientation ``rho = -1`` multiplies the flow, and all reported
objectives are oriented magnitudes in MW.

Three solvers share the model:

* :any:`solve_original_milp`: all rated lines, all generators;
* :any:`solve_rg`: line-limit rows added on demand (row generation);
* :any:`solve_rcg`: additionally only marginal generators are free
  (row-and-column generation).
'''

import logging
import time

import attr
import numpy as np

from .convert import ge0, gt0, nullable
from .dcopf import DcopfInfeasible, solve_dcopf
from .event import event
from .grid_model import (
    attackable_buses,
    cyber_flows,
    find_critical_lines,
    find_marginal_generators,
    fit_to_budget,
    physical_flows,
    unobservability_audit,
)
from .opt_kernel import Deadline, LpBuilder, SolverError, get_backend

__all__ = [
    'AttackInstance',
    'AttackResult',
    'IterationRecord',
    'AttackModelError',
    'AttackAuditError',
    'add_attack_vector',
    'build_attack_milp',
    'default_big_m',
    'solve_original_milp',
    'solve_rg',
    'solve_rcg',
    'check_big_m_sensitivity',
    'orientation',
    'on_iteration',
    'EXACT',
    'LOWER_BOUND',
]

L = lambda: logging.getLogger(__name__)

EXACT = 'exact'
LOWER_BOUND = 'lower_bound'

OVERFLOW_TOL = 1e-6
DISPATCH_TOL = 1e-4
MARGINAL_TOL = 1e-4
BIG_M_FACTOR = 10.0


class AttackModelError(ValueError):
    '''The attack instance cannot be modelled (e.g. unrated target line).'''


class AttackAuditError(SolverError):
    '''A solved attack fails the complementarity or the stealth audit.'''


def _fraction(x):
    x = float(x)
    if not 0 < x < 1:
        raise ValueError('Load shift must be strictly between 0 and 1, got %r' % x)
    return x


@attr.s(frozen=True)
class AttackInstance:
    '''Attack parameters; ``c`` and ``s`` are filled in on results.

    ``big_M`` overrides the per-row default (:any:`default_big_m`) with one
    constant for every big-M row.
    '''
    target_line = attr.ib(converter=int)
    N1 = attr.ib(converter=ge0(float))
    L_S = attr.ib(converter=_fraction)
    sigma = attr.ib(default=1e-3, converter=gt0(float))
    big_M = attr.ib(default=None, converter=nullable(gt0(float)))
    c = attr.ib(default=None, eq=False)
    s = attr.ib(default=None, eq=False)


@attr.s(eq=False)
class AttackResult:
    '''Outcome of one attack optimisation.

    ``objective`` is the oriented physical target flow in MW (penalty term
    excluded, reported separately as ``penalty``). ``dispatch`` is the
    dispatch the attacker predicts; for RCG ``objective`` is measured on the
    true post-attack dispatch instead.
    '''
    algorithm = attr.ib()
    target_line = attr.ib()
    objective = attr.ib()
    bound_type = attr.ib()
    c = attr.ib()
    dispatch = attr.ib()
    target_flow = attr.ib(default=0.0)
    penalty = attr.ib(default=0.0)
    orientation = attr.ib(default=1)
    rating = attr.ib(default=np.inf)
    iterations = attr.ib(default=1)
    Q = attr.ib(factory=frozenset)
    R = attr.ib(factory=frozenset)
    binary_counts = attr.ib(factory=list)
    milp_limit_hit = attr.ib(default=False)
    converged = attr.ib(default=True)
    # stopped by the deadline, result is a lower bound
    timed_out = attr.ib(default=False)
    wall_time = attr.ib(default=0.0)
    instance = attr.ib(default=None)

    @property
    def binaries(self):
        '''Binary count of the last (largest) MILP solved.'''
        return self.binary_counts[-1] if self.binary_counts else 0

    @property
    def overflow(self):
        return self.objective > self.rating + OVERFLOW_TOL


@attr.s(frozen=True)
class IterationRecord:
    algorithm = attr.ib()
    target_line = attr.ib()
    iteration = attr.ib()
    Q = attr.ib(converter=sorted)
    R = attr.ib(converter=sorted)
    binaries = attr.ib()
    incumbent = attr.ib()
    new_lines = attr.ib(converter=sorted, factory=list)
    new_generators = attr.ib(converter=sorted, factory=list)


@event
def on_iteration(record):
    '''Fired after every MILP solve with an `IterationRecord`.'''


def orientation(flow):
    '''``+1`` for nonnegative flow, ``-1`` otherwise.'''
    return 1 if flow >= 0 else -1


def _check_target(case, inst):
    k = inst.target_line
    if not 0 <= k < case.n_branch:
        raise AttackModelError('Target line %d does not exist' % k)
    if not case.branches[k].rated:
        raise AttackModelError('Target line %d is unrated and cannot overflow' % k)


def default_big_m(case, ptdf, Q, R, scale=1.0):
    '''Per-row big-M constants.

    Returns a dict with arrays ``line`` (primal slack of each line in ``Q``,
    sorted), ``gen`` (primal slack of each generator in ``R``, sorted),
    ``line_dual`` and ``gen_dual`` (dual variables). Primal slacks cannot
    exceed twice a rating or a generator range; duals are bounded by the
    cost spread over the smallest relevant sensitivity, estimated as a
    multiple of the total cost coefficients.
    '''
    Q, R = sorted(Q), sorted(R)
    ratings = case.ratings
    total_q = float(ratings[Q].sum()) if Q else 0.0
    span = case.pmax - case.pmin
    cost_scale = 10.0 * float(np.abs(case.costs).sum())
    line = np.array([max(ratings[k], total_q) for k in Q])
    gen = np.array([max(span[g], total_q) for g in R])
    f = BIG_M_FACTOR * scale
    return {
        'line': f * line,
        'gen': f * gen,
        'line_dual': f * np.maximum(line, cost_scale) if Q else np.zeros(0),
        'gen_dual': f * np.maximum(gen, cost_scale) if R else np.zeros(0),
    }


def add_attack_vector(lp, case, H, inst, penalty=0.0):
    '''Add the attack columns ``c``, ``s`` and the stealth rows to ``lp``.

    Columns cover the attackable buses only. Rows: ``-s <= c <= s``,
    ``sum(s) <= N1`` and ``|(H c)_i| <= L_S * P_Di`` (an equality where the
    bus has no load). ``s`` carries ``-penalty`` in a maximising objective.
    Returns the column index arrays ``(c, s)``.
    '''
    A = attackable_buses(case)
    loads = case.loads
    HA = H.entries[:, A]
    sign = 1.0 if lp.sense == 'max' else -1.0
    c = lp.add_vars('c', len(A), lb=-np.inf)
    s = lp.add_vars('s', len(A), obj=-sign * penalty)

    # l1 budget
    for i in range(len(A)):
        lp.add_row({c[i]: 1.0, s[i]: -1.0}, '<=', 0.0, 'l1_pos[%d]' % i)
        lp.add_row({c[i]: -1.0, s[i]: -1.0}, '<=', 0.0, 'l1_neg[%d]' % i)
    if len(A):
        lp.add_row({j: 1.0 for j in s}, '<=', inst.N1, 'budget')

    # load shift per bus
    for i in range(case.n_bus):
        row = HA[i]
        nz = np.flatnonzero(row)
        if not nz.size:
            continue
        coeffs = dict(zip(c[nz], row[nz]))
        limit = inst.L_S * abs(loads[i])
        if limit == 0:
            lp.add_row(coeffs, '=', 0.0, 'shift[%d]' % i)
        else:
            lp.add_row(coeffs, '<=', limit, 'shift_up[%d]' % i)
            lp.add_row(coeffs, '>=', -limit, 'shift_lo[%d]' % i)
    return c, s


def build_attack_milp(case, ptdf, H, inst, Q, R, baseline=None, *, m_scale=1.0):
    '''KKT/big-M reformulation with line rows only for ``Q`` and free generators ``R``.

    Generators outside ``R`` are fixed at their ``baseline`` dispatch (a
    :any:`.dcopf.DispatchSolution` of the unattacked case, computed if not
    given). The problem maximises ``rho * P_l - sigma * sum(s)``.

    Columns are grouped in ``problem.blocks``: ``c``, ``s``, ``p_g``,
    ``lam``, ``f_plus``, ``f_minus``, ``alpha_plus``, ``alpha_minus`` and the
    binaries ``d_f_plus``, ``d_f_minus``, ``d_alpha_plus``,
    ``d_alpha_minus``. Blocks over ``Q``/``R`` follow sorted order.
    '''
    _check_target(case, inst)
    if baseline is None:
        baseline = solve_dcopf(case, ptdf, H=H)
    rated = set(case.rated_lines)
    Q = sorted(set(Q) & rated)
    R = sorted(R)
    fixed = [g for g in range(case.n_gen) if g not in set(R)]
    A = attackable_buses(case)
    loads = case.loads
    ratings = case.ratings
    S = ptdf.entries @ case.gen_bus_matrix
    HA = H.entries[:, A]
    G = ptdf.entries @ HA
    p_fixed = baseline.p_g[fixed]
    # flow without the free generators and the attack
    f0 = ptdf.entries @ (-loads) + S[:, fixed] @ p_fixed
    l = inst.target_line
    rho = orientation(baseline.physical_flows[l])
    M = default_big_m(case, ptdf, Q, R, m_scale)
    if inst.big_M is not None:
        M = {key: np.full(len(value), inst.big_M * m_scale) for key, value in M.items()}

    lp = LpBuilder('max')
    c, s = add_attack_vector(lp, case, H, inst, penalty=inst.sigma)
    p = lp.add_vars('p_g', len(R), lb=case.pmin[R], ub=case.pmax[R], obj=rho * S[l, R])
    lam = lp.add_vars('lam', 1, lb=-np.inf)[0]
    f_plus = lp.add_vars('f_plus', len(Q))
    f_minus = lp.add_vars('f_minus', len(Q))
    a_plus = lp.add_vars('alpha_plus', len(R))
    a_minus = lp.add_vars('alpha_minus', len(R))
    d_f_plus = lp.add_vars('d_f_plus', len(Q), ub=1, binary=True)
    d_f_minus = lp.add_vars('d_f_minus', len(Q), ub=1, binary=True)
    d_a_plus = lp.add_vars('d_alpha_plus', len(R), ub=1, binary=True)
    d_a_minus = lp.add_vars('d_alpha_minus', len(R), ub=1, binary=True)
    lp.objective_constant = rho * f0[l]

    # defender primal feasibility
    lp.add_row({j: 1.0 for j in p}, '=', loads.sum() - p_fixed.sum(), 'balance')
    for q, k in enumerate(Q):
        flow = dict(zip(p, S[k, R]))
        for i, v in zip(c, G[k]):
            if v != 0:
                flow[i] = v
        lp.add_row(flow, '<=', ratings[k] - f0[k], 'line_up[%d]' % k)
        lp.add_row(flow, '>=', -ratings[k] - f0[k], 'line_lo[%d]' % k)
        # complementary slackness
        lp.add_row({f_plus[q]: 1.0, d_f_plus[q]: -M['line_dual'][q]}, '<=', 0.0, 'cs_f_plus[%d]' % k)
        lp.add_row(
            {**{j: -v for j, v in flow.items()}, d_f_plus[q]: M['line'][q]},
            '<=', M['line'][q] - ratings[k] + f0[k], 'cs_line_up[%d]' % k,
        )
        lp.add_row({f_minus[q]: 1.0, d_f_minus[q]: -M['line_dual'][q]}, '<=', 0.0, 'cs_f_minus[%d]' % k)
        lp.add_row(
            {**flow, d_f_minus[q]: M['line'][q]},
            '<=', M['line'][q] - ratings[k] - f0[k], 'cs_line_lo[%d]' % k,
        )
    for r, g in enumerate(R):
        lp.add_row({a_plus[r]: 1.0, d_a_plus[r]: -M['gen_dual'][r]}, '<=', 0.0, 'cs_a_plus[%d]' % g)
        lp.add_row({p[r]: -1.0, d_a_plus[r]: M['gen'][r]}, '<=', M['gen'][r] - case.pmax[g],
                   'cs_gen_up[%d]' % g)
        lp.add_row({a_minus[r]: 1.0, d_a_minus[r]: -M['gen_dual'][r]}, '<=', 0.0, 'cs_a_minus[%d]' % g)
        lp.add_row({p[r]: 1.0, d_a_minus[r]: M['gen'][r]}, '<=', M['gen'][r] + case.pmin[g],
                   'cs_gen_lo[%d]' % g)

    # stationarity
    costs = case.costs
    for r, g in enumerate(R):
        coeffs = {lam: -1.0, a_plus[r]: 1.0, a_minus[r]: -1.0}
        for q, k in enumerate(Q):
            if S[k, g] != 0:
                coeffs[f_plus[q]] = S[k, g]
                coeffs[f_minus[q]] = -S[k, g]
        lp.add_row(coeffs, '=', -costs[g], 'stationarity[%d]' % g)

    problem = lp.build()
    L().debug('Attack MILP for line %d: |Q|=%d, |R|=%d, %d binaries, %d rows',
              l, len(Q), len(R), problem.n_binaries, problem.lp.n_rows)
    return problem


@attr.s(eq=False)
class _Decoded:
    c = attr.ib()
    s = attr.ib()
    dispatch = attr.ib()
    penalty = attr.ib()
    milp_objective = attr.ib()


def _decode(case, problem, x, baseline, R, inst):
    blocks = problem.blocks
    A = attackable_buses(case)
    c = np.zeros(case.n_bus)
    c[A] = x[blocks['c']]
    c = fit_to_budget(c, inst.N1)
    s = np.zeros(case.n_bus)
    s[A] = x[blocks['s']]
    dispatch = baseline.p_g.copy()
    dispatch[sorted(R)] = x[blocks['p_g']]
    return _Decoded(
        c=c, s=s, dispatch=dispatch,
        penalty=inst.sigma * float(s.sum()),
        milp_objective=problem.lp.objective(x),
    )


def audit_complementarity(case, ptdf, H, problem, x, dispatch, c, Q, R, tol=1e-6):
    '''Check ``delta = 1 => row tight`` and ``delta = 0 => dual = 0`` on an incumbent.

    ``dispatch`` and ``c`` are the decoded full-length vectors. Returns a
    list of violation messages.
    '''
    blocks = problem.blocks
    Q = sorted(set(Q) & set(case.rated_lines))
    R = sorted(R)
    cyber = cyber_flows(ptdf, case, dispatch, c, H)
    ratings = case.ratings
    dual_scale = max(1.0, float(np.abs(case.costs).max(initial=0.0)))
    violations = []
    for q, k in enumerate(Q):
        for name, slack in (('f_plus', ratings[k] - cyber[k]), ('f_minus', ratings[k] + cyber[k])):
            delta = x[blocks['d_' + name][q]]
            dual = x[blocks[name][q]]
            if delta > 0.5 and slack > tol * max(1.0, ratings[k]):
                violations.append('line %d: %s indicator set but slack %.3g' % (k, name, slack))
            if delta < 0.5 and dual > tol * dual_scale:
                violations.append('line %d: %s = %.3g with indicator 0' % (k, name, dual))
    for r, g in enumerate(R):
        for name, slack in (('alpha_plus', case.pmax[g] - dispatch[g]),
                            ('alpha_minus', dispatch[g] - case.pmin[g])):
            delta = x[blocks['d_' + name][r]]
            dual = x[blocks[name][r]]
            if delta > 0.5 and slack > tol * max(1.0, case.pmax[g]):
                violations.append('generator %d: %s indicator set but slack %.3g' % (g, name, slack))
            if delta < 0.5 and dual > tol * dual_scale:
                violations.append('generator %d: %s = %.3g with indicator 0' % (g, name, dual))
    return violations


def _solve_reduced(case, ptdf, H, inst, Q, R, baseline, options, m_scale=1.0):
    problem = build_attack_milp(case, ptdf, H, inst, Q, R, baseline, m_scale=m_scale)
    result = get_backend(options).solve_milp(problem)
    x = result.solution.x
    decoded = _decode(case, problem, x, baseline, R, inst)
    violations = audit_complementarity(
        case, ptdf, H, problem, x, decoded.dispatch, decoded.c, Q, R,
    )
    if violations:
        L().warning('Complementarity audit for line %d: %d violations, first: %s',
                    inst.target_line, len(violations), violations[0])
        raise AttackAuditError('Line %d: incumbent fails the complementarity audit: %s'
                               % (inst.target_line, violations[0]))
    return problem, result, decoded


def _overflowing(case, flows, exclude=()):
    ratings = case.ratings
    return {
        k for k in case.rated_lines
        if abs(flows[k]) > ratings[k] + OVERFLOW_TOL and k not in exclude
    }


def _realise(case, ptdf, H, c, baseline):
    '''True re-dispatch against ``c``; falls back to the unattacked baseline.'''
    try:
        return c, solve_dcopf(case, ptdf, c, H=H).p_g
    except DcopfInfeasible:
        L().warning('Attack makes the DCOPF infeasible; falling back to the baseline')
        return np.zeros(case.n_bus), baseline.p_g.copy()


def _result(algorithm, case, ptdf, H, inst, c, s, dispatch, baseline, bound_type, start, **kwargs):
    l = inst.target_line
    rho = orientation(baseline.physical_flows[l])
    flow = float(physical_flows(ptdf, case, dispatch)[l])
    problems = unobservability_audit(H, case, c, inst.L_S, inst.N1)
    if problems:
        raise AttackAuditError('%s attack on line %d fails the stealth audit: %s'
                               % (algorithm, l, problems[0]))
    result = AttackResult(
        algorithm=algorithm,
        target_line=l,
        objective=rho * flow,
        bound_type=bound_type,
        c=c,
        dispatch=dispatch,
        target_flow=flow,
        penalty=inst.sigma * float(np.abs(c).sum()),
        orientation=rho,
        rating=float(case.ratings[l]),
        wall_time=time.monotonic() - start,
        instance=attr.evolve(inst, c=c, s=s if s is not None else np.abs(c)),
        **kwargs
    )
    L().info('%s line %d (N1=%g, L_S=%g): %.6f MW of %.6f (%s, %d iterations)',
             algorithm, l, inst.N1, inst.L_S, result.objective, result.rating,
             bound_type, result.iterations)
    return result


def _prepare(case, ptdf, H, inst, baseline, options):
    _check_target(case, inst)
    if baseline is None:
        baseline = solve_dcopf(case, ptdf, H=H, options=options)
    return baseline


def solve_original_milp(case, ptdf, H, inst, *, baseline=None, options=None, m_scale=1.0,
                        deadline=None):
    '''Full reformulation: every rated line and every generator. Exact unless a limit is hit.'''
    start = time.monotonic()
    deadline = deadline or Deadline()
    baseline = _prepare(case, ptdf, H, inst, baseline, options)
    Q = set(case.rated_lines)
    R = set(range(case.n_gen))
    problem, result, dec = _solve_reduced(case, ptdf, H, inst, Q, R, baseline,
                                          deadline.solver_options(options), m_scale)
    on_iteration(IterationRecord(
        algorithm='milp', target_line=inst.target_line, iteration=1, Q=Q, R=R,
        binaries=problem.n_binaries, incumbent=dec.milp_objective,
    ))
    limit = result.limit_hit is not None
    return _result(
        'milp', case, ptdf, H, inst, dec.c, dec.s, dec.dispatch, baseline,
        LOWER_BOUND if limit else EXACT, start,
        iterations=1, Q=frozenset(Q), R=frozenset(R),
        binary_counts=[problem.n_binaries], milp_limit_hit=limit,
        timed_out=result.limit_hit == 'time',
    )


def solve_rg(case, ptdf, H, inst, *, baseline=None, threshold=0.9, max_iterations=50, options=None,
             deadline=None):
    '''Row generation over line limits.

    Starts from the critical lines of the baseline dispatch, adds every line
    whose cyber flow at the predicted dispatch exceeds its rating, and
    stops when there is none: the attack is then optimal for the full
    model. Hitting ``max_iterations`` or the ``deadline`` (a
    :any:`.opt_kernel.Deadline`) downgrades the result to a lower bound
    measured on the true re-dispatch of the last attack.
    '''
    start = time.monotonic()
    deadline = deadline or Deadline()
    baseline = _prepare(case, ptdf, H, inst, baseline, options)
    l = inst.target_line
    Q = find_critical_lines(baseline.physical_flows, case, threshold)
    R = set(range(case.n_gen))
    counts = []
    limit = False
    timed_out = False
    for iteration in range(1, max_iterations + 1):
        if iteration > 1 and deadline.expired:
            timed_out = True
            break
        problem, result, dec = _solve_reduced(case, ptdf, H, inst, Q, R, baseline,
                                              deadline.solver_options(options))
        counts.append(problem.n_binaries)
        limit = limit or result.limit_hit is not None
        timed_out = result.limit_hit == 'time'
        cyber = cyber_flows(ptdf, case, dec.dispatch, dec.c, H)
        new_lines = _overflowing(case, cyber, exclude=Q)
        on_iteration(IterationRecord(
            algorithm='rg', target_line=l, iteration=iteration, Q=Q, R=R,
            binaries=problem.n_binaries, incumbent=dec.milp_objective, new_lines=new_lines,
        ))
        if not new_lines:
            return _result(
                'rg', case, ptdf, H, inst, dec.c, dec.s, dec.dispatch, baseline,
                LOWER_BOUND if limit else EXACT, start,
                iterations=iteration, Q=frozenset(Q), R=frozenset(R),
                binary_counts=counts, milp_limit_hit=limit, timed_out=timed_out,
            )
        if timed_out:
            break
        L().debug('rg line %d iteration %d: adding lines %s', l, iteration, sorted(new_lines))
        Q = Q | new_lines
    if timed_out:
        L().warning('rg on line %d ran out of time after %d iterations; reporting a lower bound',
                    l, len(counts))
    else:
        L().warning('rg on line %d reached %d iterations; reporting a lower bound', l, max_iterations)
    c, dispatch = _realise(case, ptdf, H, dec.c, baseline)
    return _result(
        'rg', case, ptdf, H, inst, c, None, dispatch, baseline, LOWER_BOUND, start,
        iterations=len(counts), Q=frozenset(Q), R=frozenset(R),
        binary_counts=counts, milp_limit_hit=limit, converged=False, timed_out=timed_out,
    )


def solve_rcg(case, ptdf, H, inst, *, baseline=None, threshold=0.9, max_iterations=50,
              marginal_tol=MARGINAL_TOL, options=None, deadline=None):
    '''Row-and-column generation over line limits and generators.

    Only marginal generators are free at first; the others stay at their
    baseline output. After each MILP the true DCOPF against the attack is
    solved; generators it moves away from the prediction become free and
    cyber-overflowing lines get rows. The reported objective is the true
    physical target flow, a lower bound on the optimum. Iterating stops
    early once ``deadline`` has passed.
    '''
    start = time.monotonic()
    deadline = deadline or Deadline()
    baseline = _prepare(case, ptdf, H, inst, baseline, options)
    l = inst.target_line
    Q = find_critical_lines(baseline.physical_flows, case, threshold)
    R = find_marginal_generators(baseline.p_g, case, marginal_tol)
    counts = []
    limit = False
    true = None
    converged = False
    timed_out = False
    for iteration in range(1, max_iterations + 1):
        if iteration > 1 and deadline.expired:
            timed_out = True
            break
        problem, result, dec = _solve_reduced(case, ptdf, H, inst, Q, R, baseline,
                                              deadline.solver_options(options))
        counts.append(problem.n_binaries)
        limit = limit or result.limit_hit is not None
        timed_out = result.limit_hit == 'time'
        try:
            true = solve_dcopf(case, ptdf, dec.c, H=H, options=options)
            new_gens = {
                g for g in range(case.n_gen)
                if g not in R and abs(true.p_g[g] - dec.dispatch[g]) > DISPATCH_TOL
            }
        except DcopfInfeasible:
            true = None
            new_gens = set()
        cyber = cyber_flows(ptdf, case, dec.dispatch, dec.c, H)
        new_lines = _overflowing(case, cyber, exclude=Q)
        on_iteration(IterationRecord(
            algorithm='rcg', target_line=l, iteration=iteration, Q=Q, R=R,
            binaries=problem.n_binaries, incumbent=dec.milp_objective,
            new_lines=new_lines, new_generators=new_gens,
        ))
        if not new_lines and not new_gens:
            converged = True
            break
        if timed_out:
            break
        grown = R | new_gens
        assert R <= grown, 'generator set must only grow'
        L().debug('rcg line %d iteration %d: adding lines %s, generators %s',
                  l, iteration, sorted(new_lines), sorted(new_gens))
        R = grown
        Q = Q | new_lines
    if timed_out and not converged:
        L().warning('rcg on line %d ran out of time after %d iterations', l, len(counts))
    elif not converged:
        L().warning('rcg on line %d reached %d iterations', l, max_iterations)
    if true is not None:
        c, dispatch = dec.c, true.p_g
    else:
        c, dispatch = _realise(case, ptdf, H, dec.c, baseline)
    return _result(
        'rcg', case, ptdf, H, inst, c, dec.s if true is not None else None, dispatch, baseline,
        LOWER_BOUND, start,
        iterations=len(counts), Q=frozenset(Q), R=frozenset(R),
        binary_counts=counts, milp_limit_hit=limit, converged=converged, timed_out=timed_out,
    )


def check_big_m_sensitivity(case, ptdf, H, inst, *, factors=(0.5, 2.0), baseline=None,
                            options=None, tol=1e-6):
    '''Re-solve the full MILP with big-M scaled by ``factors``.

    Returns ``(objectives, sensitive)``: objectives by scale factor (1.0
    included) and whether any differs from the unscaled one by more than
    ``tol`` relative.
    '''
    baseline = _prepare(case, ptdf, H, inst, baseline, options)
    objectives = {}
    for factor in (1.0,) + tuple(factors):
        result = solve_original_milp(case, ptdf, H, inst, baseline=baseline, options=options,
                                     m_scale=factor)
        objectives[factor] = result.objective
    reference = objectives[1.0]
    sensitive = any(
        abs(value - reference) > tol * max(1.0, abs(reference)) for value in objectives.values()
    )
    if sensitive:
        L().warning('Line %d: attack objective depends on big-M: %s', inst.target_line, objectives)
    return objectives, sensitive
