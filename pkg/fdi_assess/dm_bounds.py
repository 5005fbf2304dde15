'''
Bounds on the worst-case target flow from a single LP.

The physical flow on a line differs from the cyber flow the operator
enforces by ``PTDF_l H c``, which does not depend on the dispatch. Since the
oriented cyber flow stays within the rating after re-dispatch, maximising
``-rho PTDF_l H c`` over the stealth constraints gives

* an upper bound ``rating - rho PTDF_l H c*`` on every stealthy attack,
* a lower bound: the physical flow after the operator actually re-dispatches
  against ``c*``.

Both coincide when the post-attack cyber flow on the target sits at its
rating.
'''

import logging
import time

import attr
import numpy as np

from .attack_milp import (
    LOWER_BOUND,
    AttackAuditError,
    AttackResult,
    _check_target,
    add_attack_vector,
    orientation,
)
from .dcopf import DcopfInfeasible, solve_dcopf
from .grid_model import attackable_buses, fit_to_budget, unobservability_audit
from .opt_kernel import OPTIMAL, UNBOUNDED, LpBuilder, SolverError, get_backend

__all__ = [
    'DmResult',
    'solve_dm',
    'target_flow_range',
]

L = lambda: logging.getLogger(__name__)

TIGHT_TOL = 1e-6
# relative to the dispatch cost
COST_TOL = 1e-9


@attr.s(eq=False)
class DmResult:
    '''Bounds in oriented MW on the worst-case physical target flow.

    ``dcopf_infeasible``: the re-dispatch against ``c_dm`` has no solution,
    so ``lower_bound`` is the baseline flow. ``vertex_dependent``: the
    re-dispatch has several optimal dispatches with different target flows;
    ``lower_bound`` is the one the solver returned.
    '''
    target_line = attr.ib()
    c_dm = attr.ib()
    upper_bound = attr.ib()
    lower_bound = attr.ib()
    tight = attr.ib(default=False)
    dcopf_infeasible = attr.ib(default=False)
    vertex_dependent = attr.ib(default=False)
    orientation = attr.ib(default=1)
    rating = attr.ib(default=np.inf)
    difference = attr.ib(default=0.0)
    dispatch = attr.ib(default=None)
    wall_time = attr.ib(default=0.0)
    instance = attr.ib(default=None)

    def to_attack_result(self):
        '''The lower bound as an :any:`.attack_milp.AttackResult` (algorithm ``dm``).'''
        return AttackResult(
            algorithm='dm',
            target_line=self.target_line,
            objective=self.lower_bound,
            bound_type=LOWER_BOUND,
            c=self.c_dm,
            dispatch=self.dispatch,
            target_flow=self.orientation * self.lower_bound,
            penalty=0.0,
            orientation=self.orientation,
            rating=self.rating,
            iterations=1,
            wall_time=self.wall_time,
            instance=self.instance,
        )


def target_flow_range(case, ptdf, H, c, line, cost, *, options=None):
    '''``(min, max)`` physical flow on ``line`` over all least-cost dispatches against ``c``.

    ``cost`` is the optimal dispatch cost; dispatches within ``COST_TOL`` of
    it count as optimal.
    '''
    loads = case.loads
    inj0 = -loads + H.entries @ np.asarray(c, dtype=float)
    base_cyber = ptdf.entries @ inj0
    base_phys = ptdf.entries @ (-loads)
    S = ptdf.entries @ case.gen_bus_matrix
    ratings = case.ratings
    bounds = []
    for sense in ('min', 'max'):
        lp = LpBuilder(sense)
        p = lp.add_vars('p_g', case.n_gen, lb=case.pmin, ub=case.pmax, obj=S[line])
        lp.objective_constant = base_phys[line]
        lp.add_row({j: 1.0 for j in p}, '=', loads.sum(), 'balance')
        for k in case.rated_lines:
            coeffs = dict(zip(p, S[k]))
            lp.add_row(coeffs, '<=', ratings[k] - base_cyber[k], 'line_up[%d]' % k)
            lp.add_row(coeffs, '>=', -ratings[k] - base_cyber[k], 'line_lo[%d]' % k)
        lp.add_row(dict(zip(p, case.costs)), '<=', cost + COST_TOL * max(1.0, abs(cost)), 'cost')
        sol = get_backend(options).solve_lp(lp.build())
        if sol.status != OPTIMAL:
            raise SolverError('Flow range LP for line %d is %s' % (line, sol.status))
        bounds.append(sol.objective)
    return tuple(bounds)


def _difference_lp(case, ptdf, H, inst, rho):
    A = attackable_buses(case)
    G = ptdf.row(inst.target_line) @ H.entries[:, A]
    lp = LpBuilder('max')
    c, _ = add_attack_vector(lp, case, H, inst)
    lp.add_objective(c, -rho * G)
    return lp.build(), c


def solve_dm(case, ptdf, H, inst, *, baseline=None, options=None):
    '''Difference-maximising attack with upper and lower bounds for ``inst``.

    Raises :any:`.attack_milp.AttackModelError` for an unrated target and
    :any:`.opt_kernel.SolverError` if the LP is unbounded.
    '''
    start = time.monotonic()
    _check_target(case, inst)
    if baseline is None:
        baseline = solve_dcopf(case, ptdf, H=H, options=options)
    l = inst.target_line
    rho = orientation(baseline.physical_flows[l])
    rating = float(case.ratings[l])

    problem, cols = _difference_lp(case, ptdf, H, inst, rho)
    sol = get_backend(options).solve_lp(problem)
    if sol.status == UNBOUNDED:
        raise SolverError('Difference LP for line %d is unbounded' % l)
    if sol.status != OPTIMAL:
        raise SolverError('Difference LP for line %d is %s' % (l, sol.status))
    c = np.zeros(case.n_bus)
    c[attackable_buses(case)] = sol.x[cols]
    c = fit_to_budget(c, inst.N1)
    shift = float(ptdf.row(l) @ (H.entries @ c))
    difference = max(0.0, -rho * shift)
    upper = rating + difference

    infeasible = False
    vertex_dependent = False
    tight = False
    try:
        post = solve_dcopf(case, ptdf, c, H=H, options=options)
    except DcopfInfeasible:
        L().warning('Line %d: re-dispatch against the difference attack is infeasible; '
                    'lower bound falls back to the baseline flow', l)
        infeasible = True
        post = baseline
        c_reported = np.zeros(case.n_bus)
    else:
        c_reported = c
        tight = abs(rho * post.cyber_flows[l] - rating) <= TIGHT_TOL * rating
        low, high = target_flow_range(case, ptdf, H, c, l, post.cost, options=options)
        vertex_dependent = high - low > TIGHT_TOL * max(1.0, rating)
        if vertex_dependent:
            L().warning('Line %d: optimal re-dispatch is not unique, target flow ranges '
                        'over [%.6f, %.6f] MW', l, low, high)
    lower = rho * float(post.physical_flows[l])
    if tight:
        lower = min(lower, upper)

    problems = unobservability_audit(H, case, c, inst.L_S, inst.N1)
    if problems:
        raise AttackAuditError('dm attack on line %d fails the stealth audit: %s'
                               % (l, problems[0]))
    result = DmResult(
        target_line=l,
        c_dm=c_reported,
        upper_bound=upper,
        lower_bound=lower,
        tight=tight,
        dcopf_infeasible=infeasible,
        vertex_dependent=vertex_dependent,
        orientation=rho,
        rating=rating,
        difference=difference,
        dispatch=post.p_g,
        wall_time=time.monotonic() - start,
        instance=attr.evolve(inst, c=c_reported, s=np.abs(c_reported)),
    )
    L().info('dm line %d (N1=%g, L_S=%g): [%.6f, %.6f] MW of %.6f%s',
             l, inst.N1, inst.L_S, lower, upper, rating, ' (tight)' if tight else '')
    return result
