'''
HiGHS backend through ``scipy.optimize``.

``linprog(method='highs')`` reports marginals as derivatives of the
objective with respect to the right-hand sides and bounds, which is the
sign convention of :mod:`.opt_kernel` for minimisation; maximisation is
solved as minimisation of ``-c`` and the marginals negated.

``scipy.optimize.milp`` does not return duals. The incumbent's duals are
obtained by re-solving the LP with the binaries fixed.
'''

import logging

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .opt_kernel import (
    EQ,
    GE,
    INFEASIBLE,
    LE,
    OPTIMAL,
    UNBOUNDED,
    InfeasibleError,
    LpSolution,
    MilpResult,
    SolverBase,
    SolverError,
    SolverLimitError,
    UnboundedError,
)

__all__ = [
    'HighsSolver',
]

L = lambda: logging.getLogger(__name__)


def _bounds(lb, ub):
    return [
        (None if not np.isfinite(lo) else float(lo), None if not np.isfinite(hi) else float(hi))
        for lo, hi in zip(lb, ub)
    ]


def _linprog(problem, lb, ub, options):
    sgn = -1.0 if problem.sense == 'max' else 1.0
    senses = np.array(problem.senses)
    A, b = problem.A, problem.b
    le, ge, eq = senses == LE, senses == GE, senses == EQ
    A_ub = np.vstack([A[le], -A[ge]])
    b_ub = np.concatenate([b[le], -b[ge]])
    kwargs = {}
    if A_ub.shape[0]:
        kwargs.update(A_ub=A_ub, b_ub=b_ub)
    if eq.any():
        kwargs.update(A_eq=A[eq], b_eq=b[eq])
    highs_options = {'primal_feasibility_tolerance': options.feas_tol,
                     'dual_feasibility_tolerance': max(options.opt_tol, 1e-10)}
    if options.time_limit:
        highs_options['time_limit'] = options.time_limit
    res = linprog(sgn * problem.c, bounds=_bounds(lb, ub), method='highs',
                  options=highs_options, **kwargs)
    if res.status == 2:
        return LpSolution(status=INFEASIBLE)
    if res.status == 3:
        return LpSolution(status=UNBOUNDED)
    if res.status != 0:
        raise SolverError('HiGHS failed: %s' % res.message)
    y = np.zeros(problem.n_rows)
    n_le = int(le.sum())
    if A_ub.shape[0]:
        marg = res.ineqlin.marginals
        y[le] = marg[:n_le]
        y[ge] = -marg[n_le:]
    if eq.any():
        y[eq] = res.eqlin.marginals
    d = res.lower.marginals + res.upper.marginals
    x = np.asarray(res.x, dtype=float)
    return LpSolution(
        status=OPTIMAL,
        x=x,
        duals=sgn * y,
        reduced_costs=sgn * d,
        objective=problem.objective(x),
        iterations=int(getattr(res, 'nit', 0)),
    )


class HighsSolver(SolverBase):
    name = 'highs'

    def _solve_lp(self, problem):
        sol = _linprog(problem, problem.lb, problem.ub, self.options)
        L().debug('HiGHS LP %dx%d: %s', problem.n_rows, problem.n_vars, sol.status)
        return sol

    def _solve_milp(self, problem):
        lp = problem.lp
        opts = self.options
        sgn = -1.0 if lp.sense == 'max' else 1.0
        integrality = np.zeros(lp.n_vars)
        integrality[problem.binaries] = 1
        senses = np.array(lp.senses)
        lo = np.where(senses == LE, -np.inf, lp.b)
        hi = np.where(senses == GE, np.inf, lp.b)
        constraints = [LinearConstraint(lp.A, lo, hi)] if lp.n_rows else []
        highs_options = {'disp': False, 'mip_rel_gap': opts.gap_tol, 'node_limit': opts.node_limit}
        if opts.time_limit:
            highs_options['time_limit'] = opts.time_limit
        res = milp(sgn * lp.c, integrality=integrality, bounds=Bounds(lp.lb, lp.ub),
                   constraints=constraints, options=highs_options)
        nodes = int(getattr(res, 'mip_node_count', 0) or 0)
        if res.status == 2:
            raise InfeasibleError('MILP is infeasible')
        if res.status == 3:
            raise UnboundedError('MILP is unbounded')
        if res.x is None:
            if res.status == 1:
                raise SolverLimitError('HiGHS limit hit without a feasible solution: %s' % res.message)
            raise SolverError('HiGHS failed: %s' % res.message)
        limit = None
        if res.status == 1:
            limit = 'time' if 'time' in str(res.message).lower() else 'nodes'
        x = np.asarray(res.x, dtype=float)
        lb, ub = lp.lb.copy(), lp.ub.copy()
        values = np.round(x[problem.binaries])
        lb[problem.binaries] = values
        ub[problem.binaries] = values
        solution = _linprog(lp, lb, ub, opts)
        if solution.status != OPTIMAL:
            L().warning('Incumbent LP with fixed binaries is %s', solution.status)
            solution = LpSolution(status=OPTIMAL, x=x, objective=lp.objective(x))
        dual_bound = getattr(res, 'mip_dual_bound', None)
        if dual_bound is None or not np.isfinite(dual_bound):
            dual_bound = sgn * (solution.objective - lp.objective_constant)
        bound = sgn * dual_bound + lp.objective_constant
        gap = float(getattr(res, 'mip_gap', 0.0) or 0.0)
        return MilpResult(
            solution=solution,
            bound=bound,
            gap=gap,
            nodes=nodes,
            branched=max(nodes - 1, 0),
            limit_hit=limit,
        )
