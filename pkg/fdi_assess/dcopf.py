'''
DC optimal power flow: the operator's least-cost dispatch.

The operator sees the measured loads. Under an attack ``c`` the bus
injections it computes are shifted by ``H c``, so the line limits it
enforces apply to the *cyber* flows ``PTDF (G_B P_G - P_D + H c)``; the
physical flows ``PTDF (G_B P_G - P_D)`` follow from the resulting dispatch.

Dual variables are reported with the signs of the stationarity condition::

    C_g - lambda + sum_k S_kg (F+_k - F-_k) + alpha+_g - alpha-_g = 0

where ``S = PTDF G_B`` and all of ``F+, F-, alpha+, alpha-`` are
nonnegative. :any:`solve_dcopf` audits this residual after every solve.
'''

import logging

import attr
import numpy as np

from .grid_model import build_matrices
from .opt_kernel import (
    INFEASIBLE,
    UNBOUNDED,
    InfeasibleError,
    LpBuilder,
    SolverError,
    UnboundedError,
    get_backend,
)

__all__ = [
    'DispatchSolution',
    'DcopfInfeasible',
    'DcopfUnbounded',
    'solve_dcopf',
    'stationarity_residual',
]

L = lambda: logging.getLogger(__name__)

STATIONARITY_TOL = 1e-6


class DcopfInfeasible(InfeasibleError):
    '''No dispatch satisfies the (possibly attacked) constraints.'''


class DcopfUnbounded(UnboundedError):
    '''Dispatch problem is unbounded; indicates a malformed model.'''


@attr.s(eq=False)
class DispatchSolution:
    p_g = attr.ib()
    lam = attr.ib()
    f_plus = attr.ib()
    f_minus = attr.ib()
    alpha_plus = attr.ib()
    alpha_minus = attr.ib()
    cost = attr.ib()
    physical_flows = attr.ib()
    cyber_flows = attr.ib()
    # line-limit rows that were part of the model
    lines = attr.ib(factory=frozenset)

    def binding_lines(self, tol=1e-9):
        return {k for k in range(len(self.f_plus)) if self.f_plus[k] > tol or self.f_minus[k] > tol}


def _sensitivity(case, ptdf):
    return ptdf.entries @ case.gen_bus_matrix


def stationarity_residual(case, ptdf, sol):
    '''Per-generator residual of the stationarity condition.'''
    S = _sensitivity(case, ptdf)
    return (
        case.costs - sol.lam
        + S.T @ (sol.f_plus - sol.f_minus)
        + sol.alpha_plus - sol.alpha_minus
    )


def solve_dcopf(case, ptdf, c=None, restrict_lines=None, fixed_generators=None, *, H=None, options=None):
    '''Least-cost dispatch of ``case``.

    ``c`` is an attack vector (length ``n_bus``, default zero).
    ``restrict_lines`` limits the line-limit rows to those lines (unrated
    lines never get rows). ``fixed_generators`` maps generator index to a
    fixed output in MW. ``H`` is the injection matrix; built from ``case``
    if needed and not given.

    Raises :any:`DcopfInfeasible` / :any:`DcopfUnbounded`.
    '''
    n_g, n_br = case.n_gen, case.n_branch
    loads = case.loads
    inj0 = -loads
    if c is not None and np.any(np.asarray(c) != 0):
        if H is None:
            _, H = build_matrices(case, ptdf.reference_bus)
        inj0 = inj0 + H.entries @ np.asarray(c, dtype=float)
    base_flow = ptdf.entries @ inj0
    S = _sensitivity(case, ptdf)
    ratings = case.ratings
    rated = set(case.rated_lines)
    lines = rated if restrict_lines is None else rated & set(restrict_lines)
    lines = sorted(lines)

    lb, ub = case.pmin.copy(), case.pmax.copy()
    for g, value in (fixed_generators or {}).items():
        lb[g] = ub[g] = value

    lp = LpBuilder('min')
    p = lp.add_vars('p_g', n_g, lb=lb, ub=ub, obj=case.costs)
    balance = lp.add_row({j: 1.0 for j in p}, '=', loads.sum(), 'balance')
    upper = {}
    lower = {}
    for k in lines:
        coeffs = dict(zip(p, S[k]))
        upper[k] = lp.add_row(coeffs, '<=', ratings[k] - base_flow[k], 'line_up[%d]' % k)
        lower[k] = lp.add_row(coeffs, '>=', -ratings[k] - base_flow[k], 'line_lo[%d]' % k)
    problem = lp.build()
    sol = get_backend(options).solve_lp(problem)
    if sol.status == INFEASIBLE:
        raise DcopfInfeasible('DCOPF is infeasible')
    if sol.status == UNBOUNDED:
        raise DcopfUnbounded('DCOPF is unbounded')

    p_g = sol.x[p]
    f_plus = np.zeros(n_br)
    f_minus = np.zeros(n_br)
    for k in lines:
        f_plus[k] = max(0.0, -sol.duals[upper[k]])
        f_minus[k] = max(0.0, sol.duals[lower[k]])
    d = sol.reduced_costs[p]
    result = DispatchSolution(
        p_g=p_g,
        lam=float(sol.duals[balance]),
        f_plus=f_plus,
        f_minus=f_minus,
        alpha_plus=np.maximum(-d, 0.0),
        alpha_minus=np.maximum(d, 0.0),
        cost=float(sol.objective),
        physical_flows=ptdf.entries @ (case.gen_bus_matrix @ p_g - loads),
        cyber_flows=S @ p_g + base_flow,
        lines=frozenset(lines),
    )
    residual = stationarity_residual(case, ptdf, result)
    scale = 1.0 + np.abs(case.costs).max(initial=0.0)
    if np.abs(residual).max(initial=0.0) > STATIONARITY_TOL * scale:
        raise SolverError('DCOPF stationarity audit failed, residual %.3g' % np.abs(residual).max())
    L().debug('DCOPF: cost %.6f, %d line rows, %d binding', result.cost, len(lines),
              len(result.binding_lines()))
    return result
