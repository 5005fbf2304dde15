import itertools
import os

import numpy as np
import pytest
from scipy.optimize import linprog

from fdi_assess.case_io import load_case
from fdi_assess.dcopf import solve_dcopf
from fdi_assess.grid_model import build_matrices
from fdi_assess.opt_kernel import EQ, GE, LE, SolverOptions, set_backend

# tight B&B gap for comparisons against exact oracles
EXACT = SolverOptions(gap_tol=1e-9)


@pytest.fixture(autouse=True)
def default_backend():
    set_backend('simplex')
    yield
    set_backend('simplex')


class Grid:
    '''A case with its matrices and unattacked dispatch.'''

    def __init__(self, case):
        self.case = case
        self.ptdf, self.H = build_matrices(case)
        self.baseline = solve_dcopf(case, self.ptdf, H=self.H)

    @property
    def args(self):
        return self.case, self.ptdf, self.H


@pytest.fixture(scope='session')
def case2():
    return Grid(load_case('case2'))


@pytest.fixture(scope='session')
def case3():
    return Grid(load_case('case3'))


@pytest.fixture(scope='session')
def case6():
    return Grid(load_case('case6'))


def _env_case(var):
    path = os.environ.get(var)
    if not path:
        pytest.skip('set %s to a MATPOWER file to run this test' % var)
    return Grid(load_case(path))


@pytest.fixture(scope='session')
def case118():
    return _env_case('FDI_CASE118')


@pytest.fixture(scope='session')
def case2383():
    return _env_case('FDI_CASE2383')


def linprog_solve(lp, lb=None, ub=None):
    '''Optimum of an LpProblem via scipy (``None`` if infeasible).'''
    lb = lp.lb if lb is None else lb
    ub = lp.ub if ub is None else ub
    sgn = -1.0 if lp.sense == 'max' else 1.0
    senses = np.array(lp.senses)
    A, b = lp.A, lp.b
    le, ge, eq = senses == LE, senses == GE, senses == EQ
    kwargs = {}
    if (le | ge).any():
        kwargs.update(A_ub=np.vstack([A[le], -A[ge]]), b_ub=np.concatenate([b[le], -b[ge]]))
    if eq.any():
        kwargs.update(A_eq=A[eq], b_eq=b[eq])
    bounds = [(None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi)
              for lo, hi in zip(lb, ub)]
    res = linprog(sgn * lp.c, bounds=bounds, method='highs', **kwargs)
    if res.status != 0:
        return None
    return float(lp.c @ res.x) + lp.objective_constant


def indicator_pairs(problem):
    '''Binary columns of an attack MILP that cannot both be 1.

    A line cannot sit at its upper and lower limit at once (positive
    rating), nor a generator at pmax and pmin (pmin < pmax).
    '''
    blocks = problem.blocks
    pairs = []
    for a, b in (('d_f_plus', 'd_f_minus'), ('d_alpha_plus', 'd_alpha_minus')):
        pairs.extend(zip(blocks[a], blocks[b]))
    return pairs


def enumerate_milp(problem, exclusive=()):
    '''Best objective over all binary assignments, each solved as an LP.

    Assignments setting both columns of an ``exclusive`` pair are skipped.
    '''
    lp = problem.lp
    best = None
    better = max if lp.sense == 'max' else min
    position = {int(j): k for k, j in enumerate(problem.binaries)}
    pairs = [(position[int(a)], position[int(b)]) for a, b in exclusive]
    for values in itertools.product((0.0, 1.0), repeat=problem.n_binaries):
        if any(values[a] and values[b] for a, b in pairs):
            continue
        lb, ub = lp.lb.copy(), lp.ub.copy()
        lb[problem.binaries] = values
        ub[problem.binaries] = values
        value = linprog_solve(lp, lb, ub)
        if value is not None:
            best = value if best is None else better(best, value)
    return best
