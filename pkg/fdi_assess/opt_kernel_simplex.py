'''
Own LP/MILP backend.

LPs are solved by a bounded-variable revised primal simplex on dense numpy
arrays, in two phases (artificial variables first). The basis inverse is
kept explicitly and updated by a rank-one product-form step; it is
recomputed from scratch every ``REFACTOR_EVERY`` iterations and before
duals are read. Pricing is Dantzig's rule; after ``DEGENERATE_SWITCH``
consecutive degenerate pivots it switches to Bland's rule until progress
is made again.

Rows and columns are equilibrated with power-of-two factors before
solving, so unscaling is exact.

MILPs with binary columns are solved by branch-and-bound: best-bound node
selection, most-fractional branching and depth-first dives towards the
nearer integer.
'''

import heapq
import itertools
import logging
import time

import attr
import numpy as np
import scipy.linalg

from .opt_kernel import (
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
    audit_lp_solution,
)

__all__ = [
    'SimplexSolver',
]

L = lambda: logging.getLogger(__name__)

BASIC, AT_LB, AT_UB, AT_ZERO = 0, 1, 2, 3

REFACTOR_EVERY = 100
DEGENERATE_SWITCH = 50
EQUILIBRATION_PASSES = 4


def equilibrate(A, passes=EQUILIBRATION_PASSES):
    '''Row and column factors ``R``, ``S`` (powers of two) so that ``R A S`` has entries near 1.'''
    m, n = A.shape
    R = np.ones(m)
    S = np.ones(n)
    if A.size == 0:
        return R, S
    absA = np.abs(A)
    nz = absA > 0
    for _ in range(passes):
        M = absA * R[:, None] * S[None, :]
        big = M.max(axis=1)
        small = np.where(nz, M, np.inf).min(axis=1)
        has = big > 0
        R[has] /= np.sqrt(big[has] * small[has])
        M = absA * R[:, None] * S[None, :]
        big = M.max(axis=0)
        small = np.where(nz, M, np.inf).min(axis=0)
        has = big > 0
        S[has] /= np.sqrt(big[has] * small[has])
    return np.exp2(np.round(np.log2(R))), np.exp2(np.round(np.log2(S)))


class _Simplex:
    '''One LP in computational form ``A x + s + D a = b``.

    Columns are: ``n`` structurals, ``m`` slacks (bounds encode the row
    sense), ``m`` artificials (phase 1 only, fixed at 0 afterwards).
    '''

    def __init__(self, A, senses, b, lb, ub, options, row_scale=None):
        m, n = A.shape
        self.m, self.n = m, n
        self.options = options
        slack_lb = np.array([-np.inf if s == GE else 0.0 for s in senses])
        slack_ub = np.array([np.inf if s == LE else 0.0 for s in senses])
        self.A = np.hstack([A, np.eye(m), np.zeros((m, m))])
        self.b = np.asarray(b, dtype=float)
        row_scale = np.ones(m) if row_scale is None else np.asarray(row_scale, dtype=float)
        # feas_tol * (1 + |b_i|) of the unscaled row, expressed in scaled units
        self.row_tol = options.feas_tol * (row_scale + np.abs(self.b))
        self.lb = np.concatenate([lb, slack_lb, np.zeros(m)])
        self.ub = np.concatenate([ub, slack_ub, np.zeros(m)])
        self.iterations = 0
        self.max_iterations = options.max_iterations or 50 * (m + n) + 1000

    def _start(self):
        '''Slack basis where the slack can absorb the residual, artificial otherwise.'''
        n, m = self.n, self.m
        lb, ub = self.lb, self.ub
        N = n + 2 * m
        self.x = np.zeros(N)
        self.state = np.full(N, AT_LB)
        lbx, ubx = lb[:n], ub[:n]
        self.x[:n] = np.where(np.isfinite(lbx), lbx, np.where(np.isfinite(ubx), ubx, 0.0))
        self.state[:n] = np.where(
            np.isfinite(lbx), AT_LB, np.where(np.isfinite(ubx), AT_UB, AT_ZERO)
        )
        r = self.b - self.A[:, :n] @ self.x[:n]
        s = np.clip(r, lb[n:n + m], ub[n:n + m])
        e = r - s
        need = np.abs(e) > self.row_tol
        self.basis = np.empty(m, dtype=int)
        diag = np.ones(m)
        for i in range(m):
            slack, art = n + i, n + m + i
            if need[i]:
                sign = 1.0 if e[i] > 0 else -1.0
                self.A[i, art] = sign
                self.ub[art] = np.inf
                self.x[slack] = s[i]
                self.state[slack] = AT_LB if s[i] == lb[slack] else AT_UB
                self.x[art] = abs(e[i])
                self.basis[i] = art
                self.state[art] = BASIC
                diag[i] = sign
            else:
                self.x[slack] = r[i]
                self.basis[i] = slack
                self.state[slack] = BASIC
        self.Binv = np.diag(diag)
        return bool(need.any())

    def _refactor(self):
        if self.m == 0:
            self.Binv = np.zeros((0, 0))
            return
        B = self.A[:, self.basis]
        try:
            self.Binv = scipy.linalg.inv(B)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise SolverError('Simplex basis became singular') from e
        if not np.all(np.isfinite(self.Binv)):
            raise SolverError('Simplex basis became singular')
        nonbasic = self.state != BASIC
        rhs = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.Binv @ rhs

    def _ratio_test(self, alpha, bland):
        if self.m == 0:
            return -1, np.inf
        basis = self.basis
        xB, lbB, ubB = self.x[basis], self.lb[basis], self.ub[basis]
        ptol = self.options.pivot_tol
        ratios = np.full(self.m, np.inf)
        dec = (alpha > ptol) & np.isfinite(lbB)
        inc = (alpha < -ptol) & np.isfinite(ubB)
        ratios[dec] = (xB[dec] - lbB[dec]) / alpha[dec]
        ratios[inc] = (ubB[inc] - xB[inc]) / -alpha[inc]
        np.maximum(ratios, 0.0, out=ratios)
        t = ratios.min()
        if not np.isfinite(t):
            return -1, np.inf
        ties = np.flatnonzero(ratios <= t + 1e-11 * (1.0 + t))
        if bland:
            r = ties[np.argmin(basis[ties])]
        else:
            r = ties[np.argmax(np.abs(alpha[ties]))]
        return r, ratios[r]

    def _iterate(self, cost):
        opts = self.options
        degenerate = 0
        since_refactor = 0
        while True:
            if since_refactor >= REFACTOR_EVERY:
                self._refactor()
                since_refactor = 0
            y = self.Binv.T @ cost[self.basis]
            d = cost - self.A.T @ y
            movable = self.lb < self.ub
            st = self.state
            up = movable & ((st == AT_LB) | (st == AT_ZERO)) & (d < -opts.opt_tol)
            down = movable & ((st == AT_UB) | (st == AT_ZERO)) & (d > opts.opt_tol)
            candidates = np.flatnonzero(up | down)
            if candidates.size == 0:
                if since_refactor == 0:
                    return OPTIMAL
                # confirm on a fresh factorisation
                self._refactor()
                since_refactor = 0
                continue
            if self.iterations >= self.max_iterations:
                raise SolverError('Simplex iteration limit %d reached' % self.max_iterations)
            bland = degenerate > DEGENERATE_SWITCH
            if bland:
                j = candidates[0]
            else:
                j = candidates[np.argmax(np.abs(d[candidates]))]
            direction = 1.0 if up[j] else -1.0
            w = self.Binv @ self.A[:, j]
            alpha = direction * w
            t_flip = self.ub[j] - self.lb[j]
            r, t_row = self._ratio_test(alpha, bland)
            if not np.isfinite(t_row) and not np.isfinite(t_flip):
                return UNBOUNDED
            self.iterations += 1
            since_refactor += 1
            basis = self.basis
            if t_flip <= t_row:
                t = t_flip
                self.x[basis] -= t * alpha
                if direction > 0:
                    self.x[j], self.state[j] = self.ub[j], AT_UB
                else:
                    self.x[j], self.state[j] = self.lb[j], AT_LB
            else:
                t = t_row
                self.x[basis] -= t * alpha
                self.x[j] += direction * t
                q = basis[r]
                if alpha[r] > 0:
                    self.x[q], self.state[q] = self.lb[q], AT_LB
                else:
                    self.x[q], self.state[q] = self.ub[q], AT_UB
                basis[r] = j
                self.state[j] = BASIC
                row_r = self.Binv[r] / w[r]
                self.Binv -= np.outer(w, row_r)
                self.Binv[r] = row_r
            degenerate = degenerate + 1 if t <= 1e-12 else 0

    def solve(self, cost):
        '''Returns ``(status, x, y, d, farkas)`` for ``min cost^T x``.'''
        n, m = self.n, self.m
        N = n + 2 * m
        if self._start():
            c1 = np.zeros(N)
            c1[n + m:] = 1.0
            status = self._iterate(c1)
            if status == UNBOUNDED:
                raise SolverError('Phase 1 reported unbounded; numerical failure')
            self._refactor()
            residual = self.x[n + m:]
            if np.any(residual > self.row_tol):
                farkas = self.Binv.T @ c1[self.basis]
                L().debug('Phase 1 ended with infeasibility %.3g in row %d',
                          residual.max(), int(np.argmax(residual / self.row_tol)))
                return INFEASIBLE, None, None, None, farkas
            self.ub[n + m:] = 0.0
            self.x[n + m:][self.state[n + m:] != BASIC] = 0.0
            self._refactor()
        c2 = np.zeros(N)
        c2[:n] = cost
        status = self._iterate(c2)
        if status == UNBOUNDED:
            return UNBOUNDED, self.x[:n].copy(), None, None, None
        y = self.Binv.T @ c2[self.basis]
        d = c2 - self.A.T @ y
        return OPTIMAL, self.x[:n].copy(), y, d[:n], None


def primal_violation(A, senses, b, lb, ub, x):
    '''Largest row or bound violation of ``x``, relative to the size of the data involved.'''
    worst = 0.0
    if A.shape[0]:
        ax = A @ x
        scale = 1.0 + np.abs(b) + np.abs(A) @ np.abs(x)
        senses = np.asarray(senses)
        viol = np.where(senses == LE, ax - b, np.where(senses == GE, b - ax, np.abs(ax - b)))
        worst = max(worst, float((viol / scale).max()))
    with np.errstate(invalid='ignore'):
        below = np.where(np.isfinite(lb), (lb - x) / (1.0 + np.abs(lb)), 0.0)
        above = np.where(np.isfinite(ub), (x - ub) / (1.0 + np.abs(ub)), 0.0)
    return max(worst, float(below.max(initial=0.0)), float(above.max(initial=0.0)))


def solve_arrays(c, A, senses, b, lb, ub, maximize, options, constant=0.0):
    '''Solve one LP given as arrays; returns `LpSolution` in the original scaling and sense.

    An optimum found on the equilibrated problem is checked for primal
    feasibility in the original units. If the check fails the LP is solved
    again without scaling; a second failure raises `SolverError`.
    '''
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(lb > ub):
        return LpSolution(status=INFEASIBLE)
    sgn = -1.0 if maximize else 1.0
    scaled = bool(options.scale and A.size)
    if scaled:
        R, S = equilibrate(A)
    else:
        R, S = np.ones(A.shape[0]), np.ones(A.shape[1])
    core = _Simplex(R[:, None] * A * S[None, :], senses, R * b, lb / S, ub / S, options,
                    row_scale=R)
    status, xs, ys, ds, farkas = core.solve(sgn * c * S)
    if status == INFEASIBLE:
        return LpSolution(status=INFEASIBLE, farkas=R * farkas, iterations=core.iterations)
    x = S * xs
    if status == UNBOUNDED:
        return LpSolution(status=UNBOUNDED, x=x, iterations=core.iterations)
    violation = primal_violation(A, senses, b, lb, ub, x)
    if violation > 10 * options.feas_tol:
        if scaled:
            L().info('Scaled LP optimum violates the unscaled data by %.3g; solving unscaled',
                     violation)
            retry = solve_arrays(c, A, senses, b, lb, ub, maximize,
                                 attr.evolve(options, scale=False), constant)
            retry.iterations += core.iterations
            return retry
        raise SolverError('Simplex optimum violates the constraints by %.3g (relative)'
                          % violation)
    return LpSolution(
        status=OPTIMAL,
        x=x,
        duals=sgn * R * ys,
        reduced_costs=sgn * ds / S,
        objective=float(c @ x) + constant,
        iterations=core.iterations,
    )


class _BranchAndBound:
    def __init__(self, problem, options):
        self.lp = problem.lp
        self.binaries = problem.binaries
        self.options = options
        self.maximize = self.lp.sense == 'max'
        # multiplies objectives into minimisation form
        self.sgn = -1.0 if self.maximize else 1.0

    def _relax(self, lb, ub):
        lp = self.lp
        return solve_arrays(lp.c, lp.A, lp.senses, lp.b, lb, ub, self.maximize,
                            self.options, lp.objective_constant)

    def _tol(self, best_z):
        return self.options.gap_tol * max(1.0, abs(best_z))

    def run(self):
        opts = self.options
        start = time.monotonic()
        counter = itertools.count()
        heap = [(-np.inf, next(counter), self.lp.lb.copy(), self.lp.ub.copy())]
        best = None
        best_z = np.inf
        nodes = branched = 0
        limit = None
        while heap and not limit:
            z_node, _, lb, ub = heapq.heappop(heap)
            if best is not None and z_node >= best_z - self._tol(best_z):
                # best-bound order: everything left is pruned as well
                heap.clear()
                break
            while True:
                if nodes >= opts.node_limit:
                    limit = 'nodes'
                elif opts.time_limit and time.monotonic() - start > opts.time_limit:
                    limit = 'time'
                if limit:
                    heapq.heappush(heap, (z_node, next(counter), lb, ub))
                    break
                sol = self._relax(lb, ub)
                nodes += 1
                if sol.status == INFEASIBLE:
                    break
                if sol.status == UNBOUNDED:
                    raise UnboundedError('MILP relaxation is unbounded')
                z = self.sgn * sol.objective
                if best is not None and z >= best_z - self._tol(best_z):
                    break
                xb = sol.x[self.binaries]
                frac = np.abs(xb - np.round(xb))
                k = int(np.argmax(frac)) if frac.size else 0
                if not frac.size or frac[k] <= opts.int_tol:
                    sol = self._checked_incumbent(sol, lb, ub)
                    z = self.sgn * sol.objective
                    if best is not None and z >= best_z - self._tol(best_z):
                        break
                    best, best_z = (sol, lb, ub), z
                    L().debug('New incumbent %.9g after %d nodes', sol.objective, nodes)
                    break
                j = self.binaries[k]
                branched += 1
                down = (lb.copy(), ub.copy())
                down[1][j] = 0.0
                up = (lb.copy(), ub.copy())
                up[0][j] = 1.0
                dive, other = (up, down) if sol.x[j] >= 0.5 else (down, up)
                heapq.heappush(heap, (z, next(counter)) + other)
                lb, ub = dive
                z_node = z
        if best is None:
            if limit:
                raise SolverLimitError('%s limit hit after %d nodes without a feasible solution'
                                       % (limit, nodes))
            raise InfeasibleError('MILP is infeasible (%d nodes)' % nodes)
        bound_z = min([best_z] + [item[0] for item in heap])
        gap = max(0.0, (best_z - bound_z) / max(1.0, abs(best_z)))
        solution = self._fixed_solution(*best)
        if limit:
            L().warning('Branch-and-bound stopped by %s limit with gap %.3g', limit, gap)
        L().debug('Branch-and-bound: %d nodes, %d branched, objective %.9g',
                  nodes, branched, solution.objective)
        return MilpResult(
            solution=solution,
            bound=self.sgn * bound_z,
            gap=gap,
            nodes=nodes,
            branched=branched,
            limit_hit=limit,
        )

    def _checked_incumbent(self, sol, lb, ub):
        '''Audit an integral node optimum; re-solve the node unscaled if the audit fails.'''
        node = attr.evolve(self.lp, lb=lb, ub=ub)
        problems = audit_lp_solution(node, sol, self.options)
        if not problems:
            return sol
        L().info('Incumbent candidate fails the LP audit (%s); re-solving unscaled', problems[0])
        lp = self.lp
        retry = solve_arrays(lp.c, lp.A, lp.senses, lp.b, lb, ub, self.maximize,
                             attr.evolve(self.options, scale=False), lp.objective_constant)
        problems = audit_lp_solution(node, retry, self.options)
        if not problems:
            xb = retry.x[self.binaries]
            if np.abs(xb - np.round(xb)).max(initial=0.0) > self.options.int_tol:
                problems = ['unscaled re-solve is fractional']
        if problems:
            raise SolverError('Branch-and-bound incumbent fails the LP audit: %s' % problems[0])
        return retry

    def _fixed_solution(self, sol, lb, ub):
        '''Re-solve with binaries pinned to the incumbent to get its duals.'''
        lb, ub = lb.copy(), ub.copy()
        values = np.round(sol.x[self.binaries])
        lb[self.binaries] = values
        ub[self.binaries] = values
        fixed = self._relax(lb, ub)
        if fixed.status != OPTIMAL:
            L().warning('Incumbent LP with fixed binaries is %s; keeping node duals', fixed.status)
            return sol
        return fixed


class SimplexSolver(SolverBase):
    name = 'simplex'

    def _solve_lp(self, problem):
        sol = solve_arrays(problem.c, problem.A, problem.senses, problem.b,
                           problem.lb, problem.ub, problem.sense == 'max',
                           self.options, problem.objective_constant)
        L().debug('LP %dx%d: %s after %d iterations', problem.n_rows, problem.n_vars,
                  sol.status, sol.iterations)
        return sol

    def _solve_milp(self, problem):
        return _BranchAndBound(problem, self.options).run()
