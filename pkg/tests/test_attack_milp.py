import math
from unittest.mock import Mock

import attr
import numpy as np
import pytest

from fdi_assess import attack_milp
from fdi_assess.attack_milp import (
    EXACT,
    LOWER_BOUND,
    AttackAuditError,
    AttackInstance,
    AttackModelError,
    IterationRecord,
    audit_complementarity,
    build_attack_milp,
    check_big_m_sensitivity,
    default_big_m,
    orientation,
    solve_original_milp,
    solve_rcg,
    solve_rg,
)
from fdi_assess.case_io import scale_ratings
from fdi_assess.grid_model import unobservability_audit
from fdi_assess.opt_kernel import Deadline, SolverOptions, set_backend
from fdi_assess.opt_kernel_highs import HighsSolver

from .conftest import EXACT as EXACT_OPTIONS
from .conftest import Grid, enumerate_milp, indicator_pairs


def tol(inst):
    return 1e-6 + inst.sigma * inst.N1


@pytest.fixture(scope='module')
def narrow3(case3):
    '''case3 with line 2-3 rated 25 MW: attacks on it overload the line.'''
    branches = list(case3.case.branches)
    branches[2] = attr.evolve(branches[2], rating=25.0)
    return Grid(attr.evolve(case3.case, branches=branches))


def test_instance_validation():
    inst = AttackInstance(0, '0.01', 0.1)
    assert inst.N1 == 0.01
    assert inst.sigma == 1e-3
    assert inst.big_M is None
    # no budget is allowed: the attack vanishes
    assert AttackInstance(0, 0, 0.1).N1 == 0
    for bad in (dict(N1=-1, L_S=0.1), dict(N1=0.1, L_S=0), dict(N1=0.1, L_S=1)):
        with pytest.raises(ValueError):
            AttackInstance(0, **bad)
    with pytest.raises(ValueError):
        AttackInstance(0, 0.1, 0.1, sigma=0)


def test_orientation():
    assert orientation(3.0) == 1
    assert orientation(0.0) == 1
    assert orientation(-1e-9) == -1


@pytest.mark.parametrize('N1,expected', [
    (0.0, 80.0),
    (0.0005, 80.25),
    (0.001, 80.5),
    (0.002, 81.0),
    (0.004, 82.0),
    (0.01, 82.0),
])
def test_case3_budget(case3, N1, expected):
    inst = AttackInstance(0, N1, 0.1)
    result = solve_rg(*case3.args, inst, baseline=case3.baseline, options=EXACT_OPTIONS)
    assert result.objective == pytest.approx(expected, abs=1e-6)
    assert result.bound_type == EXACT
    assert result.converged
    assert unobservability_audit(case3.H, case3.case, result.c, inst.L_S, inst.N1) == []


@pytest.mark.parametrize('L_S,expected', [(0.05, 81.0), (0.10, 82.0), (0.15, 83.0)])
def test_case3_load_shift(case3, L_S, expected):
    inst = AttackInstance(0, 0.01, L_S)
    result = solve_rg(*case3.args, inst, baseline=case3.baseline, options=EXACT_OPTIONS)
    assert result.objective == pytest.approx(expected, abs=1e-6)
    assert result.overflow


def test_case3_rg_details(case3):
    inst = AttackInstance(0, 0.01, 0.1)
    result = solve_rg(*case3.args, inst, baseline=case3.baseline, options=EXACT_OPTIONS)
    assert result.algorithm == 'rg'
    assert result.iterations == 1
    assert result.Q == {0}
    assert result.R == {0, 1}
    assert result.binary_counts == [6]
    assert result.binaries == 6
    assert result.orientation == 1
    assert result.rating == 80
    np.testing.assert_allclose(result.dispatch, [146, 14], atol=1e-6)
    # 6 MW moved from bus 3 to bus 2
    np.testing.assert_allclose(case3.H @ result.c, [0, 6, -6], atol=1e-6)
    assert result.penalty == pytest.approx(inst.sigma * 0.004, rel=1e-6)
    assert result.instance.c is result.c
    assert result.wall_time >= 0


@pytest.mark.parametrize('line,expected,rho', [(0, 82.0, 1), (1, 64.0, 1), (2, 22.0, -1)])
def test_case3_lines(case3, line, expected, rho):
    inst = AttackInstance(line, 0.01, 0.1)
    result = solve_rg(*case3.args, inst, baseline=case3.baseline, options=EXACT_OPTIONS)
    assert result.objective == pytest.approx(expected, abs=1e-6)
    assert result.orientation == rho
    assert result.target_flow == pytest.approx(rho * expected, abs=1e-6)
    milp = solve_original_milp(*case3.args, inst, baseline=case3.baseline, options=EXACT_OPTIONS)
    assert milp.objective == pytest.approx(expected, abs=1e-6)
    assert milp.bound_type == EXACT
    assert milp.binary_counts == [10]


@pytest.mark.parametrize('line', [0, 1, 2])
def test_rg_matches_enumeration(case3, line):
    inst = AttackInstance(line, 0.01, 0.1)
    problem = build_attack_milp(*case3.args, inst, {0}, {0, 1}, case3.baseline)
    assert problem.n_binaries == 6
    result = solve_rg(*case3.args, inst, baseline=case3.baseline, options=EXACT_OPTIONS)
    assert result.objective - result.penalty == pytest.approx(enumerate_milp(problem), abs=1e-5)


def test_full_milp_matches_enumeration(case3):
    inst = AttackInstance(1, 0.002, 0.1)
    problem = build_attack_milp(*case3.args, inst, {0, 1, 2}, {0, 1}, case3.baseline)
    assert problem.n_binaries == 10
    result = solve_original_milp(*case3.args, inst, baseline=case3.baseline, options=EXACT_OPTIONS)
    assert result.objective - result.penalty == pytest.approx(enumerate_milp(problem), abs=1e-5)


@pytest.mark.parametrize('L_S', [0.05, 0.1])
@pytest.mark.parametrize('N1', [0.0, 0.001, 0.004, 0.01])
@pytest.mark.parametrize('line', [0, 1, 2])
def test_rg_matches_full_enumeration(case3, line, N1, L_S):
    inst = AttackInstance(line, N1, L_S)
    problem = build_attack_milp(*case3.args, inst, case3.case.rated_lines, {0, 1}, case3.baseline)
    rg = solve_rg(*case3.args, inst, baseline=case3.baseline, options=EXACT_OPTIONS)
    assert rg.objective - rg.penalty == pytest.approx(enumerate_milp(problem), abs=1e-6)


def test_milp_blocks(case3):
    inst = AttackInstance(0, 0.01, 0.1)
    problem = build_attack_milp(*case3.args, inst, {0, 1}, {1}, case3.baseline)
    blocks = problem.blocks
    # attackable buses 2 and 3
    assert len(blocks['c']) == 2
    assert len(blocks['p_g']) == 1
    assert len(blocks['d_f_plus']) == 2
    assert len(blocks['d_alpha_minus']) == 1
    assert problem.n_binaries == 6
    assert problem.lp.sense == 'max'


def test_complementarity_audit(case3):
    inst = AttackInstance(0, 0.01, 0.1)
    Q, R = {0, 1, 2}, {0, 1}
    problem = build_attack_milp(*case3.args, inst, Q, R, case3.baseline)
    result = HighsSolver(SolverOptions(gap_tol=1e-9)).solve_milp(problem)
    x = result.solution.x.copy()
    blocks = problem.blocks
    c = np.zeros(3)
    c[[1, 2]] = x[blocks['c']]
    dispatch = x[blocks['p_g']]
    assert audit_complementarity(*case3.args, problem, x, dispatch, c, Q, R) == []
    # a line dual without its indicator
    x[blocks['f_minus'][1]] = 5.0
    x[blocks['d_f_minus'][1]] = 0.0
    assert audit_complementarity(*case3.args, problem, x, dispatch, c, Q, R)


def test_default_big_m(case3):
    M = default_big_m(case3.case, case3.ptdf, {0}, {0, 1})
    assert M['line'].shape == (1,)
    assert M['gen'].shape == (2,)
    # covers twice the rating and the dual of the binding line
    assert M['line'][0] >= 160
    assert M['line_dual'][0] >= 60
    scaled = default_big_m(case3.case, case3.ptdf, {0}, {0, 1}, scale=2.0)
    np.testing.assert_allclose(scaled['gen'], 2 * M['gen'])


def test_big_m_sensitivity(case3):
    inst = AttackInstance(0, 0.01, 0.1)
    objectives, sensitive = check_big_m_sensitivity(
        *case3.args, inst, baseline=case3.baseline, options=EXACT_OPTIONS
    )
    assert set(objectives) == {0.5, 1.0, 2.0}
    assert not sensitive
    for value in objectives.values():
        assert value == pytest.approx(82.0, abs=1e-6)


def test_uniform_big_m(case3):
    inst = AttackInstance(0, 0.01, 0.1, big_M=1e4)
    result = solve_original_milp(*case3.args, inst, baseline=case3.baseline, options=EXACT_OPTIONS)
    assert result.objective == pytest.approx(82.0, abs=1e-6)


def test_rcg(case3):
    inst = AttackInstance(0, 0.01, 0.1)
    result = solve_rcg(*case3.args, inst, baseline=case3.baseline, options=EXACT_OPTIONS)
    assert result.algorithm == 'rcg'
    assert result.bound_type == LOWER_BOUND
    assert result.R == {0, 1}
    assert result.binary_counts == [6]
    assert result.objective == pytest.approx(82.0, abs=1e-6)


def test_rg_adds_lines(narrow3):
    inst = AttackInstance(2, 0.01, 0.1)
    result = solve_rg(*narrow3.args, inst, baseline=narrow3.baseline, options=EXACT_OPTIONS)
    assert result.iterations == 2
    assert result.Q == {0, 2}
    assert result.binary_counts == [6, 8]
    assert result.objective == pytest.approx(65 / 3, abs=1e-6)
    assert result.bound_type == EXACT
    milp = solve_original_milp(*narrow3.args, inst, baseline=narrow3.baseline, options=EXACT_OPTIONS)
    assert milp.objective == pytest.approx(65 / 3, abs=1e-6)


def test_rg_iteration_cap(narrow3):
    inst = AttackInstance(2, 0.01, 0.1)
    result = solve_rg(*narrow3.args, inst, baseline=narrow3.baseline, max_iterations=1,
                      options=EXACT_OPTIONS)
    assert not result.converged
    assert result.bound_type == LOWER_BOUND
    # the first attack is not dispatchable: the baseline stands
    np.testing.assert_allclose(result.c, 0)
    assert result.objective == pytest.approx(20.0, abs=1e-6)


def test_rcg_grows_rows(narrow3):
    inst = AttackInstance(2, 0.01, 0.1)
    result = solve_rcg(*narrow3.args, inst, baseline=narrow3.baseline, options=EXACT_OPTIONS)
    assert result.iterations == 2
    assert result.Q == {0, 2}
    assert result.converged
    assert result.objective == pytest.approx(65 / 3, abs=1e-6)


def test_iteration_events(narrow3):
    listener = Mock()
    attack_milp.on_iteration += listener
    try:
        solve_rg(*narrow3.args, AttackInstance(2, 0.01, 0.1), baseline=narrow3.baseline,
                 options=EXACT_OPTIONS)
    finally:
        attack_milp.on_iteration -= listener
    assert listener.call_count == 2
    first = listener.call_args_list[0].kwargs['record']
    assert isinstance(first, IterationRecord)
    assert first.algorithm == 'rg'
    assert first.iteration == 1
    assert first.Q == [0]
    assert first.R == [0, 1]
    assert first.binaries == 6
    assert first.new_lines == [2]
    last = listener.call_args.kwargs['record']
    assert last.new_lines == []
    # flow minus the tiny l1 penalty
    assert last.incumbent == pytest.approx(65 / 3, abs=1e-4)


def test_bad_target(case3):
    with pytest.raises(AttackModelError):
        solve_rg(*case3.args, AttackInstance(7, 0.01, 0.1), baseline=case3.baseline)
    branches = list(case3.case.branches)
    branches[1] = attr.evolve(branches[1], rating=math.inf)
    unrated = Grid(attr.evolve(case3.case, branches=branches))
    with pytest.raises(AttackModelError):
        solve_original_milp(*unrated.args, AttackInstance(1, 0.01, 0.1), baseline=unrated.baseline)


def test_case2_cannot_attack(case2):
    inst = AttackInstance(0, 0.5, 0.5)
    result = solve_rg(*case2.args, inst, baseline=case2.baseline, options=EXACT_OPTIONS)
    np.testing.assert_allclose(result.c, 0, atol=1e-9)
    assert result.objective == pytest.approx(100.0, abs=1e-6)
    assert not result.overflow


def test_radial_line_immune(case6):
    inst = AttackInstance(6, 0.5, 0.5)
    result = solve_rg(*case6.args, inst, baseline=case6.baseline, options=EXACT_OPTIONS)
    assert not result.overflow
    assert result.objective <= result.rating + 1e-6


@pytest.mark.parametrize('line', [0, 3, 5])
def test_case6_against_highs(case6, line):
    inst = AttackInstance(line, 0.05, 0.1)
    milp = solve_original_milp(*case6.args, inst, baseline=case6.baseline, options=EXACT_OPTIONS)
    problem = build_attack_milp(*case6.args, inst, case6.case.rated_lines, range(case6.case.n_gen),
                                case6.baseline)
    reference = HighsSolver(SolverOptions(gap_tol=1e-9)).solve_milp(problem)
    assert milp.objective - milp.penalty == pytest.approx(reference.objective, abs=1e-5)

    rg = solve_rg(*case6.args, inst, baseline=case6.baseline, options=EXACT_OPTIONS)
    assert rg.objective - rg.penalty == pytest.approx(reference.objective, abs=1e-5)
    rcg = solve_rcg(*case6.args, inst, baseline=case6.baseline, options=EXACT_OPTIONS)
    assert rcg.objective <= rg.objective + tol(inst)
    for result in (milp, rg, rcg):
        assert unobservability_audit(case6.H, case6.case, result.c, inst.L_S, inst.N1) == []


@pytest.mark.parametrize('line', [0, 1, 2])
def test_budget_monotone(case6, line):
    budgets = np.linspace(0.0, 0.2, 10)
    values = [
        solve_rg(*case6.args, AttackInstance(line, N1, 0.1), baseline=case6.baseline,
                 options=EXACT_OPTIONS).objective
        for N1 in budgets
    ]
    for smaller, larger in zip(values, values[1:]):
        # the l1 penalty may trade a little flow
        assert larger >= smaller - 1e-6 - 1e-3 * budgets[-1]


@pytest.mark.slow
def test_case118_rg_vs_milp(case118):
    from fdi_assess.grid_model import find_critical_lines
    lines = sorted(find_critical_lines(case118.baseline.physical_flows, case118.case))[:3]
    for line in lines:
        inst = AttackInstance(line, 0.1, 0.1)
        rg = solve_rg(*case118.args, inst, baseline=case118.baseline)
        milp = solve_original_milp(*case118.args, inst, baseline=case118.baseline)
        assert rg.objective - rg.penalty == pytest.approx(milp.objective - milp.penalty, abs=1e-4)


@pytest.mark.parametrize('backend', ['simplex', 'highs'])
def test_case3_line2_default_options(case3, backend):
    # default options: row scaling on, default gap
    set_backend(backend)
    inst = AttackInstance(2, 0.01, 0.1)
    rg = solve_rg(*case3.args, inst, baseline=case3.baseline)
    milp = solve_original_milp(*case3.args, inst, baseline=case3.baseline)
    for result in (rg, milp):
        assert result.objective == pytest.approx(22.0, abs=1e-4)
        assert result.orientation == -1
        assert unobservability_audit(case3.H, case3.case, result.c, inst.L_S, inst.N1) == []


@pytest.mark.parametrize('N1', [0.01, 0.05])
@pytest.mark.parametrize('line', [0, 1, 2, 3, 5])
def test_case6_rg_matches_enumeration(case6, line, N1):
    inst = AttackInstance(line, N1, 0.1)
    rg = solve_rg(*case6.args, inst, baseline=case6.baseline, options=EXACT_OPTIONS)
    assert rg.converged
    assert rg.bound_type == EXACT
    # the last MILP of the run, every binary assignment tried
    problem = build_attack_milp(*case6.args, inst, rg.Q, rg.R, case6.baseline)
    assert problem.n_binaries <= 16
    oracle = enumerate_milp(problem, indicator_pairs(problem))
    assert rg.objective - rg.penalty == pytest.approx(oracle, abs=1e-5)


def test_congestion_raises_relative_attack(case6):
    # line 1-2 is loaded to its rating; scaling every rating keeps it there
    line = 0
    fractions = []
    for scale in (1.0, 0.95, 0.9):
        grid = Grid(scale_ratings(case6.case, scale))
        rating = grid.case.ratings[line]
        assert abs(grid.baseline.physical_flows[line]) == pytest.approx(rating, rel=1e-6)
        inst = AttackInstance(line, 0.01, 0.1)
        result = solve_rg(*grid.args, inst, baseline=grid.baseline, options=EXACT_OPTIONS)
        assert result.bound_type == EXACT
        fractions.append(result.objective / rating)
    for looser, tighter in zip(fractions, fractions[1:]):
        assert tighter >= looser - 1e-6
    assert fractions[0] >= 1 - 1e-6


def test_complementarity_failure_raises(case3, monkeypatch):
    monkeypatch.setattr(attack_milp, 'audit_complementarity', lambda *args, **kwargs: ['made up'])
    with pytest.raises(AttackAuditError, match='complementarity'):
        solve_rg(*case3.args, AttackInstance(0, 0.01, 0.1), baseline=case3.baseline)


def test_stealth_failure_raises(case3, monkeypatch):
    monkeypatch.setattr(attack_milp, 'unobservability_audit', lambda *args, **kwargs: ['made up'])
    with pytest.raises(AttackAuditError, match='stealth'):
        solve_original_milp(*case3.args, AttackInstance(0, 0.01, 0.1), baseline=case3.baseline)


class FakeClock:
    '''Seconds that only advance when ``tick`` is called, e.g. from an iteration event.'''

    def __init__(self, step):
        self.now = 0.0
        self.step = step

    def __call__(self):
        return self.now

    def tick(self, record):
        self.now += self.step


def test_rg_deadline(narrow3):
    clock = FakeClock(100.0)
    deadline = Deadline(50, clock=clock)
    attack_milp.on_iteration += clock.tick
    try:
        result = solve_rg(*narrow3.args, AttackInstance(2, 0.01, 0.1), baseline=narrow3.baseline,
                          options=EXACT_OPTIONS, deadline=deadline)
    finally:
        attack_milp.on_iteration -= clock.tick
    assert result.timed_out
    assert not result.converged
    assert result.bound_type == LOWER_BOUND
    assert result.iterations == 1
    # same as stopping after one iteration
    np.testing.assert_allclose(result.c, 0)
    assert result.objective == pytest.approx(20.0, abs=1e-6)


def test_rg_deadline_not_reached(narrow3):
    clock = FakeClock(100.0)
    attack_milp.on_iteration += clock.tick
    try:
        result = solve_rg(*narrow3.args, AttackInstance(2, 0.01, 0.1), baseline=narrow3.baseline,
                          options=EXACT_OPTIONS, deadline=Deadline(1000, clock=clock))
    finally:
        attack_milp.on_iteration -= clock.tick
    assert not result.timed_out
    assert result.converged
    assert result.objective == pytest.approx(65 / 3, abs=1e-6)


def test_rcg_deadline(narrow3):
    clock = FakeClock(100.0)
    attack_milp.on_iteration += clock.tick
    try:
        result = solve_rcg(*narrow3.args, AttackInstance(2, 0.01, 0.1), baseline=narrow3.baseline,
                           options=EXACT_OPTIONS, deadline=Deadline(50, clock=clock))
    finally:
        attack_milp.on_iteration -= clock.tick
    assert result.timed_out
    assert not result.converged
    assert result.iterations == 1
    assert result.bound_type == LOWER_BOUND
    assert result.objective <= 65 / 3 + 1e-6


def test_milp_time_limit_is_capped_by_deadline(case3, monkeypatch):
    seen = []
    real = attack_milp._solve_reduced

    def capture(*args, **kwargs):
        seen.append(args[7])
        return real(*args, **kwargs)

    monkeypatch.setattr(attack_milp, '_solve_reduced', capture)
    clock = FakeClock(0.0)
    solve_original_milp(*case3.args, AttackInstance(0, 0.01, 0.1), baseline=case3.baseline,
                        options=EXACT_OPTIONS, deadline=Deadline(30, clock=clock))
    assert seen[0].time_limit == 30
    assert seen[0].gap_tol == EXACT_OPTIONS.gap_tol
