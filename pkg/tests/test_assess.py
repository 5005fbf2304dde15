import json

import attr
import numpy as np
import pytest

from fdi_assess.assess import (
    COLUMNS,
    AssessmentConfig,
    InvariantViolation,
    ReportCell,
    check_group,
    emit_report,
    read_report_csv,
    run_assessment,
    write_reports,
)
from fdi_assess.case_io import CaseError


@pytest.fixture(scope='module')
def case3_report():
    cfg = AssessmentConfig(case='case3', algorithms='rg,rcg,dm,mbd,milp', n1='0.002,0.01')
    return run_assessment(cfg)


def test_config_defaults():
    cfg = AssessmentConfig(case='case3')
    assert cfg.algorithms == ['rg', 'rcg', 'dm', 'mbd']
    assert cfg.targets == 'critical'
    assert len(cfg.n1) == 10
    assert cfg.load_shift == [0.1]
    assert cfg.jobs == 1
    assert cfg.backend == 'simplex'
    assert cfg.out is None


@pytest.mark.parametrize('key,value', [
    ('algorithms', 'rg,gurobi'),
    ('threshold', 0),
    ('threshold', 1.5),
    ('n1', '0,0.1'),
    ('load_shift', 1.0),
    ('jobs', 0),
    ('backend', 'cplex'),
])
def test_config_rejects(key, value):
    with pytest.raises(ValueError):
        AssessmentConfig(case='case3', **{key: value})


def test_config_targets():
    assert AssessmentConfig(case='case3', targets='CRITICAL').targets == 'critical'
    assert AssessmentConfig(case='case3', targets='0,2').targets == [0, 2]
    assert AssessmentConfig(case='case3', targets=[1]).targets == [1]
    assert AssessmentConfig.from_dict({'case': 'case3', 'sigma': None}).sigma == 1e-3


def test_case3_sweep(case3_report):
    report = case3_report
    assert report.metadata['targets'] == [0]
    assert report.metadata['radial_immune'] == []
    assert report.metadata['failed_cells'] == 0
    assert len(report.cells) == 2 * 5
    assert report.failed == []

    rg = report.cell(0, 0.01, 0.1, 'rg')
    assert rg.objective == pytest.approx(82.0, abs=1e-3)
    assert rg.bound_type == 'exact'
    assert rg.overflow
    assert rg.pre_attack_flow == pytest.approx(80.0)
    assert rg.orientation == 1
    assert rg.l0 == 2
    assert rg.l1 == pytest.approx(0.004, rel=1e-4)
    assert rg.binaries == 6
    assert rg.converged

    dm = report.cell(0, 0.01, 0.1, 'dm')
    assert dm.upper_bound == pytest.approx(82.0, abs=1e-6)
    assert dm.notes == 'tight'
    assert dm.bound_type == 'lower_bound'

    milp = report.cell(0, 0.002, 0.1, 'milp')
    assert milp.objective == pytest.approx(81.0, abs=1e-3)
    assert milp.binaries == 10
    for name in ('rcg', 'mbd'):
        assert report.cell(0, 0.002, 0.1, name).objective <= 81.0 + 1e-3


def test_cell_lookup_missing(case3_report):
    with pytest.raises(KeyError):
        case3_report.cell(2, 0.01, 0.1, 'rg')


def test_csv_round_trip(case3_report, tmp_path):
    path = emit_report(case3_report, 'csv', tmp_path / 'report.csv')
    header = path.read_text().splitlines()[0]
    assert header.split(',') == [name for name, _ in COLUMNS]
    assert 'c' not in header.split(',')
    assert read_report_csv(path) == case3_report.cells


def test_json_report(case3_report, tmp_path):
    path = emit_report(case3_report, 'json', tmp_path / 'report.json')
    d = json.loads(path.read_text())
    assert d['metadata']['case_name'] == 'case3'
    assert len(d['cells']) == len(case3_report.cells)
    assert set(d['cells'][0]) == {name for name, _ in COLUMNS}


def test_unknown_format(case3_report, tmp_path):
    with pytest.raises(ValueError):
        emit_report(case3_report, 'xlsx', tmp_path / 'report.xlsx')


def test_empty_sweep(tmp_path):
    cfg = AssessmentConfig(case='case3', targets=[], n1=0.1, out=tmp_path / 'empty.csv',
                           json=tmp_path / 'empty.json')
    report = run_assessment(cfg)
    assert report.cells == []
    written = write_reports(report, cfg)
    assert written == [cfg.out, cfg.json]
    assert cfg.out.read_text().splitlines() == [','.join(name for name, _ in COLUMNS)]


def test_failed_cells_do_not_stop_the_sweep():
    report = run_assessment({'case': 'case3', 'targets': '0,7', 'n1': 0.01, 'algorithms': 'rg,dm'})
    assert len(report.cells) == 4
    failed = report.failed
    assert {cell.algorithm for cell in failed} == {'rg', 'dm'}
    assert all(cell.target == 7 for cell in failed)
    assert 'AttackModelError' in failed[0].error
    assert failed[0].objective is None


def test_radial_line_flag():
    report = run_assessment({'case': 'case6', 'targets': [6], 'n1': 0.1, 'algorithms': 'dm'})
    cell = report.cell(6, 0.1, 0.1, 'dm')
    assert cell.radial_immune
    assert not cell.overflow
    assert report.metadata['radial_immune'] == [6]


def test_scale_and_reference():
    report = run_assessment({'case': 'case3', 'targets': [0], 'n1': 0.01, 'algorithms': 'dm',
                             'scale': 1.1, 'reference_bus': 2})
    cell = report.cell(0, 0.01, 0.1, 'dm')
    assert cell.rating == pytest.approx(88.0)
    assert report.metadata['reference_bus'] == 2


def test_invalid_case():
    with pytest.raises(CaseError):
        run_assessment({'case': 'case3', 'reference_bus': 9})
    with pytest.raises(CaseError):
        run_assessment({'case': 'case42'})


def test_trace_file(tmp_path):
    trace = tmp_path / 'trace.jsonl'
    run_assessment({'case': 'case3', 'targets': [0], 'n1': 0.01, 'algorithms': 'rg,mbd',
                    'trace': trace})
    records = [json.loads(line) for line in trace.read_text().splitlines()]
    assert records[0]['algorithm'] == 'rg'
    assert any('cut_kind' in record for record in records)


def _cell(algorithm, objective, **kwargs):
    kwargs.setdefault('bound_type', 'exact' if algorithm in ('rg', 'milp') else 'lower_bound')
    return ReportCell(target=0, n1=0.01, load_shift=0.1, algorithm=algorithm,
                      objective=objective, rating=80.0, c=np.zeros(3), **kwargs)


def test_check_group_consistent(case3):
    cells = [_cell('rg', 82.0), _cell('milp', 82.0), _cell('rcg', 81.0),
             _cell('dm', 80.5, upper_bound=82.0)]
    assert check_group(cells, case3.H, case3.case, 1e-3) == []


@pytest.mark.parametrize('cells', [
    [_cell('rg', 90.0), _cell('dm', 80.0, upper_bound=82.0)],
    [_cell('rg', 82.0), _cell('milp', 83.0)],
    [_cell('rg', 82.0), _cell('mbd', 82.5)],
    [_cell('dm', 83.0, upper_bound=82.0)],
])
def test_check_group_violations(case3, cells):
    assert check_group(cells, case3.H, case3.case, 1e-3)


@pytest.mark.parametrize('converged,hard', [(True, True), (False, False)])
def test_check_group_dm_lower_above_rcg(case3, converged, hard):
    rcg = _cell('rcg', 79.0, converged=converged)
    dm = _cell('dm', 80.5, upper_bound=82.0)
    problems = check_group([rcg, dm], case3.H, case3.case, 1e-3)
    assert bool(problems) == hard
    for cell in (rcg, dm):
        assert cell.consistent is False
        assert 'dm_lower_above_rcg' in cell.notes.split(';')


def test_check_group_marks_only_involved_cells(case3):
    cells = [_cell('rg', 82.0), _cell('mbd', 82.5), _cell('dm', 80.5, upper_bound=83.0)]
    check_group(cells, case3.H, case3.case, 1e-3)
    assert [cell.consistent for cell in cells] == [False, False, True]
    assert cells[1].notes == 'mbd_above_rg'


def test_check_group_ignores_lower_bound_rg(case3):
    # a capped rg run is no reference
    cells = [_cell('rg', 80.0, bound_type='lower_bound'), _cell('mbd', 81.0)]
    assert check_group(cells, case3.H, case3.case, 1e-3) == []


def test_check_group_stealth(case3):
    cell = _cell('rg', 82.0)
    cell.c = np.array([0.0, 1.0, -1.0])
    problems = check_group([cell], case3.H, case3.case, 1e-3)
    assert any('load shift' in p for p in problems)


def test_invariant_violation_raised(monkeypatch):
    from fdi_assess import assess
    monkeypatch.setattr(assess, 'check_group', lambda *args: ['made up'])
    with pytest.raises(InvariantViolation):
        run_assessment({'case': 'case3', 'targets': [0], 'n1': 0.01, 'algorithms': 'dm'})


@pytest.mark.slow
def test_parallel_matches_serial():
    settings = {'case': 'case3', 'targets': [0, 1, 2], 'n1': '0.002,0.01', 'algorithms': 'rg,dm'}
    serial = run_assessment(settings)
    parallel = run_assessment(dict(settings, jobs=2))
    for a, b in zip(serial.cells, parallel.cells):
        assert a.key == b.key
        assert a.objective == pytest.approx(b.objective, abs=1e-6)


def test_deadline_reaches_each_run(monkeypatch):
    from fdi_assess import assess
    seen = {}
    real = assess.solve_rg

    def capture(*args, **kwargs):
        seen.update(kwargs)
        return attr.evolve(real(*args, **kwargs), timed_out=True, converged=False)

    monkeypatch.setattr(assess, 'solve_rg', capture)
    report = run_assessment({'case': 'case3', 'algorithms': 'rg', 'targets': '0', 'n1': '0.01',
                             'time_limit': 7})
    assert seen['deadline'].seconds == 7
    cell = report.cell(0, 0.01, 0.1, 'rg')
    assert cell.timed_out
    assert not cell.converged
    assert cell.error is None


def test_audit_failure_becomes_error_cell(monkeypatch):
    from fdi_assess import attack_milp
    monkeypatch.setattr(attack_milp, 'unobservability_audit', lambda *args, **kwargs: ['made up'])
    report = run_assessment({'case': 'case3', 'algorithms': 'rg,dm', 'targets': '0', 'n1': '0.01'})
    rg = report.cell(0, 0.01, 0.1, 'rg')
    assert 'AttackAuditError' in rg.error
    assert rg.objective is None
    assert report.cell(0, 0.01, 0.1, 'dm').error is None
