import math

import pytest

from fdi_assess.case_io import (
    BUNDLED_CASES,
    Branch,
    CaseError,
    CaseSemanticError,
    CaseSyntaxError,
    UnsupportedCaseFeature,
    find_radial_generator_lines,
    format_case,
    load_case,
    parse_case,
    scale_ratings,
    validate_case,
)

MINIMAL = '''\
function mpc = tiny
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0;
    2 1 50;   % load bus
];
mpc.gen = [
    1 0 0 0 0 1 100 1 80 0;
];
mpc.branch = [
    1 2 0 0.2 0 60;
];
mpc.gencost = [
    2 0 0 2 12 0;
];
'''


def _replace(old, new):
    assert old in MINIMAL
    return MINIMAL.replace(old, new)


def test_parse_minimal():
    case = parse_case(MINIMAL, name='tiny')
    assert case.name == 'tiny'
    assert case.base_mva == 100
    assert [bus.id for bus in case.buses] == [1, 2]
    assert case.reference_bus == 1
    assert list(case.loads) == [0, 50]
    assert case.branches == (Branch(1, 2, 0.2, 60.0),)
    assert case.generators[0].pmax == 80
    assert case.generators[0].cost == 12
    assert validate_case(case) == []


@pytest.mark.parametrize('name', BUNDLED_CASES)
def test_bundled_cases_are_valid(name):
    case = load_case(name)
    assert case.name == name
    assert validate_case(case) == []


def test_case3_content():
    case = load_case('case3')
    assert case.n_bus == 3
    assert case.n_branch == 3
    assert case.n_gen == 2
    assert list(case.ratings) == [80, 100, 50]
    assert list(case.costs) == [10, 30]
    assert case.load_buses == [1, 2]


def test_load_case_from_path(tmp_path):
    path = tmp_path / 'tiny.m'
    path.write_text(MINIMAL)
    case = load_case(str(path))
    assert case.name == 'tiny'
    assert case.n_bus == 2
    # PurePath works as well
    assert load_case(path) == case


def test_load_unknown_bundled_case():
    with pytest.raises(CaseError):
        load_case('case999')


@pytest.mark.parametrize('name', BUNDLED_CASES)
def test_format_round_trip(name):
    case = load_case(name)
    assert parse_case(format_case(case), name=name) == case


def test_format_round_trip_moved_reference():
    case = load_case('case6').with_reference(3)
    again = parse_case(format_case(case))
    assert again.reference_bus == 3


def test_zero_rating_means_unconstrained():
    case = parse_case(_replace('1 2 0 0.2 0 60;', '1 2 0 0.2 0 0;'))
    assert math.isinf(case.branches[0].rating)
    assert not case.branches[0].rated
    assert case.rated_lines == []


def test_out_of_service_branch_dropped():
    text = _replace('1 2 0 0.2 0 60;', '1 2 0 0.2 0 60 60 60 0 0 1;\n    1 2 0 0.3 0 40 40 40 0 0 0;')
    case = parse_case(text)
    assert case.n_branch == 1
    assert case.branches[0].reactance == 0.2


def test_out_of_service_generator_cost_ignored():
    text = _replace('1 0 0 0 0 1 100 1 80 0;', '1 0 0 0 0 1 100 1 80 0;\n    2 0 0 0 0 1 100 0 40 0;')
    text = text.replace('    2 0 0 2 12 0;\n', '    2 0 0 2 12 0;\n    2 0 0 4 1 0.5 12 0;\n')
    case = parse_case(text)
    assert case.n_gen == 1
    assert case.generators[0].cost == 12
    # the same cost row on an in-service generator is rejected
    with pytest.raises(UnsupportedCaseFeature):
        parse_case(text.replace('2 0 0 0 0 1 100 0 40 0;', '2 0 0 0 0 1 100 1 40 0;'))


def test_no_reference_takes_first_bus():
    case = parse_case(_replace('1 3 0;', '1 2 0;'))
    assert case.reference_bus == 1


def test_comment_with_percent_in_string():
    case = parse_case(_replace('mpc.baseMVA = 100;', "mpc.note = '100% made up';\nmpc.baseMVA = 100;"))
    assert case.base_mva == 100


# (text change, exception, line number or None)
@pytest.mark.parametrize('old,new,exc,line', [
    ('mpc.baseMVA = 100;', 'baseMVA 100', CaseSyntaxError, 2),
    ('2 1 50;', '2 1 fifty;', CaseSyntaxError, 5),
    ('1 2 0 0.2 0 60;', '1 2 0 0.2;', CaseSyntaxError, 11),
    ('    2 0 0 2 12 0;\n];\n', '    2 0 0 2 12 0;\n', CaseSyntaxError, 13),
    ('1 2 0 0.2 0 60;', '1 7 0 0.2 0 60;', CaseSemanticError, None),
    ('1 2 0 0.2 0 60;', '1 2 0 -0.2 0 60;', CaseSemanticError, None),
    ('2 1 50;', '1 1 50;', CaseSemanticError, None),
    ('2 0 0 2 12 0;', '2 0 0 3 0.5 12 0;', UnsupportedCaseFeature, None),
    ('2 0 0 2 12 0;', '1 0 0 2 0 0 100 1000;', UnsupportedCaseFeature, None),
])
def test_parse_errors(old, new, exc, line):
    with pytest.raises(exc) as info:
        parse_case(_replace(old, new))
    if line is not None:
        assert info.value.line == line


def test_semantic_error_names_bus():
    with pytest.raises(CaseSemanticError) as info:
        parse_case(_replace('1 2 0 0.2 0 60;', '1 7 0 0.2 0 60;'))
    assert info.value.bus == 7


def test_quadratic_cost_with_zero_coefficient_is_linear():
    case = parse_case(_replace('2 0 0 2 12 0;', '2 0 0 3 0 12 0;'))
    assert case.generators[0].cost == 12


def test_missing_table():
    text = MINIMAL.split('mpc.gencost')[0]
    with pytest.raises(CaseSyntaxError):
        parse_case(text)


def test_validate_reports_problems():
    case = parse_case(_replace('2 1 50;', '2 1 500;'))
    problems = validate_case(case)
    assert len(problems) == 1
    assert 'capacity' in problems[0]

    case = parse_case(_replace('1 2 0 0.2 0 60;', '1 2 0 0 0 60;'))
    assert any('reactance' in p for p in validate_case(case))


def test_validate_disconnected():
    text = _replace('2 1 50;', '2 1 50;\n    3 1 0;')
    problems = validate_case(parse_case(text))
    assert any('2 islands' in p for p in problems)


def test_scale_ratings():
    case = parse_case(MINIMAL)
    scaled = scale_ratings(case, 0.5)
    assert scaled.branches[0].rating == 30
    unrated = parse_case(_replace('1 2 0 0.2 0 60;', '1 2 0 0.2 0 0;'))
    assert math.isinf(scale_ratings(unrated, 0.5).branches[0].rating)
    with pytest.raises(ValueError):
        scale_ratings(case, 0)


def test_radial_generator_lines():
    assert find_radial_generator_lines(load_case('case6')) == {6}
    assert find_radial_generator_lines(load_case('case3')) == set()


def test_with_reference():
    case = load_case('case3')
    assert case.with_reference(2).reference_index == 1
    with pytest.raises(CaseSemanticError):
        case.with_reference(42)
