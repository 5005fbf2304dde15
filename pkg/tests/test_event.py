import json
from unittest.mock import Mock

import attr
import numpy as np
import pytest

from fdi_assess.event import CancelEvent, Event, JsonLinesTrace, event


@pytest.fixture
def ev1():
    @event
    def ev1():
        """Event 1"""

    return ev1


@pytest.fixture
def ev2():
    @event
    def ev2(a: int):
        """Event 2"""

    return ev2


def test_event_docstring(ev1):
    """Docstring is passed through"""
    assert ev1.__doc__ == "Event 1"


def test_event_signature_check(ev2):
    """Calling event with bad parameters raises TypeError"""
    ev = ev2

    with pytest.raises(TypeError):  # a is missing
        ev()
    with pytest.raises(TypeError):  # b is extra
        ev(1, b=1)
    with pytest.raises(TypeError):  # 2, 3 are extra
        ev(1, 2, 3)
    # type hints are not enforced
    ev("not an integer")
    ev(a=1)


@pytest.mark.parametrize(
    "handler,iserror",
    [
        (lambda a, b: None, True),
        (lambda a, b=1: None, False),
        # By default, kwargs are passed
        (lambda *args: None, True),
        (lambda **kwargs: None, False),
        # a is missing
        (lambda b, c: None, True),
    ],
)
def test_event_handler_signature(ev2, handler, iserror):
    """Handler signature is only checked when the event fires."""
    ev2 += handler
    if iserror:
        with pytest.raises(TypeError):
            ev2(1)
    else:
        ev2(1)


def test_event_str(ev1, ev2):
    assert str(ev1) == "<Event ev1.<locals>.ev1()>"
    assert str(ev2) == "<Event ev2.<locals>.ev2(a)>"


@pytest.mark.parametrize("prototype", [
    lambda kwarg=1: None,
    lambda *args: None,
    lambda **kwargs: None,
])
def test_event_bad_prototype(prototype):
    with pytest.raises(TypeError):
        Event(prototype)


def test_module_event_fire(ev1):
    ev1 += (m := Mock())
    ev1()
    m.assert_called_with()


def test_event_namedargs():
    """By default, args are passed as named args"""

    @event
    def ev(a, b):
        pass

    ev += (m := Mock())
    ev(1, 2)
    m.assert_called_with(a=1, b=2)


def test_event_posargs():
    """If configured so, args are passed positional"""

    @event(by_name=False)
    def ev(a, b):
        pass

    ev += (m := Mock())
    ev(1, b=2)
    m.assert_called_with(1, 2)


def test_unsubscribe(ev2):
    ev2 += (m := Mock())
    assert len(ev2) == 1
    ev2 -= m
    assert len(ev2) == 0
    ev2(1)
    m.assert_not_called()


def test_cancel_event(ev2):
    first = Mock(side_effect=CancelEvent)
    second = Mock()
    ev2 += first
    ev2 += second
    ev2(1)
    first.assert_called_once_with(a=1)
    second.assert_not_called()


def test_listener_errors_propagate(ev2):
    ev2 += Mock(side_effect=RuntimeError("disk full"))
    with pytest.raises(RuntimeError):
        ev2(1)


@attr.s
class _Record:
    iteration = attr.ib()
    lines = attr.ib()
    values = attr.ib()


def test_json_lines_trace(tmp_path):
    @event
    def progress(record):
        pass

    path = tmp_path / "trace.jsonl"
    progress += JsonLinesTrace(path)
    progress(_Record(1, frozenset({3, 1}), np.array([0.5, np.float64(2)])))
    progress(record=_Record(np.int64(2), [], np.zeros(0)))
    lines = path.read_text().splitlines()
    assert [json.loads(line) for line in lines] == [
        {"iteration": 1, "lines": [1, 3], "values": [0.5, 2.0]},
        {"iteration": 2, "lines": [], "values": []},
    ]
