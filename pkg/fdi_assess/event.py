"""
Subscribable events for solver progress.

The iterative algorithms (row generation, row-and-column generation, modified
Benders) announce every finished iteration through a module-level `Event`.
Nothing listens by default; the CLI subscribes a `JsonLinesTrace` when
``--trace`` is given, and tests subscribe a ``Mock``.

.. default-role:: py:obj
"""

__all__ = [
    "event",
    "Event",
    "CancelEvent",
    "JsonLinesTrace",
]

import inspect
import json
import logging
import threading
from functools import update_wrapper
from pathlib import Path

import attr
import numpy as np


def L():
    return logging.getLogger(__name__)


class CancelEvent(Exception):
    """Raise this in a listener to skip all listeners subscribed after it."""


class Event:
    """Notifies a number of listeners when called.

    Create one by decorating a prototype function with `event`. The prototype
    fixes the signature: calling the event with arguments that do not fit the
    prototype raises ``TypeError`` before any listener runs. Default values
    and ``*args``/``**kwargs`` are forbidden in the prototype.

    Listeners are subscribed with ``+=`` and removed with ``-=``. They are
    called in subscription order, with keyword arguments if ``by_name`` is
    set (the default), else positionally.

    Any listener may raise `CancelEvent` to stop processing. Other exceptions
    propagate to the solver that fired the event, so a broken trace writer
    aborts the run instead of silently losing records.
    """

    def __init__(self, prototype, by_name=True):
        self._prototype = prototype
        self._by_name = by_name
        self._listeners = []
        sig = inspect.signature(prototype)
        P = inspect.Parameter
        if any(p.default is not P.empty for p in sig.parameters.values()):
            raise TypeError("Default values are forbidden for events")
        if any(
            p.kind in (P.VAR_POSITIONAL, P.VAR_KEYWORD)
            for p in sig.parameters.values()
        ):
            raise TypeError("*args and **kwargs are forbidden for events")
        self._argnames = list(sig.parameters)
        update_wrapper(self, prototype)

    def __call__(self, *args, **kwargs):
        # signature check
        self._prototype(*args, **kwargs)
        if self._by_name:
            kwargs = dict(kwargs, **dict(zip(self._argnames, args)))
            args = ()
        else:
            args = list(args) + [kwargs[name] for name in self._argnames[len(args):]]
            kwargs = {}
        for listener in list(self._listeners):
            try:
                listener(*args, **kwargs)
            except CancelEvent:
                break

    def __iadd__(self, listener):
        self._listeners.append(listener)
        return self

    def __isub__(self, listener):
        self._listeners.remove(listener)
        return self

    def __len__(self):
        return len(self._listeners)

    def __str__(self):
        names = ", ".join(self._argnames)
        return f"<Event {self._prototype.__qualname__}({names})>"

    __repr__ = __str__


def event(prototype=None, by_name=True):
    """Decorator that turns a function into an `Event`."""
    if prototype is None:
        return lambda prototype: event(prototype=prototype, by_name=by_name)
    return Event(prototype, by_name=by_name)


def _jsonable(value):
    if attr.has(type(value)):
        return {k: _jsonable(v) for k, v in attr.asdict(value, recurse=False).items()}
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (set, frozenset)):
        return sorted(_jsonable(v) for v in value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return value


class JsonLinesTrace:
    """Listener that appends each received record as one JSON line.

    Use as ``attack_milp.on_iteration += JsonLinesTrace(path)``. Records are
    attrs instances; they are flattened with `attr.asdict`. Thread-safe, the
    file is opened in append mode per record so that worker processes can
    share one trace file.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def __call__(self, record):
        line = json.dumps(_jsonable(record), sort_keys=True)
        with self._lock, self.path.open("a") as fp:
            fp.write(line + "\n")
