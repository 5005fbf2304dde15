"""Value converters for configuration and command-line input.

Each converter takes the raw (usually string) value and returns the native
value or raises ``ValueError``. They compose::

    >>> convert = nullable(gt0(float))
    >>> convert("") is None
    True
    >>> convert("2.5")
    2.5
    >>> convert("-1")
    Traceback (most recent call last):
    ...
    ValueError: Expected number greater than 0

``argparse`` accepts them directly as ``type=`` (it turns the ``ValueError``
into a usage error).
"""

__all__ = [
    "ge0",
    "gt0",
    "fraction",
    "nullable",
    "float_list",
    "name_list",
]


def gt0(convert):
    '''Applies ``convert``, then raises if value is not greater than 0.'''
    def wrap_convert(x):
        x = convert(x)
        if not x > 0:
            raise ValueError("Expected number greater than 0")
        return x
    return wrap_convert


def ge0(convert):
    '''Applies ``convert``, then raises if value is not greater or equal to 0.'''
    def wrap_convert(x):
        x = convert(x)
        if not x >= 0:
            raise ValueError("Expected number greater or equal to 0")
        return x
    return wrap_convert


def fraction(convert):
    '''Applies ``convert``, then raises unless ``0 < value < 1``.

    Used for load shifts: ``fraction(float)("0.1")`` gives ``0.1``.
    '''
    def wrap_convert(x):
        x = convert(x)
        if not 0 < x < 1:
            raise ValueError("Expected number strictly between 0 and 1")
        return x
    return wrap_convert


def nullable(convert):
    '''Returns ``None`` on empty string or ``None``, otherwise applies ``convert``.'''
    def wrap_convert(x):
        if x is None or x == "":
            return None
        return convert(x)
    return wrap_convert


def float_list(convert=float):
    '''Parses a list of numbers, each passed through ``convert``.

    Accepted forms:

    * a Python list/tuple (from a JSON config) - items are converted;
    * comma-separated ``"0.05,0.1,0.15"``;
    * MATLAB-style range ``"start:step:stop"`` (inclusive stop), e.g.
      ``"0.1:0.1:1.0"`` gives ten values. Values are rounded to 12 digits so
      that accumulated float error does not drop the end point.
    '''
    def wrap_convert(x):
        if isinstance(x, (list, tuple)):
            return [convert(item) for item in x]
        if isinstance(x, (int, float)):
            return [convert(x)]
        text = str(x).strip()
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValueError("Range must read start:step:stop, got %r" % text)
            start, step, stop = (float(p) for p in parts)
            if not step > 0:
                raise ValueError("Range step must be positive")
            values = []
            k = 0
            while True:
                value = round(start + k * step, 12)
                if value > stop + 1e-9:
                    break
                values.append(convert(value))
                k += 1
            if not values:
                raise ValueError("Empty range %r" % text)
            return values
        items = [item.strip() for item in text.split(",") if item.strip()]
        if not items:
            raise ValueError("Expected at least one number")
        return [convert(item) for item in items]
    return wrap_convert


def name_list(allowed):
    '''Parses a comma-separated list of names, each of which must be in ``allowed``.'''
    def wrap_convert(x):
        if isinstance(x, (list, tuple)):
            names = [str(item).strip().lower() for item in x]
        else:
            names = [item.strip().lower() for item in str(x).split(",") if item.strip()]
        bad = [name for name in names if name not in allowed]
        if bad:
            raise ValueError(
                "Unsupported name(s) %s, expected some of %s" % (", ".join(bad), ", ".join(allowed))
            )
        if not names:
            raise ValueError("Expected at least one name")
        return names
    return wrap_convert
