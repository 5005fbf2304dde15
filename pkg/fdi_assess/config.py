"""Loading and saving batch-assessment configuration files.

.. default-role:: py:obj

The file format is a flat JSON object whose keys mirror the long CLI flags
with dashes replaced by underscores::

    {
      "case": "case118.m",
      "algorithms": "rg,rcg,dm",
      "targets": "critical",
      "n1": "0.1:0.1:1.0",
      "load_shift": [0.1],
      "sigma": 1e-3
    }

Values may be given as JSON natives or as the same strings the command line
accepts; conversion and validation happen in `.assess.AssessmentConfig`.
"""
__all__ = [
    "CONFIG_KEYS",
    "load_config_json",
    "save_config_json",
]

import json
import logging
from pathlib import Path

import attr


def L():
    return logging.getLogger(__name__)


CONFIG_KEYS = (
    "case",
    "algorithms",
    "targets",
    "threshold",
    "n1",
    "load_shift",
    "sigma",
    "big_m",
    "scale",
    "reference_bus",
    "jobs",
    "seed",
    "time_limit",
    "backend",
    "out",
    "json",
    "trace",
)


def load_config_json(path):
    """Load an assessment config file into a plain ``dict``.

    Unknown keys raise ``ValueError`` naming the key, so that typos do not
    silently fall back to defaults. A missing file raises
    ``FileNotFoundError``.
    """
    path = Path(path)
    L().debug("Load config from file %s", path)
    with path.open("r") as fp:
        d = json.load(fp)
    if not isinstance(d, dict):
        raise ValueError("Config file %s must contain a JSON object" % path)
    d = {key.replace("-", "_"): value for key, value in d.items()}
    unknown = sorted(set(d) - set(CONFIG_KEYS))
    if unknown:
        raise ValueError(
            "Unknown config key(s) in %s: %s" % (path, ", ".join(unknown))
        )
    return d


def save_config_json(config, path):
    """Save a config (``dict`` or attrs instance) to JSON file.

    OVERWRITES existing file!
    """
    if attr.has(type(config)):
        config = attr.asdict(config)
    d = {
        key: (str(value) if isinstance(value, Path) else value)
        for key, value in config.items()
        if key in CONFIG_KEYS and value is not None
    }
    path = Path(path)
    with path.open("w") as fp:
        json.dump(d, fp, indent=2, sort_keys=True)
    L().info("Saved config to %s", path)
    return path
