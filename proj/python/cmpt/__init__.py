"""Cross-modal proxy token harness.

Thin wrapper over the compiled extension: config arguments accept dicts or
JSON strings, JSON results come back as dicts.
"""

import json as _json

from ._cmpt import (  # noqa: F401
    ConfigError,
    DataError,
    TrainingDivergenceError,
    __version__,
    gate_case,
    gradcheck as _gradcheck,
    poly_lr,
    protocol_counts,
)
from . import _cmpt as _core


def _dump(config):
    if isinstance(config, str):
        return config
    return _json.dumps(config)


def compute_metrics(logits, targets, mode="single"):
    return _json.loads(_core.compute_metrics(logits, targets, mode))


def gen_data(config):
    return _json.loads(_core.gen_data(_dump(config)))


def pretrain(config):
    _core.pretrain(_dump(config))


def train(config):
    return _json.loads(_core.train(_dump(config)))


def evaluate(config, protocol=""):
    return _json.loads(_core.evaluate(_dump(config), protocol))


def sweep(config, jobs=1):
    return _json.loads(_core.sweep(_dump(config), jobs))


def ablate(config, jobs=1):
    return _json.loads(_core.ablate(_dump(config), jobs))


def gradcheck(config, seed=1):
    return _gradcheck(_dump(config), seed)
