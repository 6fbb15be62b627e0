"""Counterfactual-direction training from Python.

Thin layer over the C++ engine in cfdir._core. Configs, records and
datasets are plain dicts in the same JSON document formats the cfdir CLI
reads and writes.
"""

import json

from . import _core
from ._core import Model, bce_loss, direction_loss, direction_term

__all__ = [
    "Model",
    "bce_loss",
    "compare",
    "default_config",
    "direction_loss",
    "direction_term",
    "generate_dataset",
    "train",
]


def default_config():
    return json.loads(_core.default_config())


def generate_dataset(spec=None):
    """Dataset document for a dataset spec dict (defaults fill missing keys)."""
    return json.loads(_core.generate_dataset(json.dumps(spec or {})))


def _script(annotations):
    # annotations: iterable of dicts {example_index, direction, epoch?}
    if not annotations:
        return ""
    return json.dumps({"format": "cfdir.annotations", "version": 1, "annotations": list(annotations)})


def train(config=None, annotations=None, name="python"):
    """Run one session to completion.

    Returns (record, metrics, model): the experiment record and metrics
    documents as dicts, and the trained Model.
    """
    cfg = config if config is not None else default_config()
    record, metrics, params = _core.run_training(json.dumps(cfg), _script(annotations), name)
    return json.loads(record), json.loads(metrics), Model.from_text(params)


def compare(config=None, annotations=None, n_seeds=20, threads=0):
    """Control (lambda 0) against annotated runs over n_seeds seeds.

    Returns (comparison document, printable table).
    """
    cfg = config if config is not None else default_config()
    doc, table = _core.compare(json.dumps(cfg), _script(annotations), n_seeds, threads)
    return json.loads(doc), table
