"""Python access to the tablesvc C++ core.

Configs (world, signature, training) are plain dicts; they are passed to the
core as JSON.
"""

import json as _json

from . import _tablesvc
from ._tablesvc import (
    Dataset,
    Model,
    TablesvcError,
    average_pool,
    combine_multitask_loss,
    coverage_radius,
    evaluate,
    f1_from_counts,
    gradcheck,
    load_dataset,
    load_model,
    max_pool,
    predict,
    roc_auc,
    save_dataset,
    save_model,
    select_diversity,
    select_random,
    select_uncertainty,
    simple_attention,
    split_dataset,
)

__all__ = [
    "Dataset",
    "Model",
    "TablesvcError",
    "average_pool",
    "build_benchmark",
    "combine_multitask_loss",
    "coverage_radius",
    "evaluate",
    "f1_from_counts",
    "gradcheck",
    "load_dataset",
    "load_model",
    "max_pool",
    "predict",
    "roc_auc",
    "run_cli",
    "save_dataset",
    "save_model",
    "select_diversity",
    "select_random",
    "select_uncertainty",
    "simple_attention",
    "split_dataset",
    "train",
    "world_config",
]


def _dump(value):
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return _json.dumps(value)


def world_config(world=None):
    """Resolve a world dict (optionally with a "preset" key) to its full form."""
    return _json.loads(_tablesvc.world_config(_dump(world)))


def build_benchmark(world=None, episodes=9, seed=1):
    """Simulate `episodes` episodes and return (train, test) datasets."""
    return _tablesvc.build_benchmark(_dump(world), episodes, seed)


def train(dataset, signature, config=None):
    """Train a head; returns (model, history rows (epoch, lr, loss, train_f1)).

    `signature` may be a source spec string such as "table_info:attention",
    a list of them, or a full signature dict.
    """
    if isinstance(signature, str):
        signature = {"sources": [signature]}
    elif isinstance(signature, (list, tuple)):
        signature = {"sources": list(signature)}
    return _tablesvc.train(dataset, _dump(signature), _dump(config))


def run_cli(*args):
    """Run the command-line front end in-process; returns the exit code."""
    return _tablesvc.run_cli([str(a) for a in args])
