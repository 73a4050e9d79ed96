"""CPU workbench for neural combinatorial optimization on 2D Euclidean TSP.

Thin wrapper over the C++ extension: instance sampling, exact and heuristic
oracles, policy models with greedy/beam/sample decoding, training, and the
optimality-gap evaluation protocol.
"""

import json as _json

from ncopt._core import (
    Dataset,
    Instance,
    Model,
    SearchResult,
    Solution,
    __version__,
    brute_force,
    checkpoint_id,
    evaluate_dataset_json,
    evaluate_json,
    held_karp,
    insertion,
    instance_svg,
    read_dataset,
    reference_tour,
    sample_instances,
    tour_length,
    train,
    two_opt,
    write_dataset,
)


def evaluate(checkpoint, sizes, per_size, **kwargs):
    """Self-contained evaluation of a saved checkpoint; returns the report dict."""
    return _json.loads(evaluate_json(checkpoint, sizes, per_size, **kwargs))


def evaluate_dataset(model, label, dataset, **kwargs):
    """Evaluation against a labeled dataset's reference tours; returns the report dict."""
    return _json.loads(evaluate_dataset_json(model, label, dataset, **kwargs))


__all__ = [
    "Dataset",
    "Instance",
    "Model",
    "SearchResult",
    "Solution",
    "__version__",
    "brute_force",
    "checkpoint_id",
    "evaluate",
    "evaluate_dataset",
    "evaluate_dataset_json",
    "evaluate_json",
    "held_karp",
    "insertion",
    "instance_svg",
    "read_dataset",
    "reference_tour",
    "sample_instances",
    "tour_length",
    "train",
    "two_opt",
    "write_dataset",
]
