"""Streaming manipulation-action recognition on semantic scene graphs."""

from fgse._core import (
    Dataset,
    Model,
    __version__,
    count_params,
    evaluate,
    f1_scores,
    generate_suite,
    majority_vote,
    relation_names,
    stream_episode,
    train_fold,
)

__all__ = [
    "Dataset",
    "Model",
    "__version__",
    "count_params",
    "evaluate",
    "f1_scores",
    "generate_suite",
    "majority_vote",
    "relation_names",
    "stream_episode",
    "train_fold",
]
