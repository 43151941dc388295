"""Avoidance-aware news recommendation: statistics, metrics and training from Python."""

from ._awrs import (
    AwrsError,
    Timeline,
    auc,
    avoidance_ratio,
    engagement_cell,
    engagement_index,
    epi_ratio,
    evaluate,
    mrr,
    ndcg,
    quantize,
    stats,
    synth,
    train,
)

__all__ = [
    "AwrsError",
    "Timeline",
    "auc",
    "avoidance_ratio",
    "engagement_cell",
    "engagement_index",
    "epi_ratio",
    "evaluate",
    "mrr",
    "ndcg",
    "quantize",
    "stats",
    "synth",
    "train",
]
