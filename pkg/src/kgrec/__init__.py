"""Implicit-feedback recommendation as single-relation link prediction."""

from kgrec.data import (
    DatasetStats,
    InteractionDataset,
    TripleGraph,
    build_dataset,
    dataset_stats,
    load_interactions,
    recast_to_triples,
)
from kgrec.models import EmbeddingModel, InitSpec, init_model, score_candidates, score_triple

__version__ = "0.1.0"

__all__ = [
    "DatasetStats",
    "EmbeddingModel",
    "InitSpec",
    "InteractionDataset",
    "TripleGraph",
    "build_dataset",
    "dataset_stats",
    "init_model",
    "load_interactions",
    "recast_to_triples",
    "score_candidates",
    "score_triple",
]
