"""Multi-target unsupervised domain adaptation with shared/private feature factorization."""

from mtda._core import (
    Datasets,
    TrainedModel,
    balance_term,
    entropy_term,
    load_idx_datasets,
    mi_lower_bound_gap,
    nearest_neighbor_baseline,
    source_only_baseline,
    synthetic_datasets,
    train,
)

__all__ = [
    "Datasets",
    "TrainedModel",
    "balance_term",
    "entropy_term",
    "load_idx_datasets",
    "mi_lower_bound_gap",
    "nearest_neighbor_baseline",
    "source_only_baseline",
    "synthetic_datasets",
    "train",
]
