"""Polar radar place recognition: learned descriptors, baselines, Recall@N."""

from ._polarloc import (
    ContractViolation,
    DataError,
    Model,
    UsageError,
    conv2d_circular,
    evaluate,
    generate_synthetic,
    knn,
    label_pair,
    ring_key,
    roll_angular,
    scancontext,
    scancontext_distance,
    selftest,
)

__all__ = [
    "ContractViolation",
    "DataError",
    "Model",
    "UsageError",
    "conv2d_circular",
    "evaluate",
    "generate_synthetic",
    "knn",
    "label_pair",
    "ring_key",
    "roll_angular",
    "scancontext",
    "scancontext_distance",
    "selftest",
]
