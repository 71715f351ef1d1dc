"""Relaxed Mumford-Shah segmentation: soft segmentation, bias correction,
a multiphase level-set baseline and evaluation metrics."""

from ._core import (
    ConvergenceError,
    Error,
    IoError,
    clustering_metrics,
    combined_loss,
    cross_entropy,
    make_phantom,
    minimize_ms,
    minimize_ms_bias,
    ms_loss,
    overlap_metrics,
    segment_levelset,
    softmax,
)

__all__ = [
    "ConvergenceError",
    "Error",
    "IoError",
    "clustering_metrics",
    "combined_loss",
    "cross_entropy",
    "make_phantom",
    "minimize_ms",
    "minimize_ms_bias",
    "ms_loss",
    "overlap_metrics",
    "segment_levelset",
    "softmax",
]
