"""Hexagon tessellation, OSM-tag region embeddings and probabilistic
service-time models for last-mile delivery analysis."""

from lastmile._core import (  # noqa: F401
    Error,
    Matrix,
    baselines,
    boosting,
    cluster,
    conformal,
    embed,
    eval,  # noqa: A004  (mirrors the C++ namespace)
    geo,
    ingest,
    metrics,
)

__version__ = "0.1.0"

__all__ = [
    "Error",
    "Matrix",
    "baselines",
    "boosting",
    "cluster",
    "conformal",
    "embed",
    "eval",
    "geo",
    "ingest",
    "metrics",
]
