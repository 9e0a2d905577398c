"""Experiment orchestration: traces, bands, rate fits, presets, plots and the CLI.

Only the metrics are imported eagerly; ``experiment``, ``plotting`` and
``cli`` depend on the algorithms package and are imported on demand.
"""

from .metrics import (
    BandSummary,
    Evaluator,
    MetricsTrace,
    aggregate_bands,
    exact_update_variance,
    mc_variance,
    rate_fit,
)

__all__ = [
    "BandSummary",
    "Evaluator",
    "MetricsTrace",
    "aggregate_bands",
    "exact_update_variance",
    "mc_variance",
    "rate_fit",
]
