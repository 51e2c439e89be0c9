"""
Knowledge base: experiment presets and reference results.

Exports:
- PERCENTILE_CONFIGS, resolve_percentiles
- ARCHITECTURES, DEFAULT_THRESHOLDS
- REFERENCE_RESULTS, find_reference
"""

from .presets import (
    ARCHITECTURES,
    DEFAULT_THRESHOLDS,
    PERCENTILE_CONFIGS,
    REFERENCE_RESULTS,
    find_reference,
    resolve_percentiles,
)

__all__ = [
    "ARCHITECTURES",
    "DEFAULT_THRESHOLDS",
    "PERCENTILE_CONFIGS",
    "REFERENCE_RESULTS",
    "find_reference",
    "resolve_percentiles",
]
