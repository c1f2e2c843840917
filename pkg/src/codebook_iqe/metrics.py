"""Correlation metrics between predicted and subjective quality scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["CorrelationReport", "pearson", "spearman", "average_ranks"]


@dataclass(frozen=True)
class CorrelationReport:
    """Pearson/Spearman correlations of predictions vs MOS on one subset."""

    pcc: float
    srocc: float
    n: int
    subset: str


def _as_valid_pair(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 3:
        raise ValueError(f"need at least 3 samples, got {a.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite values in input")
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        # an explicit error beats a silent NaN; callers must skip degenerate subsets
        raise ValueError("correlation undefined for constant input")
    return a, b


def pearson(a, b) -> float:
    """Sample Pearson correlation coefficient."""
    a, b = _as_valid_pair(a, b)
    da = a - a.mean()
    db = b - b.mean()
    return float(np.dot(da, db) / np.sqrt(np.dot(da, da) * np.dot(db, db)))


def average_ranks(v) -> np.ndarray:
    """Ranks starting at 1, ties replaced by the mean of their rank range."""
    v = np.asarray(v, dtype=np.float64).ravel()
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    sv = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(a, b) -> float:
    """Spearman rank-order correlation (Pearson of average-ranked data)."""
    a, b = _as_valid_pair(a, b)
    return pearson(average_ranks(a), average_ranks(b))
