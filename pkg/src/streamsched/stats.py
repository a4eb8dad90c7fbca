"""Summary statistics helpers. Percentiles use the nearest-rank method."""
from __future__ import annotations

import math
import statistics
from typing import Sequence


def percentile_nearest_rank(values: Sequence[float], q: float) -> float:
    """q-th percentile (0 < q <= 100) by nearest rank on the sorted values."""
    if not values:
        raise ValueError("percentile of empty sequence")
    if not 0 < q <= 100:
        raise ValueError("percentile rank must be in (0, 100]")
    ordered = sorted(values)
    rank = math.ceil(q / 100.0 * len(ordered))
    return ordered[rank - 1]


def stddev(values: Sequence[float]) -> float:
    """Sample standard deviation; 0 for fewer than two values."""
    if len(values) < 2:
        return 0.0
    return statistics.stdev(values)


def latency_summary(latencies: Sequence[float]) -> dict:
    if not latencies:
        return {
            "outputs": 0,
            "median_ms": None,
            "p95_ms": None,
            "p99_ms": None,
            "stddev_ms": None,
        }
    return {
        "outputs": len(latencies),
        "median_ms": percentile_nearest_rank(latencies, 50),
        "p95_ms": percentile_nearest_rank(latencies, 95),
        "p99_ms": percentile_nearest_rank(latencies, 99),
        "stddev_ms": stddev(latencies),
    }
