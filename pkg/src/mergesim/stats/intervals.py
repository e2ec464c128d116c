"""Confidence intervals for proportions and means."""

from __future__ import annotations

import math
from typing import Sequence

from .distributions import normal_ppf, t_ppf


def wilson_interval(successes: int, n: int, level: float = 0.95) -> tuple[float, float]:
    if n < 1 or not 0 <= successes <= n:
        raise ValueError(f"need 0 <= successes <= n and n >= 1, got {successes}/{n}")
    z = normal_ppf(1.0 - (1.0 - level) / 2.0)
    p = successes / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4 * n * n)) / denom
    lo, hi = centre - half, centre + half
    # the closed form hits 0 and 1 exactly only up to rounding
    if successes == 0:
        lo = 0.0
    if successes == n:
        hi = 1.0
    return max(0.0, lo), min(1.0, hi)


def t_interval(sample: Sequence[float], level: float = 0.95) -> tuple[float, float]:
    n = len(sample)
    if n < 2:
        raise ValueError(f"t interval needs at least 2 values, got {n}")
    mean = math.fsum(sample) / n
    var = math.fsum((x - mean) ** 2 for x in sample) / (n - 1)
    half = t_ppf(1.0 - (1.0 - level) / 2.0, n - 1) * math.sqrt(var / n)
    return mean - half, mean + half
