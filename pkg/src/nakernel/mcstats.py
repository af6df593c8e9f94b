"""Monte Carlo summaries: plain mean with standard error, median of means."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_MOM_BLOCKS = 16


def median_of_means(values, n_blocks: int = DEFAULT_MOM_BLOCKS) -> float:
    """Median of the block means of ``values`` split into contiguous blocks.

    Falls back to the plain mean when there are fewer values than blocks.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("median_of_means of an empty sample")
    if values.size < n_blocks:
        return float(values.mean())
    blocks = np.array_split(values, n_blocks)
    return float(np.median([b.mean() for b in blocks]))


@dataclass(frozen=True)
class McEstimate:
    """Result of a Monte Carlo estimation.

    ``mean`` is the plain sample mean and the default reported value;
    ``mom`` is the median-of-means variant computed from the same draws.
    ``variant`` names the estimator that produced the record.
    """

    mean: float
    stderr: float
    n: int
    seed: int
    variant: str
    mom: float = float("nan")
    extra: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_samples(cls, samples, seed: int, variant: str, scale: float = 1.0,
                     n_blocks: int = DEFAULT_MOM_BLOCKS, **extra) -> "McEstimate":
        samples = np.asarray(samples, dtype=float) * scale
        n = samples.size
        mean = float(samples.mean())
        stderr = float(samples.std(ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
        return cls(mean=mean, stderr=stderr, n=int(n), seed=int(seed),
                   variant=variant, mom=median_of_means(samples, n_blocks),
                   extra=dict(extra))

    def value(self, which: str = "mean") -> float:
        if which == "mean":
            return self.mean
        if which == "mom":
            return self.mom
        raise ValueError(f"unknown estimator variant {which!r}")


def combine_moments(parts):
    """Merge ``(sum, sum_of_squares, count)`` partials into mean and stderr."""
    total = sum(p[0] for p in parts)
    total_sq = sum(p[1] for p in parts)
    count = sum(p[2] for p in parts)
    mean = total / count
    var = max(total_sq / count - mean * mean, 0.0) * count / max(count - 1, 1)
    return mean, float(np.sqrt(var / count)), count
