"""Delay embedding of scalar observable series.

A scalar series s_0, s_1, ... is lifted to vectors
(s_k, s_{k+delay}, ..., s_{k+(dim-1)*delay}) so that geometry hidden in a
single measured coordinate becomes visible again.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynsys import TimeSeries

__all__ = ["EmbeddingSpec", "delay_embed"]

# Sensible delay for slowly sampled external scalar records.
DEFAULT_DELAY = 500


@dataclass(frozen=True)
class EmbeddingSpec:
    """Delay (in samples) and target dimension of the embedding."""

    delay: int
    dim: int = 3

    def __post_init__(self):
        if self.delay < 1:
            raise ValueError("delay must be >= 1")
        if self.dim < 2:
            raise ValueError("embedding dimension must be >= 2")

    @property
    def span(self) -> int:
        """Number of input samples consumed by one embedded vector."""
        return (self.dim - 1) * self.delay + 1


def delay_embed(series: TimeSeries, spec: EmbeddingSpec) -> TimeSeries:
    """Embed a scalar series; row k is (s_k, s_{k+delay}, ..., s_{k+(dim-1)*delay}).

    The output keeps the input sampling step and start time and has length
    T - (dim-1)*delay.
    """
    if series.dim != 1:
        raise ValueError(f"delay embedding needs a scalar series, got dim={series.dim}")
    s = series.values[:, 0]
    T = len(s)
    n_out = T - (spec.dim - 1) * spec.delay
    if n_out < 2:
        raise ValueError(
            f"series too short for embedding: length {T}, need at least "
            f"{(spec.dim - 1) * spec.delay + 2} samples for delay={spec.delay}, dim={spec.dim}"
        )
    cols = [s[j * spec.delay : j * spec.delay + n_out] for j in range(spec.dim)]
    return TimeSeries(series.dt, series.t0, np.stack(cols, axis=1))
