"""Weighted model averaging and federation settings."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError


def server_weights(counts):
    """``gamma_k = n_k / sum n``."""
    n = np.asarray(counts, dtype=np.float64)
    if n.ndim != 1 or not len(n) or np.any(n < 0) or n.sum() <= 0:
        raise ConfigError(f"need nonnegative counts with a positive sum, got {counts}")
    return n / n.sum()


def _check_gamma(gamma, K):
    g = np.asarray(gamma, dtype=np.float64)
    if g.shape != (K,):
        raise ConfigError(f"need {K} weights, got shape {g.shape}")
    if np.any(g < 0) or abs(g.sum() - 1.0) > 1e-12:
        raise ConfigError(f"weights must be nonnegative and sum to 1, got sum {g.sum()!r}")
    return g


def fedavg(models, gamma):
    """Coordinatewise ``sum_k gamma_k w_k``.

    Args:
        models: list of arrays, or of dicts of arrays with identical keys and
            shapes.
        gamma: weights summing to one.
    """
    if not len(models):
        raise ConfigError("fedavg needs at least one model")
    g = _check_gamma(gamma, len(models))
    first = models[0]
    if isinstance(first, dict):
        keys = set(first)
        for m in models[1:]:
            if set(m) != keys:
                raise ValueError("models have different parameter names")
        return {k: fedavg([m[k] for m in models], g) for k in first}
    arrs = [np.asarray(m, dtype=np.float64) for m in models]
    for a in arrs[1:]:
        if a.shape != arrs[0].shape:
            raise ValueError(f"shape mismatch: {a.shape} vs {arrs[0].shape}")
    out = g[0] * arrs[0]
    for gk, a in zip(g[1:], arrs[1:]):
        out = out + gk * a
    return out


@dataclass(frozen=True)
class FederationConfig:
    """K servers, ``E`` local steps between aggregations, ``T`` local steps in total."""

    K: int = 1
    E: int = 1
    T: int = 100
    seed: int = 0
    gamma: tuple | None = None

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if self.E < 1:
            raise ConfigError(f"E must be >= 1, got {self.E}")
        if self.T < self.E:
            raise ConfigError(f"T must be >= E, got T={self.T}, E={self.E}")
        if self.gamma is not None:
            _check_gamma(self.gamma, self.K)

    @property
    def rounds(self):
        return self.T // self.E
