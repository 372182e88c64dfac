"""Continuous-time featurization: Fourier embedding bank and log-gap
transform. Pure functions over a geometric frequency bank; the learnable
projection that usually follows lives in the consuming model, not here. An
optional seeded random projection is provided for consumers wanting a dense
fixed feature, and is explicitly not learned.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .rng import RngStream

__all__ = ["FrequencyBank", "fourier_features", "gap_features", "random_projection"]


@dataclass(frozen=True)
class FrequencyBank:
    """Geometric frequency ladder f_1 < ... < f_K spanning [f_min, f_max]."""

    frequencies: np.ndarray

    def __post_init__(self):
        freqs = np.asarray(self.frequencies, dtype=np.float64)
        object.__setattr__(self, "frequencies", freqs)
        if freqs.ndim != 1 or freqs.size < 1 or np.any(freqs <= 0.0):
            raise ContractViolation("need a 1-D bank of positive frequencies")
        if freqs.size > 1:
            ratios = freqs[1:] / freqs[:-1]
            if np.any(ratios <= 1.0) or np.any(np.abs(ratios / ratios[0] - 1.0) > 1e-12):
                raise ContractViolation("frequencies must be strictly increasing with a "
                                        "constant geometric ratio")

    @classmethod
    def geometric(cls, k: int = 16, f_min: float = 0.01, f_max: float = 10.0) -> "FrequencyBank":
        if k < 1 or f_min <= 0.0 or f_max <= f_min:
            raise ConfigurationError("need k >= 1 and 0 < f_min < f_max")
        if k == 1:
            return cls(frequencies=np.array([f_min]))
        return cls(frequencies=np.geomspace(f_min, f_max, k))

    @property
    def size(self) -> int:
        return self.frequencies.size


def fourier_features(t: float | np.ndarray, bank: FrequencyBank) -> np.ndarray:
    """[sin(2 pi f_k t), cos(2 pi f_k t)] for k = 1..K, shape (..., 2K).

    Callers embedding schedule times are expected to shift them by the
    intervention onset first (t <- t - t_start).
    """
    t = np.asarray(t, dtype=np.float64)
    phase = 2.0 * np.pi * t[..., None] * bank.frequencies
    return np.concatenate([np.sin(phase), np.cos(phase)], axis=-1)


def gap_features(dt: float | np.ndarray, bank: FrequencyBank) -> np.ndarray:
    """Fourier features of log(1 + dt), concentrating resolution at small gaps."""
    dt = np.asarray(dt, dtype=np.float64)
    if np.any(dt < 0.0):
        raise ContractViolation("gaps must be non-negative")
    return fourier_features(np.log1p(dt), bank)


def random_projection(features: np.ndarray, out_dim: int, seed: int) -> np.ndarray:
    """Fixed seeded Gaussian projection to ``out_dim`` (non-learned)."""
    if out_dim < 1:
        raise ConfigurationError("out_dim must be >= 1")
    in_dim = features.shape[-1]
    gen = RngStream(seed).child("timefeat-projection").fresh_generator()
    w = gen.standard_normal((in_dim, out_dim)) / np.sqrt(in_dim)
    return features @ w
