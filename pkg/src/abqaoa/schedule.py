"""Fourier-mode parameterization of the layer angles."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class FourierPoint:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if u.shape != v.shape or u.ndim != 1:
            raise ValueError(f"u and v must be equal-length vectors, got {u.shape}, {v.shape}")
        if u.size == 0:
            raise ValueError("empty Fourier point")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("non-finite Fourier amplitudes")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def level(self) -> int:
        return self.u.size


@lru_cache(maxsize=64)
def fourier_basis(p: int) -> tuple[np.ndarray, np.ndarray]:
    """Matrices (S, C) with S[l, k] = sin[(l-1/2)(k-1/2)pi/p] and C likewise with cos."""
    half = np.arange(p) + 0.5
    arg = np.outer(half, half) * np.pi / p
    s, c = np.sin(arg), np.cos(arg)
    s.flags.writeable = False
    c.flags.writeable = False
    return s, c


def to_schedule(u, v) -> tuple[np.ndarray, np.ndarray]:
    """Map amplitudes to (gammas, betas); accepts single points or (batch, p) arrays."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"u shape {u.shape} != v shape {v.shape}")
    p = u.shape[-1]
    if p == 0:
        raise ValueError("empty Fourier point")
    s, c = fourier_basis(p)
    return u @ s, v @ c


def point_schedule(fp: FourierPoint) -> tuple[np.ndarray, np.ndarray]:
    return to_schedule(fp.u, fp.v)
