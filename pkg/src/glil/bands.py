"""Volatility uncertainty bands and the associated two-regime diffusion function."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class VolatilityBand:
    """Uncertainty interval [sigma_lo, sigma_hi] for the per-step volatility.

    Requires 0 < sigma_lo <= sigma_hi < inf.
    """

    sigma_lo: float
    sigma_hi: float

    def __post_init__(self):
        lo, hi = self.sigma_lo, self.sigma_hi
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise InputError(f"band endpoints must be finite, got ({lo}, {hi})")
        if not 0.0 < lo <= hi:
            raise InputError(
                f"band must satisfy 0 < sigma_lo <= sigma_hi, got ({lo}, {hi})"
            )

    @property
    def is_degenerate(self) -> bool:
        return self.sigma_lo == self.sigma_hi

    @property
    def var_lo(self) -> float:
        return self.sigma_lo * self.sigma_lo

    @property
    def var_hi(self) -> float:
        return self.sigma_hi * self.sigma_hi


def g_eval(band: VolatilityBand, x):
    """Two-regime diffusion coefficient map.

    g(x) = (sigma_hi^2 * max(x, 0) - sigma_lo^2 * max(-x, 0)) / 2.

    Monotone nondecreasing, positively homogeneous, g(0) = 0.  Accepts scalars
    or arrays.
    """
    x = np.asarray(x, dtype=float)
    out = 0.5 * (band.var_hi * np.maximum(x, 0.0) - band.var_lo * np.maximum(-x, 0.0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GFunction:
    """Callable wrapper around :func:`g_eval` for a fixed band."""

    band: VolatilityBand

    def __call__(self, x):
        return g_eval(self.band, x)
