"""Grid-sampled test functions shared by the PDE, dynamic-programming and
Monte Carlo engines.

A payoff is a bounded function given by samples on a strictly increasing grid,
evaluated by piecewise-linear interpolation and extended as a constant beyond
the grid (clamping).  Clamping keeps every payoff bounded and Lipschitz, which
is the regularity all three engines assume; factories for growing functions
such as the square report their clamp level so callers can bound the error.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

DEFAULT_HALF_WIDTH = 12.0
DEFAULT_POINTS = 1601


@dataclass(frozen=True)
class PayoffSpec:
    """Piecewise-linear payoff sampled on a grid, clamped outside it."""

    x: np.ndarray
    y: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or y.ndim != 1 or x.size != y.size:
            raise InputError("payoff grid and values must be 1-d arrays of equal length")
        if x.size < 2:
            raise InputError("payoff needs at least two grid points")
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
            raise InputError("payoff grid and values must be finite")
        if not np.all(np.diff(x) > 0):
            raise InputError("payoff grid must be strictly increasing")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __call__(self, q):
        return np.interp(q, self.x, self.y)

    @property
    def bounds(self) -> tuple[float, float]:
        return float(self.y.min()), float(self.y.max())

    @property
    def lipschitz_bound(self) -> float:
        return float(np.max(np.abs(np.diff(self.y) / np.diff(self.x))))

    def is_even(self, tol: float = 1e-12) -> bool:
        q = self.x
        return bool(np.max(np.abs(self(q) - self(-q))) <= tol * max(1.0, self._scale()))

    def is_nonnegative(self, tol: float = 1e-12) -> bool:
        return bool(self.y.min() >= -tol)

    def is_convex_on(self, lo: float, hi: float, tol: float = 1e-9) -> bool:
        """Convexity of the interpolant on [lo, hi] via slope monotonicity."""
        m = (self.x >= lo) & (self.x <= hi)
        if m.sum() < 3:
            return True
        xs, ys = self.x[m], self.y[m]
        slopes = np.diff(ys) / np.diff(xs)
        return bool(np.min(np.diff(slopes)) >= -tol * max(1.0, self._scale()))

    def _scale(self) -> float:
        return float(np.max(np.abs(self.y))) or 1.0

    def negated(self) -> "PayoffSpec":
        return PayoffSpec(self.x, -self.y, name=f"neg({self.name})")

    def scaled(self, lam: float) -> "PayoffSpec":
        if lam < 0:
            raise InputError("scaling factor must be nonnegative")
        return PayoffSpec(self.x, lam * self.y, name=f"{lam}*{self.name}")

    def shifted(self, b: float) -> "PayoffSpec":
        """Payoff q -> phi(q - b), realized by translating the grid."""
        return PayoffSpec(self.x + b, self.y, name=f"{self.name}(.-{b})")


def square_payoff(half_width: float = DEFAULT_HALF_WIDTH, n_points: int = DEFAULT_POINTS) -> PayoffSpec:
    x = np.linspace(-half_width, half_width, n_points)
    return PayoffSpec(x, x * x, name="square")


def abs_payoff(half_width: float = DEFAULT_HALF_WIDTH, n_points: int = DEFAULT_POINTS) -> PayoffSpec:
    x = np.linspace(-half_width, half_width, n_points)
    return PayoffSpec(x, np.abs(x), name="abs")


def relu_payoff(half_width: float = DEFAULT_HALF_WIDTH, n_points: int = DEFAULT_POINTS) -> PayoffSpec:
    x = np.linspace(-half_width, half_width, n_points)
    return PayoffSpec(x, np.maximum(x, 0.0), name="relu")


def linear_payoff(half_width: float = DEFAULT_HALF_WIDTH, n_points: int = DEFAULT_POINTS) -> PayoffSpec:
    x = np.linspace(-half_width, half_width, n_points)
    return PayoffSpec(x, x.copy(), name="linear")


def constant_payoff(c: float, half_width: float = DEFAULT_HALF_WIDTH) -> PayoffSpec:
    x = np.array([-half_width, half_width])
    return PayoffSpec(x, np.full(2, float(c)), name=f"const({c})")


def indicator_smooth(a: float, b: float, delta: float,
                     half_width: float = DEFAULT_HALF_WIDTH,
                     n_points: int = DEFAULT_POINTS) -> PayoffSpec:
    """Trapezoidal indicator of [a, b]: 1 inside, linear ramps of width delta."""
    if not (a < b and delta > 0):
        raise InputError("indicator_smooth needs a < b and delta > 0")
    base = np.linspace(-half_width, half_width, n_points)
    knots = np.array([a - delta, a, b, b + delta])
    x = np.union1d(base, knots[(knots > -half_width) & (knots < half_width)])
    y = np.clip(np.minimum((x - (a - delta)) / delta, ((b + delta) - x) / delta), 0.0, 1.0)
    return PayoffSpec(x, y, name=f"indicator_smooth({a},{b},{delta})")


def lemma7_phi(epsilon: float, t: float, n_points: int = 2001) -> PayoffSpec:
    """Even exponential-taper bump supported on [-epsilon*t/2, epsilon*t/2].

    phi(q) = 1 - exp(|q| - epsilon*t/2) on the support and 0 outside, so
    phi(0) = 1 - exp(-epsilon*t/2) and phi vanishes at the support edges.
    The grid is symmetric, hence evenness holds exactly on grid points.
    """
    if not (epsilon > 0 and t > 0):
        raise InputError("lemma7_phi needs epsilon > 0 and t > 0")
    s = 0.5 * epsilon * t
    half = n_points // 2
    x = s * np.arange(-half, half + 1) / half
    y = 1.0 - np.exp(np.abs(x) - s)
    y[0] = 0.0
    y[-1] = 0.0
    return PayoffSpec(x, y, name=f"lemma7_phi({epsilon},{t})")


_CALL_RE = re.compile(r"^([a-zA-Z_][a-zA-Z_0-9]*)\s*(?:\(([^)]*)\))?$")


def payoff_by_name(spec: str, half_width: float = DEFAULT_HALF_WIDTH) -> PayoffSpec:
    """Build a named payoff.

    Accepted forms: "square", "abs", "relu", "linear",
    "indicator_smooth(a,b,delta)", "lemma7_phi(eps,t)".
    """
    m = _CALL_RE.match(spec.strip())
    if m is None:
        raise InputError(f"cannot parse payoff name {spec!r}")
    name, argstr = m.group(1), m.group(2)
    args = [float(a) for a in argstr.split(",")] if argstr else []
    try:
        if name == "square":
            return square_payoff(half_width)
        if name == "abs":
            return abs_payoff(half_width)
        if name == "relu":
            return relu_payoff(half_width)
        if name == "linear":
            return linear_payoff(half_width)
        if name == "indicator_smooth":
            a, b, delta = args
            return indicator_smooth(a, b, delta, half_width)
        if name == "lemma7_phi":
            eps, t = args
            return lemma7_phi(eps, t)
    except ValueError as exc:
        raise InputError(f"bad arguments for payoff {name!r}: {argstr!r}") from exc
    raise InputError(f"unknown payoff {name!r}")


def load_payoff(path) -> PayoffSpec:
    """Read a payoff from two-column numeric text (x, value)."""
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] < 2:
        raise InputError(f"{path}: expected two numeric columns")
    order = np.argsort(data[:, 0])
    return PayoffSpec(data[order, 0], data[order, 1], name=str(path))


def dump_values(path, x: np.ndarray, values: np.ndarray) -> None:
    """Write (x, value) rows as two-column text."""
    np.savetxt(path, np.column_stack([x, values]), fmt="%.17g")
