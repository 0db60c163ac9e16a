"""Adapted volatility-selection rules (nature's controls).

A strategy chooses each step's volatility from the band using only the path
history seen so far, optionally together with its own randomness stream that
is independent of future noise.  Drivers are cheap per-run objects; engines
call either the vectorized ``theta_array`` (one call per step across all
Monte Carlo paths) or the scalar ``theta1`` (single-trajectory loops).
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .bands import VolatilityBand
from .errors import InputError, StrategyViolationError


class StrategyDriver(ABC):
    """Per-run state machine emitting volatilities within the band."""

    needs_uniforms = False

    @abstractmethod
    def theta_array(self, i: int, sums: np.ndarray, uniforms=None) -> np.ndarray:
        """Volatilities for step i+1 given partial sums of the first i increments."""

    def theta1(self, i: int, s: float, u: float | None = None) -> float:
        out = self.theta_array(i, np.array([s]), None if u is None else np.array([u]))
        return float(out[0])


class AdversaryStrategy(ABC):
    kind = "abstract"

    @abstractmethod
    def make_driver(self, band: VolatilityBand, n_steps: int) -> StrategyDriver:
        ...

    def mirror(self) -> "AdversaryStrategy":
        """Strategy whose response to a sign-flipped history mirrors this one."""
        return self

    @abstractmethod
    def descriptor(self) -> str:
        ...

    @abstractmethod
    def to_json(self) -> dict:
        ...

    def __repr__(self):
        return f"<{type(self).__name__} {self.descriptor()}>"


class _ConstantDriver(StrategyDriver):
    def __init__(self, sigma: float):
        self.sigma = sigma

    def theta_array(self, i, sums, uniforms=None):
        return np.full(np.shape(sums), self.sigma)

    def theta1(self, i, s, u=None):
        return self.sigma

    def theta_vector(self, i0: int, count: int) -> np.ndarray:
        # history-free: engines may precompute whole blocks of volatilities
        return np.full(count, self.sigma)


@dataclass(frozen=True)
class ConstantStrategy(AdversaryStrategy):
    sigma: float
    kind = "constant"

    def make_driver(self, band, n_steps):
        if not band.sigma_lo - 1e-12 <= self.sigma <= band.sigma_hi + 1e-12:
            raise StrategyViolationError(
                f"constant volatility {self.sigma} outside band "
                f"[{band.sigma_lo}, {band.sigma_hi}]"
            )
        return _ConstantDriver(float(self.sigma))

    def descriptor(self):
        return f"const:{self.sigma:g}"

    def to_json(self):
        return {"kind": "constant", "sigma": self.sigma}


class _PeriodicDriver(StrategyDriver):
    def __init__(self, schedule: np.ndarray):
        self.schedule = schedule

    def theta_array(self, i, sums, uniforms=None):
        return np.full(np.shape(sums), self.schedule[i % self.schedule.size])

    def theta1(self, i, s, u=None):
        return float(self.schedule[i % self.schedule.size])

    def theta_vector(self, i0: int, count: int) -> np.ndarray:
        idx = (i0 + np.arange(count)) % self.schedule.size
        return self.schedule[idx]


@dataclass(frozen=True)
class PeriodicStrategy(AdversaryStrategy):
    schedule: tuple
    kind = "periodic"

    def make_driver(self, band, n_steps):
        sched = np.asarray(self.schedule, dtype=float)
        if sched.size == 0:
            raise InputError("periodic schedule must be nonempty")
        if sched.min() < band.sigma_lo - 1e-12 or sched.max() > band.sigma_hi + 1e-12:
            raise StrategyViolationError("periodic schedule leaves the band")
        return _PeriodicDriver(sched)

    def descriptor(self):
        return "periodic:" + ":".join(f"{v:g}" for v in self.schedule)

    def to_json(self):
        return {"kind": "periodic", "schedule": list(self.schedule)}


class _FeedbackDriver(StrategyDriver):
    """Bang-bang on distance to a fixed sum target: far -> top, near -> bottom."""

    def __init__(self, band, target, width):
        self.lo, self.hi = band.sigma_lo, band.sigma_hi
        self.target, self.width = target, width

    def theta_array(self, i, sums, uniforms=None):
        far = np.abs(np.asarray(sums) - self.target) > self.width
        return np.where(far, self.hi, self.lo)

    def theta1(self, i, s, u=None):
        return self.hi if abs(s - self.target) > self.width else self.lo


@dataclass(frozen=True)
class FeedbackStrategy(AdversaryStrategy):
    target: float = 0.0
    width: float = 0.5
    kind = "feedback"

    def make_driver(self, band, n_steps):
        if self.width <= 0:
            raise InputError("feedback width must be positive")
        return _FeedbackDriver(band, self.target, self.width)

    def mirror(self):
        return FeedbackStrategy(target=-self.target, width=self.width)

    def descriptor(self):
        return f"feedback:{self.target:g}:{self.width:g}"

    def to_json(self):
        return {"kind": "feedback", "target": self.target, "width": self.width}


class _RandomDriver(StrategyDriver):
    """Interior-valued randomized rule, state-dependent through a squashed score."""

    needs_uniforms = True

    def __init__(self, band, a, c, d):
        self.lo, self.hi = band.sigma_lo, band.sigma_hi
        self.a, self.c, self.d = a, c, d

    def _squash(self, score):
        return self.lo + (self.hi - self.lo) / (1.0 + np.exp(-score))

    def theta_array(self, i, sums, uniforms=None):
        if uniforms is None:
            raise InputError("randomized strategy needs a uniform stream")
        score = self.a * np.asarray(sums) + self.c * (2.0 * np.asarray(uniforms) - 1.0) + self.d
        return self._squash(score)

    def theta1(self, i, s, u=None):
        if u is None:
            raise InputError("randomized strategy needs a uniform stream")
        score = self.a * s + self.c * (2.0 * u - 1.0) + self.d
        return self.lo + (self.hi - self.lo) / (1.0 + math.exp(-score))


@dataclass(frozen=True)
class RandomStrategy(AdversaryStrategy):
    """Randomized adapted strategy; ``index`` picks the instance coefficients."""

    index: int = 0
    sign: int = 1
    kind = "random"

    def _coeffs(self):
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence((0x5eed, int(self.index)))))
        a = float(rng.uniform(-3.0, 3.0)) * self.sign
        c = float(rng.uniform(0.5, 2.5))
        d = float(rng.uniform(-1.0, 1.0))
        return a, c, d

    def make_driver(self, band, n_steps):
        a, c, d = self._coeffs()
        return _RandomDriver(band, a, c, d)

    def mirror(self):
        return RandomStrategy(index=self.index, sign=-self.sign)

    def descriptor(self):
        return f"random:{self.index}"

    def to_json(self):
        return {"kind": "random", "index": self.index}


class _BlockTargetDriver(StrategyDriver):
    """Steer block-end sums toward b * sqrt(2 n log log n).

    Run at the top of the band while the remaining-time fluctuation budget
    cannot absorb the gap to the current block target, then sit at the bottom
    to hold the level.  The threshold shrinks like sqrt(remaining), so the
    tracking error at each block boundary stays around one bottom-volatility
    standard deviation.
    """

    def __init__(self, band, boundaries, targets):
        self.lo, self.hi = band.sigma_lo, band.sigma_hi
        self.boundaries = boundaries
        self.targets = targets
        self._k = 0

    def _advance(self, i):
        while self._k < len(self.boundaries) and i >= self.boundaries[self._k]:
            self._k += 1

    def theta1(self, i, s, u=None):
        self._advance(i)
        if self._k >= len(self.boundaries):
            return self.lo
        nk = self.boundaries[self._k]
        gap = self.targets[self._k] - s
        return self.hi if abs(gap) > self.lo * math.sqrt(nk - i) else self.lo

    def theta_array(self, i, sums, uniforms=None):
        self._advance(i)
        if self._k >= len(self.boundaries):
            return np.full(np.shape(sums), self.lo)
        nk = self.boundaries[self._k]
        gap = np.abs(self.targets[self._k] - np.asarray(sums))
        return np.where(gap > self.lo * math.sqrt(nk - i), self.hi, self.lo)


@dataclass(frozen=True)
class BlockTargetStrategy(AdversaryStrategy):
    """Per-block steering toward level ``b`` of the normalized statistic."""

    b: float
    rho: float = 1.5
    n_first: int = 100
    kind = "block_target"

    def make_driver(self, band, n_steps):
        if abs(self.b) >= band.sigma_lo:
            raise InputError(
                f"target |b|={abs(self.b)} must lie strictly inside "
                f"(-sigma_lo, sigma_lo) = (-{band.sigma_lo}, {band.sigma_lo})"
            )
        if self.rho <= 1.0:
            raise InputError("block growth factor must exceed 1")
        bounds = []
        nk = self.n_first
        while nk <= n_steps:
            bounds.append(nk)
            nk = int(math.ceil(nk * self.rho))
        if not bounds:
            bounds = [n_steps]
        targets = [self.b * math.sqrt(2.0 * n * math.log(math.log(n))) for n in bounds]
        return _BlockTargetDriver(band, bounds, targets)

    def mirror(self):
        return BlockTargetStrategy(b=-self.b, rho=self.rho, n_first=self.n_first)

    def descriptor(self):
        return f"block_target:{self.b:g}:{self.rho:g}"

    def to_json(self):
        return {"kind": "block_target", "b": self.b, "rho": self.rho,
                "n_first": self.n_first}


def parse_strategy(text: str) -> list[AdversaryStrategy]:
    """Parse one descriptor; ``random:K`` expands to K distinct instances."""
    parts = text.strip().split(":")
    kind, args = parts[0], parts[1:]
    try:
        if kind in ("const", "constant"):
            (sigma,) = args
            return [ConstantStrategy(float(sigma))]
        if kind == "periodic":
            if not args:
                raise InputError("periodic needs at least one volatility")
            return [PeriodicStrategy(tuple(float(a) for a in args))]
        if kind == "feedback":
            target = float(args[0]) if args else 0.0
            width = float(args[1]) if len(args) > 1 else 0.5
            return [FeedbackStrategy(target=target, width=width)]
        if kind == "random":
            count = int(args[0]) if args else 1
            if count < 1:
                raise InputError("random strategy count must be >= 1")
            return [RandomStrategy(index=i) for i in range(count)]
        if kind == "block_target":
            b = float(args[0])
            rho = float(args[1]) if len(args) > 1 else 1.5
            return [BlockTargetStrategy(b=b, rho=rho)]
    except (ValueError, IndexError) as exc:
        raise InputError(f"cannot parse strategy {text!r}") from exc
    raise InputError(f"unknown strategy kind {kind!r}")


def parse_strategies(text: str) -> list[AdversaryStrategy]:
    """Parse a comma-separated strategy list."""
    out: list[AdversaryStrategy] = []
    for item in text.split(","):
        if item.strip():
            out.extend(parse_strategy(item))
    if not out:
        raise InputError("empty strategy list")
    return out


def strategy_from_json(obj: dict) -> AdversaryStrategy:
    kind = obj.get("kind")
    if kind == "constant":
        return ConstantStrategy(obj["sigma"])
    if kind == "periodic":
        return PeriodicStrategy(tuple(obj["schedule"]))
    if kind == "feedback":
        return FeedbackStrategy(obj.get("target", 0.0), obj.get("width", 0.5))
    if kind == "random":
        return RandomStrategy(obj.get("index", 0))
    if kind == "block_target":
        return BlockTargetStrategy(obj["b"], obj.get("rho", 1.5),
                                   obj.get("n_first", 100))
    raise InputError(f"unknown strategy kind {kind!r}")
