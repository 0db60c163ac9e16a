"""Discrete-time adversarial control: backward recursion over a band-valued
volatility choice, and forward Monte Carlo under explicit strategies.

The backward recursion uses two-point increments (+-theta*sqrt(dt)) and the
per-step choice set {sigma_lo, sigma_hi}: the one-step value is an affine
function of theta^2 through the symmetric two-point average, so an endpoint
always attains the extremum and the bang-bang reduction is exact at the
lattice level.  Monte Carlo follows the continuous picture instead, with
standard normal increments, which is what the sandwich checks compare.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .bands import VolatilityBand
from .errors import ConfigError, InputError, StrategyViolationError
from .gheat import SpaceTimeGrid, default_grid, solve_gheat
from .payoffs import PayoffSpec
from .strategies import AdversaryStrategy
from .sublinear import ExpectationPair

BOUNDARY_WEIGHT_LIMIT = 1e-6
DP_TOLERANCE = 2e-2   # pinned discretization slack for n = 200 cross-checks


@dataclass(frozen=True)
class ControlLattice:
    """Spatial interpolation lattice for the backward recursion."""

    half_width: float
    n_cells: int
    t_end: float = 1.0

    def __post_init__(self):
        if self.half_width <= 0 or self.t_end <= 0:
            raise ConfigError("lattice half-width and t_end must be positive")
        if self.n_cells < 2 or self.n_cells % 2:
            raise ConfigError("n_cells must be a positive even number")

    @property
    def x(self) -> np.ndarray:
        dx = 2.0 * self.half_width / self.n_cells
        half = self.n_cells // 2
        return dx * np.arange(-half, half + 1)

    @property
    def origin_index(self) -> int:
        return self.n_cells // 2

    def validate(self, band: VolatilityBand) -> None:
        # Azuma bound on the chance any partial sum leaves the lattice.
        weight = 2.0 * math.exp(-self.half_width ** 2 / (2.0 * band.var_hi * self.t_end))
        if weight > BOUNDARY_WEIGHT_LIMIT:
            raise ConfigError(
                f"lattice too narrow: boundary weight bound {weight:.3g} exceeds "
                f"{BOUNDARY_WEIGHT_LIMIT:g}"
            )


def default_lattice(band: VolatilityBand, t_end: float = 1.0,
                    n_cells: int = 1600, width_sigmas: float = 8.0) -> ControlLattice:
    return ControlLattice(half_width=width_sigmas * band.sigma_hi * math.sqrt(t_end),
                          n_cells=n_cells, t_end=t_end)


def dp_upper_value(payoff: PayoffSpec, band: VolatilityBand, n_steps: int,
                   lattice: ControlLattice | None = None) -> float:
    """Value of the maximizing adversary after ``n_steps`` two-point moves.

    Backward recursion with linear interpolation between lattice nodes;
    the result lies within the payoff bounds and is nondecreasing in the
    top of the band.
    """
    if n_steps < 1:
        raise InputError("n_steps must be >= 1")
    if lattice is None:
        lattice = default_lattice(band)
    lattice.validate(band)
    x = lattice.x
    dt = lattice.t_end / n_steps
    h_lo = band.sigma_lo * math.sqrt(dt)
    h_hi = band.sigma_hi * math.sqrt(dt)
    v = np.asarray(payoff(x), dtype=float)
    for _ in range(n_steps):
        avg_lo = 0.5 * (np.interp(x + h_lo, x, v) + np.interp(x - h_lo, x, v))
        if band.is_degenerate:
            v = avg_lo
            continue
        avg_hi = 0.5 * (np.interp(x + h_hi, x, v) + np.interp(x - h_hi, x, v))
        v = np.maximum(avg_lo, avg_hi)
    return float(v[lattice.origin_index])


def dp_lower_value(payoff: PayoffSpec, band: VolatilityBand, n_steps: int,
                   lattice: ControlLattice | None = None) -> float:
    """Minimizing adversary's value; equals -dp_upper_value(-payoff) exactly."""
    return -dp_upper_value(payoff.negated(), band, n_steps, lattice)


def dp_pair(payoff: PayoffSpec, band: VolatilityBand, n_steps: int,
            lattice: ControlLattice | None = None) -> ExpectationPair:
    return ExpectationPair(upper=dp_upper_value(payoff, band, n_steps, lattice),
                           lower=dp_lower_value(payoff, band, n_steps, lattice))


def dp_error_estimate(payoff: PayoffSpec, band: VolatilityBand, n_steps: int,
                      lattice: ControlLattice | None = None) -> float:
    """Step-halving surrogate for the discretization error of the upper value."""
    if n_steps < 2:
        return 0.0
    full = dp_upper_value(payoff, band, n_steps, lattice)
    half = dp_upper_value(payoff, band, n_steps // 2, lattice)
    return abs(full - half)


@dataclass(frozen=True)
class StrategyValue:
    """Monte Carlo estimate of one feasible strategy's expectation."""

    estimate: float
    std_error: float
    paths: int
    seed: int

    def to_json(self) -> dict:
        return {"estimate": self.estimate, "std_error": self.std_error,
                "paths": self.paths, "seed": self.seed}


def _path_matrix(master_seed: int, path_ids: Sequence[int], steps: int,
                 stream: int, standard_normal: bool) -> np.ndarray:
    """Per-path noise rows; row p depends only on (master_seed, p, stream)."""
    out = np.empty((len(path_ids), steps))
    for row, p in enumerate(path_ids):
        gen = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence((int(master_seed), int(p), stream))))
        out[row] = gen.standard_normal(steps) if standard_normal else gen.random(steps)
    return out


def thread_count() -> int:
    """Worker cap from GLIL_THREADS; affects speed only, never results."""
    raw = os.environ.get("GLIL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def mc_strategy_value(payoff: PayoffSpec, band: VolatilityBand,
                      strategy: AdversaryStrategy, n_steps: int, paths: int,
                      seed: int, t_end: float = 1.0) -> StrategyValue:
    """Simulate X_i = theta_i * sqrt(dt) * zeta_i with standard normal zeta.

    theta_i comes from the strategy given only the partial sums so far
    (adaptedness); any emitted value outside the band raises.  Path p's noise
    is a pure function of (seed, p), so the result is independent of chunking
    and worker count.
    """
    if n_steps < 1 or paths < 1:
        raise InputError("n_steps and paths must be positive")
    dt = t_end / n_steps
    sq = math.sqrt(dt)
    lo, hi = band.sigma_lo - 1e-12, band.sigma_hi + 1e-12
    values = np.empty(paths)

    def run_chunk(start: int, stop: int) -> None:
        ids = range(start, stop)
        z = _path_matrix(seed, ids, n_steps, stream=0, standard_normal=True)
        driver = strategy.make_driver(band, n_steps)
        u = (_path_matrix(seed, ids, n_steps, stream=1, standard_normal=False)
             if driver.needs_uniforms else None)
        s = np.zeros(stop - start)
        for i in range(n_steps):
            th = np.asarray(driver.theta_array(
                i, s, None if u is None else u[:, i]), dtype=float)
            if th.min() < lo or th.max() > hi:
                raise StrategyViolationError(
                    f"strategy {strategy.descriptor()} left the band at step {i}")
            s = s + th * sq * z[:, i]
        values[start:stop] = payoff(s)

    chunk = 2048
    spans = [(a, min(a + chunk, paths)) for a in range(0, paths, chunk)]
    workers = min(thread_count(), len(spans))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda ab: run_chunk(*ab), spans))
    else:
        for a, b in spans:
            run_chunk(a, b)

    est = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(paths)) if paths > 1 else 0.0
    return StrategyValue(estimate=est, std_error=se, paths=paths, seed=seed)


@dataclass
class SandwichRow:
    strategy: str
    value: StrategyValue
    lower_bound: float
    upper_bound: float
    inside: bool

    def to_json(self) -> dict:
        return {"strategy": self.strategy, **self.value.to_json(),
                "lower_bound": self.lower_bound, "upper_bound": self.upper_bound,
                "inside": self.inside}


@dataclass
class SandwichReport:
    payoff: str
    dp_lower: float
    dp_upper: float
    rows: list

    @property
    def passed(self) -> bool:
        return all(r.inside for r in self.rows)

    def to_json(self) -> dict:
        return {"payoff": self.payoff, "dp_lower": self.dp_lower,
                "dp_upper": self.dp_upper, "passed": self.passed,
                "rows": [r.to_json() for r in self.rows]}


def sandwich_check(payoff: PayoffSpec, band: VolatilityBand,
                   strategies: Sequence[AdversaryStrategy], n_steps: int,
                   paths: int, seed: int, slack: float = DP_TOLERANCE,
                   lattice: ControlLattice | None = None) -> SandwichReport:
    """Every feasible strategy's Monte Carlo value must lie between the
    backward-recursion bounds, within 3 standard errors plus ``slack``."""
    pair = dp_pair(payoff, band, n_steps, lattice)
    rows = []
    for strat in strategies:
        val = mc_strategy_value(payoff, band, strat, n_steps, paths, seed)
        lo = pair.lower - 3.0 * val.std_error - slack
        hi = pair.upper + 3.0 * val.std_error + slack
        rows.append(SandwichRow(strategy=strat.descriptor(), value=val,
                                lower_bound=lo, upper_bound=hi,
                                inside=bool(lo <= val.estimate <= hi)))
    return SandwichReport(payoff=payoff.name, dp_lower=pair.lower,
                          dp_upper=pair.upper, rows=rows)


@dataclass(frozen=True)
class ShiftReport:
    """One shifted-payoff inequality check for the minimizing value."""

    b: float
    lhs: float          # exp(-b^2 / (2 sigma_lo^2)) * lower value of payoff
    rhs: float          # lower value of the payoff shifted by b
    tolerance: float
    passed: bool

    def to_json(self) -> dict:
        return {"b": self.b, "lhs": self.lhs, "rhs": self.rhs,
                "tolerance": self.tolerance, "passed": self.passed}


def shift_inequality_check(payoff: PayoffSpec, b: float, band: VolatilityBand,
                           n_steps: int = 200,
                           lattice: ControlLattice | None = None,
                           tolerance: float | None = None) -> ShiftReport:
    """Check exp(-b^2/(2 sigma_lo^2)) * E_low[phi] <= E_low[phi(. - b)].

    The payoff must be even and nonnegative.  The default tolerance is twice a
    step-halving estimate of the discretization error of each side.
    """
    if not math.isfinite(b):
        raise InputError("shift b must be finite")
    if not payoff.is_even(tol=1e-9):
        raise InputError(f"payoff {payoff.name!r} is not even on its grid")
    if not payoff.is_nonnegative(tol=1e-12):
        raise InputError(f"payoff {payoff.name!r} is not nonnegative")
    if lattice is None:
        lattice = default_lattice(band)
    base = dp_lower_value(payoff, band, n_steps, lattice)
    shifted = payoff.shifted(b)
    rhs = dp_lower_value(shifted, band, n_steps, lattice)
    if tolerance is None:
        est = max(
            dp_error_estimate(payoff.negated(), band, n_steps, lattice),
            dp_error_estimate(shifted.negated(), band, n_steps, lattice),
            1e-6,
        )
        tolerance = 2.0 * est
    lhs = math.exp(-b * b / (2.0 * band.var_lo)) * base
    return ShiftReport(b=b, lhs=lhs, rhs=rhs, tolerance=tolerance,
                       passed=bool(lhs <= rhs + tolerance))


@dataclass
class CLTRow:
    n: int
    dp_upper: float
    pde_value: float
    gap: float

    def to_json(self) -> dict:
        return {"n": self.n, "dp_upper": self.dp_upper,
                "pde_value": self.pde_value, "gap": self.gap}


@dataclass
class CLTTable:
    """Discrete values against the PDE limit across step counts."""

    payoff: str
    rows: list
    noise: float

    def gaps_weakly_decreasing(self, from_n: int = 20) -> bool:
        gaps = [r.gap for r in self.rows if r.n >= from_n]
        return all(b <= a + self.noise for a, b in zip(gaps, gaps[1:]))

    @property
    def final_gap(self) -> float:
        return self.rows[-1].gap

    def to_csv(self) -> str:
        lines = ["n,dp_upper,pde_value,gap"]
        for r in self.rows:
            lines.append(f"{r.n},{r.dp_upper:.17g},{r.pde_value:.17g},{r.gap:.17g}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {"payoff": self.payoff, "noise": self.noise,
                "rows": [r.to_json() for r in self.rows],
                "gaps_weakly_decreasing": self.gaps_weakly_decreasing(),
                "final_gap": self.final_gap}


def clt_convergence(payoff: PayoffSpec, band: VolatilityBand,
                    n_list: Sequence[int],
                    lattice: ControlLattice | None = None,
                    grid: SpaceTimeGrid | None = None,
                    noise: float = 5e-3) -> CLTTable:
    """Tabulate |dp_upper(n) - pde_value| for increasing step counts.

    Each recursion step carries one zero-mean summand whose conditional
    variance the adversary picks inside the band, so growing ``n`` traces the
    normalized-sum convergence toward the PDE value.
    """
    n_list = list(n_list)
    if n_list != sorted(n_list) or len(set(n_list)) != len(n_list):
        raise InputError("n_list must be strictly increasing")
    if grid is None:
        grid = default_grid(band)
    pde = solve_gheat(payoff, band, grid).at_origin
    rows = []
    for n in n_list:
        dp = dp_upper_value(payoff, band, n, lattice)
        rows.append(CLTRow(n=n, dp_upper=dp, pde_value=pde, gap=abs(dp - pde)))
    return CLTTable(payoff=payoff.name, rows=rows, noise=noise)
