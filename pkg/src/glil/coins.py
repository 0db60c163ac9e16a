"""Product coin models: per-coordinate probability bands with independence
built into the construction.

Each coordinate i carries a success-probability interval [p_lo[i], p_hi[i]].
Capacities of cylinder events factor across coordinates because the adversary
optimizes each coordinate separately over the interval endpoints; monotone
per-coordinate events make the endpoint choice optimal.  No 2^M atom space is
ever materialized, so horizons in the hundreds stay cheap and exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import InputError
from .sublinear import CapacityPair


class ProductCoinModel:
    """Independent biased coins with per-coordinate probability bands."""

    def __init__(self, p_lo, p_hi, horizon: int | None = None):
        p_lo = np.asarray(p_lo, dtype=float)
        p_hi = np.asarray(p_hi, dtype=float)
        if p_lo.ndim == 0 or p_hi.ndim == 0:
            if horizon is None:
                raise InputError("scalar probabilities need an explicit horizon")
            p_lo = np.broadcast_to(p_lo, (horizon,)).copy()
            p_hi = np.broadcast_to(p_hi, (horizon,)).copy()
        if p_lo.shape != p_hi.shape or p_lo.ndim != 1:
            raise InputError("p_lo and p_hi must be 1-d arrays of equal length")
        if horizon is not None and p_lo.size != horizon:
            raise InputError(f"horizon {horizon} does not match {p_lo.size} coordinates")
        if not (np.all(p_lo > 0) and np.all(p_hi < 1) and np.all(p_lo <= p_hi)):
            raise InputError("need 0 < p_lo <= p_hi < 1 per coordinate")
        p_lo.setflags(write=False)
        p_hi.setflags(write=False)
        self.p_lo = p_lo
        self.p_hi = p_hi

    @property
    def horizon(self) -> int:
        return self.p_lo.size

    def _check_coord(self, i: int) -> int:
        if not 0 <= i < self.horizon:
            raise InputError(f"coordinate {i} outside horizon {self.horizon}")
        return i

    def value_set_interval(self, i: int, values: Iterable[int]) -> tuple[float, float]:
        """(min, max) over p in [p_lo, p_hi] of P(X_i in values)."""
        self._check_coord(i)
        vals = frozenset(values)
        if not vals <= {0, 1}:
            raise InputError(f"coin values must be subsets of {{0, 1}}, got {set(vals)}")
        if vals == frozenset():
            return 0.0, 0.0
        if vals == {0, 1}:
            return 1.0, 1.0
        if vals == {1}:
            return float(self.p_lo[i]), float(self.p_hi[i])
        return 1.0 - float(self.p_hi[i]), 1.0 - float(self.p_lo[i])

    def cylinder_capacity(self, constraints: Mapping[int, Iterable[int]]) -> CapacityPair:
        """Capacity pair of the event {X_i in D_i for each constrained i}.

        The per-coordinate optimum is an interval endpoint, and independence
        of the construction turns the joint optimum into a product.
        """
        lo_prod, hi_prod = 1.0, 1.0
        for i, values in constraints.items():
            lo, hi = self.value_set_interval(i, values)
            lo_prod *= lo
            hi_prod *= hi
        return CapacityPair(v_upper=hi_prod, v_lower=lo_prod)

    def success_capacity(self, i: int) -> CapacityPair:
        """Capacity pair of the single-coordinate event {X_i = 1}."""
        lo, hi = self.value_set_interval(i, (1,))
        return CapacityPair(v_upper=hi, v_lower=lo)

    def union_of_successes(self, start: int, stop: int) -> CapacityPair:
        """Capacity pair of the union over i in [start, stop) of {X_i = 1}.

        Computed through the complement: the miss event is a cylinder, and
        duality gives v(union) = 1 - prod(1 - p_lo), V(union) = 1 - prod(1 - p_hi).
        """
        self._check_coord(start)
        if not start < stop <= self.horizon:
            raise InputError(f"need start < stop <= horizon, got [{start}, {stop})")
        sl = slice(start, stop)
        return CapacityPair(
            v_upper=1.0 - float(np.prod(1.0 - self.p_hi[sl])),
            v_lower=1.0 - float(np.prod(1.0 - self.p_lo[sl])),
        )


def dyadic_coin(horizon: int) -> ProductCoinModel:
    """Degenerate-band model with P(X_i = 1) = 2^-(i+1); success capacities sum."""
    p = 0.5 ** np.arange(1, horizon + 1)
    return ProductCoinModel(p, p)


@dataclass(frozen=True)
class IndependenceReport:
    joint: CapacityPair
    product_upper: float
    product_lower: float
    upper_ok: bool
    lower_ok: bool

    @property
    def passed(self) -> bool:
        return self.upper_ok and self.lower_ok

    def to_json(self) -> dict:
        return {
            "joint_v_upper": self.joint.v_upper,
            "joint_v_lower": self.joint.v_lower,
            "product_upper": self.product_upper,
            "product_lower": self.product_lower,
            "upper_ok": self.upper_ok,
            "lower_ok": self.lower_ok,
            "passed": self.passed,
        }


def pairwise_independence_check(coin: ProductCoinModel, i: int, j: int,
                                D: Iterable[int], G: Iterable[int],
                                tol: float = 1e-12) -> IndependenceReport:
    """Check that joint capacities of {X_i in D, X_j in G} factorize."""
    if i == j:
        raise InputError("coordinates must differ")
    joint = coin.cylinder_capacity({i: D, j: G})
    ci = coin.cylinder_capacity({i: D})
    cj = coin.cylinder_capacity({j: G})
    pu = ci.v_upper * cj.v_upper
    pl = ci.v_lower * cj.v_lower
    return IndependenceReport(
        joint=joint,
        product_upper=pu,
        product_lower=pl,
        upper_ok=bool(abs(joint.v_upper - pu) <= tol),
        lower_ok=bool(abs(joint.v_lower - pl) <= tol),
    )


@dataclass(frozen=True)
class BCConvergentReport:
    """Union capacity against the subadditive tail bound, truncated at stop."""

    start: int
    stop: int
    union_v_upper: float
    tail_bound: float            # sum of per-event upper capacities
    bound_holds: bool

    def to_json(self) -> dict:
        return {
            "start": self.start,
            "stop": self.stop,
            "union_v_upper": self.union_v_upper,
            "tail_bound": self.tail_bound,
            "bound_holds": self.bound_holds,
        }


def bc_convergent_check(coin: ProductCoinModel, start: int,
                        stop: int | None = None,
                        tol: float = 1e-12) -> BCConvergentReport:
    """First Borel-Cantelli bound on the truncated union of success events.

    Returns the upper capacity of the union over [start, stop) together with
    the subadditive bound sum(p_hi).  Across increasing ``start`` the bound is
    the tail of a fixed series, so it decreases whenever the series converges.
    """
    stop = coin.horizon if stop is None else stop
    union = coin.union_of_successes(start, stop)
    bound = float(np.sum(coin.p_hi[start:stop]))
    return BCConvergentReport(
        start=start,
        stop=stop,
        union_v_upper=union.v_upper,
        tail_bound=bound,
        bound_holds=bool(union.v_upper <= bound + tol),
    )


@dataclass(frozen=True)
class BCDivergentReport:
    """Product identity and exponential bound for the miss probability."""

    start: int
    stop: int
    union_v_lower: float
    miss_product: float          # prod(1 - p_lo) over the window
    product_residual: float      # |(1 - v(union)) - miss_product|
    exp_bound: float             # exp(-sum p_lo)
    product_identity_holds: bool
    exp_bound_holds: bool

    @property
    def passed(self) -> bool:
        return self.product_identity_holds and self.exp_bound_holds

    def to_json(self) -> dict:
        return {
            "start": self.start,
            "stop": self.stop,
            "union_v_lower": self.union_v_lower,
            "miss_product": self.miss_product,
            "product_residual": self.product_residual,
            "exp_bound": self.exp_bound,
            "product_identity_holds": self.product_identity_holds,
            "exp_bound_holds": self.exp_bound_holds,
            "passed": self.passed,
        }


def bc_divergent_check(coin: ProductCoinModel, start: int, stop: int,
                       tol: float = 1e-12) -> BCDivergentReport:
    """Second Borel-Cantelli bound on the truncated union of success events.

    Verifies 1 - v(union) = prod(1 - p_lo) <= exp(-sum p_lo); with p_lo bounded
    away from zero the product vanishes as the window grows.
    """
    union = coin.union_of_successes(start, stop)
    miss = float(np.prod(1.0 - coin.p_lo[start:stop]))
    resid = abs((1.0 - union.v_lower) - miss)
    exp_bound = math.exp(-float(np.sum(coin.p_lo[start:stop])))
    return BCDivergentReport(
        start=start,
        stop=stop,
        union_v_lower=union.v_lower,
        miss_product=miss,
        product_residual=resid,
        exp_bound=exp_bound,
        product_identity_holds=bool(resid <= tol),
        exp_bound_holds=bool(miss <= exp_bound + tol),
    )
