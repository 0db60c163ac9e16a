"""Exact maximum-minimum expectations over finite sets of priors.

A finite model is a list of atoms together with finitely many probability
vectors.  The upper expectation of a random variable is the largest
prior-weighted mean, the lower expectation the smallest; indicator variables
give the upper and lower capacity of an event.  All checks here are exact up
to floating-point roundoff, which is why the default residual tolerance is
1e-12.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError

RESIDUAL_TOL = 1e-12


@dataclass(frozen=True)
class ExpectationPair:
    """Upper and lower expectation of one random variable."""

    upper: float
    lower: float

    def __post_init__(self):
        if not (np.isfinite(self.upper) and np.isfinite(self.lower)):
            raise InputError("expectation pair must be finite")
        if self.lower > self.upper + 1e-9 * max(1.0, abs(self.upper)):
            raise InputError(f"lower {self.lower} exceeds upper {self.upper}")


@dataclass(frozen=True)
class CapacityPair:
    """Upper and lower capacity of one event; both lie in [0, 1]."""

    v_upper: float
    v_lower: float

    def __post_init__(self):
        eps = 1e-12
        if not (-eps <= self.v_lower <= self.v_upper <= 1.0 + eps):
            raise InputError(
                f"capacities must satisfy 0 <= lower <= upper <= 1, "
                f"got ({self.v_upper}, {self.v_lower})"
            )


class FinitePriorModel:
    """Finite sample space with a finite, nonempty set of priors.

    ``atoms`` are hashable labels; ``priors`` is a (n_priors, n_atoms) array
    of probability vectors (entries >= 0, rows summing to 1 within 1e-12).
    """

    def __init__(self, atoms: Sequence, priors):
        self.atoms = tuple(atoms)
        if len(self.atoms) == 0:
            raise InputError("model needs at least one atom")
        if len(set(self.atoms)) != len(self.atoms):
            raise InputError("atoms must be distinct")
        priors = np.atleast_2d(np.asarray(priors, dtype=float))
        if priors.shape[0] == 0:
            raise InputError("model needs at least one prior")
        if priors.shape[1] != len(self.atoms):
            raise InputError(
                f"priors have {priors.shape[1]} columns for {len(self.atoms)} atoms"
            )
        if not np.all(np.isfinite(priors)):
            raise InputError("priors must be finite")
        if priors.min() < -1e-15:
            raise InputError("prior entries must be nonnegative")
        sums = priors.sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > 1e-12:
            raise InputError("each prior must sum to 1 within 1e-12")
        priors = np.clip(priors, 0.0, None)
        priors.setflags(write=False)
        self.priors = priors
        self._index = {a: i for i, a in enumerate(self.atoms)}

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_priors(self) -> int:
        return self.priors.shape[0]

    def indicator(self, event: Iterable) -> np.ndarray:
        rv = np.zeros(self.n_atoms)
        for a in event:
            if a not in self._index:
                raise InputError(f"unknown atom {a!r}")
            rv[self._index[a]] = 1.0
        return rv

    def complement(self, event: Iterable) -> tuple:
        ev = set(event)
        for a in ev:
            if a not in self._index:
                raise InputError(f"unknown atom {a!r}")
        return tuple(a for a in self.atoms if a not in ev)

    def _check_rv(self, rv) -> np.ndarray:
        rv = np.asarray(rv, dtype=float)
        if rv.shape != (self.n_atoms,):
            raise InputError(f"random variable must have length {self.n_atoms}")
        if not np.all(np.isfinite(rv)):
            raise InputError("random variable must be finite-valued")
        return rv

    def to_json(self) -> dict:
        return {
            "atoms": [str(a) for a in self.atoms],
            "priors": self.priors.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FinitePriorModel":
        return cls(obj["atoms"], obj["priors"])


def upper_expectation(model: FinitePriorModel, rv) -> float:
    """Largest prior-weighted mean of ``rv``.  Ties go to the first prior."""
    rv = model._check_rv(rv)
    return float(np.max(model.priors @ rv))


def lower_expectation(model: FinitePriorModel, rv) -> float:
    """Smallest prior-weighted mean; equals -upper_expectation(-rv) exactly."""
    return -upper_expectation(model, -np.asarray(rv, dtype=float))


def attaining_prior(model: FinitePriorModel, rv) -> int:
    """Index of the first prior attaining the upper expectation."""
    rv = model._check_rv(rv)
    return int(np.argmax(model.priors @ rv))


def expectation_pair(model: FinitePriorModel, rv) -> ExpectationPair:
    return ExpectationPair(upper=upper_expectation(model, rv),
                           lower=lower_expectation(model, rv))


def capacity_pair(model: FinitePriorModel, event: Iterable) -> CapacityPair:
    ind = model.indicator(event)
    return CapacityPair(v_upper=upper_expectation(model, ind),
                        v_lower=lower_expectation(model, ind))


@dataclass
class AxiomReport:
    """Residuals and verdicts for the four sublinearity axioms."""

    monotone_pairs: list = field(default_factory=list)   # (i, j, ok)
    constant_checks: list = field(default_factory=list)  # (c, residual, ok)
    subadditive_pairs: list = field(default_factory=list)  # (i, j, residual, ok)
    homogeneity_checks: list = field(default_factory=list)  # (i, lam, residual, ok)
    max_residual: float = 0.0

    @property
    def passed(self) -> bool:
        return (all(ok for *_, ok in self.monotone_pairs)
                and all(ok for *_, ok in self.constant_checks)
                and all(ok for *_, ok in self.subadditive_pairs)
                and all(ok for *_, ok in self.homogeneity_checks))

    def to_json(self) -> dict:
        return {
            "monotone_pairs": [list(t) for t in self.monotone_pairs],
            "constant_checks": [list(t) for t in self.constant_checks],
            "subadditive_pairs": [list(t) for t in self.subadditive_pairs],
            "homogeneity_checks": [list(t) for t in self.homogeneity_checks],
            "max_residual": self.max_residual,
            "passed": self.passed,
        }


def verify_sublinear_axioms(model: FinitePriorModel, rvs: Sequence,
                            lambdas: Sequence[float] = (0.0, 0.5, 1.0, 2.0, 3.5),
                            tol: float = RESIDUAL_TOL) -> AxiomReport:
    """Check monotonicity, constants, subadditivity and positive homogeneity.

    Monotonicity is checked on every pointwise-comparable pair in ``rvs``,
    subadditivity on every pair, homogeneity for each sampled lambda >= 0.
    """
    rvs = [model._check_rv(rv) for rv in rvs]
    if len(rvs) < 2:
        raise InputError("need at least two random variables")
    report = AxiomReport()
    ups = [upper_expectation(model, rv) for rv in rvs]
    scale = max(1.0, max(abs(u) for u in ups))

    for i, x in enumerate(rvs):
        for j, y in enumerate(rvs):
            if i == j:
                continue
            if np.all(x >= y):
                ok = ups[i] >= ups[j] - tol * scale
                report.monotone_pairs.append((i, j, bool(ok)))
                report.max_residual = max(report.max_residual, max(0.0, ups[j] - ups[i]))

    for c in (0.0, 1.0, -1.0, 3.25):
        val = upper_expectation(model, np.full(model.n_atoms, c))
        resid = abs(val - c)
        report.constant_checks.append((c, resid, bool(resid <= tol)))
        report.max_residual = max(report.max_residual, resid)

    for i in range(len(rvs)):
        for j in range(i + 1, len(rvs)):
            both = upper_expectation(model, rvs[i] + rvs[j])
            resid = max(0.0, both - (ups[i] + ups[j]))
            report.subadditive_pairs.append((i, j, resid, bool(resid <= tol * scale)))
            report.max_residual = max(report.max_residual, resid)

    for i, rv in enumerate(rvs):
        for lam in lambdas:
            if lam < 0:
                raise InputError("homogeneity is only required for lambda >= 0")
            resid = abs(upper_expectation(model, lam * rv) - lam * ups[i])
            ok = resid <= tol * scale * max(1.0, lam)
            report.homogeneity_checks.append((i, lam, resid, bool(ok)))
            report.max_residual = max(report.max_residual, resid)
    return report


@dataclass(frozen=True)
class DualityReport:
    residual: float
    passed: bool

    def to_json(self) -> dict:
        return {"residual": self.residual, "passed": self.passed}


def verify_duality(model: FinitePriorModel, event: Iterable,
                   tol: float = RESIDUAL_TOL) -> DualityReport:
    """Check v_upper(A) + v_lower(complement of A) = 1."""
    event = tuple(event)
    upper = capacity_pair(model, event).v_upper
    lower_c = capacity_pair(model, model.complement(event)).v_lower
    resid = abs(upper + lower_c - 1.0)
    return DualityReport(residual=resid, passed=bool(resid <= tol))


@dataclass
class ContinuityReport:
    direction: str                    # "increasing" or "decreasing"
    v_upper_values: list
    v_lower_values: list
    monotone: bool
    limit_matches: bool

    @property
    def passed(self) -> bool:
        return self.monotone and self.limit_matches

    def to_json(self) -> dict:
        return {
            "direction": self.direction,
            "v_upper_values": self.v_upper_values,
            "v_lower_values": self.v_lower_values,
            "monotone": self.monotone,
            "limit_matches": self.limit_matches,
            "passed": self.passed,
        }


def verify_continuity(model: FinitePriorModel, chain: Sequence[Iterable],
                      tol: float = RESIDUAL_TOL) -> ContinuityReport:
    """Check capacity convergence along a monotone chain of events.

    Finite chains stabilize exactly: the last value must equal the capacity of
    the union (increasing) or intersection (decreasing), and the value
    sequences must be monotone for both capacities.
    """
    sets = [frozenset(ev) for ev in chain]
    if len(sets) < 2:
        raise InputError("chain needs at least two events")
    increasing = all(a <= b for a, b in zip(sets, sets[1:]))
    decreasing = all(a >= b for a, b in zip(sets, sets[1:]))
    if not (increasing or decreasing):
        raise InputError("event chain must be monotone")
    direction = "increasing" if increasing else "decreasing"

    pairs = [capacity_pair(model, ev) for ev in sets]
    uppers = [p.v_upper for p in pairs]
    lowers = [p.v_lower for p in pairs]
    if increasing:
        monotone = all(b >= a - tol for a, b in zip(uppers, uppers[1:])) and \
            all(b >= a - tol for a, b in zip(lowers, lowers[1:]))
        limit = frozenset().union(*sets)
    else:
        monotone = all(b <= a + tol for a, b in zip(uppers, uppers[1:])) and \
            all(b <= a + tol for a, b in zip(lowers, lowers[1:]))
        limit = frozenset.intersection(*sets)
    limit_pair = capacity_pair(model, limit)
    limit_matches = (abs(uppers[-1] - limit_pair.v_upper) <= tol
                     and abs(lowers[-1] - limit_pair.v_lower) <= tol)
    return ContinuityReport(direction, uppers, lowers, bool(monotone), bool(limit_matches))


def random_model(rng: np.random.Generator, n_atoms: int = 6,
                 n_priors: int = 4) -> FinitePriorModel:
    """Random finite model (Dirichlet rows) for property sweeps."""
    priors = rng.dirichlet(np.ones(n_atoms), size=n_priors)
    priors /= priors.sum(axis=1, keepdims=True)
    return FinitePriorModel([f"a{i}" for i in range(n_atoms)], priors)


def random_event(rng: np.random.Generator, model: FinitePriorModel) -> tuple:
    mask = rng.integers(0, 2, size=model.n_atoms).astype(bool)
    return tuple(a for a, m in zip(model.atoms, mask) if m)
