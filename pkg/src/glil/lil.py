"""Long-horizon trajectory experiments for the normalized-sum statistic
S_n / sqrt(2 n log log n) under band-valued adversarial volatility.

Increments are X_i = theta_i * zeta_i with fair Rademacher zeta, so paths are
bounded by the top of the band exactly and the one-step conditional variance
is theta_i^2 inside the band.  Almost-sure statements are replaced by
finite-horizon surrogates: sup/inf of the statistic over the tail window
[N^(7/8), N] and visit histograms over [sqrt(N), N].
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.stats import norm

from .bands import VolatilityBand
from .control import thread_count
from .errors import InputError, StrategyViolationError
from .strategies import AdversaryStrategy, BlockTargetStrategy, ConstantStrategy

CHECKPOINT_RATIO = 1.01
HISTOGRAM_BIN_WIDTH = 0.05
_CHUNK = 1 << 16


def lil_statistic(s: float, n: int) -> float:
    """S / sqrt(2 n log log n), defined for n >= 3 (natural logs)."""
    if n < 3:
        raise InputError(f"statistic needs n >= 3, got {n}")
    return s / math.sqrt(2.0 * n * math.log(math.log(n)))


def checkpoint_indices(N: int, ratio: float = CHECKPOINT_RATIO,
                       extra: Sequence[int] = ()) -> np.ndarray:
    """Geometric checkpoint thinning from 3 to N, plus requested indices."""
    if N < 3:
        raise InputError(f"horizon must be >= 3, got {N}")
    cps = []
    c = 3.0
    while c <= N:
        cps.append(int(c))
        c = max(c * ratio, c + 1.0)
    cps.append(N)
    for e in extra:
        if 1 <= e <= N:
            cps.append(int(e))
    return np.unique(np.asarray(cps, dtype=np.int64))


@dataclass(frozen=True)
class BlockSchedule:
    """Strictly increasing block boundaries for increment experiments."""

    boundaries: np.ndarray
    rule: str = "custom"

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=np.int64)
        if b.ndim != 1 or b.size < 2:
            raise InputError("schedule needs at least two boundaries")
        if b[0] < 1 or np.any(np.diff(b) <= 0):
            raise InputError("boundaries must be positive and strictly increasing")
        b.setflags(write=False)
        object.__setattr__(self, "boundaries", b)

    def trimmed(self, N: int) -> "BlockSchedule":
        keep = self.boundaries[self.boundaries <= N]
        if keep.size < self.boundaries.size:
            warnings.warn(
                f"schedule exceeds horizon {N}; trimmed to {keep.size} boundaries",
                stacklevel=2,
            )
        if keep.size < 2:
            raise InputError("fewer than two boundaries fit the horizon")
        return BlockSchedule(keep, rule=self.rule)

    def shrink_ratios(self) -> np.ndarray:
        """n_(k-1) / n_k, the quantity that must vanish for block separation."""
        b = self.boundaries.astype(float)
        return b[:-1] / b[1:]

    @staticmethod
    def k_pow_k(max_k: int = 8) -> "BlockSchedule":
        # k=1 gives boundary 1; statistics are only evaluated from n >= 3.
        if not 2 <= max_k <= 15:
            raise InputError("k_pow_k supports 2 <= max_k <= 15")
        return BlockSchedule(np.array([k ** k for k in range(1, max_k + 1)],
                                      dtype=np.int64), rule="k_pow_k")

    @staticmethod
    def exp_alpha(alpha: float, N: int) -> "BlockSchedule":
        if not 0.0 < alpha < 1.0:
            raise InputError("alpha must lie in (0, 1)")
        vals, k = [], 1
        while True:
            nk = int(math.ceil(math.exp(k ** alpha)))
            if nk > N:
                break
            vals.append(nk)
            k += 1
        return BlockSchedule(np.unique(np.array(vals, dtype=np.int64)),
                             rule=f"exp_alpha({alpha})")

    @staticmethod
    def geometric(rho: float, N: int, n_first: int = 100) -> "BlockSchedule":
        if rho <= 1.0:
            raise InputError("geometric growth needs rho > 1")
        vals, nk = [], n_first
        while nk <= N:
            vals.append(nk)
            nk = int(math.ceil(nk * rho))
        return BlockSchedule(np.array(vals, dtype=np.int64), rule=f"geometric({rho})")


@dataclass(frozen=True)
class LILTrajectory:
    """Partial sums and normalized statistics at checkpoint indices."""

    N: int
    checkpoints: np.ndarray
    S: np.ndarray
    R: np.ndarray
    strategy: str
    seed: int
    antithetic: bool
    band: VolatilityBand

    def to_csv(self) -> str:
        lines = ["n,S_n,R_n"]
        for n, s, r in zip(self.checkpoints, self.S, self.R):
            lines.append(f"{n},{s:.17g},{r:.17g}")
        return "\n".join(lines) + "\n"


def _rademacher_chunks(seed: int, antithetic: bool):
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence((int(seed), 0))))
    sign = -1.0 if antithetic else 1.0
    while True:
        yield sign * (2.0 * gen.integers(0, 2, size=_CHUNK) - 1.0)


def _strategy_uniform_chunks(seed: int):
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence((int(seed), 1))))
    while True:
        yield gen.random(_CHUNK)


def sample_trajectory(strategy: AdversaryStrategy, band: VolatilityBand, N: int,
                      seed: int, checkpoints: np.ndarray | None = None,
                      antithetic: bool = False) -> LILTrajectory:
    """Generate one adapted trajectory and record it at checkpoints.

    Noise is drawn in fixed-size chunks from a stream determined by the seed
    alone, so identical inputs reproduce identical trajectories bit for bit;
    ``antithetic`` flips every Rademacher sign.  History-free strategies run
    vectorized, state-dependent ones through a scalar loop.
    """
    if N < 3:
        raise InputError(f"horizon must be >= 3, got {N}")
    cps = checkpoint_indices(N) if checkpoints is None else \
        np.unique(np.asarray(checkpoints, dtype=np.int64))
    if cps[0] < 1 or cps[-1] > N:
        raise InputError("checkpoints must lie in [1, N]")
    driver = strategy.make_driver(band, N)
    noise = _rademacher_chunks(seed, antithetic)

    s_at = np.empty(cps.size)
    lo, hi = band.sigma_lo - 1e-12, band.sigma_hi + 1e-12

    if hasattr(driver, "theta_vector"):
        s = 0.0
        done = 0
        next_cp = 0
        while done < N:
            take = min(_CHUNK, N - done)
            zeta = next(noise)[:take]
            th = driver.theta_vector(done, take)
            partial = s + np.cumsum(th * zeta)
            while next_cp < cps.size and cps[next_cp] <= done + take:
                s_at[next_cp] = partial[cps[next_cp] - done - 1]
                next_cp += 1
            s = float(partial[-1])
            done += take
    else:
        uniforms = _strategy_uniform_chunks(seed) if driver.needs_uniforms else None
        theta1 = driver.theta1
        s = 0.0
        i = 0
        next_cp = 0
        cp_list = cps.tolist()
        n_cp = len(cp_list)
        while i < N:
            take = min(_CHUNK, N - i)
            zs = next(noise)[:take].tolist()
            us = next(uniforms)[:take].tolist() if uniforms is not None else None
            for j in range(take):
                th = theta1(i, s) if us is None else theta1(i, s, us[j])
                if not lo <= th <= hi:
                    raise StrategyViolationError(
                        f"strategy {strategy.descriptor()} emitted {th} outside band")
                s += th * zs[j]
                i += 1
                if next_cp < n_cp and cp_list[next_cp] == i:
                    s_at[next_cp] = s
                    next_cp += 1

    # the statistic is only defined from n = 3 on (log log must be positive)
    r_at = np.full(cps.size, np.nan)
    ok = cps >= 3
    r_at[ok] = s_at[ok] / np.sqrt(2.0 * cps[ok] * np.log(np.log(cps[ok])))
    return LILTrajectory(N=N, checkpoints=cps, S=s_at, R=r_at,
                         strategy=strategy.descriptor(), seed=seed,
                         antithetic=antithetic, band=band)


@dataclass(frozen=True)
class LILReport:
    """Tail extremes and visit histogram of one trajectory."""

    strategy: str
    seed: int
    antithetic: bool
    tail_sup: float
    tail_inf: float
    final_R: float
    hist_counts: np.ndarray
    hist_edges: np.ndarray

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy, "seed": self.seed,
            "antithetic": self.antithetic,
            "tail_sup": self.tail_sup, "tail_inf": self.tail_inf,
            "final_R": self.final_R,
            "hist_counts": self.hist_counts.tolist(),
            "hist_edges": self.hist_edges.tolist(),
        }


def report_from_trajectory(traj: LILTrajectory) -> LILReport:
    """Summarize: sup/inf over [N^(7/8), N], histogram over n >= sqrt(N)."""
    N = traj.N
    tail = traj.checkpoints >= math.ceil(N ** 0.875)
    if not tail.any():
        raise InputError("no checkpoints in the tail window")
    r_tail = traj.R[tail]
    hi = traj.band.sigma_hi
    lo_edge, hi_edge = -hi - 0.5, hi + 0.5
    n_bins = int(round((hi_edge - lo_edge) / HISTOGRAM_BIN_WIDTH))
    hist_sel = traj.R[traj.checkpoints >= math.ceil(math.sqrt(N))]
    # clip so the histogram mass equals the checkpoint count
    clipped = np.clip(hist_sel, lo_edge, np.nextafter(hi_edge, -np.inf))
    counts, edges = np.histogram(clipped, bins=n_bins, range=(lo_edge, hi_edge))
    return LILReport(
        strategy=traj.strategy, seed=traj.seed, antithetic=traj.antithetic,
        tail_sup=float(r_tail.max()), tail_inf=float(r_tail.min()),
        final_R=float(traj.R[-1]), hist_counts=counts, hist_edges=edges,
    )


@dataclass
class Theorem1Result:
    """Per-run reports, per-strategy aggregates and clause verdicts.

    Aggregation is max/min over seeds and their antithetic partners; the
    sign-flipped runs realize the {-X_n} reduction, so the liminf clause
    mirrors the limsup clause exactly.
    """

    band: VolatilityBand
    N: int
    seeds: tuple
    reports: list
    aggregates: dict      # descriptor -> {"tail_sup": float, "tail_inf": float}
    verdicts: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v for v in self.verdicts.values() if v is not None)

    def to_json(self) -> dict:
        return {
            "band": [self.band.sigma_lo, self.band.sigma_hi],
            "N": self.N, "seeds": list(self.seeds),
            "aggregates": self.aggregates,
            "verdicts": {k: v for k, v in self.verdicts.items()},
            "passed": self.passed,
            "reports": [r.to_json() for r in self.reports],
        }


def _run_many(tasks, fn):
    workers = min(thread_count(), len(tasks))
    results = [None] * len(tasks)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for idx, res in zip(range(len(tasks)),
                                pool.map(lambda t: fn(*t), tasks)):
                results[idx] = res
    else:
        for idx, t in enumerate(tasks):
            results[idx] = fn(*t)
    return results


def theorem1_experiment(band: VolatilityBand,
                        strategies: Sequence[AdversaryStrategy],
                        N: int, seeds: Sequence[int],
                        antithetic: bool = True,
                        sup_band: tuple[float, float] = (0.70, 1.10)) -> Theorem1Result:
    """Tail-window surrogate for the limsup/liminf band statements.

    Verdicts:
      I_upper        max tail_sup over strategies, seeds <= 1.15 * sigma_hi
      I_lower_top    constant-sigma_hi aggregate tail_sup >= 0.9 * sigma_lo
      I_top_band     constant-sigma_hi aggregate tail_sup in sup_band * sigma_hi
      I_bottom_band  constant-sigma_lo aggregate tail_sup in sup_band * sigma_lo
      II_*           the same checks applied to -tail_inf (sign-flip reduction)
    Checks tied to a constant strategy are None when it is absent.
    """
    if N < 10 ** 5:
        raise InputError("theorem-1 experiment needs N >= 1e5")
    if len(seeds) < 3:
        raise InputError("need at least 3 seeds per strategy")
    flips = (False, True) if antithetic else (False,)
    tasks = [(strat, seed, flip)
             for strat in strategies for seed in seeds for flip in flips]

    def one(strat, seed, flip):
        return report_from_trajectory(
            sample_trajectory(strat, band, N, seed, antithetic=flip))

    reports = _run_many(tasks, one)

    aggregates: dict = {}
    for strat in strategies:
        mine = [r for r in reports if r.strategy == strat.descriptor()]
        aggregates[strat.descriptor()] = {
            "tail_sup": max(r.tail_sup for r in mine),
            "tail_inf": min(r.tail_inf for r in mine),
        }

    hi, lo = band.sigma_hi, band.sigma_lo
    all_sup = max(a["tail_sup"] for a in aggregates.values())
    all_inf = min(a["tail_inf"] for a in aggregates.values())

    def const_desc(sigma):
        d = ConstantStrategy(sigma).descriptor()
        return d if d in aggregates else None

    top, bottom = const_desc(hi), const_desc(lo)
    verdicts = {
        "I_upper": bool(all_sup <= 1.15 * hi),
        "II_upper": bool(-all_inf <= 1.15 * hi),
        "I_lower_top": None, "I_top_band": None, "I_bottom_band": None,
        "II_lower_top": None, "II_top_band": None, "II_bottom_band": None,
    }
    if top is not None:
        sup_t = aggregates[top]["tail_sup"]
        inf_t = aggregates[top]["tail_inf"]
        verdicts["I_lower_top"] = bool(sup_t >= 0.9 * lo)
        verdicts["II_lower_top"] = bool(-inf_t >= 0.9 * lo)
        verdicts["I_top_band"] = bool(sup_band[0] * hi <= sup_t <= sup_band[1] * hi)
        verdicts["II_top_band"] = bool(sup_band[0] * hi <= -inf_t <= sup_band[1] * hi)
    if bottom is not None:
        sup_b = aggregates[bottom]["tail_sup"]
        inf_b = aggregates[bottom]["tail_inf"]
        verdicts["I_bottom_band"] = bool(sup_band[0] * lo <= sup_b <= sup_band[1] * lo)
        verdicts["II_bottom_band"] = bool(sup_band[0] * lo <= -inf_b <= sup_band[1] * lo)

    return Theorem1Result(band=band, N=N, seeds=tuple(seeds), reports=reports,
                          aggregates=aggregates, verdicts=verdicts)


@dataclass(frozen=True)
class BlockIncrement:
    k: int
    n_prev: int
    n_next: int
    statistic: float     # (S_next - S_prev) / sqrt(2 n_next log log n_next)

    def to_json(self) -> dict:
        return {"k": self.k, "n_prev": self.n_prev, "n_next": self.n_next,
                "statistic": self.statistic}


def block_increment_stats(traj: LILTrajectory,
                          schedule: BlockSchedule) -> list[BlockIncrement]:
    """Normalized block increments along schedule boundaries.

    The trajectory must have been sampled with the boundaries among its
    checkpoints; boundaries beyond the horizon are trimmed with a warning.
    """
    sched = schedule.trimmed(traj.N)
    pos = {int(n): idx for idx, n in enumerate(traj.checkpoints)}
    out = []
    bounds = sched.boundaries
    for k in range(1, bounds.size):
        n_prev, n_next = int(bounds[k - 1]), int(bounds[k])
        if n_prev not in pos or n_next not in pos:
            raise InputError(
                "trajectory lacks checkpoints at schedule boundaries; "
                "resample with checkpoints including schedule.boundaries")
        if n_next < 3:
            raise InputError("increment statistics need block ends >= 3")
        s_prev = float(traj.S[pos[n_prev]])
        s_next = float(traj.S[pos[n_next]])
        out.append(BlockIncrement(
            k=k, n_prev=n_prev, n_next=n_next,
            statistic=lil_statistic(s_next - s_prev, n_next)))
    return out


@dataclass
class ClusterRow:
    b: float
    seed: int
    min_distance: float
    frac_within_eps: float
    passed: bool

    def to_json(self) -> dict:
        return {"b": self.b, "seed": self.seed,
                "min_distance": self.min_distance,
                "frac_within_eps": self.frac_within_eps, "passed": self.passed}


@dataclass
class ClusterResult:
    band: VolatilityBand
    N: int
    epsilon: float
    tolerance: float
    rows: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_json(self) -> dict:
        return {"band": [self.band.sigma_lo, self.band.sigma_hi],
                "N": self.N, "epsilon": self.epsilon,
                "tolerance": self.tolerance, "passed": self.passed,
                "rows": [r.to_json() for r in self.rows]}


def cluster_experiment(band: VolatilityBand, b_list: Sequence[float], N: int,
                       seeds: Sequence[int], rho: float = 1.5,
                       epsilon: float = 0.1,
                       tolerance: float = 0.1) -> ClusterResult:
    """Reachability of interior levels by block steering.

    For each target b with |b| < sigma_lo, runs the block-steering strategy
    and reports min_k |R_(n_k) - b| over block boundaries plus the fraction of
    block increments within ``epsilon`` of b.  Passes when every (b, seed) run
    attains min distance <= ``tolerance``.
    """
    for b in b_list:
        if abs(b) >= band.sigma_lo:
            raise InputError(
                f"target b={b} outside the open interval "
                f"(-{band.sigma_lo}, {band.sigma_lo})")

    tasks = [(b, seed) for b in b_list for seed in seeds]

    def one(b, seed):
        strat = BlockTargetStrategy(b=b, rho=rho)
        sched = BlockSchedule.geometric(rho, N, n_first=strat.n_first)
        traj = sample_trajectory(strat, band, N, seed,
                                 checkpoints=checkpoint_indices(
                                     N, extra=sched.boundaries))
        pos = {int(n): idx for idx, n in enumerate(traj.checkpoints)}
        r_blocks = np.array([traj.R[pos[int(n)]] for n in sched.boundaries])
        incs = block_increment_stats(traj, sched)
        within = [abs(inc.statistic - b) <= epsilon for inc in incs]
        frac = float(np.mean(within)) if within else 0.0
        dist = float(np.min(np.abs(r_blocks - b)))
        return ClusterRow(b=b, seed=seed, min_distance=dist,
                          frac_within_eps=frac,
                          passed=bool(dist <= tolerance))

    rows = _run_many(tasks, one)
    return ClusterResult(band=band, N=N, epsilon=epsilon, tolerance=tolerance,
                         rows=rows)


def max_abs_brownian_moment(r: float, sigma: float = 1.0) -> float:
    """E[(max_{t<=1} |sigma B_t|)^r] via the reflection series, quadrature.

    Classical reference constant for the maximal-moment boundedness check.
    """
    if r <= 0:
        raise InputError("moment order must be positive")

    def tail(x):
        return 4.0 * sum((-1) ** k * norm.sf((2 * k + 1) * x) for k in range(80))

    val, _ = integrate.quad(lambda x: r * x ** (r - 1.0) * tail(x), 0.0, 12.0,
                            limit=200)
    return float(sigma ** r * val)


@dataclass
class MomentRatioRow:
    m: int
    n: int
    ratio: float          # mean of max_{i<=n} |S_{m,i}|^r / n^(r/2)
    std_error: float

    def to_json(self) -> dict:
        return {"m": self.m, "n": self.n, "ratio": self.ratio,
                "std_error": self.std_error}


@dataclass
class MomentRatioReport:
    r: float
    paths: int
    seed: int
    rows: list
    classical_bound: float   # 2x the Brownian reference at the top volatility

    @property
    def max_ratio(self) -> float:
        return max(row.ratio for row in self.rows)

    def trend_ok(self, factor: float = 1.5) -> bool:
        """Per offset m: the ratio at the largest n is <= factor * smallest n."""
        by_m: dict = {}
        for row in self.rows:
            by_m.setdefault(row.m, []).append(row)
        ok = True
        for rows in by_m.values():
            rows = sorted(rows, key=lambda t: t.n)
            ok = ok and rows[-1].ratio <= factor * rows[0].ratio
        return ok

    @property
    def bounded_ok(self) -> bool:
        return self.max_ratio <= self.classical_bound

    @property
    def passed(self) -> bool:
        return self.bounded_ok and self.trend_ok()

    def to_json(self) -> dict:
        return {"r": self.r, "paths": self.paths, "seed": self.seed,
                "classical_bound": self.classical_bound,
                "max_ratio": self.max_ratio, "trend_ok": self.trend_ok(),
                "bounded_ok": self.bounded_ok, "passed": self.passed,
                "rows": [row.to_json() for row in self.rows]}


def moment_ratio_check(band: VolatilityBand, strategy: AdversaryStrategy,
                       r: float, n_list: Sequence[int],
                       m_list: Sequence[int] = (0,), paths: int = 2000,
                       seed: int = 0) -> MomentRatioReport:
    """Monte Carlo table of E[max_{i<=n} |S_{m,i}|^r] / n^(r/2).

    Requires r > 2.  The boundedness verdict compares against twice the
    classical Brownian reference at the top of the band; the trend verdict
    requires the last column not to exceed 1.5x the first.
    """
    if r <= 2:
        raise InputError("moment order must satisfy r > 2")
    if paths < 2:
        raise InputError("need at least 2 paths")
    rows = []
    chunk = 2048
    lo, hi = band.sigma_lo - 1e-12, band.sigma_hi + 1e-12
    for m in m_list:
        if m < 0:
            raise InputError("offsets must be nonnegative")
        for n in n_list:
            if n < 1:
                raise InputError("window lengths must be positive")
            total = m + n
            gen = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence((int(seed), int(m), int(n), 2))))
            driver = strategy.make_driver(band, total)
            acc = np.empty(paths)
            done = 0
            while done < paths:
                take = min(chunk, paths - done)
                zeta = 2.0 * gen.integers(0, 2, size=(take, total)) - 1.0
                if hasattr(driver, "theta_vector"):
                    th = driver.theta_vector(0, total)
                    cs = np.cumsum(th[None, :] * zeta, axis=1)
                else:
                    ugen = (np.random.Generator(np.random.PCG64(
                        np.random.SeedSequence((int(seed), int(m), int(n), 3))))
                        if driver.needs_uniforms else None)
                    s = np.zeros(take)
                    cs = np.empty((take, total))
                    for i in range(total):
                        u = ugen.random(take) if ugen is not None else None
                        th = np.asarray(driver.theta_array(i, s, u), dtype=float)
                        if th.min() < lo or th.max() > hi:
                            raise StrategyViolationError(
                                f"strategy {strategy.descriptor()} left the band")
                        s = s + th * zeta[:, i]
                        cs[:, i] = s
                base = cs[:, m - 1][:, None] if m > 0 else 0.0
                peak = np.max(np.abs(cs[:, m:] - base), axis=1)
                acc[done:done + take] = peak ** r
                done += take
            ratio = float(np.mean(acc) / n ** (r / 2.0))
            se = float(np.std(acc, ddof=1) / math.sqrt(paths) / n ** (r / 2.0))
            rows.append(MomentRatioRow(m=int(m), n=int(n), ratio=ratio,
                                       std_error=se))
    bound = 2.0 * max_abs_brownian_moment(r, band.sigma_hi)
    return MomentRatioReport(r=r, paths=paths, seed=seed, rows=rows,
                             classical_bound=bound)
