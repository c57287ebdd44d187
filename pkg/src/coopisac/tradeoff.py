"""Rate-CRLB region under power and backhaul limits.

Rates are in nats per channel use and CRLB values in km^2 (distances in km),
so the sensing metric 1/sqrt(CRLB) is in 1/km.
"""
from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .communication import DEFAULT_QUAD, CommParams, QuadratureSpec, optimal_cluster_size, rate_coop
from .errors import DomainError, Infeasible
from .sensing import SensingParams, crlb_with_acceptance, sensing_optimal_n, zeta_sq

KM = 1000.0


@dataclass(frozen=True)
class OperatingPoint:
    L: int
    N: int
    p_c: float
    p_s: float

    def __post_init__(self):
        if self.L < 1 or self.N < 2:
            raise DomainError("need L >= 1 and N >= 2")
        if self.p_c < 0 or self.p_s < 0:
            raise DomainError("powers must be >= 0")


@dataclass(frozen=True)
class RateCrlbPoint:
    rate: float
    crlb: float
    point: OperatingPoint
    feasible: bool

    @property
    def root_crlb(self) -> float:
        return math.sqrt(self.crlb)

    @property
    def sensing_metric(self) -> float:
        """1/sqrt(CRLB); zero when sensing is absent (infinite CRLB)."""
        return 0.0 if math.isinf(self.crlb) else 1.0 / math.sqrt(self.crlb)


@dataclass(frozen=True)
class BackhaulParams:
    """Per-BS backhaul budget and the cost of one sensing cooperation, in rate units."""

    c_backhaul: float
    e: float

    def __post_init__(self):
        if self.c_backhaul < 0 or self.e < 0:
            raise DomainError("backhaul parameters must be >= 0")


@dataclass(frozen=True)
class IsacParams:
    """Joint configuration; ``comm.p_c`` is overridden per grid cell."""

    comm: CommParams = field(default_factory=CommParams)
    sensing: SensingParams = field(default_factory=SensingParams)
    mu_s: float = 1.0
    n_max: int = 60
    finite_n_mode: bool = False
    quad: QuadratureSpec = DEFAULT_QUAD

    @property
    def p_t(self) -> float:
        return self.comm.p_t


def _default_ratios() -> tuple[float, ...]:
    return tuple(round(0.02 * k, 10) for k in range(1, 50))


@dataclass(frozen=True)
class BoundaryGrid:
    L_values: tuple[int, ...] = tuple(range(1, 31))
    p_c_ratios: tuple[float, ...] = field(default_factory=_default_ratios)

    def __post_init__(self):
        if not self.L_values or not self.p_c_ratios:
            raise DomainError("grid must be non-empty")
        if any(L < 1 for L in self.L_values):
            raise DomainError("L values must be >= 1")
        if any(not 0 <= r <= 1 for r in self.p_c_ratios):
            raise DomainError("power ratios must lie in [0, 1]")

    @property
    def size(self) -> int:
        return len(self.L_values) * len(self.p_c_ratios)


class RateTable:
    """Memoised rate_coop values keyed by (L, p_c) for one parameter set."""

    def __init__(self, params: IsacParams):
        self.params = params
        self._cache: dict[tuple[int, float], float] = {}
        self._lock = threading.Lock()

    def rate(self, L: int, p_c: float) -> float:
        key = (L, p_c)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        v = rate_coop(L, self.params.comm.with_power(p_c), self.params.quad)
        with self._lock:
            self._cache[key] = v
        return v

    def prefill(self, keys: Sequence[tuple[int, float]], workers: int = 1) -> None:
        todo = [k for k in keys if k not in self._cache]
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(lambda k: self.rate(*k), todo))
        else:
            for k in todo:
                self.rate(*k)


def sensing_optimum(params: IsacParams) -> int:
    return sensing_optimal_n(params.mu_s, params.comm.psi, params.n_max, params.finite_n_mode)


def n_star(
    L: int,
    p_c: float,
    params: IsacParams,
    backhaul: BackhaulParams,
    rate: Optional[float] = None,
    n_tilde: Optional[int] = None,
) -> int:
    """Sensing cluster size: the sensing optimum, capped by what the backhaul leaves."""
    r = rate_coop(L, params.comm.with_power(p_c), params.quad) if rate is None else rate
    nt = sensing_optimum(params) if n_tilde is None else n_tilde
    if backhaul.e == 0.0:
        if r > backhaul.c_backhaul:
            raise Infeasible(f"rate {r:.4g} exceeds backhaul {backhaul.c_backhaul:.4g}")
        return nt
    cap = math.floor((backhaul.c_backhaul - r) / backhaul.e)
    if cap < 2:
        raise Infeasible(f"backhaul leaves room for {cap} sensing BSs at L={L}, p_c={p_c}")
    return max(2, min(nt, cap))


def _crlb(N: int, p_s: float, params: IsacParams) -> float:
    if p_s <= 0.0:
        return math.inf
    # |zeta|^2 is linear in the sensing power; scale from the reference value
    ref = params.sensing
    if not ref.p_s > 0:
        raise DomainError("reference sensing power must be positive")
    zs = zeta_sq(ref, KM) * p_s / ref.p_s
    return crlb_with_acceptance(
        N, params.comm.lambda_b, zs, params.mu_s, params.comm.psi, params.finite_n_mode
    )


def evaluate_cell(
    L: int, p_c: float, params: IsacParams, backhaul: BackhaulParams,
    table: RateTable, n_tilde: int,
) -> RateCrlbPoint:
    r = table.rate(L, p_c)
    p_s = params.p_t - p_c
    try:
        N = n_star(L, p_c, params, backhaul, rate=r, n_tilde=n_tilde)
    except Infeasible:
        return RateCrlbPoint(r, math.inf, OperatingPoint(L, 2, p_c, p_s), False)
    crlb = _crlb(N, p_s, params)
    ok = r + backhaul.e * N <= backhaul.c_backhaul and math.isfinite(crlb)
    return RateCrlbPoint(r, crlb, OperatingPoint(L, N, p_c, p_s), ok)


def pareto_frontier(points: Sequence[RateCrlbPoint]) -> list[RateCrlbPoint]:
    """Feasible points not dominated in (max rate, min crlb), sorted by rate.

    Exact duplicates collapse to the first one met in (rate desc, crlb asc,
    L, p_c) order.
    """
    cand = sorted(
        (p for p in points if p.feasible),
        key=lambda p: (-p.rate, p.crlb, p.point.L, p.point.p_c),
    )
    out: list[RateCrlbPoint] = []
    best = math.inf
    for p in cand:
        if p.crlb < best:
            out.append(p)
            best = p.crlb
    out.reverse()
    return out


def prop3_prune_range(
    current_boundary: Sequence[RateCrlbPoint],
    candidate: tuple[int, float],
    crlb_prime: float,
    rate_prime: float,
    p_t: float,
) -> Optional[tuple[float, float]]:
    """Sensing-power interval [p_s', crlb' p_s' / crlb] that cannot improve the boundary.

    ``candidate`` is (L, p_c) with p_s' = p_t - p_c. Of the boundary points
    with crlb < crlb' and rate >= rate', the one with the smallest crlb gives
    the widest interval. Returns None when no such point exists. A candidate
    with crlb' equal to a boundary crlb yields the single-point interval.
    """
    _, p_c = candidate
    ps = p_t - p_c
    best = None
    for q in current_boundary:
        if q.rate >= rate_prime and q.crlb <= crlb_prime and math.isfinite(q.crlb):
            if best is None or q.crlb < best:
                best = q.crlb
    if best is None or not math.isfinite(crlb_prime):
        return None
    return ps, crlb_prime * ps / best


@dataclass(frozen=True)
class ScanResult:
    frontier: list[RateCrlbPoint]
    cells: list[RateCrlbPoint]
    evaluated: int
    total: int

    @property
    def saving(self) -> float:
        return 1.0 - self.evaluated / self.total if self.total else 0.0


def _scan_order(params: IsacParams, grid: BoundaryGrid) -> list[int]:
    """L values ordered by distance from the communication-only optimum."""
    c = params.comm
    try:
        l_star = optimal_cluster_size(c.mu_c, c.psi, c.alpha)
    except DomainError:
        l_star = grid.L_values[0]
    return sorted(grid.L_values, key=lambda L: (abs(L - l_star), L))


def boundary_scan(
    params: IsacParams,
    backhaul: BackhaulParams,
    grid: BoundaryGrid = BoundaryGrid(),
    prune: bool = True,
    table: Optional[RateTable] = None,
    workers: int = 1,
) -> ScanResult:
    """Scan (L, p_c) cells and reduce to the rate-CRLB frontier.

    With ``prune`` the scan visits L values outward from the
    communication-only optimum and, within each L, powers from high to low
    p_c. After each cell, sensing powers that the current boundary already
    dominates are skipped. A skip is only applied when the cell uses the
    unconstrained sensing cluster size: lowering p_c can only relax the
    backhaul cap, so N stays put and CRLB scales exactly as 1/p_s.
    """
    table = table or RateTable(params)
    n_tilde = sensing_optimum(params)
    p_t = params.p_t
    ratios = sorted(set(grid.p_c_ratios), reverse=True)
    total = grid.size
    if not prune:
        keys = [(L, r * p_t) for L in grid.L_values for r in sorted(set(grid.p_c_ratios))]
        table.prefill(keys, workers)
        cells = [evaluate_cell(L, pc, params, backhaul, table, n_tilde) for L, pc in keys]
        return ScanResult(pareto_frontier(cells), cells, len(cells), total)

    cells: list[RateCrlbPoint] = []
    boundary: list[RateCrlbPoint] = []
    for L in _scan_order(params, grid):
        skip_below_ps = -math.inf  # skip cells whose p_s lies in [lo, hi]
        skip_hi = -math.inf
        for ratio in ratios:
            pc = ratio * p_t
            ps = p_t - pc
            if skip_below_ps <= ps <= skip_hi:
                continue
            cell = evaluate_cell(L, pc, params, backhaul, table, n_tilde)
            cells.append(cell)
            if not cell.feasible:
                continue
            rng_ = prop3_prune_range(boundary, (L, pc), cell.crlb, cell.rate, p_t)
            boundary = pareto_frontier(boundary + [cell])
            if rng_ is not None and cell.point.N == n_tilde:
                # the skip window starts just above the current sensing power
                skip_below_ps = rng_[0] * (1.0 + 1e-12)
                skip_hi = rng_[1]
    frontier = pareto_frontier(cells)
    return ScanResult(frontier, cells, len(cells), total)


def time_sharing_baseline(
    corner_comm: RateCrlbPoint, corner_sense: RateCrlbPoint, fractions: Sequence[float]
) -> list[RateCrlbPoint]:
    """Time sharing between two operating points.

    For fraction f of time at ``corner_comm``: rate = f R_c + (1-f) R_s and
    1/sqrt(crlb) = f S_c + (1-f) S_s, with S = 1/sqrt(CRLB). The fraction-0
    and fraction-1 points are the corners themselves.
    """
    out = []
    for f in fractions:
        if not 0.0 <= f <= 1.0:
            raise DomainError("fractions must lie in [0, 1]")
        if f == 1.0:
            out.append(corner_comm)
            continue
        if f == 0.0:
            out.append(corner_sense)
            continue
        rate = f * corner_comm.rate + (1.0 - f) * corner_sense.rate
        s = f * corner_comm.sensing_metric + (1.0 - f) * corner_sense.sensing_metric
        crlb = math.inf if s == 0.0 else 1.0 / (s * s)
        out.append(RateCrlbPoint(rate, crlb, corner_comm.point, True))
    return out


def frontier_corners(frontier: Sequence[RateCrlbPoint]) -> tuple[RateCrlbPoint, RateCrlbPoint]:
    """(max-rate point, min-CRLB point) of a frontier sorted by rate."""
    if not frontier:
        raise Infeasible("empty frontier")
    return frontier[-1], frontier[0]


def weighted_objective(point: RateCrlbPoint, rho: float) -> float:
    return rho * point.rate + (1.0 - rho) * point.sensing_metric


def weighted_sum_optimize(
    rho: float,
    params: IsacParams,
    backhaul: BackhaulParams,
    grid: BoundaryGrid = BoundaryGrid(),
    frontier: Optional[Sequence[RateCrlbPoint]] = None,
) -> tuple[OperatingPoint, float, RateCrlbPoint]:
    """Maximise rho R + (1 - rho)/sqrt(CRLB) over the frontier; ties favour higher rate."""
    if not 0.0 <= rho <= 1.0:
        raise DomainError("rho must lie in [0, 1]")
    fr = list(frontier) if frontier is not None else boundary_scan(params, backhaul, grid).frontier
    if not fr:
        raise Infeasible("no feasible operating point")
    vals = np.array([weighted_objective(p, rho) for p in fr])
    best = int(np.flatnonzero(vals == vals.max())[-1])
    return fr[best].point, float(vals[best]), fr[best]


def frontier_dominates(upper: Sequence[RateCrlbPoint], lower: Sequence[RateCrlbPoint], tol: float = 1e-12) -> bool:
    """True when every point of ``lower`` is weakly dominated by some point of ``upper``."""
    return all(
        any(u.rate >= p.rate - tol and u.crlb <= p.crlb * (1 + tol) for u in upper) for p in lower
    )
