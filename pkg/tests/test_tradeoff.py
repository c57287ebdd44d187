from __future__ import annotations

import math

import numpy as np
import pytest

from coopisac.communication import CommParams, rate_coop
from coopisac.errors import DomainError, Infeasible
from coopisac.sensing import SensingParams
from coopisac.tradeoff import (
    BackhaulParams,
    BoundaryGrid,
    IsacParams,
    OperatingPoint,
    RateCrlbPoint,
    RateTable,
    _crlb,
    boundary_scan,
    evaluate_cell,
    frontier_corners,
    frontier_dominates,
    n_star,
    pareto_frontier,
    prop3_prune_range,
    sensing_optimum,
    time_sharing_baseline,
    weighted_objective,
    weighted_sum_optimize,
)

SMALL = BoundaryGrid(tuple(range(1, 9)), tuple(round(0.1 * k, 10) for k in range(1, 10)))


def _pt(rate, crlb, L=1, pc=0.5, feasible=True):
    return RateCrlbPoint(rate, crlb, OperatingPoint(L, 2, pc, 1 - pc), feasible)


def _brute_frontier(points):
    feas = [p for p in points if p.feasible]
    keep = []
    for p in feas:
        dominated = any((q.rate >= p.rate and q.crlb <= p.crlb) and (q.rate > p.rate or q.crlb < p.crlb)
                        for q in feas)
        if not dominated:
            keep.append((p.rate, p.crlb))
    return sorted(set(keep))


def test_pareto_frontier_matches_brute_force():
    rng = np.random.default_rng(17)
    for _ in range(30):
        n = int(rng.integers(1, 60))
        pts = [_pt(float(rng.integers(0, 15)), float(rng.integers(1, 15)), feasible=bool(rng.random() < 0.8))
               for _ in range(n)]
        got = [(p.rate, p.crlb) for p in pareto_frontier(pts)]
        assert got == _brute_frontier(pts)


def test_prune_range():
    boundary = [_pt(5.0, 2.0), _pt(6.0, 1.0)]
    assert prop3_prune_range(boundary, (3, 0.4), 4.0, 5.5, 1.0) == (0.6, 4.0 * 0.6 / 1.0)
    assert prop3_prune_range(boundary, (3, 0.4), 4.0, 7.0, 1.0) is None
    assert prop3_prune_range([], (3, 0.4), 4.0, 1.0, 1.0) is None


def test_n_star_caps_and_infeasible():
    params = IsacParams()
    nt = sensing_optimum(params)
    assert nt in (14, 15, 16)
    r = 3.0
    assert n_star(5, 0.5, params, BackhaulParams(100.0, 1.0), rate=r) == nt
    assert n_star(5, 0.5, params, BackhaulParams(3.0 + 5.5, 1.0), rate=r) == 5
    with pytest.raises(Infeasible):
        n_star(5, 0.5, params, BackhaulParams(4.5, 1.0), rate=r)
    with pytest.raises(Infeasible):
        n_star(5, 0.5, params, BackhaulParams(2.0, 0.0), rate=r)
    assert n_star(5, 0.5, params, BackhaulParams(4.0, 0.0), rate=r) == nt


def test_crlb_is_inverse_in_sensing_power():
    params = IsacParams(sensing=SensingParams(p_s=0.5))
    np.testing.assert_allclose(_crlb(10, 0.25, params), 2 * _crlb(10, 0.5, params), rtol=1e-14)
    assert _crlb(10, 0.0, params) == math.inf


def test_evaluate_cell_marks_infeasible():
    params = IsacParams()
    table = RateTable(params)
    cell = evaluate_cell(5, 0.5, params, BackhaulParams(1.0, 0.1), table, 15)
    assert not cell.feasible and cell.crlb == math.inf
    ok = evaluate_cell(5, 0.5, params, BackhaulParams(20.0, 0.1), table, 15)
    assert ok.feasible and ok.point.N == 15
    np.testing.assert_allclose(ok.rate, rate_coop(5, params.comm.with_power(0.5)))


@pytest.mark.parametrize("c", [4.3, 8.6, 20.0])
def test_pruned_scan_equals_exhaustive_on_small_grid(c):
    params = IsacParams(comm=CommParams(psi=10), sensing=SensingParams(p_s=1.0))
    table = RateTable(params)
    bh = BackhaulParams(c, c / 20)
    full = boundary_scan(params, bh, SMALL, prune=False, table=table)
    fast = boundary_scan(params, bh, SMALL, prune=True, table=table)
    a = [(p.rate, p.crlb, p.point) for p in full.frontier]
    b = [(p.rate, p.crlb, p.point) for p in fast.frontier]
    assert a == b
    assert fast.evaluated <= full.evaluated == SMALL.size


def test_boundary_scan_workers_do_not_change_result():
    params = IsacParams()
    bh = BackhaulParams(8.6, 8.6 / 30)
    a = boundary_scan(params, bh, SMALL, prune=False, workers=1)
    b = boundary_scan(params, bh, SMALL, prune=False, workers=3)
    assert [(p.rate, p.crlb) for p in a.cells] == [(p.rate, p.crlb) for p in b.cells]


def test_time_sharing_interpolates_metrics():
    hi, lo = _pt(5.0, 4.0), _pt(1.0, 0.25)
    out = time_sharing_baseline(hi, lo, [0.0, 0.25, 1.0])
    assert out[0] is lo and out[2] is hi
    np.testing.assert_allclose(out[1].rate, 0.25 * 5 + 0.75 * 1)
    np.testing.assert_allclose(out[1].sensing_metric, 0.25 * 0.5 + 0.75 * 2.0)
    with pytest.raises(DomainError):
        time_sharing_baseline(hi, lo, [1.5])


def test_corners_and_dominance():
    fr = pareto_frontier([_pt(1.0, 1.0), _pt(2.0, 2.0), _pt(3.0, 5.0)])
    hi, lo = frontier_corners(fr)
    assert hi.rate == 3.0 and lo.crlb == 1.0
    assert frontier_dominates(fr, [_pt(2.0, 3.0)])
    assert not frontier_dominates(fr, [_pt(2.5, 2.0)])
    with pytest.raises(Infeasible):
        frontier_corners([])


def test_weighted_sum_extremes_and_ties():
    fr = pareto_frontier([_pt(1.0, 0.25), _pt(2.0, 1.0), _pt(4.0, 4.0)])
    op, T, p = weighted_sum_optimize(1.0, IsacParams(), BackhaulParams(1, 1), frontier=fr)
    assert p.rate == 4.0 and T == 4.0
    op, T, p = weighted_sum_optimize(0.0, IsacParams(), BackhaulParams(1, 1), frontier=fr)
    assert p.crlb == 0.25 and T == 2.0
    tie = pareto_frontier([_pt(1.0, 1.0 / 9.0), _pt(2.0, 0.25)])  # 0.5*1 + 0.5*3 == 0.5*2 + 0.5*2
    _, T, p = weighted_sum_optimize(0.5, IsacParams(), BackhaulParams(1, 1), frontier=tie)
    assert p.rate == 2.0 and T == 2.0
    np.testing.assert_allclose(weighted_objective(_pt(2.0, 0.25), 0.5), 2.0)
    with pytest.raises(DomainError):
        weighted_sum_optimize(1.5, IsacParams(), BackhaulParams(1, 1), frontier=fr)


def test_value_objects_validate():
    with pytest.raises(DomainError):
        OperatingPoint(0, 2, 0.5, 0.5)
    with pytest.raises(DomainError):
        BackhaulParams(-1.0, 0.1)
    with pytest.raises(DomainError):
        BoundaryGrid((1,), (1.5,))
    assert SMALL.size == 72
