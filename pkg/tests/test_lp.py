from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import sparse
from scipy.optimize import linprog

from movrep.lp import (CapExceeded, DualValues, LPInfeasible, LPTableau, LPUnbounded, check_fractional,
                       enumerate_path_classes, price, solve_lp, solve_sum_mr_lp)
from movrep.model import Instance, MetricSpace, ball, build_time_grid, scale_instance

from conftest import int_metric, line_metric, random_instance


def _brute_len(d, depot, nodes):
    rest = [u for u in nodes if u != depot]
    best = np.inf
    for order in itertools.permutations(rest):
        seq = (depot,) + order
        best = min(best, sum(d[a, b] for a, b in zip(seq, seq[1:])))
    return best


def reference_plp(inst: Instance, mu=1.0, omega=1.0, clients=None) -> float:
    """The path LP written out directly over every node subset (brute-force tour lengths)."""
    d = inst.metric.array
    grid = build_time_grid(inst)
    clients = list(range(inst.m)) if clients is None else clients
    S = len(grid.stamps)
    xs = []  # (r, s, hit set)
    for r, rep in enumerate(inst.repairmen):
        others = [u for u in range(inst.n) if u != rep.depot]
        subsets = [frozenset((rep.depot,) + c) for k in range(len(others) + 1) for c in itertools.combinations(others, k)]
        lens = {sub: _brute_len(d, rep.depot, sub) for sub in subsets}
        for s, t in enumerate(grid.stamps):
            for sub in subsets:
                if lens[sub] <= mu * float(rep.speed) * t + 1e-9:
                    hit = {c for c in clients if ball(inst, c, mu * t) & sub}
                    xs.append((r, s, hit))
    nx_, m = len(xs), len(clients)
    nv = nx_ + m * S
    cost = np.zeros(nv)
    for p in range(m):
        cost[nx_ + p * S: nx_ + (p + 1) * S] = grid.stamps
    A, b = [], []
    for r in range(inst.k):
        for s in range(S):
            row = np.zeros(nv)
            for i, (rr, ss, _) in enumerate(xs):
                if rr == r and ss == s:
                    row[i] = 1
            A.append(row)
            b.append(omega)
    for p, c in enumerate(clients):
        for s in range(S):
            row = np.zeros(nv)
            for i, (_, ss, hit) in enumerate(xs):
                if ss == s and c in hit:
                    row[i] = -1
            row[nx_ + p * S: nx_ + p * S + s + 1] = 1
            A.append(row)
            b.append(0)
        row = np.zeros(nv)
        row[nx_ + p * S: nx_ + (p + 1) * S] = -1
        A.append(row)
        b.append(-1)
    res = linprog(cost, A_ub=np.array(A), b_ub=np.array(b), bounds=(0, None), method="highs")
    assert res.status == 0
    return float(res.fun)


def test_enumerate_examples():
    one = Instance.build(MetricSpace.from_matrix([[0]]), [(0, 1)], [])
    (pc,) = enumerate_path_classes(one, 0)
    assert pc.visited == {0} and pc.min_length == 0
    line = Instance.build(line_metric(1), [(0, 1)], [])
    got = [(set(p.visited), p.min_length) for p in enumerate_path_classes(line, 1)]
    assert got == [({0}, 0), ({0, 1}, 1)]
    tri = Instance.build(MetricSpace.from_matrix([[0, 1, 1], [1, 0, 1], [1, 1, 0]]), [(0, 1)], [])
    full = [p for p in enumerate_path_classes(tri, 2) if p.visited == {0, 1, 2}]
    assert full[0].min_length == _brute_len(tri.metric.array, 0, [0, 1, 2]) == 2


def test_enumerate_cap():
    inst = Instance.build(line_metric(*[1] * 5), [(0, 1)], [])
    with pytest.raises(CapExceeded, match="oracle mode"):
        enumerate_path_classes(inst, 10, subset_cap=4)


@given(st.integers(2, 6), st.integers(0, 10**6))
def test_path_class_sufficiency(n, seed):
    """Any walk within budget has a class with the same visited set that is no longer."""
    rng = np.random.default_rng(seed)
    inst = Instance.build(int_metric(rng, n), [(0, 1)], [])
    d = inst.metric.array
    walk = [0] + [int(u) for u in rng.integers(n, size=int(rng.integers(0, 2 * n)))]
    length = sum(d[a, b] for a, b in zip(walk, walk[1:]))
    classes = {p.visited: p for p in enumerate_path_classes(inst, length)}
    assert frozenset(walk) in classes
    assert classes[frozenset(walk)].min_length <= length + 1e-9


def test_solve_lp_basics():
    tab = LPTableau(np.array([1.0]), sparse.csr_matrix([[-1.0]]), np.array([-1.0]), ["x"], ["r"])
    res = solve_lp(tab)
    assert res.objective == pytest.approx(1.0)
    # x + y = 1 written as two inequalities; degenerate but primal = dual
    tab = LPTableau(np.array([1.0, 2.0]), sparse.csr_matrix([[1.0, 1.0], [-1.0, -1.0], [-1.0, 0.0]]),
                    np.array([1.0, -1.0, -1.0]), ["x", "y"], ["a", "b", "c"])
    res = solve_lp(tab)
    assert res.objective == pytest.approx(res.dual_objective) == pytest.approx(1.0)
    with pytest.raises(LPInfeasible):
        solve_lp(LPTableau(np.array([1.0]), sparse.csr_matrix([[1.0]]), np.array([-1.0])))
    with pytest.raises(LPUnbounded):
        solve_lp(LPTableau(np.array([-1.0]), sparse.csr_matrix([[-1.0]]), np.array([0.0])))


def test_tableau_dump():
    tab = LPTableau(np.array([1.0]), sparse.csr_matrix([[-1.0]]), np.array([-1.0]), ["x"], ["r"])
    assert tab.dump() == "obj x:1\nrow r: -1*x <= -1\n"


def test_collocated_client_pays_first_stamp():
    inst = Instance.build(line_metric(1), [(0, 1)], [(0, 0)])
    sc, _ = scale_instance(inst)
    fs = solve_sum_mr_lp(sc, build_time_grid(sc), keep_zero=True)
    assert fs.objective == pytest.approx(1.0)
    assert fs.y[(0, 0)] == pytest.approx(1.0)
    assert solve_sum_mr_lp(sc, build_time_grid(sc)).objective == 0.0


def test_single_far_client_objective_two():
    inst = Instance.build(line_metric(1), [(0, 1)], [(1, 0)])
    sc, f = scale_instance(inst)
    assert f == 2
    fs = solve_sum_mr_lp(sc, build_time_grid(sc))
    check_fractional(fs)
    assert fs.objective == pytest.approx(2.0) == pytest.approx(reference_plp(sc))


def test_two_opposite_clients_against_reference():
    inst = Instance.build(line_metric(2, 3), [(1, 1)], [(0, 0), (2, 0)])
    sc, _ = scale_instance(inst)
    fs = solve_sum_mr_lp(sc, build_time_grid(sc))
    assert fs.objective == pytest.approx(reference_plp(sc), rel=1e-7)


@given(st.integers(2, 5), st.integers(1, 2), st.integers(1, 3), st.integers(0, 10**6),
       st.sampled_from([(1.0, 1.0), (2.0, 1.0), (1.0, 2.0), (3.0, 2.0)]))
def test_exact_lp_matches_reference(n, k, m, seed, mw):
    rng = np.random.default_rng(seed)
    sc, _ = scale_instance(random_instance(rng, n, k, m, equal=False))
    mu, omega = mw
    zero = set(sc.zero_latency_clients())
    clients = [j for j in range(sc.m) if j not in zero]
    fs = solve_sum_mr_lp(sc, build_time_grid(sc), mu=mu, omega=omega)
    check_fractional(fs)
    assert fs.objective == pytest.approx(reference_plp(sc, mu, omega, clients), rel=1e-7, abs=1e-9)


def _exact_pricer(inst):
    from movrep.npcst import TriCriteriaSolution
    from movrep.oracles import _hits
    from movrep.model import mst_weight

    n = inst.metric.n
    d = inst.metric.array
    best, arg = -1.0, (inst.root,)
    others = [u for u in range(n) if u != inst.root]
    for k in range(n):
        for combo in itertools.combinations(others, k):
            nodes = (inst.root,) + combo
            if mst_weight(d, list(nodes)) <= inst.budget + 1e-9:
                val = _hits(inst, nodes)
                if val > best:
                    best, arg = val, nodes
    return TriCriteriaSolution(arg, (), 0.0, best, (), 1.0, 0.0, 0.0)


def test_price_examples():
    inst = Instance.build(line_metric(1, 1), [(0, 1)], [(0, 0), (2, 0)])
    zero = DualValues({}, {(0, 0): 1.0}, {(0, 0): 0.0, (1, 0): 0.0})
    assert price(zero, inst, 0, 1.0, _exact_pricer, stamp=0) is None
    duals = DualValues({}, {(0, 0): 1.0}, {(0, 0): 5.0})
    pc = price(duals, inst, 0, 1.0, _exact_pricer, mu=1.0, omega=2.0, stamp=0, clients=[0])
    assert pc is not None and 0 in pc.visited


def _brute_best_class(inst, r, t, theta):
    d = inst.metric.array
    rep = inst.repairmen[r]
    others = [u for u in range(inst.n) if u != rep.depot]
    best = 0.0
    for k in range(len(others) + 1):
        for combo in itertools.combinations(others, k):
            nodes = (rep.depot,) + combo
            if _brute_len(d, rep.depot, nodes) <= float(rep.speed) * t + 1e-9:
                best = max(best, sum(v for c, v in theta.items() if ball(inst, c, t) & set(nodes)))
    return best


def test_price_finds_strong_violations():
    """When a class beats omega x threshold outright, the relaxed oracle must report one."""
    from movrep.npcst import factors, solve_npcst_general

    rng = np.random.default_rng(8)
    checked = 0
    for _ in range(12):
        n = 7
        inst = random_instance(rng, n, 1, 3, metric=int_metric(rng, n, 6))
        sigma, phi = factors(n)
        mu, omega = max(sigma, 2 * phi), 2.0
        t = float(rng.integers(2, 12))
        theta = {c: float(rng.integers(0, 6)) for c in range(inst.m)}
        best = _brute_best_class(inst, 0, t, theta)
        beta = float(rng.uniform(0.1, 1.0)) * best
        duals = DualValues({}, {(0, 0): beta}, {(c, 0): v for c, v in theta.items()})
        pc = price(duals, inst, 0, t, lambda x: solve_npcst_general(x, count=8), mu, omega, stamp=0)
        if best > beta > 0:
            checked += 1
            assert pc is not None
    assert checked >= 5


def test_column_generation_monotone_and_feasible():
    from movrep.npcst import solve_npcst_general

    rng = np.random.default_rng(3)
    for _ in range(3):
        sc, _ = scale_instance(random_instance(rng, 5, 1, 3))
        fs = solve_sum_mr_lp(sc, build_time_grid(sc), mode="oracle", mu=1.0, omega=1.0,
                             npcst_solver=lambda x: solve_npcst_general(x, count=6))
        check_fractional(fs)
        h = fs.history
        assert all(b <= a + 1e-9 * max(1, a) for a, b in zip(h, h[1:]))
        exact = solve_sum_mr_lp(sc, build_time_grid(sc))
        assert fs.objective >= exact.objective - 1e-7
