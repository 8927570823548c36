from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from movrep.frt import embed_once
from movrep.npcst import (NPCSTClient, NPCSTInstance, _close_upward, factors, hit_profit, hst_cost, log_n,
                          path_cost, solve_npcst_general, transplant_tree)
from movrep.oracles import exact_npcst

from conftest import int_metric, line_metric, random_npcst


def scan_hits(inst, nodes, sigma):
    """Plain double loop over clients and tree nodes."""
    hit = []
    for i, c in enumerate(inst.clients):
        for u in nodes:
            if inst.metric.array[c.location, u] <= sigma * c.radius + 1e-9:
                hit.append(i)
                break
    return tuple(hit)


def test_factors():
    sigma, phi = factors(8, A=4)
    assert (sigma, phi) == (16 * 4 * 3, 8 * 4 * 3)
    assert log_n(1) == log_n(2) == 1


def test_single_client_at_root():
    inst = NPCSTInstance(line_metric(3, 4), 0, (NPCSTClient(0, 5, 1),), 2)
    sol = solve_npcst_general(inst)
    assert sol.nodes == (0,) and sol.profit == 5 and sol.sigma_meas == 0 and sol.phi_meas == 0


def test_zero_profits():
    inst = NPCSTInstance(line_metric(1, 1), 0, (NPCSTClient(2, 0, 1), NPCSTClient(1, 0, 1)), 5)
    assert solve_npcst_general(inst).profit == 0


def test_unreachable_flagged():
    inst = NPCSTInstance(line_metric(1, 10), 0, (NPCSTClient(2, 3, 1), NPCSTClient(1, 1, 0.5)), 2)
    assert inst.unreachable() == [0]
    assert exact_npcst(inst) == 1


def test_invalid_instance():
    with pytest.raises(ValueError):
        NPCSTInstance(line_metric(1), 0, (), -1)


def test_hit_profit_examples():
    inst = NPCSTInstance(line_metric(1, 1, 20), 0, (NPCSTClient(1, 2, 1), NPCSTClient(3, 3, 1)), 0)
    assert hit_profit([0], inst, 1.0) == ((0,), 2.0)
    assert hit_profit([], inst, 1.0) == ((), 0.0)
    far = NPCSTInstance(line_metric(50, 1), 0, (NPCSTClient(2, 1, 0.5),), 0)
    assert hit_profit([0], far, 1.0) == ((), 0.0)


@given(st.integers(0, 10**6), st.floats(1, 20))
def test_hit_profit_matches_scan(seed, sigma):
    rng = np.random.default_rng(seed)
    inst = random_npcst(rng, int(rng.integers(1, 9)), int(rng.integers(0, 6)))
    nodes = sorted(set(rng.integers(inst.metric.n, size=int(rng.integers(1, 4))).tolist()))
    hit, prof = hit_profit(nodes, inst, sigma)
    assert hit == scan_hits(inst, nodes, sigma)
    assert prof == pytest.approx(sum(inst.clients[i].profit for i in hit))


def test_transplant_examples():
    m = line_metric(3)
    hst = embed_once(m, 0)
    assert transplant_tree(hst, {hst.leaf_of[0]}, 0) == (0,)
    chosen = _close_upward(hst, {hst.leaf_of[1]}, hst.leaf_of[0])
    walk = transplant_tree(hst, chosen, 0)
    assert walk == (0, 1) and path_cost(m, walk) <= hst_cost(hst, chosen)


@given(st.integers(0, 10**6))
def test_transplant_within_twice_hst_cost(seed):
    rng = np.random.default_rng(seed)
    m = int_metric(rng, int(rng.integers(2, 10)))
    hst = embed_once(m, seed)
    root = int(rng.integers(m.n))
    picks = {hst.leaf_of[int(u)] for u in rng.integers(m.n, size=3)}
    chosen = _close_upward(hst, picks, hst.leaf_of[root])
    walk = transplant_tree(hst, chosen, root)
    assert walk[0] == root
    spanned = set().union(*(hst.members[v] for v in picks)) | {root}
    assert spanned <= set(walk)
    assert path_cost(m, walk) <= 2 * hst_cost(hst, chosen) + 1e-9


def test_tri_criteria_against_oracle():
    rng = np.random.default_rng(4)
    for _ in range(25):
        inst = random_npcst(rng, int(rng.integers(2, 9)), int(rng.integers(1, 5)))
        sol = solve_npcst_general(inst, A=4)
        sigma, phi = factors(inst.metric.n, 4)
        assert sol.profit >= exact_npcst(inst) / 2 - 1e-9
        assert sol.cost <= phi * inst.budget + 1e-9
        assert sol.sigma_meas <= sigma
        assert sol.hit == scan_hits(inst, sol.nodes, sol.sigma)


def test_deterministic():
    inst = random_npcst(np.random.default_rng(9), 8, 4)
    a, b = solve_npcst_general(inst, seed=3), solve_npcst_general(inst, seed=3)
    assert (a.nodes, a.profit, a.cost) == (b.nodes, b.profit, b.cost)
