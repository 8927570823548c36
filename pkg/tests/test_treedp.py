from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from movrep.treedp import (RootedTree, STSCSTInstance, TableTooLarge, TreeClient, binarize, knapsack_max,
                           real_service, solve_stscst, solve_tscst, subtree_cost)

from brute import knapsack_brute, random_stscst, random_tree, stscst_exact, tscst_exact


def test_binarize_binary_unchanged():
    t = RootedTree([-1, 0, 0, 1], [0, 1, 2, 3])
    b, origin = binarize(t)
    assert b.parent == t.parent and b.cost == t.cost and origin == [0, 1, 2, 3]


def test_binarize_star():
    star = RootedTree([-1, 0, 0, 0, 0], [0, 1, 2, 3, 4])
    b, origin = binarize(star)
    assert max(len(c) for c in b.children) == 2
    assert sum(len(c) == 2 for c in b.children) == 3  # full binary tree over 4 leaves
    dummies = [v for v, o in enumerate(origin) if o == -1]
    assert len(dummies) == 2 and all(b.cost[v] == 0 for v in dummies)
    assert [b.cost[v] for v in range(1, 5)] == [1, 2, 3, 4]


@given(st.integers(0, 10**6))
def test_binarize_preserves_optimum(seed):
    rng = np.random.default_rng(seed)
    inst = random_stscst(rng, 9)
    b, origin = binarize(inst.tree)
    assert max((len(c) for c in b.children), default=0) <= 2
    same = STSCSTInstance(b, inst.clients, inst.B, inst.Bhat, inst.X)
    assert stscst_exact(same) == stscst_exact(inst)


def test_knapsack_examples():
    assert knapsack_max([], 5) == (0, [])
    assert knapsack_max([(2, 3), (3, 4)], 5) == (7, [0, 1])
    items = [(w, Fraction(v, 3)) for w, v in [(1, 2), (4, 7), (3, 3)]]
    val, chosen = knapsack_max(items, 4)
    assert val == Fraction(7, 3) and sum(items[i][0] for i in chosen) <= 4


@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 20)), max_size=12), st.integers(0, 40))
def test_knapsack_matches_brute(items, W):
    val, chosen = knapsack_max(items, W)
    assert val == knapsack_brute(items, W)
    assert sum(items[i][0] for i in chosen) <= W and sum(items[i][1] for i in chosen) == val


def test_stscst_examples():
    path = RootedTree([-1, 0], [0, 1])
    c = [TreeClient(1, 5, 1)]
    sol = solve_stscst(STSCSTInstance(path, c, 1, 0, 1))
    assert sol.nodes == {0, 1} and sol.profit == 5
    sol = solve_stscst(STSCSTInstance(path, c, 0, 0, 1))
    assert sol.nodes == {0} and sol.profit == 0


@given(st.integers(0, 10**6))
def test_stscst_matches_brute(seed):
    inst = random_stscst(np.random.default_rng(seed))
    sol = solve_stscst(inst)
    assert Fraction(sol.profit) == stscst_exact(inst)
    assert sol.cost <= inst.B and sol.scaled_service <= inst.Bhat
    assert 0 in sol.nodes and subtree_cost(inst.tree, sol.nodes) == sol.cost


@given(st.integers(0, 10**6), st.integers(0, 12), st.integers(0, 12), st.integers(0, 10), st.integers(0, 10))
def test_stscst_monotone(seed, b1, b2, h1, h2):
    inst = random_stscst(np.random.default_rng(seed), 7)
    lo = STSCSTInstance(inst.tree, inst.clients, min(b1, b2), min(h1, h2), inst.X)
    hi = STSCSTInstance(inst.tree, inst.clients, max(b1, b2), max(h1, h2), inst.X)
    assert solve_stscst(lo).profit <= solve_stscst(hi).profit


def test_table_cap():
    t = random_tree(np.random.default_rng(0), 6)
    with pytest.raises(TableTooLarge):
        solve_stscst(STSCSTInstance(t, [TreeClient(1, 1, 1)], 500, 500, 1), cell_cap=1000)


def test_tscst_client_at_root():
    t = RootedTree([-1, 0], [0, 3])
    sol = solve_tscst(t, [TreeClient(0, 4, 1)], 0, 1, eps=1)
    assert sol.profit == 4 and sol.service == 0


def test_tscst_zero_budget_mode():
    t = RootedTree([-1, 0], [0, 2])
    sol = solve_tscst(t, [TreeClient(1, 4, 1), TreeClient(0, 1, 1)], 2, 0, eps=0.5)
    assert sol.profit == 5 and sol.service == 0


def test_tscst_against_brute():
    rng = np.random.default_rng(50)
    for _ in range(50):
        n = int(rng.integers(1, 8))
        tree = random_tree(rng, n)
        clients = [TreeClient(int(rng.integers(n)), int(rng.integers(1, 6)), int(rng.integers(1, 4)))
                   for _ in range(int(rng.integers(1, 5)))]
        B, Bp, eps = int(rng.integers(0, 8)), Fraction(int(rng.integers(0, 12)), 2), [0.25, 0.5, 1.0][_ % 3]
        sol = solve_tscst(tree, clients, B, float(Bp), eps)
        assert Fraction(sol.profit) >= tscst_exact(tree, clients, B, Bp)
        assert sol.service <= float(Bp) * (1 + eps) + 1e-9
        assert sol.service == pytest.approx(real_service(tree, clients, sol.nodes, sol.served))
