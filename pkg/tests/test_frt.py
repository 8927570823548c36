from __future__ import annotations

import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from movrep.frt import (check_domination, default_count, embed_once, sample_distribution, tree_distance)
from movrep.model import MetricSpace

from conftest import int_metric, point_metric


def test_single_node():
    t = embed_once(MetricSpace.from_matrix([[0]]), 0)
    assert t.size == 1 and tree_distance(t, 0, 0) == 0


def test_two_nodes_dominate():
    m = MetricSpace.from_matrix([[0, 1], [1, 0]])
    for seed in range(20):
        dt = tree_distance(embed_once(m, seed), 0, 1)
        assert 1 <= dt <= 4 * 8  # a handful of levels above dmin = diameter = 1


def test_zero_distance_nodes_share_leaf():
    m = MetricSpace.from_matrix([[0, 0, 2], [0, 0, 2], [2, 2, 0]])
    t = embed_once(m, 1)
    assert t.leaf_of[0] == t.leaf_of[1] != t.leaf_of[2]
    assert check_domination(m, t) == []


def test_unknown_node():
    t = embed_once(MetricSpace.from_matrix([[0, 1], [1, 0]]), 0)
    with pytest.raises(KeyError):
        tree_distance(t, 0, 5)


def test_domination_over_many_seeds():
    m = int_metric(np.random.default_rng(0), 8)
    d = m.array
    ratio = np.full((8, 8), np.inf)
    for seed in range(200):
        t = embed_once(m, seed)
        assert check_domination(m, t) == []
        ratio = np.minimum(ratio, t.distance_matrix() / np.where(d > 0, d, 1))
    iu = np.triu_indices(8, 1)
    assert (ratio[iu] >= 1).all()


def _explicit_graph(t):
    g = nx.Graph()
    for v, p in enumerate(t.parent):
        g.add_node(v)
        if p >= 0:
            g.add_edge(v, p, weight=t.edge[v])
    return g


@given(st.integers(1, 9), st.integers(0, 10**6))
def test_tree_distance_matches_shortest_paths(n, seed):
    rng = np.random.default_rng(seed)
    m = point_metric(rng, n)
    t = embed_once(m, seed)
    g = _explicit_graph(t)
    assert nx.is_tree(g)
    sp = dict(nx.all_pairs_dijkstra_path_length(g))
    for u in range(n):
        for v in range(n):
            assert tree_distance(t, u, v) == sp[t.leaf_of[u]][t.leaf_of[v]]


@given(st.integers(2, 9), st.integers(0, 10**6))
def test_two_hst_and_domination(n, seed):
    rng = np.random.default_rng(seed)
    m = int_metric(rng, n)
    t = embed_once(m, seed)
    assert check_domination(m, t) == []
    for v, p in enumerate(t.parent):
        if p > 0:  # both edges exist
            assert t.edge[p] == 2 * t.edge[v]
            assert t.level[p] == t.level[v] + 1
    # leaves sit at level 0
    assert {t.level[t.leaf_of[u]] for u in range(n)} == {0}


def test_distribution_determinism_and_count():
    m = point_metric(np.random.default_rng(4), 6)
    a = sample_distribution(m, 5, seed=3)
    b = sample_distribution(m, 5, seed=3)
    assert a == b
    one = sample_distribution(m, 1, seed=7)
    assert one.trees == (embed_once(m, 7),) and one.weights == (1.0,)
    assert math.isclose(sum(a.weights), 1.0)
    assert default_count(8) == 4 * 8 * 3


def test_distortion_sixteen_nodes():
    m = point_metric(np.random.default_rng(16), 16)
    dist = sample_distribution(m, 100, seed=0)
    assert dist.mean_distortion(m) <= 8 * math.log(16)
