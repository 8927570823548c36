"""Random dominating 2-HSTs (FRT hierarchical decompositions).

Distances are normalised by the smallest positive distance ``dmin``.  Level
``i`` clusters have radius ``beta * 2^(i-1) * dmin`` and the edge from a
level ``i+1`` cluster down to a level ``i`` child has length ``2^(i+1) * dmin``.
Two nodes split at level ``i`` are within ``2^(i+2) * dmin`` of each other,
while their tree distance is ``2^(i+3) * dmin - 4 * dmin``, so every tree
dominates the metric.  Level 0 clusters are exactly the groups of nodes at
distance zero from one another; such a group shares one leaf vertex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .model import MetricSpace

BETA_BITS = 20


@dataclass(frozen=True)
class DominatingTree:
    """A rooted HST.  Vertex 0 is the top cluster; ``leaf_of[u]`` is metric node u's leaf."""

    parent: tuple[int, ...]
    level: tuple[int, ...]
    edge: tuple[Fraction, ...]  # length of the edge to the parent (0 for the root)
    members: tuple[frozenset, ...]
    leaf_of: tuple[int, ...]
    seed: int
    beta: Fraction

    @property
    def size(self) -> int:
        return len(self.parent)

    def children(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.parent]
        for v, p in enumerate(self.parent):
            if p >= 0:
                out[p].append(v)
        return out

    def depth(self, v: int) -> Fraction:
        total = Fraction(0)
        while self.parent[v] >= 0:
            total += self.edge[v]
            v = self.parent[v]
        return total

    def vertex_distance(self, a: int, b: int) -> Fraction:
        """Unique-path length between two tree vertices."""
        total = Fraction(0)
        while a != b:
            # lift the deeper (lower-level) vertex; ties lift both
            if self.level[a] < self.level[b]:
                total += self.edge[a]
                a = self.parent[a]
            elif self.level[b] < self.level[a]:
                total += self.edge[b]
                b = self.parent[b]
            else:
                total += self.edge[a] + self.edge[b]
                a, b = self.parent[a], self.parent[b]
        return total

    def distance_matrix(self) -> np.ndarray:
        n = len(self.leaf_of)
        out = np.zeros((n, n))
        for u in range(n):
            for v in range(u + 1, n):
                out[u, v] = out[v, u] = float(tree_distance(self, u, v))
        return out


def tree_distance(tree: DominatingTree, u: int, v: int) -> Fraction:
    if not (0 <= u < len(tree.leaf_of) and 0 <= v < len(tree.leaf_of)):
        raise KeyError(f"unknown node id {u if not 0 <= u < len(tree.leaf_of) else v}")
    return tree.vertex_distance(tree.leaf_of[u], tree.leaf_of[v])


def embed_once(metric: MetricSpace, seed: int) -> DominatingTree:
    n = metric.n
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    beta = 1 + Fraction(int(rng.integers(0, 2**BETA_BITS)), 2**BETA_BITS)
    dmin = metric.min_positive()
    if dmin is None:
        # every node coincides: one cluster that is also the single leaf
        return DominatingTree((-1,), (0,), (Fraction(0),), (frozenset(range(n)),), (0,) * n, seed, beta)
    diam = max(max(row) for row in metric.dist)
    top = max(0, math.ceil(math.log2(diam / dmin))) + 1
    while Fraction(2) ** (top - 1) * dmin * beta < diam:
        top += 1
    d = metric.array
    rank = np.empty(n, dtype=int)
    rank[order] = np.arange(n)

    parent, level, edge, members = [-1], [top], [Fraction(0)], [frozenset(range(n))]
    frontier = [0]
    for i in range(top - 1, -1, -1):
        radius = float(beta * Fraction(2) ** (i - 1) * dmin) if i >= 1 else float(beta * dmin / 2)
        length = Fraction(2) ** (i + 1) * dmin
        nxt = []
        for c in frontier:
            pts = sorted(members[c])
            # each point joins the first center in permutation order within the radius
            within = d[np.ix_(order, pts)] <= radius * (1 + 1e-12)
            first = within.argmax(axis=0)
            groups: dict[int, list[int]] = {}
            for p, f in zip(pts, first):
                groups.setdefault(int(f), []).append(p)
            for f in sorted(groups):
                parent.append(c)
                level.append(i)
                edge.append(length)
                members.append(frozenset(groups[f]))
                nxt.append(len(parent) - 1)
        frontier = nxt
    leaf_of = [0] * n
    for v in frontier:
        for u in members[v]:
            leaf_of[u] = v
    return DominatingTree(tuple(parent), tuple(level), tuple(edge), tuple(members), tuple(leaf_of),
                          seed, beta)


@dataclass(frozen=True)
class TreeDistribution:
    trees: tuple[DominatingTree, ...]
    weights: tuple[float, ...]

    def expected_distance(self, u: int, v: int) -> float:
        return float(sum(w * float(tree_distance(t, u, v)) for t, w in zip(self.trees, self.weights)))

    def mean_distortion(self, metric: MetricSpace) -> float:
        """Mean over distinct-position pairs of E[d_T] / d."""
        d = metric.array
        n = metric.n
        acc = np.zeros((n, n))
        for t, w in zip(self.trees, self.weights):
            acc += w * t.distance_matrix()
        iu = np.triu_indices(n, 1)
        pos = d[iu] > 0
        if not pos.any():
            return 1.0
        return float(np.mean(acc[iu][pos] / d[iu][pos]))


def default_count(n: int) -> int:
    return max(1, 4 * math.ceil(n * math.log2(n))) if n > 1 else 1


def sample_distribution(metric: MetricSpace, count: int | None = None, seed: int = 0) -> TreeDistribution:
    """``count`` trees with seeds ``seed, seed+1, ...`` and uniform weights."""
    count = default_count(metric.n) if count is None else count
    if count < 1:
        raise ValueError("count must be at least 1")
    trees = tuple(embed_once(metric, seed + i) for i in range(count))
    return TreeDistribution(trees, (1.0 / count,) * count)


def check_domination(metric: MetricSpace, tree: DominatingTree) -> list[tuple[int, int]]:
    """Pairs with d_T < d, compared exactly over rationals."""
    bad = []
    for u in range(metric.n):
        for v in range(u + 1, metric.n):
            if tree_distance(tree, u, v) < metric.d(u, v):
                bad.append((u, v))
    return bad
