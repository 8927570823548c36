"""Tri-criteria neighborhood prize-collecting Steiner tree in general metrics.

For every sampled dominating tree and every service budget ``2^j`` a total
service cost Steiner tree problem is solved exactly on the tree (length bound
``4 A log n L``).  Each tree solution is transplanted back to the metric along
the Euler order of its leaves, and the candidate hitting the most profit within
radius-stretch ``16 A log n`` wins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence


from .frt import DominatingTree, default_count, sample_distribution
from .model import MetricSpace
from .treedp import RootedTree, TreeClient, solve_tscst

HIT_TOL = 1e-9
DEFAULT_A = 4.0
DEFAULT_RESOLUTION = 16


@dataclass(frozen=True)
class NPCSTClient:
    location: int
    profit: float
    radius: float


@dataclass(frozen=True)
class NPCSTInstance:
    metric: MetricSpace
    root: int
    clients: tuple[NPCSTClient, ...]
    budget: float

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("budget must be non-negative")
        for c in self.clients:
            if c.profit < 0 or c.radius < 0:
                raise ValueError("client profits and radii must be non-negative")

    def ball_distance(self, c: NPCSTClient) -> float:
        """Distance from the root to the client's ball (0 if the ball holds the root)."""
        return max(0.0, float(self.metric.array[self.root, c.location]) - c.radius)

    def unreachable(self) -> list[int]:
        """Clients whose ball cannot be touched by any tree of cost <= budget."""
        d = self.metric.array
        out = []
        for i, c in enumerate(self.clients):
            near = d[c.location] <= c.radius * (1 + HIT_TOL) + HIT_TOL
            near[c.location] = True
            if d[self.root][near].min() > self.budget * (1 + HIT_TOL) + HIT_TOL:
                out.append(i)
        return out


@dataclass
class TriCriteriaSolution:
    nodes: tuple[int, ...]  # metric nodes in walk order, root first
    edges: tuple[tuple[int, int], ...]
    cost: float
    profit: float
    hit: tuple[int, ...]
    sigma: float
    sigma_meas: float
    phi_meas: float
    info: dict = field(default_factory=dict)


def log_n(n: int) -> float:
    """``log2 n`` clamped at 1 so the factors stay meaningful for n <= 2."""
    return max(1.0, math.log2(max(n, 2)))


def factors(n: int, A: float = DEFAULT_A) -> tuple[float, float]:
    """Declared ``(sigma, phi)`` for an n-node metric."""
    return 16.0 * A * log_n(n), 8.0 * A * log_n(n)


def hit_profit(nodes: Sequence[int], instance: NPCSTInstance, sigma: float) -> tuple[tuple[int, ...], float]:
    """Clients with some tree node within ``sigma * t_c`` of their location."""
    if not len(nodes):
        return (), 0.0
    d = instance.metric.array
    idx = list(nodes)
    hit = []
    for i, c in enumerate(instance.clients):
        near = d[c.location, idx].min()
        if near <= sigma * c.radius * (1 + HIT_TOL) + HIT_TOL * (c.radius > 0):
            hit.append(i)
        elif near == 0:
            hit.append(i)
    return tuple(hit), float(sum(instance.clients[i].profit for i in hit))


def stretch(nodes: Sequence[int], instance: NPCSTInstance, clients: Sequence[int]) -> float:
    """Max over ``clients`` of dist(location, nodes) / t_c."""
    d = instance.metric.array
    worst = 0.0
    for i in clients:
        c = instance.clients[i]
        near = float(d[c.location, list(nodes)].min())
        if near > 0:
            worst = max(worst, near / c.radius if c.radius > 0 else math.inf)
    return worst


def path_cost(metric: MetricSpace, nodes: Sequence[int]) -> float:
    d = metric.array
    return float(sum(d[a, b] for a, b in zip(nodes, nodes[1:])))


# ---------------------------------------------------------------- HST plumbing


@dataclass
class HSTView:
    """An HST rerooted at the root's leaf, pruned to client-relevant vertices.

    ``tree`` is the compressed rooted tree used by the DP; ``vertex[i]`` is the
    HST vertex that DP node ``i`` stands for.
    """

    tree: RootedTree
    vertex: list[int]
    where: dict  # HST vertex -> DP node


def hst_view(hst: DominatingTree, root_leaf: int, keep: set[int], unit: float) -> HSTView:
    """Reroot at ``root_leaf``, keep only paths to ``keep`` vertices, merge unary chains.

    Edge costs are rounded up to multiples of ``unit`` (or 0/1 when ``unit`` is 0).
    """
    size = hst.size
    adj: list[list[tuple[int, float]]] = [[] for _ in range(size)]
    for v, p in enumerate(hst.parent):
        if p >= 0:
            w = float(hst.edge[v])
            adj[v].append((p, w))
            adj[p].append((v, w))
    par = [-2] * size
    plen = [0.0] * size
    par[root_leaf] = -1
    order = [root_leaf]
    for u in order:
        for v, w in sorted(adj[u]):
            if par[v] == -2:
                par[v] = u
                plen[v] = w
                order.append(v)
    needed = set()
    for v in keep:
        while v >= 0 and v not in needed:
            needed.add(v)
            v = par[v]
    kids: dict[int, list[int]] = {v: [] for v in needed}
    for v in order:
        if v in needed and par[v] >= 0:
            kids[par[v]].append(v)
    # compress: a vertex with one child that is not itself a kept vertex is spliced out
    vertex, parent, length = [root_leaf], [-1], [0.0]
    where = {root_leaf: 0}
    stack = [(c, 0, plen[c]) for c in reversed(kids[root_leaf])]
    while stack:
        v, p_dp, acc = stack.pop()
        if len(kids[v]) == 1 and v not in keep:
            (c,) = kids[v]
            stack.append((c, p_dp, acc + plen[c]))
            continue
        vertex.append(v)
        parent.append(p_dp)
        length.append(acc)
        me = len(vertex) - 1
        where[v] = me
        for c in reversed(kids[v]):
            stack.append((c, me, plen[c]))
    if unit > 0:
        cost = [0] + [int(math.ceil(x / unit - 1e-9)) for x in length[1:]]
    else:
        cost = [0] + [0 if x == 0 else 1 for x in length[1:]]
    return HSTView(RootedTree(parent, cost, 0, length), vertex, where)


def transplant_tree(hst: DominatingTree, chosen: set[int], root: int) -> tuple[int, ...]:
    """Metric walk through the leaves of an HST subtree, in Euler order from ``root``.

    ``chosen`` is a connected set of HST vertices containing ``root``'s leaf.
    Consecutive leaves are joined directly; by domination each hop costs no more
    than its tree path, so the walk costs at most twice the subtree.
    """
    start = hst.leaf_of[root]
    adj: dict[int, list[int]] = {v: [] for v in chosen}
    for v in chosen:
        p = hst.parent[v]
        if p in chosen:
            adj[v].append(p)
            adj[p].append(v)
    leaves = {hst.leaf_of[u] for u in range(len(hst.leaf_of))}
    seen, out, stack = set(), [], [start]
    while stack:
        v = stack.pop()
        if v in seen:
            continue
        seen.add(v)
        if v in leaves:
            members = sorted(hst.members[v])
            if root in members:
                members.remove(root)
                members.insert(0, root)
            out.extend(members)
        stack.extend(sorted(adj[v], reverse=True))
    return tuple(out)


def hst_cost(hst: DominatingTree, chosen: set[int]) -> float:
    return float(sum(hst.edge[v] for v in chosen if hst.parent[v] in chosen))


@lru_cache(maxsize=64)
def _distribution(metric: MetricSpace, count: int, seed: int):
    return sample_distribution(metric, count, seed)


def service_grid(instance: NPCSTInstance, A: float, spread: int = 12) -> list[float]:
    """Service budgets ``2^j`` bracketing ``4 A log n OPT`` for OPT in [min theta, sum theta]."""
    profits = [c.profit for c in instance.clients if c.profit > 0]
    if not profits:
        return [1.0]
    scale = 4.0 * A * log_n(instance.metric.n)
    hi = math.ceil(math.log2(scale * sum(profits))) + 1
    lo = max(math.floor(math.log2(scale * min(profits))), hi - spread)
    return [2.0**j for j in range(lo, hi + 1)]


def solve_npcst_general(instance: NPCSTInstance, A: float = DEFAULT_A, eps: float = 0.5, seed: int = 0,
                        count: int | None = None, resolution: int = DEFAULT_RESOLUTION) -> TriCriteriaSolution:
    metric = instance.metric
    n = metric.n
    sigma, phi = factors(n, A)
    L = float(instance.budget)
    root = instance.root
    count = default_count(n) if count is None else count
    dist = _distribution(metric, count, seed)
    length_bound = 4.0 * A * log_n(n) * L
    unit = length_bound / resolution if length_bound > 0 else 0.0
    B = resolution if length_bound > 0 else 0

    active = [i for i, c in enumerate(instance.clients) if c.profit > 0]
    best_nodes: tuple[int, ...] = (root,)
    best_hit, best_profit = hit_profit(best_nodes, instance, sigma)
    best_key = (best_profit, 0.0)
    info = {"trees": count, "budgets": 0, "selected": None}
    if active:
        budgets = service_grid(instance, A)
        info["budgets"] = len(budgets)
        for ti, hst in enumerate(dist.trees):
            keep = {hst.leaf_of[instance.clients[i].location] for i in active}
            view = hst_view(hst, hst.leaf_of[root], keep, unit)
            tclients = [TreeClient(view.where[hst.leaf_of[instance.clients[i].location]],
                                   instance.clients[i].profit, instance.clients[i].radius) for i in active]
            tried = set()
            for budget in [0.0] + budgets:
                sol = solve_tscst(view.tree, tclients, B, budget, eps)
                key = sol.nodes
                if key in tried:
                    continue
                tried.add(key)
                chosen = {view.vertex[v] for v in sol.nodes}
                # re-expand spliced chains so ``chosen`` is connected in the HST
                chosen = _close_upward(hst, chosen, hst.leaf_of[root])
                walk = transplant_tree(hst, chosen, root)
                hit, prof = hit_profit(walk, instance, sigma)
                cst = path_cost(metric, walk)
                cand = (prof, -cst)
                if cand > best_key:
                    best_key, best_nodes, best_hit, best_profit = cand, walk, hit, prof
                    info["selected"] = (ti, budget)
    cost = path_cost(metric, best_nodes)
    edges = tuple(zip(best_nodes, best_nodes[1:]))
    return TriCriteriaSolution(
        best_nodes, edges, cost, best_profit, best_hit, sigma,
        stretch(best_nodes, instance, best_hit),
        cost / L if L > 0 else (0.0 if cost == 0 else math.inf),
        info,
    )


def _close_upward(hst: DominatingTree, chosen: set[int], root_leaf: int) -> set[int]:
    """Add the HST path from every chosen vertex to the root leaf."""
    anc_root = []
    v = root_leaf
    while v >= 0:
        anc_root.append(v)
        v = hst.parent[v]
    on_root = set(anc_root)
    out = set()
    for v in chosen:
        while v not in on_root and v not in out:
            out.add(v)
            v = hst.parent[v]
        # v is now on the root's ancestor chain (or already handled)
        if v in on_root:
            for a in anc_root:
                out.add(a)
                if a == v:
                    break
    out.add(root_leaf)
    return out
