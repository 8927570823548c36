"""Exhaustive solvers used as ground truth on small instances.

Sum-MR / Max-MR search runs over per-repairman visit orders.  Under indirect
service only each node's first visit matters, and travelling a visit order at
full speed makes every first visit as early as possible, so one full-speed
permutation of all non-depot nodes per repairman covers every optimum.  The
falsification harness ``brute_sum_mr_walks`` checks that claim against
non-simple sequences on tiny instances.

Results can be cached on disk: one JSON file per (oracle, instance hash) in
``cache_dir``, holding ``{"oracle": name, "key": sha256, "value": float}``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import Instance, Schedule, Walk, mst_weight


class OracleCapExceeded(ValueError):
    pass


@dataclass(frozen=True)
class OracleBudget:
    nodes: int = 6
    clients: int = 4
    repairmen: int = 2
    walk_length: int | None = None  # visits per walk; None means n + 2
    seconds: float | None = None

    def check(self, instance: Instance) -> None:
        if instance.n > self.nodes:
            raise OracleCapExceeded(f"{instance.n} nodes > cap {self.nodes}")
        if instance.m > self.clients:
            raise OracleCapExceeded(f"{instance.m} clients > cap {self.clients}")
        if instance.k > self.repairmen:
            raise OracleCapExceeded(f"{instance.k} repairmen > cap {self.repairmen}")
        limit = instance.n + 2 if self.walk_length is None else self.walk_length
        if limit < instance.n:
            raise OracleCapExceeded("walk-length cap is below the node count")


@dataclass
class OracleResult:
    value: float
    schedule: Schedule | None = None


def instance_key(instance: Instance, tag: str = "") -> str:
    """Stable hash of the exact instance data."""
    parts = [tag, "n", str(instance.n)]
    parts += [str(v) for row in instance.metric.dist for v in row]
    parts += [f"r{r.depot}:{r.speed}" for r in instance.repairmen]
    parts += [f"c{c.start}:{c.speed}" for c in instance.clients]
    return hashlib.sha256("|".join(parts).encode()).hexdigest()


def _cached(cache_dir, name, instance, compute):
    if cache_dir is None:
        return compute()
    key = instance_key(instance, name)
    path = Path(cache_dir) / f"{name}-{key[:32]}.json"
    if path.exists():
        rec = json.loads(path.read_text())
        if rec.get("key") == key:
            return OracleResult(rec["value"])
    res = compute()
    os.makedirs(cache_dir, exist_ok=True)
    path.write_text(json.dumps({"oracle": name, "key": key, "value": res.value}, sort_keys=True))
    return res


def _visit_times(instance: Instance, r: int) -> tuple[list[tuple[int, ...]], np.ndarray]:
    """All full-speed permutations for repairman r and their first-visit times."""
    d = instance.metric.array
    rep = instance.repairmen[r]
    others = [u for u in range(instance.n) if u != rep.depot]
    perms = list(itertools.permutations(others))
    times = np.empty((len(perms), instance.n))
    v = float(rep.speed)
    for i, p in enumerate(perms):
        seq = (rep.depot,) + p
        steps = d[list(seq[:-1]), list(seq[1:])] if len(seq) > 1 else np.zeros(0)
        times[i, list(seq)] = np.concatenate([[0.0], np.cumsum(steps)]) / v
    return [(rep.depot,) + p for p in perms], times


def _search(instance: Instance, budget: OracleBudget, agg: str) -> OracleResult:
    budget.check(instance)
    if instance.m == 0:
        walks = tuple(Walk(r.id, (r.depot,), (0.0,), (0.0,)) for r in instance.repairmen)
        return OracleResult(0.0, Schedule(walks))
    start = time.monotonic()
    ct = instance.client_times  # m x n
    per = [_visit_times(instance, r) for r in range(instance.k)]
    best_val, best_idx = math.inf, None
    # iterate over all but the last repairman, vectorise over the last
    last_seqs, last_times = per[-1]
    for combo in itertools.product(*[range(len(p[0])) for p in per[:-1]]):
        if budget.seconds is not None and time.monotonic() - start > budget.seconds:
            raise OracleCapExceeded("oracle wall-clock cap exceeded")
        first = np.full(instance.n, np.inf)
        for r, i in enumerate(combo):
            first = np.minimum(first, per[r][1][i])
        F = np.minimum(first[None, :], last_times)  # P x n
        lat = np.maximum(F[:, None, :], ct[None, :, :]).min(axis=2)  # P x m
        vals = lat.sum(axis=1) if agg == "sum" else lat.max(axis=1)
        j = int(np.argmin(vals))
        if vals[j] < best_val - 1e-12:
            best_val, best_idx = float(vals[j]), combo + (j,)
    walks = []
    for r, i in enumerate(best_idx):
        walks.append(Walk.at_full_speed(instance.repairmen[r].id, per[r][0][i], instance.metric,
                                        instance.repairmen[r].speed))
    return OracleResult(best_val, Schedule(tuple(walks)))


def exact_sum_mr(instance: Instance, budget: OracleBudget = OracleBudget(), cache_dir=None) -> OracleResult:
    """Minimum total indirect latency and a witness schedule."""
    return _cached(cache_dir, "sum_mr", instance, lambda: _search(instance, budget, "sum"))


def exact_max_mr(instance: Instance, budget: OracleBudget = OracleBudget(), cache_dir=None) -> OracleResult:
    """Minimum makespan (latest client latency) under indirect service."""
    return _cached(cache_dir, "max_mr", instance, lambda: _search(instance, budget, "max"))


def brute_sum_mr_walks(instance: Instance, max_visits: int | None = None, agg: str = "sum") -> float:
    """Falsification harness: every (possibly repeating) sequence of up to ``max_visits`` nodes."""
    n = instance.n
    max_visits = n + 2 if max_visits is None else max_visits
    d = instance.metric.array
    ct = instance.client_times
    options = []
    for rep in instance.repairmen:
        rows = []
        for length in range(0, max_visits):
            for tail in itertools.product(range(n), repeat=length):
                seq = (rep.depot,) + tail
                if any(a == b for a, b in zip(seq, seq[1:])):
                    continue
                first = np.full(n, np.inf)
                t = 0.0
                first[rep.depot] = 0.0
                for a, b in zip(seq, seq[1:]):
                    t += d[a, b] / float(rep.speed)
                    first[b] = min(first[b], t)
                rows.append(first)
        options.append(np.unique(np.array(rows), axis=0))
    best = math.inf
    for combo in itertools.product(*[range(len(o)) for o in options]):
        first = np.min(np.stack([options[r][i] for r, i in enumerate(combo)]), axis=0)
        lat = np.maximum(first[None, :], ct).min(axis=1)
        val = lat.sum() if agg == "sum" else lat.max(initial=0.0)
        best = min(best, float(val))
    return best


# ------------------------------------------------------------------ Steiner


def dreyfus_wagner(d: np.ndarray, terminals: Sequence[int]) -> np.ndarray:
    """``dp[S, v]``: cheapest tree joining terminal subset S (bitmask) and node v.

    ``d`` must be a metric (shortest-path closed).
    """
    t = len(terminals)
    n = len(d)
    size = 1 << t
    dp = np.full((size, n), np.inf)
    dp[0] = 0.0
    for i, term in enumerate(terminals):
        dp[1 << i] = d[term]
    for S in range(1, size):
        if S & (S - 1) == 0:
            continue
        best = np.full(n, np.inf)
        sub = (S - 1) & S
        while sub:
            if sub < S ^ sub:  # each split once
                best = np.minimum(best, dp[sub] + dp[S ^ sub])
            sub = (sub - 1) & S
        dp[S] = (best[None, :] + d).min(axis=1)
    return dp


def steiner_cost(d: np.ndarray, nodes: Sequence[int]) -> float:
    nodes = sorted(set(nodes))
    if len(nodes) <= 1:
        return 0.0
    dp = dreyfus_wagner(d, nodes[1:])
    return float(dp[(1 << (len(nodes) - 1)) - 1, nodes[0]])


def _hits(instance, nodes) -> float:
    from .npcst import hit_profit

    return hit_profit(list(nodes), instance, 1.0)[1]


def exact_npcst(instance, method: str = "trees", node_cap: int = 10) -> float:
    """Best profit of a tree of cost <= L hitting unstretched balls.

    ``trees`` enumerates node sets containing the root (tree cost = MST of the
    set); ``steiner`` enumerates client subsets and hit nodes, pricing each
    terminal set with Dreyfus-Wagner.  They must agree.
    """
    n = instance.metric.n
    if n > node_cap:
        raise OracleCapExceeded(f"{n} nodes > cap {node_cap}")
    d = instance.metric.array
    L = float(instance.budget) * (1 + 1e-12) + 1e-12
    root = instance.root
    if method == "trees":
        others = [u for u in range(n) if u != root]
        best = 0.0
        for k in range(len(others) + 1):
            for combo in itertools.combinations(others, k):
                nodes = (root,) + combo
                if mst_weight(d, list(nodes)) <= L:
                    best = max(best, _hits(instance, nodes))
        return best
    if method != "steiner":
        raise ValueError(method)
    dp = dreyfus_wagner(d, list(range(n)))
    balls = []
    for c in instance.clients:
        near = np.flatnonzero(d[c.location] <= c.radius * (1 + 1e-9) + 1e-9)
        balls.append(sorted(set(near.tolist()) | {c.location}))
    best = 0.0
    m = len(instance.clients)
    for mask in range(1 << m):
        chosen = [i for i in range(m) if mask >> i & 1]
        profit = sum(instance.clients[i].profit for i in chosen)
        if profit <= best:
            continue
        for picks in itertools.product(*[balls[i] for i in chosen]):
            term = 0
            for u in set(picks) - {root}:
                term |= 1 << u
            cost = float(dp[term, root]) if term else 0.0
            if cost <= L:
                best = profit
                break
    return best


def exact_minmax_cover(d: np.ndarray, roots: Sequence[int], terminals: Sequence[int],
                       terminal_cap: int = 8) -> float:
    """Minimum over assignments of terminals to roots of the largest Steiner tree."""
    terms = sorted(set(terminals) - set(roots))
    if len(terms) > terminal_cap:
        raise OracleCapExceeded(f"{len(terms)} terminals > cap {terminal_cap}")
    if not terms:
        return 0.0
    dp = dreyfus_wagner(np.asarray(d, dtype=float), terms)
    size = 1 << len(terms)
    best = np.full(size, np.inf)
    best[0] = 0.0
    for r in roots:
        cost = dp[:, r]
        nxt = best.copy()
        for S in range(1, size):
            sub = S
            while True:
                # give ``sub`` to root r, the rest to earlier roots
                val = max(best[S ^ sub], cost[sub])
                if val < nxt[S]:
                    nxt[S] = val
                if sub == 0:
                    break
                sub = (sub - 1) & S
        best = nxt
    return float(best[size - 1])


def exact_bpcst(d: np.ndarray, profits: Sequence[float], root: int, budget: float,
                center_cap: int = 12) -> tuple[float, tuple[int, ...]]:
    """Max total profit of a root-containing node set whose MST fits the budget."""
    n = len(profits)
    if n > center_cap:
        raise OracleCapExceeded(f"{n} centers > cap {center_cap}")
    others = [u for u in range(n) if u != root]
    best, arg = float(profits[root]), (root,)
    lim = budget * (1 + 1e-12) + 1e-12
    for k in range(1, len(others) + 1):
        for combo in itertools.combinations(others, k):
            nodes = (root,) + combo
            val = float(sum(profits[u] for u in nodes))
            if val > best and mst_weight(d, list(nodes)) <= lim:
                best, arg = val, nodes
    return best, arg
