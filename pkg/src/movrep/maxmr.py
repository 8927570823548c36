"""Constant-factor Max-MR for equal-speed repairmen.

For a guessed horizon ``T`` every client gets the ball of radius ``v'_c T``.
Clients are tagged leader/slave in non-decreasing radius order, leader balls
are contracted to super-nodes, a rooted min-max tree cover over the contracted
metric is computed, and each tree is doubled, walked, and expanded back to the
original metric.  ``T`` is accepted when every walk has length ``<= 10 v T``;
a geometric bisection then finds the accepted ``T`` within ``1 + eps`` of the
largest rejected one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import networkx as nx
import numpy as np

from .model import Evaluation, Instance, Schedule, Walk, ball, evaluate_indirect, mst_weight

REL_TOL = 1e-9
SLAVE_STRETCH = 9.0
LEADER_GAP = 8.0
WALK_FACTOR = 10.0


def _le(a: float, b: float) -> bool:
    return a <= b + REL_TOL * max(1.0, abs(b))


# ---------------------------------------------------------------- clustering


@dataclass
class ClusterTagging:
    T: float
    radius: list[float]  # t_c per client
    balls: list[frozenset[int]]  # B(c, t_c)
    leaders: list[int]  # tagging order
    leader_of: dict[int, int]  # every client -> its leader (leaders map to themselves)

    @property
    def slaves(self) -> list[int]:
        return sorted(j for j, l in self.leader_of.items() if j != l)


def ball_gap(d: np.ndarray, a: frozenset[int], b: frozenset[int]) -> float:
    return float(d[np.ix_(sorted(a), sorted(b))].min())


def check_tagging(instance: Instance, tag: ClusterTagging) -> None:
    """Assert the tagging rules; raises AssertionError naming the broken rule."""
    d = instance.metric.array
    if sorted(tag.leader_of) != list(range(instance.m)):
        raise AssertionError("some client is untagged")
    radii = [tag.radius[j] for j in tag.leaders]
    if any(not _le(a, b) for a, b in zip(radii, radii[1:])):
        raise AssertionError("leaders not in non-decreasing radius order")
    for j, l in tag.leader_of.items():
        if j == l:
            continue
        if not _le(tag.radius[l], tag.radius[j]):
            raise AssertionError(f"slave {j} has smaller radius than leader {l}")
        if not ball(instance, j, SLAVE_STRETCH * tag.T) & tag.balls[l]:
            raise AssertionError(f"slave {j}: stretched ball misses leader {l}")
    for i, a in enumerate(tag.leaders):
        for b in tag.leaders[i + 1:]:
            gap = ball_gap(d, tag.balls[a], tag.balls[b])
            need = LEADER_GAP * max(tag.radius[a], tag.radius[b])
            if not gap >= need * (1 - REL_TOL) - REL_TOL:
                raise AssertionError(f"leader balls {a},{b} only {gap} apart (< {need})")


def cluster_neighborhoods(instance: Instance, T: float) -> ClusterTagging:
    if T < 0:
        raise ValueError("T must be non-negative")
    radius = [float(c.speed) * T for c in instance.clients]
    balls = [ball(instance, j, T) for j in range(instance.m)]
    stretched = [ball(instance, j, SLAVE_STRETCH * T) for j in range(instance.m)]
    order = sorted(range(instance.m), key=lambda j: (radius[j], j))
    leader_of: dict[int, int] = {}
    leaders: list[int] = []
    for j in order:
        if j in leader_of:
            continue
        leaders.append(j)
        leader_of[j] = j
        for i in order:
            if i not in leader_of and stretched[i] & balls[j]:
                leader_of[i] = j
    tag = ClusterTagging(T, radius, balls, leaders, leader_of)
    check_tagging(instance, tag)
    return tag


# --------------------------------------------------------------- contraction


def _closure(D: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Floyd-Warshall with a next-hop table (zero-length hops allowed)."""
    D = D.copy()
    N = len(D)
    nxt = np.tile(np.arange(N), (N, 1))
    for k in range(N):
        via = D[:, k, None] + D[None, k, :]
        better = via < D - REL_TOL * np.maximum(1.0, D)
        if better.any():
            D = np.where(better, via, D)
            nxt = np.where(better, nxt[:, k, None], nxt)
    return D, nxt


@dataclass
class Contraction:
    D: np.ndarray  # metric over super-nodes
    super_of: list[int]  # original node -> super-node
    members: list[tuple[int, ...]]
    radius: list[float]  # ball radius of the leader behind each super-node (0 for singletons)
    leader: list[int | None]
    link: dict  # (S, S') -> (a, b) member pair realising the direct distance
    nxt: np.ndarray  # next hop on a shortest contracted path

    @property
    def size(self) -> int:
        return len(self.members)

    def hop_nodes(self, S: int, S2: int) -> list[tuple[int, int]]:
        """Member pairs of the direct hops along the shortest path S -> S2."""
        out = []
        while S != S2:
            nx_ = int(self.nxt[S, S2])
            out.append(self.link[(S, nx_)])
            S = nx_
        return out


def contract_leaders(instance: Instance, tag: ClusterTagging) -> Contraction:
    d = instance.metric.array
    n = instance.n
    super_of = [-1] * n
    members: list[tuple[int, ...]] = []
    radius: list[float] = []
    leader: list[int | None] = []
    for j in tag.leaders:
        S = len(members)
        nodes = tuple(sorted(tag.balls[j]))
        for u in nodes:
            if super_of[u] != -1:
                raise AssertionError("leader balls overlap")
            super_of[u] = S
        members.append(nodes)
        radius.append(tag.radius[j])
        leader.append(j)
    for u in range(n):
        if super_of[u] == -1:
            super_of[u] = len(members)
            members.append((u,))
            radius.append(0.0)
            leader.append(None)
    N = len(members)
    D0 = np.zeros((N, N))
    link = {}
    for S in range(N):
        for S2 in range(N):
            if S == S2:
                continue
            block = d[np.ix_(members[S], members[S2])]
            a, b = np.unravel_index(int(np.argmin(block)), block.shape)
            D0[S, S2] = block[a, b]
            link[(S, S2)] = (members[S][a], members[S2][b])
    D, nxt = _closure(D0)
    return Contraction(D, super_of, members, radius, leader, link, nxt)


# ------------------------------------------------------------ min-max cover


@dataclass
class TreeCover:
    roots: tuple[int, ...]  # vertex per tree (duplicates allowed)
    edges: list[list[tuple[int, int]]]  # per tree, (parent, child) in the cover metric
    lengths: list[float]
    bound: float  # accepted guess B; every tree < 4B

    @property
    def max_length(self) -> float:
        return max(self.lengths, default=0.0)

    def vertices(self, r: int) -> set[int]:
        out = {self.roots[r]}
        for a, b in self.edges[r]:
            out.update((a, b))
        return out


def _split(children: dict, weight: dict, root: int, B: float):
    """Cut a rooted tree into pieces of weight in [B, 2B) plus a residual (< B) at the root."""
    pieces: list[list[tuple[int, int]]] = []
    carry: dict[int, tuple[list, float]] = {}
    order, stack = [], [root]
    while stack:
        v = stack.pop()
        order.append(v)
        stack.extend(children.get(v, []))
    for v in reversed(order):
        group, gw = [], 0.0
        for c in children.get(v, []):
            ce, cw = carry.pop(c)
            part, pw = ce + [(v, c)], cw + weight[(v, c)]
            if pw >= B:
                pieces.append(part)
                continue
            group += part
            gw += pw
            if gw >= B:
                pieces.append(group)
                group, gw = [], 0.0
        carry[v] = (group, gw)
    return pieces, carry[root][0]


def _cover_at(D: np.ndarray, roots: Sequence[int], terms: list[int], B: float):
    k = len(roots)
    to_root = D[np.ix_(terms, list(roots))]
    near = to_root.argmin(axis=1)
    # Prim over {rho} + terms using only edges <= B
    t = len(terms)
    best = to_root.min(axis=1)
    src = [-1] * t  # -1 means rho
    done = np.zeros(t, dtype=bool)
    children: dict[int, list[int]] = {}
    weight: dict[tuple[int, int], float] = {}
    attach: list[list[int]] = [[] for _ in range(k)]
    total = 0.0
    sub = D[np.ix_(terms, terms)]
    for _ in range(t):
        cand = np.where(done, np.inf, best)
        i = int(np.argmin(cand))
        if not cand[i] <= B:
            return None
        done[i] = True
        total += float(cand[i])
        if src[i] == -1:
            r = int(near[i])
            attach[r].append(i)
            weight[(("root", r), i)] = float(cand[i])
        else:
            children.setdefault(src[i], []).append(i)
            weight[(src[i], i)] = float(cand[i])
        upd = (~done) & (sub[i] < best)
        best = np.where(upd, sub[i], best)
        for jj in np.flatnonzero(upd):
            src[jj] = i
    if total > k * B * (1 + REL_TOL):
        return None
    residual, pieces = [], []
    for r in range(k):
        kids = dict(children)
        kids[("root", r)] = attach[r]
        pcs, res = _split(kids, weight, ("root", r), B)
        residual.append(res)
        pieces.extend(pcs)
    # each piece goes to a distinct root within distance B
    G = nx.Graph()
    left = [("p", i) for i in range(len(pieces))]
    G.add_nodes_from(left)
    G.add_nodes_from(("r", r) for r in range(k))
    links = {}
    for i, pc in enumerate(pieces):
        verts = sorted({x for e in pc for x in e if not isinstance(x, tuple)})
        for r in range(k):
            row = D[roots[r], [terms[v] for v in verts]] if verts else np.array([0.0])
            j = int(np.argmin(row))
            if row[j] <= B:
                G.add_edge(("p", i), ("r", r))
                links[(i, r)] = verts[j] if verts else None
    match = nx.bipartite.hopcroft_karp_matching(G, top_nodes=left) if pieces else {}
    if any(("p", i) not in match for i in range(len(pieces))):
        return None

    def real(x, r):
        return roots[x[1]] if isinstance(x, tuple) else terms[x]

    edges, lengths = [], []
    for r in range(k):
        es = [(real(a, r), real(b, r)) for a, b in residual[r]]
        for i in range(len(pieces)):
            if match.get(("p", i)) == ("r", r):
                v = links[(i, r)]
                es.append((roots[r], terms[v]))
                es += [(real(a, r), real(b, r)) for a, b in pieces[i]]
        es = [(a, b) for a, b in es if a != b]
        edges.append(es)
        lengths.append(float(sum(D[a, b] for a, b in es)))
    return edges, lengths


def minmax_k_tree_cover(D: np.ndarray, roots: Sequence[int], terminals: Sequence[int],
                        iters: int = 64) -> TreeCover:
    """Rooted min-max tree cover by bound guessing, MST splitting and matching.

    For a guess ``B`` either every tree is shorter than ``4B`` or ``B`` is
    rejected; a bisection finds the smallest accepted guess to relative
    precision ``2^-iters``.
    """
    D = np.asarray(D, dtype=float)
    roots = tuple(int(r) for r in roots)
    if not roots:
        raise ValueError("need at least one root")
    terms = sorted(set(int(t) for t in terminals) - set(roots))
    if not terms:
        return TreeCover(roots, [[] for _ in roots], [0.0] * len(roots), 0.0)
    hi = max(mst_weight(D, list(set(roots)) + terms), float(D[np.ix_(roots, terms)].max()))
    res = _cover_at(D, roots, terms, hi)
    while res is None:
        hi *= 2
        res = _cover_at(D, roots, terms, hi)
    lo = 0.0
    for _ in range(iters):
        if hi - lo <= REL_TOL * hi:
            break
        mid = (lo + hi) / 2
        got = _cover_at(D, roots, terms, mid)
        if got is None:
            lo = mid
        else:
            hi, res = mid, got
    edges, lengths = res
    return TreeCover(roots, edges, lengths, hi)


# -------------------------------------------------------------- expansion


def euler_walk(root: int, edges: Sequence[tuple[int, int]]) -> list[int]:
    """Closed walk traversing each tree edge twice, starting and ending at ``root``."""
    adj: dict[int, list[int]] = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    out = [root]
    seen = {root}

    def visit(v):
        for w in sorted(adj.get(v, [])):
            if w not in seen:
                seen.add(w)
                out.append(w)
                visit(w)
                out.append(v)

    visit(root)
    return out


@dataclass
class ExpandedWalk:
    nodes: list[int]
    length: float
    doubled: float  # length of the doubled contracted tree
    extras: list[tuple[int, int, int, float]]  # (a, b, super-node, length)


def expand_and_reconnect(cover: TreeCover, con: Contraction, instance: Instance) -> list[ExpandedWalk]:
    d = instance.metric.array
    out = []
    for r, rep in enumerate(instance.repairmen):
        tour = euler_walk(cover.roots[r], cover.edges[r])
        nodes = [rep.depot]
        extras = []
        doubled = 0.0

        def step_to(a):
            prev = nodes[-1]
            if prev != a:
                S = con.super_of[a]
                if con.super_of[prev] != S:
                    raise AssertionError("walk jumps between super-nodes without a hop")
                extras.append((prev, a, S, float(d[prev, a])))
                nodes.append(a)

        for S, S2 in zip(tour, tour[1:]):
            doubled += float(con.D[S, S2])
            for a, b in con.hop_nodes(S, S2):
                step_to(a)
                nodes.append(b)
        step_to(rep.depot)
        for a, b, S, w in extras:
            if not _le(w, 2 * con.radius[S]):
                raise AssertionError(f"extra edge {a}-{b} of length {w} exceeds twice the ball radius")
        length = float(sum(d[a, b] for a, b in zip(nodes, nodes[1:])))
        out.append(ExpandedWalk(nodes, length, doubled, extras))
    return out


# ----------------------------------------------------------------- solver


@dataclass
class Probe:
    T: float
    accepted: bool
    tagging: ClusterTagging
    contraction: Contraction
    cover: TreeCover
    walks: list[ExpandedWalk]


@dataclass
class MaxMRResult:
    T: float
    schedule: Schedule
    evaluation: Evaluation
    lower_bound: float
    probes: list[tuple[float, bool]]
    final: Probe
    info: dict = field(default_factory=dict)

    @property
    def max_latency(self) -> float:
        return self.evaluation.maximum


def common_speed(instance: Instance) -> float:
    speeds = {r.speed for r in instance.repairmen}
    if len(speeds) != 1:
        raise ValueError(f"Max-MR needs all repairmen at one speed, got {sorted(map(str, speeds))}")
    return float(speeds.pop())


def probe(instance: Instance, T: float) -> Probe:
    v = common_speed(instance)
    tag = cluster_neighborhoods(instance, T)
    con = contract_leaders(instance, tag)
    roots = [con.super_of[rep.depot] for rep in instance.repairmen]
    terms = sorted({con.super_of[next(iter(tag.balls[j]))] for j in tag.leaders})
    cover = minmax_k_tree_cover(con.D, roots, terms)
    walks = expand_and_reconnect(cover, con, instance)
    limit = WALK_FACTOR * v * T
    ok = all(_le(w.length, limit) for w in walks)
    return Probe(T, ok, tag, con, cover, walks)


def latency_lower_bound(instance: Instance) -> float:
    """max_c min_u max(time for the nearest depot to reach u, time for c to reach u)."""
    v = common_speed(instance)
    d = instance.metric.array
    reach = d[[r.depot for r in instance.repairmen]].min(axis=0) / v
    if instance.m == 0:
        return 0.0
    return float(np.maximum(instance.client_times, reach[None, :]).min(axis=1).max())


def _schedule(instance: Instance, pr: Probe) -> Schedule:
    return Schedule(tuple(Walk.at_full_speed(rep.id, w.nodes, instance.metric, rep.speed)
                          for rep, w in zip(instance.repairmen, pr.walks)))


def solve_max_mr(instance: Instance, eps: float = 0.5, max_doublings: int = 64) -> MaxMRResult:
    if eps <= 0:
        raise ValueError("eps must be positive")
    v = common_speed(instance)
    lb = latency_lower_bound(instance)
    log: list[tuple[float, bool]] = []

    def run(T):
        pr = probe(instance, T)
        log.append((T, pr.accepted))
        return pr

    if lb == 0:
        best = run(0.0)
        if not best.accepted:
            raise AssertionError("zero-latency instance rejected at T = 0")
    else:
        best = run(lb)
        if not best.accepted:
            top = max(lb, 2.0 * instance.metric.mst_weight() / v)
            N = max(1, math.ceil(math.log(top / lb) / math.log1p(eps)))
            hi_pr = run(lb * (1 + eps) ** N)
            extra = 0
            while not hi_pr.accepted:
                extra += 1
                if extra > max_doublings:
                    raise AssertionError("no accepted horizon found")
                N += 1
                hi_pr = run(lb * (1 + eps) ** N)
            lo, hi = 0, N
            while hi - lo > 1:
                mid = (lo + hi) // 2
                pr = run(lb * (1 + eps) ** mid)
                if pr.accepted:
                    hi, hi_pr = mid, pr
                else:
                    lo = mid
            best = hi_pr
    T = best.T
    schedule = _schedule(instance, best)
    ev = evaluate_indirect(instance, schedule)
    # every leader ball is touched, and nobody waits past 10 T
    on_walk = set().union(*(w.nodes for w in best.walks))
    for j in best.tagging.leaders:
        if not best.tagging.balls[j] & on_walk:
            raise AssertionError(f"leader {j}'s ball is not visited")
    if not _le(ev.maximum, WALK_FACTOR * T):
        raise AssertionError(f"max latency {ev.maximum} exceeds {WALK_FACTOR} T = {WALK_FACTOR * T}")
    rejected = [t for t, ok in log if not ok]
    info = {"speed": v, "largest_rejected": max(rejected, default=None),
            "walk_lengths": [w.length for w in best.walks], "cover_bound": best.cover.bound,
            "cover_max": best.cover.max_length}
    return MaxMRResult(T, schedule, ev, lb, log, best, info)
