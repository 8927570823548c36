"""Instances, walks, schedules and the two service semantics.

Distances are stored as exact rationals; every algorithm reads the float view
``MetricSpace.array``.  Times inside schedules are floats and all schedule
checks use the relative tolerance ``TOL``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

TOL = 1e-9
UNSERVED = math.inf


class ScheduleError(ValueError):
    """A schedule violates a timing or collocation requirement."""


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(float(x))


def leq(a: float, b: float) -> bool:
    """``a <= b`` up to the schedule tolerance."""
    return a <= b + TOL * max(1.0, abs(a), abs(b))


@dataclass(frozen=True)
class MetricSpace:
    dist: tuple[tuple[Fraction, ...], ...]
    coords: tuple[tuple[float, float], ...] | None = None

    @classmethod
    def from_matrix(cls, rows, coords=None) -> "MetricSpace":
        mat = tuple(tuple(as_fraction(v) for v in row) for row in rows)
        if any(len(row) != len(mat) for row in mat):
            raise ValueError("distance matrix must be square")
        return cls(mat, None if coords is None else tuple((float(x), float(y)) for x, y in coords))

    @classmethod
    def from_points(cls, points) -> "MetricSpace":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        diff = pts[:, None, :] - pts[None, :, :]
        d = np.sqrt((diff**2).sum(axis=2))
        d = np.minimum(d, d.T)
        np.fill_diagonal(d, 0.0)
        return cls.from_matrix(d.tolist(), coords=pts.tolist())

    @property
    def n(self) -> int:
        return len(self.dist)

    @property
    def euclidean(self) -> bool:
        return self.coords is not None

    @cached_property
    def array(self) -> np.ndarray:
        a = np.array([[float(v) for v in row] for row in self.dist], dtype=float)
        a.setflags(write=False)
        return a

    def d(self, u: int, v: int) -> Fraction:
        return self.dist[u][v]

    def scaled(self, factor: Fraction) -> "MetricSpace":
        factor = as_fraction(factor)
        coords = None
        if self.coords is not None:
            coords = tuple((x * float(factor), y * float(factor)) for x, y in self.coords)
        return MetricSpace(tuple(tuple(v * factor for v in row) for row in self.dist), coords)

    def min_positive(self) -> Fraction | None:
        vals = [v for row in self.dist for v in row if v > 0]
        return min(vals) if vals else None

    def mst_weight(self) -> float:
        return float(mst_weight(self.array))


def mst_weight(d: np.ndarray, nodes: Sequence[int] | None = None) -> float:
    """Prim's algorithm on a dense matrix, optionally restricted to ``nodes``."""
    if nodes is not None:
        d = d[np.ix_(nodes, nodes)]
    k = len(d)
    if k <= 1:
        return 0.0
    in_tree = np.zeros(k, dtype=bool)
    in_tree[0] = True
    best = d[0].copy()
    total = 0.0
    for _ in range(k - 1):
        cand = np.where(in_tree, np.inf, best)
        j = int(np.argmin(cand))
        total += cand[j]
        in_tree[j] = True
        best = np.minimum(best, d[j])
    return float(total)


def mst_edges(d: np.ndarray, nodes: Sequence[int]) -> list[tuple[int, int]]:
    """MST edges over ``nodes`` (as original node ids), Prim order from ``nodes[0]``."""
    nodes = list(nodes)
    k = len(nodes)
    if k <= 1:
        return []
    sub = d[np.ix_(nodes, nodes)]
    in_tree = np.zeros(k, dtype=bool)
    in_tree[0] = True
    best = sub[0].copy()
    parent = np.zeros(k, dtype=int)
    edges = []
    for _ in range(k - 1):
        cand = np.where(in_tree, np.inf, best)
        j = int(np.argmin(cand))
        edges.append((nodes[int(parent[j])], nodes[j]))
        in_tree[j] = True
        closer = sub[j] < best
        parent[closer] = j
        best = np.minimum(best, sub[j])
    return edges


def validate_metric(dist, tol: float = 0.0) -> list[tuple]:
    """Return every violated metric axiom; an empty list means the matrix is a metric.

    Entries are ``("diagonal", u)``, ``("negative", u, v)``, ``("asymmetry", u, v)``
    or ``("triangle", u, v, w)`` where the last reads d(u,w) > d(u,v) + d(v,w).
    With ``tol == 0`` the check is exact over rationals.
    """
    rows = [list(r) for r in dist]
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise ValueError("distance matrix must be square")
    if tol == 0:
        mat = [[as_fraction(v) for v in r] for r in rows]
    else:
        mat = np.array([[float(v) for v in r] for r in rows], dtype=float)
    out: list[tuple] = []
    for u in range(n):
        if mat[u][u] != 0:
            out.append(("diagonal", u))
        for v in range(n):
            if mat[u][v] < 0:
                out.append(("negative", u, v))
            if u < v and abs(mat[u][v] - mat[v][u]) > tol:
                out.append(("asymmetry", u, v))
    if tol == 0:
        for u in range(n):
            for v in range(n):
                duv = mat[u][v]
                for w in range(n):
                    if mat[u][w] > duv + mat[v][w]:
                        out.append(("triangle", u, v, w))
    else:
        for v in range(n):
            via = mat[:, v][:, None] + mat[v][None, :]
            bad = np.argwhere(mat > via + tol * np.maximum(1.0, via))
            out.extend(("triangle", int(u), v, int(w)) for u, w in bad)
    return out


@dataclass(frozen=True)
class Repairman:
    id: int
    depot: int
    speed: Fraction


@dataclass(frozen=True)
class Client:
    id: int
    start: int
    speed: Fraction


@dataclass(frozen=True)
class Instance:
    metric: MetricSpace
    repairmen: tuple[Repairman, ...]
    clients: tuple[Client, ...]

    def __post_init__(self):
        n = self.metric.n
        if n < 1:
            raise ValueError("metric must have at least one node")
        if not self.repairmen:
            raise ValueError("instance needs at least one repairman")
        for r in self.repairmen:
            if not 0 <= r.depot < n:
                raise ValueError(f"repairman {r.id}: depot {r.depot} out of range")
            if r.speed <= 0:
                raise ValueError(f"repairman {r.id}: speed must be positive")
        for c in self.clients:
            if not 0 <= c.start < n:
                raise ValueError(f"client {c.id}: start {c.start} out of range")
            if c.speed < 0:
                raise ValueError(f"client {c.id}: speed must be non-negative")

    @classmethod
    def build(cls, metric: MetricSpace, repairmen: Iterable, clients: Iterable) -> "Instance":
        """Build from ``(depot, speed)`` and ``(start, speed)`` pairs; ids are positional."""
        reps = tuple(Repairman(i, int(d), as_fraction(s)) for i, (d, s) in enumerate(repairmen))
        cls_ = tuple(Client(j, int(u), as_fraction(s)) for j, (u, s) in enumerate(clients))
        return cls(metric, reps, cls_)

    @property
    def n(self) -> int:
        return self.metric.n

    @property
    def m(self) -> int:
        return len(self.clients)

    @property
    def k(self) -> int:
        return len(self.repairmen)

    @cached_property
    def client_times(self) -> np.ndarray:
        """``m x n`` matrix of the time client j needs to reach node u (inf if never)."""
        d = self.metric.array
        out = np.full((self.m, self.n), np.inf)
        for j, c in enumerate(self.clients):
            row = d[c.start]
            if c.speed > 0:
                out[j] = row / float(c.speed)
            out[j][row == 0] = 0.0
        out.setflags(write=False)
        return out

    def client_time(self, j: int, u: int) -> float:
        return float(self.client_times[j, u])

    def max_speed(self) -> Fraction:
        speeds = [r.speed for r in self.repairmen] + [c.speed for c in self.clients]
        return max(speeds)

    def scaled(self, factor) -> "Instance":
        return Instance(self.metric.scaled(factor), self.repairmen, self.clients)

    def zero_latency_clients(self) -> list[int]:
        """Clients starting at some depot (distance 0): served at time 0."""
        d = self.metric.array
        depots = [r.depot for r in self.repairmen]
        return [j for j, c in enumerate(self.clients) if any(d[c.start, s] == 0 for s in depots)]


def ball(instance: Instance, client: int | Client, t: float) -> frozenset[int]:
    """Nodes the client can reach within time ``t``; always contains its start."""
    c = instance.clients[client] if isinstance(client, (int, np.integer)) else client
    row = instance.metric.array[c.start]
    radius = float(c.speed) * float(t)
    hit = row <= radius + 1e-12 * max(1.0, radius)
    hit[c.start] = True
    return frozenset(int(u) for u in np.flatnonzero(hit))


def ball_mask(instance: Instance, t: float) -> np.ndarray:
    """Boolean ``m x n`` matrix: row j is ``ball(instance, j, t)``."""
    d = instance.metric.array
    out = np.zeros((instance.m, instance.n), dtype=bool)
    for j, c in enumerate(instance.clients):
        radius = float(c.speed) * float(t)
        out[j] = d[c.start] <= radius + 1e-12 * max(1.0, radius)
        out[j, c.start] = True
    return out


def scale_instance(instance: Instance) -> tuple[Instance, Fraction]:
    """Multiply all distances by ``2 * mv`` (mv = max speed over every agent).

    When the smallest positive distance is below ``1/2`` the factor is raised so
    that it becomes at least ``mv``; any positive service time is then >= 1.
    """
    mv = instance.max_speed()
    if mv <= 0:
        raise ValueError("all speeds are zero")
    factor = 2 * mv
    dmin = instance.metric.min_positive()
    if dmin is not None and 2 * dmin < 1:
        factor = factor / (2 * dmin)
    return instance.scaled(factor), factor


@dataclass(frozen=True)
class TimeGrid:
    stamps: tuple[float, ...]
    horizon: float

    @property
    def exponent(self) -> int:
        return len(self.stamps) - 1


def ceil_log2(x: float) -> int:
    if x <= 1:
        return 0
    e = math.ceil(math.log2(x))
    # guard float noise at exact powers of two
    if 2 ** (e - 1) >= x:
        e -= 1
    return e


def build_time_grid(instance: Instance) -> TimeGrid:
    """Doubling stamps ``1, 2, ..., 2^E`` with ``E = ceil(log T) + ceil(ceil(log m)/2) + 1``."""
    vmin = min(float(r.speed) for r in instance.repairmen)
    horizon = 2.0 * instance.metric.mst_weight() / vmin
    logm = ceil_log2(max(instance.m, 1))
    e = ceil_log2(horizon) + (logm + 1) // 2 + 1
    return TimeGrid(tuple(float(2**i) for i in range(e + 1)), horizon)


@dataclass(frozen=True)
class Walk:
    """A repairman's node sequence with per-visit arrival and departure times."""

    owner: int
    nodes: tuple[int, ...]
    arrive: tuple[float, ...]
    depart: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.nodes) == len(self.arrive) == len(self.depart)):
            raise ValueError("walk node/time lengths differ")

    @classmethod
    def at_full_speed(cls, owner: int, nodes: Sequence[int], metric: MetricSpace, speed,
                      start: float = 0.0) -> "Walk":
        d = metric.array
        v = float(speed)
        times = [start]
        for a, b in zip(nodes, nodes[1:]):
            times.append(times[-1] + d[a, b] / v)
        return cls(owner, tuple(int(u) for u in nodes), tuple(times), tuple(times))

    def length(self, metric: MetricSpace) -> float:
        d = metric.array
        return float(sum(d[a, b] for a, b in zip(self.nodes, self.nodes[1:])))

    def first_visits(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for u, t in zip(self.nodes, self.arrive):
            if u not in out:
                out[u] = t
        return out


def walk_length(metric: MetricSpace, nodes: Sequence[int]) -> float:
    d = metric.array
    return float(sum(d[a, b] for a, b in zip(nodes, nodes[1:])))


@dataclass(frozen=True)
class Schedule:
    walks: tuple[Walk, ...]
    assignments: tuple[tuple[int, float], ...] | None = None

    def check_timing(self, instance: Instance) -> None:
        d = instance.metric.array
        owners = {r.id: r for r in instance.repairmen}
        for w in self.walks:
            if w.owner not in owners:
                raise ScheduleError(f"walk owner {w.owner} is not a repairman")
            r = owners[w.owner]
            if not w.nodes:
                continue
            if w.nodes[0] != r.depot:
                raise ScheduleError(f"repairman {r.id}: walk does not start at its depot")
            if w.arrive[0] < -TOL:
                raise ScheduleError(f"repairman {r.id}: negative start time")
            v = float(r.speed)
            for i, u in enumerate(w.nodes):
                if not leq(w.arrive[i], w.depart[i]):
                    raise ScheduleError(f"repairman {r.id}: leaves node {u} before arriving")
                if i and not leq(w.depart[i - 1] + d[w.nodes[i - 1], u] / v, w.arrive[i]):
                    raise ScheduleError(f"repairman {r.id}: visit {i} at node {u} faster than its speed")


@dataclass(frozen=True)
class Evaluation:
    latencies: tuple[float, ...]
    nodes: tuple[int | None, ...] = field(default=())

    @property
    def total(self) -> float:
        return float(sum(self.latencies))

    @property
    def maximum(self) -> float:
        return float(max(self.latencies, default=0.0))

    @property
    def served(self) -> bool:
        return all(math.isfinite(x) for x in self.latencies)


def earliest_visits(instance: Instance, walks: Iterable[Walk]) -> np.ndarray:
    """Earliest time any repairman visits each node (inf if never)."""
    first = np.full(instance.n, np.inf)
    for w in walks:
        for u, t in zip(w.nodes, w.arrive):
            if t < first[u]:
                first[u] = t
    return first


def evaluate_indirect(instance: Instance, schedule: Schedule) -> Evaluation:
    """Latency of client c = min over visited u of max(visit time, c's travel time to u)."""
    schedule.check_timing(instance)
    first = earliest_visits(instance, schedule.walks)
    lat = np.maximum(instance.client_times, first[None, :])
    best = lat.argmin(axis=1) if instance.m else np.zeros(0, dtype=int)
    vals = tuple(float(lat[j, best[j]]) for j in range(instance.m))
    nodes = tuple(int(best[j]) if math.isfinite(vals[j]) else None for j in range(instance.m))
    return Evaluation(vals, nodes)


def evaluate_perfect(instance: Instance, schedule: Schedule) -> Evaluation:
    """Each client j meets a repairman at exactly (u_j, t_j); latency is t_j."""
    schedule.check_timing(instance)
    if schedule.assignments is None or len(schedule.assignments) != instance.m:
        raise ScheduleError("perfect evaluation needs one (node, time) assignment per client")
    out = []
    for j, (u, t) in enumerate(schedule.assignments):
        if not math.isfinite(t):
            out.append(UNSERVED)
            continue
        if not leq(instance.client_time(j, u), t):
            raise ScheduleError(f"client {j} cannot reach node {u} by time {t}")
        present = any(
            wu == u and leq(a, t) and leq(t, dep)
            for w in schedule.walks
            for wu, a, dep in zip(w.nodes, w.arrive, w.depart)
        )
        if not present:
            raise ScheduleError(f"client {j}: no repairman at node {u} at time {t}")
        out.append(float(t))
    return Evaluation(tuple(out), tuple(u for u, _ in schedule.assignments))
