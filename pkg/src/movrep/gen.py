"""Seeded instance generators."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .io import InstanceFile
from .model import Client, MetricSpace, Repairman

KINDS = ("random-metric", "euclidean", "locker")
CLIENT_SPEEDS = (Fraction(0), Fraction(1, 2), Fraction(1))


def _closure(w: np.ndarray) -> np.ndarray:
    d = w.copy()
    for k in range(len(d)):
        d = np.minimum(d, d[:, k, None] + d[None, k, :])
    return d


def random_metric(n: int, rng: np.random.Generator, scale: int = 20) -> MetricSpace:
    """Random integer edge weights closed under shortest paths."""
    w = rng.integers(1, scale + 1, size=(n, n))
    w = np.minimum(w, w.T)
    np.fill_diagonal(w, 0)
    return MetricSpace.from_matrix(_closure(w).tolist())


def euclidean_points(n: int, rng: np.random.Generator, side: float = 10.0) -> MetricSpace:
    pts = np.round(rng.random((n, 2)) * side, 3)
    return MetricSpace.from_points(pts.tolist())


def locker_points(n: int, rng: np.random.Generator, lockers: int = 3, side: float = 20.0) -> MetricSpace:
    """A few locker sites with homes scattered tightly around them."""
    lockers = max(1, min(lockers, n))
    sites = rng.random((lockers, 2)) * side
    pts = [sites[i % lockers] + (rng.normal(0, side / 20, 2) if i >= lockers else 0) for i in range(n)]
    return MetricSpace.from_points(np.round(np.array(pts), 3).tolist())


def gen_instance(kind: str, nodes: int = 6, repairmen: int = 1, clients: int = 3, seed: int = 0,
                 equal_speeds: bool = True, budget: Fraction | None = None) -> InstanceFile:
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}; choose from {', '.join(KINDS)}")
    if nodes < 1 or repairmen < 1 or clients < 0:
        raise ValueError("need nodes >= 1, repairmen >= 1, clients >= 0")
    rng = np.random.default_rng(seed)
    if kind == "random-metric":
        metric, mode = random_metric(nodes, rng), "metric"
    elif kind == "euclidean":
        metric, mode = euclidean_points(nodes, rng), "euclidean"
    else:
        metric, mode = locker_points(nodes, rng), "euclidean"
    reps = []
    for r in range(repairmen):
        sp = Fraction(1) if equal_speeds else Fraction(int(rng.integers(1, 4)))
        reps.append(Repairman(r, int(rng.integers(nodes)), sp))
    if kind == "locker":
        # clients live around lockers and walk to them
        starts = rng.integers(min(3, nodes), nodes, size=clients) if nodes > 3 else rng.integers(nodes, size=clients)
    else:
        starts = rng.integers(nodes, size=clients)
    cls = [Client(j, int(u), CLIENT_SPEEDS[int(rng.integers(len(CLIENT_SPEEDS)))]) for j, u in enumerate(starts)]
    out = InstanceFile(mode, metric, reps, cls)
    # NPCST block: root at the first depot, unit-ish profits, radii from client speeds
    d = metric.array
    scale = float(np.median(d[d > 0])) if (d > 0).any() else 1.0
    out.npcst_root = reps[0].depot
    out.npcst_budget = budget if budget is not None else Fraction(round(scale * 1.5, 3)).limit_denominator(1000)
    out.npcst_clients = [(c.start, Fraction(int(rng.integers(1, 6))),
                          Fraction(round(scale * float(rng.uniform(0.1, 0.4)), 3)).limit_denominator(1000))
                         for c in cls]
    return out
