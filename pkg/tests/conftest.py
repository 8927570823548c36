from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from movrep.model import Instance, MetricSpace

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def int_metric(rng: np.random.Generator, n: int, scale: int = 10) -> MetricSpace:
    """Random integer weights closed under shortest paths."""
    w = rng.integers(1, scale + 1, size=(n, n))
    w = np.minimum(w, w.T)
    np.fill_diagonal(w, 0)
    for k in range(n):
        w = np.minimum(w, w[:, k, None] + w[None, k, :])
    return MetricSpace.from_matrix(w.tolist())


def point_metric(rng: np.random.Generator, n: int, side: float = 10.0) -> MetricSpace:
    return MetricSpace.from_points(np.round(rng.random((n, 2)) * side, 3).tolist())


def random_instance(rng: np.random.Generator, n: int, k: int, m: int, equal: bool = True,
                    metric: MetricSpace | None = None) -> Instance:
    metric = metric or int_metric(rng, n)
    speeds = [Fraction(1)] * k if equal else [Fraction(int(rng.integers(1, 4))) for _ in range(k)]
    reps = [(int(rng.integers(n)), s) for s in speeds]
    cls = [(int(rng.integers(n)), Fraction(int(rng.integers(0, 3)), 2)) for _ in range(m)]
    return Instance.build(metric, reps, cls)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def line_metric(*gaps) -> MetricSpace:
    pos = np.concatenate([[0], np.cumsum(gaps)])
    return MetricSpace.from_matrix(np.abs(pos[:, None] - pos[None, :]).tolist())


def random_npcst(rng: np.random.Generator, n: int, m: int, metric: MetricSpace | None = None,
                 integer: bool = True):
    """Random NPCST instance; budget between 0 and the full MST weight."""
    from movrep.npcst import NPCSTClient, NPCSTInstance

    metric = metric or (int_metric(rng, n) if integer else point_metric(rng, n))
    d = metric.array
    med = float(np.median(d[d > 0])) if (d > 0).any() else 1.0
    clients = tuple(NPCSTClient(int(rng.integers(n)), float(rng.integers(0, 6)),
                                float(np.round(rng.uniform(0.05, 0.5) * med, 3))) for _ in range(m))
    budget = float(np.round(rng.uniform(0, 1) * metric.mst_weight(), 3))
    return NPCSTInstance(metric, int(rng.integers(n)), clients, budget)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
