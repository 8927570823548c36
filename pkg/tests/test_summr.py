from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from movrep.lp import solve_sum_mr_lp
from movrep.model import Instance, Schedule, Walk, build_time_grid, evaluate_indirect, scale_instance
from movrep.oracles import exact_sum_mr
from movrep.summr import (SumMRConfig, greedy_step, prev_step, run_sum_mra, solve_sum_mr,
                          to_perfect)

from conftest import line_metric, random_instance


def meeting_times(instance, schedule):
    """Event simulation: each client walks to its node and waits for the first repairman presence."""
    out = []
    for j, (u, _) in enumerate(schedule.assignments):
        arrive = instance.client_time(j, u)
        events = sorted((a, dep) for w in schedule.walks for wu, a, dep in zip(w.nodes, w.arrive, w.depart)
                        if wu == u)
        t = math.inf
        for a, dep in events:
            if dep >= arrive - 1e-12:
                t = max(a, arrive)
                break
        out.append(t)
    return out


def test_prev_step():
    assert prev_step(4, 3, 2) == (4, 2)
    assert prev_step(4, 1, 2) == (2, 8)


def _fractional(inst, mu=1.0, omega=1.0):
    scaled, _ = scale_instance(inst)
    return scaled, solve_sum_mr_lp(scaled, build_time_grid(scaled), "exact", mu, omega)


def test_greedy_step_examples():
    inst = Instance.build(line_metric(1), [(0, 1)], [(1, 0)])
    scaled, fs = _fractional(inst)
    assert greedy_step(scaled, fs, 0, set()) == ({}, frozenset())
    last = len(fs.grid.stamps) - 1
    chosen, served = greedy_step(scaled, fs, last, {0})
    assert served == {0} and 1 in chosen[0].visited


def test_depot_client_served_at_once():
    inst = Instance.build(line_metric(1, 1), [(0, 1)], [(0, 0), (2, 0)])
    rep = solve_sum_mr(inst)
    assert rep.latencies[0] == 0


def test_rounding_certificates_randomized():
    rng = np.random.default_rng(1)
    runs = 0
    while runs < 100:
        inst = random_instance(rng, int(rng.integers(2, 5)), int(rng.integers(1, 3)), int(rng.integers(1, 4)),
                               equal=bool(rng.integers(2)))
        if len(inst.zero_latency_clients()) == inst.m:
            continue
        scaled, fs = _fractional(inst)
        sched, trace = run_sum_mra(scaled, fs)  # strict: raises on any failed certificate
        runs += 1
        for s in trace.steps:
            assert len(s.served) >= s.required
        for _, resid, bound in trace.decay:
            assert resid <= bound + 1e-9
        lat = evaluate_indirect(scaled, sched).latencies
        assert all(math.isfinite(x) for x in lat)
        assert sum(lat) <= 32 * fs.objective + 1e-9


def test_served_sets_disjoint():
    inst = random_instance(np.random.default_rng(3), 5, 2, 4)
    scaled, fs = _fractional(inst)
    _, trace = run_sum_mra(scaled, fs)
    seen = set()
    for s in trace.steps:
        assert not (seen & s.served)
        seen |= s.served
    assert seen == set(range(inst.m))


def test_randomized_rounding_runs():
    inst = random_instance(np.random.default_rng(5), 5, 1, 3)
    scaled, fs = _fractional(inst)
    sched, trace = run_sum_mra(scaled, fs, randomized=True, seed=2, strict=False)
    assert len(sched.walks) == 1 and trace.steps


def test_to_perfect_collocated():
    inst = Instance.build(line_metric(2), [(0, 1)], [(0, 0)])
    sched = Schedule((Walk.at_full_speed(0, (0, 1), inst.metric, 1),))
    per = to_perfect(inst, sched, 1.0)
    assert meeting_times(inst, per) == [0.0]


def test_to_perfect_alpha_two_closed_form():
    # eps = 2 gives rounds 1, 2, 4, ...; a client at distance 3 on a line is met in the round of span 4
    inst = Instance.build(line_metric(1, 2), [(0, 1)], [(2, 0)])
    sched = Schedule((Walk.at_full_speed(0, (0, 1, 2), inst.metric, 1),))
    per = to_perfect(inst, sched, 2.0, unit=1.0)
    # rounds take 2, 4 time units; the third (span 4) starts at 6 and reaches node 2 at 6 + 3
    assert meeting_times(inst, per) == [9.0]
    assert 9.0 <= (3 + 2) * 3


def test_to_perfect_gap_below_eps_one():
    # alpha = 5: a client reaching the depot just after a round starts waits the whole round
    eps, unit = 0.5, 2.0**-40
    alpha = 1 + 2 / eps
    start = 2 * unit * (alpha**20 - 1) / (alpha - 1)
    D = start * (1 + 1e-6)
    metric = line_metric(D, 1)  # node 0 = client start, node 1 = depot, node 2 = path end
    inst = Instance.build(metric, [(1, 1)], [(2, 0), (0, 1)])
    sched = Schedule((Walk.at_full_speed(0, (1, 2), metric, 1),))
    ind = evaluate_indirect(inst, sched).latencies
    assert ind == (1.0, D)
    per = meeting_times(inst, to_perfect(inst, sched, eps))
    assert per[1] > (3 + eps) * ind[1]
    assert per[1] == pytest.approx(start + 2 * unit * alpha**20)


@pytest.mark.parametrize("eps", [1.0, 2.0])
def test_to_perfect_ratio_random_schedules(eps):
    rng = np.random.default_rng(int(eps * 10))
    for _ in range(100):
        n = int(rng.integers(2, 7))
        inst = random_instance(rng, n, int(rng.integers(1, 3)), int(rng.integers(1, 5)), equal=False)
        walks = []
        for rep in inst.repairmen:
            tail = rng.integers(0, n, size=int(rng.integers(0, 6))).tolist()
            seq = [rep.depot] + [u for u in tail]
            seq = [u for i, u in enumerate(seq) if i == 0 or u != seq[i - 1]]
            walks.append(Walk.at_full_speed(rep.id, seq, inst.metric, rep.speed))
        sched = Schedule(tuple(walks))
        ind = evaluate_indirect(inst, sched).latencies
        per = to_perfect(inst, sched, eps)
        met = meeting_times(inst, per)
        for a, b in zip(met, ind):
            if math.isfinite(b):
                assert a <= (3 + eps) * b * (1 + 1e-9) + 1e-9


def test_pipeline_single_client():
    inst = Instance.build(line_metric(1), [(0, 1)], [(1, 0)])
    rep = solve_sum_mr(inst)
    assert 1 <= rep.total <= rep.certificates["bound_perfect"] + 1e-9


def test_pipeline_all_at_depots():
    inst = Instance.build(line_metric(1, 1), [(0, 1), (2, 1)], [(0, 0), (2, 1)])
    rep = solve_sum_mr(inst)
    assert rep.total == 0


def test_pipeline_against_oracle():
    rng = np.random.default_rng(8)
    cfg = SumMRConfig(eps=0.5)
    for _ in range(10):
        inst = random_instance(rng, 5, int(rng.integers(1, 3)), int(rng.integers(1, 4)), equal=False)
        rep = solve_sum_mr(inst, cfg)
        opt = exact_sum_mr(inst).value
        bound = 2 * (3 + cfg.eps) * 32 * rep.mu * rep.omega
        assert rep.total <= bound * opt + 1e-9
        assert rep.lp_objective <= 2 * opt + 1e-9


def test_pipeline_oracle_mode():
    inst = random_instance(np.random.default_rng(2), 5, 1, 3)
    rep = solve_sum_mr(inst, SumMRConfig(mode="oracle", frt_count=4))
    assert rep.mu == max(16 * 4 * math.log2(5), 16 * 4 * math.log2(5))
    assert all(math.isfinite(x) for x in rep.latencies)
    assert rep.total <= rep.certificates["bound_perfect"] + 1e-9


@given(st.integers(0, 10**6))
def test_pipeline_deterministic(seed):
    inst = random_instance(np.random.default_rng(seed), 4, 1, 2)
    a, b = solve_sum_mr(inst), solve_sum_mr(inst)
    assert a.latencies == b.latencies and a.schedule == b.schedule
