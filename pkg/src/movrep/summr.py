"""Sum-MR pipeline: LP, derandomized rounding, and the indirect-to-perfect transform.

Rounding runs stamps ``q = 1, 2, 4, ...`` with ``4 omega`` steps each.  In every
step each repairman picks one path class (greedily, by newly covered unserved
clients), walks it from its depot, returns, and idles until the step's slot of
length ``2 mu q`` ends.  A client is served in the step if its ``mu q`` ball
meets one of the chosen classes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .lp import (FractionalSolution, PathClass, check_fractional, enumerate_path_classes, hit_matrix,
                 solve_sum_mr_lp)
from .model import (Instance, Schedule, Walk, build_time_grid, evaluate_indirect,
                    evaluate_perfect, scale_instance)

log = logging.getLogger(__name__)

CEIL_TOL = 1e-9
UNIT_SHRINK = 2.0**-40


class CertificateError(AssertionError):
    """A rounding guarantee failed on this run."""


@dataclass
class StepRecord:
    q: float
    f: int
    stamp: int
    chosen: dict  # repairman index -> PathClass
    served: frozenset
    F: float
    required: int
    start: float


@dataclass
class RoundingTrace:
    steps: list[StepRecord] = field(default_factory=list)
    h: dict = field(default_factory=dict)  # stamp index -> sum_c y
    decay: list[tuple[int, float, float]] = field(default_factory=list)  # (stamp, F^{q,4w+1}, bound)
    served_at: dict = field(default_factory=dict)  # client -> step index
    charges: dict = field(default_factory=dict)  # client -> 16 mu omega q
    latencies: tuple[float, ...] = ()

    def failures(self, omega: float) -> list[str]:
        out = []
        for i, s in enumerate(self.steps):
            if len(s.served) < s.required:
                out.append(f"step {i} (q={s.q:g}, f={s.f}): served {len(s.served)} < ceil(F/2w) = {s.required}")
        for st, lhs, rhs in self.decay:
            if lhs > rhs + CEIL_TOL:
                out.append(f"stamp {st}: residual {lhs:.6g} > decay bound {rhs:.6g}")
        return out


def prev_step(q: float, f: int, omega: int) -> tuple[float, int]:
    """Predecessor of step (q, f); the first step of a stamp follows (q/2, 4 omega)."""
    return (q, f - 1) if f != 1 else (q / 2, 4 * omega)


def _pools(fs: FractionalSolution, exact: bool, subset_cap: int):
    """Per (repairman, stamp): candidate classes and their hit matrices over all clients."""
    inst, grid, mu = fs.instance, fs.grid, fs.mu
    all_clients = list(range(inst.m))
    enumerated: dict[int, list[PathClass]] = {}
    if exact:
        top = grid.stamps[-1]
        budgets = {r: mu * float(rep.speed) * top for r, rep in enumerate(inst.repairmen)}
        for pc in enumerate_path_classes(inst, budgets, subset_cap):
            enumerated.setdefault(pc.repairman, []).append(pc)
    pools = {}
    for r, rep in enumerate(inst.repairmen):
        home = PathClass(rep.id, frozenset([rep.depot]), 0.0, (rep.depot,))
        for s, t in enumerate(grid.stamps):
            budget = mu * float(rep.speed) * t * (1 + 1e-12) + 1e-12
            seen, pool = set(), []
            support = [fs.columns[i].cls for i in fs.support(r, s)]
            master = [c.cls for c in fs.columns if c.repairman == r and c.stamp == s]
            extra = [pc for pc in enumerated.get(rep.id, []) if pc.min_length <= budget]
            for pc in [home] + support + master + extra:
                if pc.visited not in seen and pc.min_length <= budget:
                    seen.add(pc.visited)
                    pool.append(pc)
            pools[r, s] = (pool, hit_matrix(inst, pool, t, mu, all_clients))
    return pools


def _x_mass(fs: FractionalSolution, r: int, s: int) -> list[tuple[PathClass, float]]:
    return [(fs.columns[i].cls, fs.x[i]) for i in fs.support(r, s)]


def greedy_step(instance: Instance, fractional: FractionalSolution, stamp: int, unserved: set,
                pools=None, weights: np.ndarray | None = None) -> tuple[dict, frozenset]:
    """One path per repairman, each maximizing newly covered unserved clients.

    Ties prefer more fractional mass ``sum_{t<=q} y``, then the earlier class.
    """
    if not unserved:
        return {}, frozenset()
    pools = _pools(fractional, False, 14) if pools is None else pools
    remaining = np.zeros(instance.m, dtype=bool)
    remaining[list(unserved)] = True
    w = np.zeros(instance.m) if weights is None else weights
    chosen, served = {}, set()
    for r in range(instance.k):
        pool, hits = pools[r, stamp]
        cover = hits & remaining[None, :]
        counts = cover.sum(axis=1)
        mass = cover.astype(float) @ w
        best = max(range(len(pool)), key=lambda i: (counts[i], round(mass[i], 12), -i))
        chosen[r] = pool[best]
        newly = np.flatnonzero(cover[best])
        served.update(int(c) for c in newly)
        remaining[newly] = False
    return chosen, frozenset(served)


def _random_step(fs, stamp, unserved, pools, rng):
    chosen, served = {}, set()
    remaining = np.zeros(fs.instance.m, dtype=bool)
    remaining[list(unserved)] = True
    for r in range(fs.instance.k):
        pool, hits = pools[r, stamp]
        opts = _x_mass(fs, r, stamp)
        u = rng.random() * fs.omega
        pick = pool[0]
        acc = 0.0
        for pc, v in opts:
            acc += v
            if u < acc:
                pick = pc
                break
        idx = next(i for i, pc in enumerate(pool) if pc.visited == pick.visited)
        chosen[r] = pool[idx]
        newly = np.flatnonzero(hits[idx] & remaining)
        served.update(int(c) for c in newly)
        remaining[newly] = False
    return chosen, frozenset(served)


def run_sum_mra(instance: Instance, fractional: FractionalSolution, exact_pool: bool | None = None,
                subset_cap: int = 14, randomized: bool = False, seed: int = 0,
                strict: bool = True) -> tuple[Schedule, RoundingTrace]:
    """Round an RPLP solution on a scaled instance into an indirect-service schedule.

    With ``strict`` any failed certificate raises ``CertificateError``.
    """
    fs = fractional
    check_fractional(fs)
    mu, omega = fs.mu, fs.omega
    rounds = int(math.ceil(4 * omega))
    grid = fs.grid
    exact_pool = fs.mode == "exact" if exact_pool is None else exact_pool
    pools = _pools(fs, exact_pool, subset_cap)
    rng = np.random.default_rng(seed)
    trace = RoundingTrace()
    S = len(grid.stamps)
    trace.h = {s: fs.h(s) for s in range(S)}
    cum = np.zeros((instance.m, S))
    for (c, s), v in fs.y.items():
        cum[c, s:] += v

    unserved = set(range(instance.m))
    legs: dict[int, list[tuple[int, float, float]]] = {r: [] for r in range(instance.k)}
    clock = 0.0
    for s, q in enumerate(grid.stamps):
        for f in range(1, rounds + 1):
            F = float(sum(cum[c, s] for c in unserved))
            required = int(math.ceil(F / (2 * omega) - CEIL_TOL)) if F > 0 else 0
            if randomized:
                chosen, newly = _random_step(fs, s, unserved, pools, rng)
            else:
                chosen, newly = greedy_step(instance, fs, s, unserved, pools, cum[:, s])
            rec = StepRecord(q, f, s, chosen, newly, F, required, clock)
            for c in newly:
                trace.served_at[c] = len(trace.steps)
                trace.charges[c] = 16 * mu * omega * q
            trace.steps.append(rec)
            unserved -= newly
            slot = 2 * mu * q
            for r, pc in chosen.items():
                legs[r].append((pc, clock, clock + slot))
            clock += slot
        resid = float(sum(cum[c, s] for c in unserved))
        a = s
        bound = float(sum(trace.h[j] / 4 ** (a - j + 1) for j in range(a + 1)))
        trace.decay.append((s, resid, bound))
        if not unserved:
            break

    walks = tuple(_assemble(instance, r, legs[r]) for r in range(instance.k))
    schedule = Schedule(walks)
    ev = evaluate_indirect(instance, schedule)
    trace.latencies = ev.latencies
    problems = trace.failures(omega)
    if unserved:
        problems.append(f"{len(unserved)} clients unserved after the last stamp")
    for c, step in trace.served_at.items():
        if ev.latencies[c] > trace.charges[c] * (1 + 1e-12):
            problems.append(f"client {c}: latency {ev.latencies[c]:.6g} above its charge {trace.charges[c]:.6g}")
    total_bound = 32 * mu * omega * fs.objective
    zero = set(instance.zero_latency_clients())
    lp_total = sum(ev.latencies[c] for c in range(instance.m) if c not in zero)
    if lp_total > total_bound * (1 + 1e-12) + 1e-12:
        problems.append(f"total latency {lp_total:.6g} > 32 mu omega LP = {total_bound:.6g}")
    trace_problems = problems
    if trace_problems and strict:
        raise CertificateError("; ".join(trace_problems))
    if trace_problems:
        log.warning("rounding certificates failed: %s", "; ".join(trace_problems))
    return schedule, trace


def _assemble(instance: Instance, r: int, legs) -> Walk:
    """Concatenate slots: walk the class at full speed, go home, idle to the slot end."""
    rep = instance.repairmen[r]
    d = instance.metric.array
    v = float(rep.speed)
    nodes, arrive, depart = [rep.depot], [0.0], [0.0]
    for pc, start, end in legs:
        t = start
        depart[-1] = max(depart[-1], start)
        path = list(pc.representative)
        if path[0] != rep.depot:
            path = [rep.depot] + path
        for a, b in zip(path, path[1:]):
            t += d[a, b] / v
            nodes.append(b)
            arrive.append(t)
            depart.append(t)
        if nodes[-1] != rep.depot:
            t += d[nodes[-1], rep.depot] / v
            nodes.append(rep.depot)
            arrive.append(t)
            depart.append(t)
        depart[-1] = max(depart[-1], end)
    return Walk(rep.id, tuple(nodes), tuple(arrive), tuple(depart))


# ------------------------------------------------------------- indirect -> perfect


def _assign(instance: Instance, schedule: Schedule):
    """For each client: (repairman position, node, indirect latency) of its best service."""
    ct = instance.client_times
    out = []
    firsts = [w.first_visits() for w in schedule.walks]
    for j in range(instance.m):
        best = (math.inf, -1, -1)
        for wi, fv in enumerate(firsts):
            for u, t in sorted(fv.items()):
                lat = max(t, ct[j, u])
                if lat < best[0]:
                    best = (lat, wi, u)
        out.append(best)
    return out


def _path_nodes(walk: Walk) -> list[int]:
    """Visit order with consecutive duplicates removed (waiting dropped)."""
    out = []
    for u in walk.nodes:
        if not out or out[-1] != u:
            out.append(u)
    return out


def to_perfect(instance: Instance, schedule: Schedule, eps: float, unit: float | None = None) -> Schedule:
    """Back-and-forth rounds of ``unit * alpha^x`` time along each repairman's path.

    ``alpha = 1 + 2/eps``.  Each client waits at the node of its best indirect
    service and meets its repairman at the first presence there after arriving.
    ``unit`` defaults to ``2^-40`` of the smallest positive indirect latency;
    the extra rounds are cheap and make the additive start-up term vanish.

    The per-client factor ``3 + eps`` is only guaranteed for ``alpha <= 3``
    (``eps >= 1``): rounds up to ``alpha^k`` must already outlast a latency
    ``q < alpha^(k+1)``, which needs ``2 / (alpha - 1) >= 1``.  For larger
    alpha a client arriving just after a round starts near the depot can wait
    close to a whole round (ratio up to about ``1 + alpha``).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    alpha = 1.0 + 2.0 / eps
    best = _assign(instance, schedule)
    if unit is None:
        pos = [b[0] for b in best if 0 < b[0] < math.inf]
        unit = (min(pos) if pos else 1.0) * UNIT_SHRINK
    d = instance.metric.array
    ct = instance.client_times
    walks = []
    meet: list = [None] * instance.m
    for wi, w in enumerate(schedule.walks):
        rep = next(r for r in instance.repairmen if r.id == w.owner)
        v = float(rep.speed)
        path = _path_nodes(w)
        reach = [0.0]
        for a, b in zip(path, path[1:]):
            reach.append(reach[-1] + d[a, b] / v)
        mine = [j for j in range(instance.m) if best[j][1] == wi and meet[j] is None]
        arrivals = {j: ct[j, best[j][2]] for j in mine}
        horizon = max(arrivals.values(), default=0.0)
        nodes, arrive, depart = [path[0]], [0.0], [0.0]
        start, x = 0.0, 0
        pending = set(mine)
        while True:
            span = unit * alpha**x
            k = max(i for i in range(len(path)) if reach[i] <= span * (1 + 1e-12))
            # out along the prefix, wait at node k, come back so the round lasts 2 * span
            for i in range(1, k + 1):
                nodes.append(path[i])
                arrive.append(start + reach[i])
                depart.append(start + reach[i])
            depart[-1] = start + 2 * span - reach[k]
            for i in range(k - 1, -1, -1):
                nodes.append(path[i])
                arrive.append(start + 2 * span - reach[i])
                depart.append(start + 2 * span - reach[i])
            for j in list(pending):
                u, a_j = best[j][2], arrivals[j]
                for pos in range(len(nodes)):
                    if nodes[pos] == u and depart[pos] >= a_j - 1e-12:
                        meet[j] = (u, max(arrive[pos], a_j))
                        pending.discard(j)
                        break
            start += 2 * span
            x += 1
            if not pending and start >= horizon:
                break
            if x > 10_000:
                raise RuntimeError("perfect-service rounds did not terminate")
        # merge the depot visits shared by consecutive rounds
        mn, ma, md = [], [], []
        for u, a, dp in zip(nodes, arrive, depart):
            if mn and mn[-1] == u and abs(ma[-1] - a) <= 1e-12 + abs(md[-1] - a):
                md[-1] = max(md[-1], dp)
                continue
            mn.append(u)
            ma.append(a)
            md.append(dp)
        walks.append(Walk(w.owner, tuple(mn), tuple(ma), tuple(md)))
    assignments = tuple(m if m is not None else (instance.clients[j].start, math.inf) for j, m in enumerate(meet))
    return Schedule(tuple(walks), assignments)


def perfect_violations(perfect: Sequence[float], indirect: Sequence[float], eps: float) -> list[tuple]:
    """Clients whose perfect latency exceeds ``(3 + eps)`` times the indirect one."""
    return [(j, a, b) for j, (a, b) in enumerate(zip(perfect, indirect))
            if a > (3 + eps) * b * (1 + 1e-9) + 1e-9]


def indirect_reference(instance: Instance, schedule: Schedule) -> list[float]:
    return [b[0] for b in _assign(instance, schedule)]


# --------------------------------------------------------------------- pipeline


@dataclass
class SumMRConfig:
    mode: str = "exact"
    mu: float | None = None
    omega: float | None = None
    eps: float = 0.5  # indirect -> perfect slack
    lp_eps: float = 0.5  # service-cost slack inside pricing
    A: float = 4.0
    frt_count: int | None = 8
    seed: int = 0
    subset_cap: int = 14
    randomized: bool = False
    strict: bool = True

    def resolved(self, n: int) -> tuple[float, float]:
        if self.mode == "exact":
            return (1.0 if self.mu is None else self.mu), (1.0 if self.omega is None else self.omega)
        from .npcst import factors

        sigma, phi = factors(n, self.A)
        return (max(sigma, 2 * phi) if self.mu is None else self.mu), (2.0 if self.omega is None else self.omega)


@dataclass
class SolutionReport:
    schedule: Schedule  # perfect service, original units
    indirect: Schedule  # original units
    latencies: tuple[float, ...]
    indirect_latencies: tuple[float, ...]
    total: float
    indirect_total: float
    lp_objective: float  # original units
    scale: Fraction
    mu: float
    omega: float
    trace: RoundingTrace | None
    config: SumMRConfig

    @property
    def certificates(self) -> dict:
        tr = self.trace
        return {
            "lp_objective": self.lp_objective,
            "mu": self.mu,
            "omega": self.omega,
            "bound_indirect": 32 * self.mu * self.omega * self.lp_objective,
            "bound_perfect": (3 + self.config.eps) * 32 * self.mu * self.omega * self.lp_objective,
            "perfect_ratio_max": max((a / b for a, b in zip(self.latencies, self.indirect_latencies) if b > 0),
                                     default=0.0),
            "perfect_violations": [j for j, _, _ in perfect_violations(self.latencies, self.indirect_latencies,
                                                                       self.config.eps)],
            "steps": [] if tr is None else [
                {"q": s.q, "f": s.f, "served": len(s.served), "required": s.required, "F": s.F} for s in tr.steps],
            "decay": [] if tr is None else [{"stamp": s, "residual": a, "bound": b} for s, a, b in tr.decay],
        }


def _rescale(schedule: Schedule, factor: float) -> Schedule:
    walks = tuple(Walk(w.owner, w.nodes, tuple(a / factor for a in w.arrive), tuple(b / factor for b in w.depart))
                  for w in schedule.walks)
    asg = None if schedule.assignments is None else tuple((u, t / factor) for u, t in schedule.assignments)
    return Schedule(walks, asg)


def solve_sum_mr(instance: Instance, config: SumMRConfig | None = None) -> SolutionReport:
    config = config or SumMRConfig()
    mu, omega = config.resolved(instance.n)
    zero = set(instance.zero_latency_clients())
    if len(zero) == instance.m or instance.metric.min_positive() is None:
        walks = tuple(Walk(r.id, (r.depot,), (0.0,), (0.0,)) for r in instance.repairmen)
        sched = Schedule(walks, tuple((c.start, 0.0) for c in instance.clients))
        lat = tuple(0.0 for _ in instance.clients)
        return SolutionReport(sched, Schedule(walks), lat, lat, 0.0, 0.0, 0.0, Fraction(1), mu, omega, None, config)
    scaled, factor = scale_instance(instance)
    grid = build_time_grid(scaled)
    frac = solve_sum_mr_lp(scaled, grid, config.mode, mu, omega, config.lp_eps,
                           npcst_solver=_pricer(config), subset_cap=config.subset_cap)
    indirect, trace = run_sum_mra(scaled, frac, subset_cap=config.subset_cap, randomized=config.randomized,
                                  seed=config.seed, strict=config.strict)
    perfect = to_perfect(scaled, indirect, config.eps)
    ev_p = evaluate_perfect(scaled, perfect)
    ev_i = evaluate_indirect(scaled, indirect)
    over = perfect_violations(ev_p.latencies, ev_i.latencies, config.eps)
    if over and config.strict and config.eps >= 1:
        j, a, b = over[0]
        raise CertificateError(f"client {j}: perfect latency {a} > (3+eps) x {b}")
    if over:
        log.warning("perfect service exceeds (3+eps) for %d clients (eps=%g < 1 is not covered)",
                    len(over), config.eps)
    fac = float(factor)
    out_p = _rescale(perfect, fac)
    out_i = _rescale(indirect, fac)
    lat_p = evaluate_perfect(instance, out_p).latencies
    lat_i = evaluate_indirect(instance, out_i).latencies
    return SolutionReport(out_p, out_i, lat_p, lat_i, float(sum(lat_p)), float(sum(lat_i)),
                          frac.objective / fac, factor, mu, omega, trace, config)


def _pricer(config: SumMRConfig):
    if config.mode != "oracle":
        return None
    from .npcst import solve_npcst_general

    def solver(inst):
        return solve_npcst_general(inst, A=config.A, eps=config.lp_eps, seed=config.seed, count=config.frt_count)

    return solver
