"""Path-variable LP for Sum-MR and its (mu, omega)-relaxation.

Walks are collapsed to *path classes*: all walks that visit the same node set
hit the same client balls, so one column per (repairman, visited set) is enough.
The class cost is the Held-Karp value of that set.  Two solution modes exist:

* ``exact``: every class within budget is enumerated (small n only);
* ``oracle``: column generation, priced by a neighborhood prize-collecting
  Steiner tree solver whose tree is turned into a walk.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .model import Instance, TimeGrid, ball_mask, mst_edges, walk_length

log = logging.getLogger(__name__)

LP_TOL = 1e-9
DEFAULT_SUBSET_CAP = 14


class CapExceeded(RuntimeError):
    pass


class LPInfeasible(RuntimeError):
    pass


class LPUnbounded(RuntimeError):
    pass


class InfeasibleFractional(ValueError):
    pass


@dataclass(frozen=True)
class PathClass:
    repairman: int
    visited: frozenset
    min_length: float
    representative: tuple[int, ...]

    @property
    def mask(self) -> int:
        return sum(1 << u for u in self.visited)


def held_karp(d: np.ndarray, source: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Open-path Held-Karp from ``source`` over every subset of nodes.

    Returns ``(best, dp, parent)`` where ``best[mask]`` is the shortest walk from
    ``source`` visiting all nodes of ``mask`` (inf if ``mask`` lacks the source).
    """
    n = len(d)
    size = 1 << n
    dp = np.full((size, n), np.inf)
    parent = np.full((size, n), -1, dtype=np.int16)
    dp[1 << source, source] = 0.0
    masks = np.arange(size, dtype=np.int64)
    has_src = (masks >> source) & 1 == 1
    counts = np.bitwise_count(masks)
    for k in range(2, n + 1):
        layer = masks[has_src & (counts == k)]
        for j in range(n):
            if j == source:
                continue
            sel = layer[(layer >> j) & 1 == 1]
            if not len(sel):
                continue
            prev = sel ^ (1 << j)
            cand = dp[prev] + d[:, j][None, :]
            arg = cand.argmin(axis=1)
            dp[sel, j] = cand[np.arange(len(sel)), arg]
            parent[sel, j] = arg
    best = dp.min(axis=1)
    return best, dp, parent


def _hk_walk(dp: np.ndarray, parent: np.ndarray, mask: int) -> tuple[int, ...]:
    j = int(np.argmin(dp[mask]))
    out = []
    while j >= 0:
        out.append(j)
        pj = int(parent[mask, j])
        mask ^= 1 << j
        j = pj
    return tuple(reversed(out))


def enumerate_path_classes(instance: Instance, length_budget, subset_cap: int = DEFAULT_SUBSET_CAP,
                           repairmen: Sequence[int] | None = None) -> list[PathClass]:
    """Every visited set reachable within ``length_budget`` (scalar or per repairman).

    Classes are sorted by ``(repairman, min_length, mask)``.
    """
    if instance.n > subset_cap:
        raise CapExceeded(f"{instance.n} nodes exceeds the enumeration cap {subset_cap}; use oracle mode")
    d = instance.metric.array
    ids = list(range(instance.k)) if repairmen is None else list(repairmen)
    budgets = length_budget if isinstance(length_budget, dict) else {r: length_budget for r in ids}
    cache: dict[int, tuple] = {}
    out: list[PathClass] = []
    for r in ids:
        rep = instance.repairmen[r]
        if rep.depot not in cache:
            cache[rep.depot] = held_karp(d, rep.depot)
        best, dp, parent = cache[rep.depot]
        budget = float(budgets[r])
        ok = np.flatnonzero(best <= budget + 1e-12 * max(1.0, budget))
        rows = sorted(ok.tolist(), key=lambda mk: (best[mk], mk))
        for mk in rows:
            visited = frozenset(u for u in range(instance.n) if (mk >> u) & 1)
            out.append(PathClass(rep.id, visited, float(best[mk]), _hk_walk(dp, parent, mk)))
    return out


def min_walk_length(instance: Instance, source: int, visited, cap: int = 12) -> tuple[float, tuple[int, ...]]:
    """Shortest walk from ``source`` through ``visited``; exact up to ``cap`` nodes, else MST preorder."""
    nodes = sorted(set(visited) | {source})
    d = instance.metric.array
    if len(nodes) <= cap:
        sub = d[np.ix_(nodes, nodes)]
        s = nodes.index(source)
        best, dp, parent = held_karp(sub, s)
        full = (1 << len(nodes)) - 1
        walk = tuple(nodes[i] for i in _hk_walk(dp, parent, full))
        return float(best[full]), walk
    walk = preorder_walk(d, source, nodes)
    return walk_length(instance.metric, walk), walk


def preorder_walk(d: np.ndarray, root: int, nodes) -> tuple[int, ...]:
    """Shortcut doubled-MST tour from ``root`` (open walk, length <= 2 MST)."""
    nodes = [root] + [u for u in nodes if u != root]
    adj: dict[int, list[int]] = {u: [] for u in nodes}
    for a, b in mst_edges(d, nodes):
        adj[a].append(b)
        adj[b].append(a)
    seen, order, stack = set(), [], [root]
    while stack:
        u = stack.pop()
        if u in seen:
            continue
        seen.add(u)
        order.append(u)
        stack.extend(sorted(adj[u], reverse=True))
    return tuple(order)


# ---------------------------------------------------------------- LP plumbing


@dataclass
class LPTableau:
    """``min c.x  s.t.  A_ub x <= b_ub,  x >= 0`` with labelled rows and columns."""

    c: np.ndarray
    A_ub: sparse.csr_matrix
    b_ub: np.ndarray
    col_labels: list = field(default_factory=list)
    row_labels: list = field(default_factory=list)

    def dump(self) -> str:
        """Plain-text dump: one ``obj`` line, then one ``row`` line per constraint."""
        lines = ["obj " + " ".join(f"{lab}:{v:g}" for lab, v in zip(self.col_labels, self.c) if v)]
        A = self.A_ub.tocsr()
        for i, lab in enumerate(self.row_labels):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            terms = " ".join(f"{A.data[p]:+g}*{self.col_labels[A.indices[p]]}" for p in range(lo, hi))
            lines.append(f"row {lab}: {terms} <= {self.b_ub[i]:g}")
        return "\n".join(lines) + "\n"


@dataclass
class LPResult:
    x: np.ndarray
    objective: float
    marginals: np.ndarray
    dual_objective: float


def solve_lp(tab: LPTableau) -> LPResult:
    """Solve with HiGHS and certify the optimum by the primal/dual objective gap."""
    res = linprog(
        tab.c, A_ub=tab.A_ub, b_ub=tab.b_ub, bounds=(0, None), method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status == 2:
        raise LPInfeasible(res.message)
    if res.status == 3:
        raise LPUnbounded(res.message)
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    marg = np.asarray(res.ineqlin.marginals, dtype=float)
    dual = float(tab.b_ub @ marg)
    gap = abs(dual - res.fun)
    if gap > 1e-7 * max(1.0, abs(res.fun)):
        raise RuntimeError(f"duality gap {gap:g} too large")
    return LPResult(np.asarray(res.x, dtype=float), float(res.fun), marg, dual)


# ------------------------------------------------------------ the (R)PLP family


@dataclass
class Column:
    repairman: int  # index into instance.repairmen
    stamp: int  # index into grid.stamps
    cls: PathClass
    hits: frozenset  # active-client positions whose relaxed ball the class meets


@dataclass
class DualValues:
    """Duals with ``beta`` in the convention ``sum(theta over hit) <= beta / omega``."""

    lam: dict
    beta: dict
    theta: dict


@dataclass
class FractionalSolution:
    instance: Instance
    grid: TimeGrid
    mu: float
    omega: float
    clients: tuple[int, ...]  # clients present in the LP (zero-latency ones are not)
    columns: list[Column]
    x: dict  # column index -> value
    y: dict  # (client, stamp index) -> value
    objective: float
    history: list = field(default_factory=list)
    mode: str = "exact"

    def h(self, s: int) -> float:
        return float(sum(v for (c, t), v in self.y.items() if t == s))

    def cumulative_y(self, c: int, s: int) -> float:
        return float(sum(self.y.get((c, t), 0.0) for t in range(s + 1)))

    def support(self, r: int, s: int) -> list[int]:
        return [i for i, col in enumerate(self.columns)
                if col.repairman == r and col.stamp == s and self.x.get(i, 0.0) > LP_TOL]


def hit_matrix(instance: Instance, classes: Sequence[PathClass], t: float, mu: float,
               clients: Sequence[int]) -> np.ndarray:
    """Boolean ``len(classes) x len(clients)``: class meets the mu-stretched ball at time t."""
    balls = ball_mask(instance, mu * t)[list(clients)]
    vis = np.zeros((len(classes), instance.n), dtype=bool)
    for i, pc in enumerate(classes):
        vis[i, list(pc.visited)] = True
    return (vis.astype(np.int32) @ balls.T.astype(np.int32)) > 0


def _maximal_hitsets(hits: np.ndarray, lengths: Sequence[float]) -> list[int]:
    """Indices keeping one cheapest class per hit set, dropping dominated hit sets."""
    keep: dict[bytes, int] = {}
    for i in sorted(range(len(hits)), key=lambda i: (lengths[i], i)):
        key = np.packbits(hits[i]).tobytes()
        keep.setdefault(key, i)
    idx = list(keep.values())
    rows = hits[idx]
    out = []
    for a, i in enumerate(idx):
        ra = rows[a]
        dominated = False
        for b, _ in enumerate(idx):
            if b != a:
                rb = rows[b]
                if np.all(rb >= ra) and np.any(rb > ra):
                    dominated = True
                    break
        if not dominated:
            out.append(i)
    return sorted(out)


def build_plp(instance: Instance, grid: TimeGrid, columns: list[Column], mu: float, omega: float,
              clients: Sequence[int]) -> LPTableau:
    """Rows: capacity (r,t), coverage (c,t), demand (c); columns: x then y."""
    S = len(grid.stamps)
    pos = {c: i for i, c in enumerate(clients)}
    nx_, m = len(columns), len(clients)
    ny = m * S
    c = np.concatenate([np.zeros(nx_), np.tile(np.array(grid.stamps, dtype=float), m)])
    rows, cols, vals, b, labels = [], [], [], [], []
    row = 0
    cap_rows = {}
    for r in range(instance.k):
        for s in range(S):
            cap_rows[r, s] = row
            labels.append(("cap", r, s))
            b.append(float(omega))
            row += 1
    cov_rows = {}
    for cj in clients:
        for s in range(S):
            cov_rows[cj, s] = row
            labels.append(("cov", cj, s))
            b.append(0.0)
            row += 1
    dem_rows = {}
    for cj in clients:
        dem_rows[cj] = row
        labels.append(("dem", cj))
        b.append(-1.0)
        row += 1
    for i, col in enumerate(columns):
        rows.append(cap_rows[col.repairman, col.stamp])
        cols.append(i)
        vals.append(1.0)
        for cj in col.hits:
            rows.append(cov_rows[cj, col.stamp])
            cols.append(i)
            vals.append(-1.0)
    for cj in clients:
        for s in range(S):
            yi = nx_ + pos[cj] * S + s
            for s2 in range(s, S):
                rows.append(cov_rows[cj, s2])
                cols.append(yi)
                vals.append(1.0)
            rows.append(dem_rows[cj])
            cols.append(yi)
            vals.append(-1.0)
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(row, nx_ + ny))
    col_labels = [("x", col.repairman, col.stamp, i) for i, col in enumerate(columns)]
    col_labels += [("y", cj, s) for cj in clients for s in range(S)]
    return LPTableau(c, A, np.array(b), col_labels, labels)


def _duals(tab: LPTableau, res: LPResult, omega: float) -> DualValues:
    lam, beta, theta = {}, {}, {}
    for lab, mg in zip(tab.row_labels, res.marginals):
        v = max(0.0, -float(mg))
        if lab[0] == "cap":
            beta[lab[1], lab[2]] = omega * v
        elif lab[0] == "cov":
            theta[lab[1], lab[2]] = v
        else:
            lam[lab[1]] = v
    return DualValues(lam, beta, theta)


def _unpack(instance, grid, mu, omega, clients, columns, tab, res, mode, history) -> FractionalSolution:
    S = len(grid.stamps)
    nx_ = len(columns)
    x = {i: float(v) for i, v in enumerate(res.x[:nx_]) if v > LP_TOL}
    y = {}
    for p, cj in enumerate(clients):
        vals = np.clip(res.x[nx_ + p * S: nx_ + (p + 1) * S], 0.0, None)
        # trim any excess over 1 from the latest stamps (keeps feasibility, lowers objective)
        excess = vals.sum() - 1.0
        for s in range(S - 1, -1, -1):
            if excess <= 0:
                break
            cut = min(excess, vals[s])
            vals[s] -= cut
            excess -= cut
        for s in range(S):
            if vals[s] > LP_TOL:
                y[cj, s] = float(vals[s])
    objective = float(sum(grid.stamps[s] * v for (_, s), v in y.items()))
    return FractionalSolution(instance, grid, mu, omega, tuple(clients), columns, x, y, objective,
                              history, mode)


def check_fractional(fs: FractionalSolution, tol: float = 1e-9) -> None:
    """Raise ``InfeasibleFractional`` naming the first violated RPLP constraint."""
    S = len(fs.grid.stamps)
    load: dict = {}
    cover: dict = {}
    for i, v in fs.x.items():
        if v < -tol:
            raise InfeasibleFractional(f"x[{i}] negative")
        col = fs.columns[i]
        rep = fs.instance.repairmen[col.repairman]
        budget = fs.mu * float(rep.speed) * fs.grid.stamps[col.stamp]
        if col.cls.min_length > budget * (1 + 1e-12) + 1e-12:
            raise InfeasibleFractional(f"column {i} longer than its budget")
        load[col.repairman, col.stamp] = load.get((col.repairman, col.stamp), 0.0) + v
        for cj in col.hits:
            cover[cj, col.stamp] = cover.get((cj, col.stamp), 0.0) + v
    for (r, s), v in load.items():
        if v > fs.omega + tol:
            raise InfeasibleFractional(f"capacity violated for repairman {r} at stamp {s}: {v}")
    for cj in fs.clients:
        tot = 0.0
        for s in range(S):
            ys = fs.y.get((cj, s), 0.0)
            if ys < -tol:
                raise InfeasibleFractional(f"y[{cj},{s}] negative")
            tot += ys
            if cover.get((cj, s), 0.0) < tot - tol:
                raise InfeasibleFractional(f"coverage violated for client {cj} at stamp {s}")
        if tot < 1 - tol:
            raise InfeasibleFractional(f"demand violated for client {cj}: {tot}")


def _exact_columns(instance, grid, mu, clients, subset_cap) -> list[Column]:
    S = len(grid.stamps)
    top = grid.stamps[-1]
    budgets = {r: mu * float(rep.speed) * top for r, rep in enumerate(instance.repairmen)}
    classes = enumerate_path_classes(instance, budgets, subset_cap)
    by_rep: dict[int, list[PathClass]] = {}
    for pc in classes:
        by_rep.setdefault(pc.repairman, []).append(pc)
    columns = []
    for r, rep in enumerate(instance.repairmen):
        pool = by_rep.get(rep.id, [])
        for s in range(S):
            t = grid.stamps[s]
            budget = mu * float(rep.speed) * t
            fit = [pc for pc in pool if pc.min_length <= budget * (1 + 1e-12) + 1e-12]
            if not fit:
                continue
            hits = hit_matrix(instance, fit, t, mu, clients)
            for i in _maximal_hitsets(hits, [pc.min_length for pc in fit]):
                hs = frozenset(clients[p] for p in np.flatnonzero(hits[i]))
                columns.append(Column(r, s, fit[i], hs))
    return columns


def _column_for(instance, grid, mu, clients, r, s, pc: PathClass) -> Column:
    hits = hit_matrix(instance, [pc], grid.stamps[s], mu, clients)[0]
    return Column(r, s, pc, frozenset(clients[p] for p in np.flatnonzero(hits)))


def _seed_columns(instance, grid, mu, clients) -> list[Column]:
    d = instance.metric.array
    everything = list(range(instance.n))
    columns = []
    for r, rep in enumerate(instance.repairmen):
        tour = preorder_walk(d, rep.depot, everything)
        full = PathClass(rep.id, frozenset(tour), walk_length(instance.metric, tour), tour)
        home = PathClass(rep.id, frozenset([rep.depot]), 0.0, (rep.depot,))
        for s, t in enumerate(grid.stamps):
            columns.append(_column_for(instance, grid, mu, clients, r, s, home))
            if full.min_length <= mu * float(rep.speed) * t:
                columns.append(_column_for(instance, grid, mu, clients, r, s, full))
    return columns


def price(duals: DualValues, instance: Instance, r: int, t: float, npcst_solver: Callable,
          mu: float = 1.0, omega: float = 1.0, stamp: int | None = None,
          clients: Sequence[int] | None = None) -> PathClass | None:
    """Look for a class whose relaxed theta-profit exceeds ``beta / omega``.

    The pricing instance is the unrelaxed separation problem (budget ``v_r t``,
    balls of radius ``v'_c t``); the solver's tree is turned into a walk and
    judged against the ``mu``-relaxed budget and balls.
    """
    from .npcst import NPCSTClient, NPCSTInstance

    key_s = stamp if stamp is not None else t
    clients = list(range(instance.m)) if clients is None else list(clients)
    theta = {cj: duals.theta.get((cj, key_s), 0.0) for cj in clients}
    if all(v <= LP_TOL for v in theta.values()):
        return None
    rep = instance.repairmen[r]
    threshold = duals.beta.get((r, key_s), 0.0) / omega
    items = [cj for cj in clients if theta[cj] > LP_TOL]
    inst = NPCSTInstance(
        instance.metric, rep.depot,
        tuple(NPCSTClient(instance.clients[cj].start, theta[cj], float(instance.clients[cj].speed) * t)
              for cj in items),
        float(rep.speed) * t,
    )
    sol = npcst_solver(inst)
    length, walk = min_walk_length(instance, rep.depot, sol.nodes)
    if length > mu * float(rep.speed) * t * (1 + 1e-12) + 1e-12:
        return None
    pc = PathClass(rep.id, frozenset(walk), length, walk)
    hits = hit_matrix(instance, [pc], t, mu, items)[0]
    profit = float(sum(theta[items[p]] for p in np.flatnonzero(hits)))
    if profit > threshold + LP_TOL * max(1.0, threshold):
        return pc
    return None


def solve_sum_mr_lp(instance: Instance, grid: TimeGrid, mode: str = "exact", mu: float = 1.0,
                    omega: float = 1.0, eps: float = 0.5, npcst_solver: Callable | None = None,
                    subset_cap: int = DEFAULT_SUBSET_CAP, max_iter: int = 200,
                    keep_zero: bool = False) -> FractionalSolution:
    """Solve PLP^(mu, omega) on a scaled instance.

    Clients starting at a depot are left out (their latency is 0) unless
    ``keep_zero`` is set, in which case they pay the first stamp.  In
    ``oracle`` mode ``npcst_solver`` maps an ``NPCSTInstance`` to a solution
    with a ``nodes`` attribute; by default the general-metric tri-criteria
    solver with service-cost slack ``eps`` is used.
    """
    zero = set() if keep_zero else set(instance.zero_latency_clients())
    clients = [j for j in range(instance.m) if j not in zero]
    if mode == "exact":
        columns = _exact_columns(instance, grid, mu, clients, subset_cap)
        tab = build_plp(instance, grid, columns, mu, omega, clients)
        res = solve_lp(tab)
        return _unpack(instance, grid, mu, omega, clients, columns, tab, res, "exact", [res.objective])
    if mode != "oracle":
        raise ValueError(f"unknown LP mode {mode!r}")
    if npcst_solver is None:
        from .npcst import solve_npcst_general

        def npcst_solver(inst):
            return solve_npcst_general(inst, eps=eps, seed=0)

    columns = _seed_columns(instance, grid, mu, clients)
    seen = {(c.repairman, c.stamp, c.cls.visited) for c in columns}
    history = []
    best = None
    for it in range(max_iter):
        tab = build_plp(instance, grid, columns, mu, omega, clients)
        res = solve_lp(tab)
        history.append(res.objective)
        best = (tab, res, list(columns))
        duals = _duals(tab, res, omega)
        added = 0
        for r in range(instance.k):
            for s, t in enumerate(grid.stamps):
                pc = price(duals, instance, r, t, npcst_solver, mu, omega, stamp=s, clients=clients)
                if pc is None or (r, s, pc.visited) in seen:
                    continue
                seen.add((r, s, pc.visited))
                columns.append(_column_for(instance, grid, mu, clients, r, s, pc))
                added += 1
        log.debug("column generation round %d: objective %.6g, %d new columns", it, res.objective, added)
        if not added:
            break
    else:
        log.warning("column generation hit the iteration limit; returning the last master solution")
    tab, res, cols = best
    return _unpack(instance, grid, mu, omega, clients, cols, tab, res, "oracle", history)


def lp_duals(fs: FractionalSolution) -> DualValues:
    """Re-solve the master for ``fs``'s columns and return its duals."""
    tab = build_plp(fs.instance, fs.grid, fs.columns, fs.mu, fs.omega, fs.clients)
    return _duals(tab, solve_lp(tab), fs.omega)
