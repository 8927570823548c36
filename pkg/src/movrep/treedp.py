"""Exact DP for the scaled total-service-cost Steiner tree problem on a rooted tree.

``DP(v, b, h)`` is the best profit of a subtree of ``sub(v)`` that contains ``v``,
costs at most ``b`` and whose served clients in ``sub(v)`` have total scaled
service cost at most ``h``.  After binarization every node falls into one of
four cases (no child used, the only child, one of two children, both).  Clients
below an unused child are served from ``v`` itself, which is a knapsack.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

NEG = -np.inf
DEFAULT_CELL_CAP = 2_000_000


class TableTooLarge(MemoryError):
    pass


@dataclass
class RootedTree:
    """``parent[root] == -1``; ``cost`` is the integer edge cost to the parent.

    ``length`` is the real edge length used for service distances; it defaults
    to ``cost``.
    """

    parent: list[int]
    cost: list[int]
    root: int = 0
    length: list[float] | None = None
    children: list[list[int]] = field(init=False)

    def __post_init__(self):
        if self.length is None:
            self.length = [float(c) for c in self.cost]
        self.children = [[] for _ in self.parent]
        for v, p in enumerate(self.parent):
            if p >= 0:
                self.children[p].append(v)
        if self.parent[self.root] != -1:
            raise ValueError("root must have parent -1")

    @property
    def size(self) -> int:
        return len(self.parent)

    def postorder(self) -> list[int]:
        out, stack = [], [(self.root, False)]
        while stack:
            v, done = stack.pop()
            if done:
                out.append(v)
                continue
            stack.append((v, True))
            for c in reversed(self.children[v]):
                stack.append((c, False))
        return out

    def depths(self) -> list[float]:
        """Real distance from the root to every node."""
        dep = [0.0] * self.size
        for v in reversed(self.postorder()):
            p = self.parent[v]
            if p >= 0:
                dep[v] = dep[p] + self.length[v]
        return dep

    def ancestors(self, v: int) -> list[int]:
        out = [v]
        while self.parent[out[-1]] >= 0:
            out.append(self.parent[out[-1]])
        return out


def binarize(tree: RootedTree) -> tuple[RootedTree, list[int]]:
    """Split high-degree nodes with balanced zero-cost dummy nodes.

    Returns the new tree and ``origin``: new node -> old node, or -1 for dummies.
    Original nodes keep their ids.
    """
    parent = list(tree.parent)
    cost = list(tree.cost)
    length = list(tree.length)
    origin = list(range(tree.size))

    def new_node(p):
        parent.append(p)
        cost.append(0)
        length.append(0.0)
        origin.append(-1)
        return len(parent) - 1

    def attach(p, kids):
        # hang ``kids`` below p using at most two slots per node
        if len(kids) <= 2:
            for c in kids:
                parent[c] = p
            return
        half = (len(kids) + 1) // 2
        for group in (kids[:half], kids[half:]):
            if len(group) == 1:
                parent[group[0]] = p
            else:
                attach(new_node(p), group)

    for v in range(tree.size):
        kids = tree.children[v]
        if len(kids) > 2:
            attach(v, list(kids))
    return RootedTree(parent, cost, tree.root, length), origin


def knapsack_max(items: Sequence[tuple[int, object]], W: int) -> tuple[object, list[int]]:
    """0/1 knapsack: maximum value with total weight <= W, plus the chosen item indices.

    Values may be ints, floats or Fractions; ties prefer leaving items out.
    """
    if W < 0:
        return 0, []
    zero = 0
    table = [[zero] * (W + 1)]
    for w, val in items:
        prev = table[-1]
        row = list(prev)
        if w <= W:
            for cap in range(w, W + 1):
                cand = prev[cap - w] + val
                if cand > row[cap]:
                    row[cap] = cand
        table.append(row)
    chosen = []
    cap = W
    for i in range(len(items), 0, -1):
        if table[i][cap] != table[i - 1][cap]:
            chosen.append(i - 1)
            cap -= items[i - 1][0]
    return table[-1][W], sorted(chosen)


def _knapsack_row(weights: Sequence[int], values: Sequence[float], W: int) -> np.ndarray:
    row = np.zeros(W + 1)
    for w, val in zip(weights, values):
        if w > W:
            continue
        shifted = np.full(W + 1, NEG)
        shifted[w:] = row[: W + 1 - w] + val
        row = np.maximum(row, shifted)
    return row


@dataclass(frozen=True)
class TreeClient:
    node: int
    profit: float
    radius: float


@dataclass
class STSCSTInstance:
    tree: RootedTree
    clients: list[TreeClient]
    B: int
    Bhat: int
    X: float


@dataclass
class STSCSTSolution:
    nodes: frozenset
    served: tuple[int, ...]
    profit: float
    cost: int
    scaled_service: int


def scaled_cost(client: TreeClient, distance: float, X: float, cap: int) -> int:
    """``floor(theta * d / (t * X))``; values that can never fit map to ``cap + 1``."""
    if distance <= 0:
        return 0
    if client.profit == 0:
        return 0
    if client.radius <= 0 or X <= 0:
        return cap + 1
    val = client.profit * distance / (client.radius * X)
    # tolerate float noise just below an integer
    k = math.floor(val + 1e-9)
    return min(k, cap + 1)


def _maxplus_2d(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    """``out[b, h] = max_{b1 <= b, h1 <= h} A[b1, h1] + C[b - b1, h - h1]``."""
    nb, nh = A.shape
    ib = np.arange(nb)[:, None] - np.arange(nb)[None, :]
    ih = np.arange(nh)[:, None] - np.arange(nh)[None, :]
    Cp = np.full((nb + 1, nh + 1), NEG)
    Cp[:nb, :nh] = C
    ib = np.where(ib < 0, nb, ib)
    ih = np.where(ih < 0, nh, ih)
    G = Cp[ib[:, None, :, None], ih[None, :, None, :]]  # [b, h, b1, h1]
    return (G + A[None, None, :, :]).max(axis=(2, 3))


def _maxplus_h(A: np.ndarray, k: np.ndarray) -> np.ndarray:
    """``out[b, h] = max_{h1 <= h} A[b, h1] + k[h - h1]``."""
    nh = A.shape[1]
    ih = np.arange(nh)[:, None] - np.arange(nh)[None, :]
    kp = np.append(k, NEG)
    K = kp[np.where(ih < 0, nh, ih)]  # [h, h1]
    return (A[:, None, :] + K[None, :, :]).max(axis=2)


class _Solver:
    def __init__(self, inst: STSCSTInstance, cell_cap: int):
        if (inst.B + 1) * (inst.Bhat + 1) > cell_cap:
            raise TableTooLarge(f"DP table {inst.B + 1}x{inst.Bhat + 1} exceeds cap {cell_cap}")
        self.inst = inst
        self.tree, self.origin = binarize(inst.tree)
        t = self.tree
        self.depth = t.depths()
        # map clients to nodes in the binarized tree (original ids are kept)
        self.at: list[list[int]] = [[] for _ in range(t.size)]
        for i, c in enumerate(inst.clients):
            self.at[c.node].append(i)
        self.below: list[list[int]] = [[] for _ in range(t.size)]
        for v in t.postorder():
            acc = list(self.at[v])
            for ch in t.children[v]:
                acc.extend(self.below[ch])
            self.below[v] = acc
        self.dp: dict[int, np.ndarray] = {}

    def weight(self, ci: int, v: int) -> int:
        c = self.inst.clients[ci]
        return scaled_cost(c, self.depth[c.node] - self.depth[v], self.inst.X, self.inst.Bhat)

    def served_from(self, v: int, clients: Sequence[int]) -> np.ndarray:
        cl = list(clients)
        return _knapsack_row([self.weight(ci, v) for ci in cl],
                             [self.inst.clients[ci].profit for ci in cl], self.inst.Bhat)

    def here(self, v: int) -> float:
        return float(sum(self.inst.clients[ci].profit for ci in self.at[v]))

    def cases(self, v: int) -> list[tuple[str, np.ndarray]]:
        t, B, H = self.tree, self.inst.B, self.inst.Bhat
        kids = t.children[v]
        out = [("none", np.tile(self.served_from(v, self.below[v]), (B + 1, 1)))]
        base = self.here(v)
        if len(kids) == 1:
            (a,) = kids
            e = t.cost[a]
            val = np.full((B + 1, H + 1), NEG)
            if e <= B:
                val[e:] = self.dp[a][: B + 1 - e] + base
            out.append(("one", val))
        elif len(kids) == 2:
            for keep, drop in (kids, kids[::-1]):
                e = t.cost[keep]
                val = np.full((B + 1, H + 1), NEG)
                if e <= B:
                    k = self.served_from(v, self.below[drop])
                    val[e:] = _maxplus_h(self.dp[keep][: B + 1 - e], k) + base
                out.append((f"keep{keep}", val))
            a, b = kids
            e = t.cost[a] + t.cost[b]
            val = np.full((B + 1, H + 1), NEG)
            if e <= B:
                val[e:] = _maxplus_2d(self.dp[a], self.dp[b])[: B + 1 - e] + base
            out.append(("both", val))
        return out

    def run(self) -> np.ndarray:
        for v in self.tree.postorder():
            best = None
            for _, val in self.cases(v):
                best = val if best is None else np.maximum(best, val)
            self.dp[v] = best
        return self.dp[self.tree.root]

    def rebuild(self, v: int, b: int, h: int, nodes: set, served: list):
        """Walk the recurrence back from cell (v, b, h)."""
        t = self.tree
        target = self.dp[v][b, h]
        kids = t.children[v]
        base = self.here(v)
        tol = 1e-9 * max(1.0, abs(target))
        nodes.add(v)
        # 1: only v
        row = self.served_from(v, self.below[v])
        if row[h] >= target - tol:
            self._pick(v, self.below[v], h, served)
            return
        if len(kids) == 1:
            (a,) = kids
            served.extend(self.at[v])
            self.rebuild(a, b - t.cost[a], h, nodes, served)
            return
        a1, a2 = kids
        for keep, drop in ((a1, a2), (a2, a1)):
            e = t.cost[keep]
            if e > b:
                continue
            k = self.served_from(v, self.below[drop])
            for h1 in range(h + 1):
                if self.dp[keep][b - e, h1] + k[h - h1] + base >= target - tol:
                    served.extend(self.at[v])
                    self._pick(v, self.below[drop], h - h1, served)
                    self.rebuild(keep, b - e, h1, nodes, served)
                    return
        e = t.cost[a1] + t.cost[a2]
        rest = b - e
        for b1 in range(rest + 1):
            for h1 in range(h + 1):
                if self.dp[a1][b1, h1] + self.dp[a2][rest - b1, h - h1] + base >= target - tol:
                    served.extend(self.at[v])
                    self.rebuild(a1, b1, h1, nodes, served)
                    self.rebuild(a2, rest - b1, h - h1, nodes, served)
                    return
        raise AssertionError("DP reconstruction failed")

    def _pick(self, v, clients, cap, served):
        cl = list(clients)
        items = [(self.weight(ci, v), self.inst.clients[ci].profit) for ci in cl]
        _, chosen = knapsack_max(items, cap)
        served.extend(cl[i] for i in chosen)


def solve_stscst(inst: STSCSTInstance, cell_cap: int = DEFAULT_CELL_CAP) -> STSCSTSolution:
    """Exact optimum over r-containing subtrees and served client sets."""
    s = _Solver(inst, cell_cap)
    s.run()
    nodes: set[int] = set()
    served: list[int] = []
    s.rebuild(s.tree.root, inst.B, inst.Bhat, nodes, served)
    orig = frozenset(s.origin[v] for v in nodes if s.origin[v] >= 0)
    cost = subtree_cost(inst.tree, orig)
    service = scaled_service(inst, orig, served)
    profit = float(sum(inst.clients[i].profit for i in served))
    if cost > inst.B or service > inst.Bhat:
        raise AssertionError("reconstructed STSCST solution violates its budgets")
    return STSCSTSolution(orig, tuple(sorted(served)), profit, cost, service)


def subtree_cost(tree: RootedTree, nodes) -> int:
    return int(sum(tree.cost[v] for v in nodes if v != tree.root))


def nearest_in(tree: RootedTree, nodes, node: int, depth: Sequence[float] | None = None) -> float:
    """Real distance from ``node`` to the closest member of a root-containing subtree."""
    depth = tree.depths() if depth is None else depth
    for a in tree.ancestors(node):
        if a in nodes:
            return depth[node] - depth[a]
    raise ValueError("node set does not contain the root")


def scaled_service(inst: STSCSTInstance, nodes, served) -> int:
    dep = inst.tree.depths()
    return int(sum(scaled_cost(inst.clients[i], nearest_in(inst.tree, nodes, inst.clients[i].node, dep),
                               inst.X, inst.Bhat) for i in served))


def real_service(tree: RootedTree, clients: Sequence[TreeClient], nodes, served) -> float:
    dep = tree.depths()
    total = 0.0
    for i in served:
        c = clients[i]
        dist = nearest_in(tree, nodes, c.node, dep)
        if dist > 0:
            total += c.profit * dist / c.radius if c.radius > 0 else math.inf
    return total


@dataclass
class TSCSTSolution:
    nodes: frozenset
    served: tuple[int, ...]
    profit: float
    cost: int
    service: float


def solve_tscst(tree: RootedTree, clients: Sequence[TreeClient], B: int, Bprime: float, eps: float,
                cell_cap: int = DEFAULT_CELL_CAP) -> TSCSTSolution:
    """Round service costs down with unit ``X = B' eps / |C|`` and solve exactly.

    The result's profit is at least the TSCST optimum and its real service cost
    is at most ``B' (1 + eps)``.  With ``B' = 0`` only zero-distance service counts.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    clients = list(clients)
    if Bprime > 0 and clients:
        X = Bprime * eps / len(clients)
        Bhat = int(math.floor(len(clients) / eps + 1e-9))
    else:
        X, Bhat = 0.0, 0
    sol = solve_stscst(STSCSTInstance(tree, clients, int(B), Bhat, X), cell_cap)
    service = real_service(tree, clients, sol.nodes, sol.served)
    return TSCSTSolution(sol.nodes, sol.served, sol.profit, sol.cost, service)


# ------------------------------------------------------------------ brute force


def connected_subtrees(tree: RootedTree):
    """Every node set containing the root that induces a connected subtree."""
    others = [v for v in range(tree.size) if v != tree.root]
    for k in range(len(others) + 1):
        for combo in itertools.combinations(others, k):
            s = set(combo)
            if all(tree.parent[v] == tree.root or tree.parent[v] in s for v in s):
                yield frozenset(s | {tree.root})


def brute_stscst(inst: STSCSTInstance) -> float:
    best = 0.0
    dep = inst.tree.depths()
    for nodes in connected_subtrees(inst.tree):
        if subtree_cost(inst.tree, nodes) > inst.B:
            continue
        w = [scaled_cost(c, nearest_in(inst.tree, nodes, c.node, dep), inst.X, inst.Bhat) for c in inst.clients]
        for mask in range(1 << len(inst.clients)):
            idx = [i for i in range(len(inst.clients)) if mask >> i & 1]
            if sum(w[i] for i in idx) <= inst.Bhat:
                best = max(best, float(sum(inst.clients[i].profit for i in idx)))
    return best


def brute_tscst(tree: RootedTree, clients: Sequence[TreeClient], B: int, Bprime: float) -> float:
    best = 0.0
    for nodes in connected_subtrees(tree):
        if subtree_cost(tree, nodes) > B:
            continue
        for mask in range(1 << len(clients)):
            idx = [i for i in range(len(clients)) if mask >> i & 1]
            if real_service(tree, clients, nodes, idx) <= Bprime * (1 + 1e-12):
                best = max(best, float(sum(clients[i].profit for i in idx)))
    return best
