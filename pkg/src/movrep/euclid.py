"""Planar NPCST via hexagon tiling.

Tiles are flat-top regular hexagons of side ``M = 2 * max radius`` in axial
coordinates, with the root at the centre of tile (0, 0).  Occupied tiles are
coloured greedily with 7 colours; each colour class gets its own budgeted
prize-collecting tree over tile centres (budget ``5 L``) and the union of the
seven trees is returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import mst_edges, mst_weight
from .npcst import NPCSTInstance, TriCriteriaSolution, hit_profit, stretch

SQRT3 = math.sqrt(3.0)
NEIGHBORS = ((1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1))
GEOM_TOL = 1e-9


@dataclass(frozen=True)
class HexGrid:
    side: float
    origin: tuple[float, float]

    def center(self, tile: tuple[int, int]) -> tuple[float, float]:
        q, r = tile
        return (self.origin[0] + self.side * 1.5 * q,
                self.origin[1] + self.side * SQRT3 * (r + q / 2.0))

    def contains(self, tile, point) -> bool:
        """Closed point-in-hexagon test."""
        cx, cy = self.center(tile)
        ax, ay = abs(point[0] - cx), abs(point[1] - cy)
        tol = GEOM_TOL * self.side
        return ay <= SQRT3 / 2 * self.side + tol and SQRT3 * ax + ay <= SQRT3 * self.side + tol

    def rough_tile(self, point) -> tuple[int, int]:
        x = (point[0] - self.origin[0]) / self.side
        y = (point[1] - self.origin[1]) / self.side
        fq = 2.0 / 3.0 * x
        fr = -x / 3.0 + y / SQRT3
        fs = -fq - fr
        q, r, s = round(fq), round(fr), round(fs)
        dq, dr, ds = abs(q - fq), abs(r - fr), abs(s - fs)
        if dq > dr and dq > ds:
            q = -r - s
        elif dr > ds:
            r = -q - s
        return int(q), int(r)

    def locate(self, point) -> tuple[int, int]:
        """The unique tile holding ``point``; boundary points go to the smallest axial pair."""
        q, r = self.rough_tile(point)
        cands = [(q, r)] + [(q + a, r + b) for a, b in NEIGHBORS]
        inside = sorted(t for t in cands if self.contains(t, point))
        if not inside:
            raise AssertionError("point location failed")
        return inside[0]

    def vertices(self, tile) -> list[tuple[float, float]]:
        cx, cy = self.center(tile)
        return [(cx + self.side * math.cos(math.pi / 3 * k), cy + self.side * math.sin(math.pi / 3 * k))
                for k in range(6)]

    def distance_to(self, tile, point) -> float:
        """Euclidean distance from ``point`` to the closed hexagon."""
        if self.contains(tile, point):
            return 0.0
        vs = self.vertices(tile)
        px, py = point
        best = math.inf
        for (x1, y1), (x2, y2) in zip(vs, vs[1:] + vs[:1]):
            ex, ey = x2 - x1, y2 - y1
            t = max(0.0, min(1.0, ((px - x1) * ex + (py - y1) * ey) / (ex * ex + ey * ey)))
            best = min(best, math.hypot(px - x1 - t * ex, py - y1 - t * ey))
        return best


def hex_distance(a, b) -> int:
    dq, dr = a[0] - b[0], a[1] - b[1]
    return (abs(dq) + abs(dr) + abs(dq + dr)) // 2


def build_hex_tiling(points: Sequence, side: float, root: int) -> tuple[HexGrid, list[tuple[int, int]]]:
    if side <= 0:
        raise ValueError("tile side must be positive")
    pts = [tuple(map(float, p)) for p in points]
    grid = HexGrid(float(side), pts[root])
    return grid, [grid.locate(p) for p in pts]


def color_tiles(tiles) -> dict[tuple[int, int], int]:
    """Greedy colouring of the tiles and their neighbours in sorted scan order.

    Each tile tries colours starting from ``(q + 3r) mod 7``, the periodic
    lattice colouring, so the greedy never has to deviate from it: same-colour
    tiles end up at least three steps apart and a tile's ring gets 7 colours.
    """
    universe = set(tiles)
    for q, r in list(tiles):
        universe.update((q + a, r + b) for a, b in NEIGHBORS)
    color: dict[tuple[int, int], int] = {}
    for t in sorted(universe):
        used = {color[(t[0] + a, t[1] + b)] for a, b in NEIGHBORS if (t[0] + a, t[1] + b) in color}
        start = (t[0] + 3 * t[1]) % 7
        color[t] = next(1 + (start + i) % 7 for i in range(7) if 1 + (start + i) % 7 not in used)
    return color


def coloring_violations(color: dict) -> list[tuple]:
    bad = []
    for (q, r), c in color.items():
        for a, b in NEIGHBORS:
            u = (q + a, r + b)
            if u in color and color[u] == c and (q, r) < u:
                bad.append(((q, r), u))
    return bad


@dataclass
class AuxGraph:
    tiles: list[tuple[int, int]]  # occupied tiles, sorted
    center: dict  # tile -> metric node
    color: dict  # tile -> colour
    assigned: list[tuple]  # client -> occupied tiles its ball meets
    profit: dict  # tile -> summed client profit
    grid: HexGrid = field(repr=False, default=None)


def build_aux_graph(instance: NPCSTInstance, grid: HexGrid, coloring: dict,
                    node_tiles: Sequence[tuple[int, int]]) -> AuxGraph:
    coords = instance.metric.coords
    if coords is None:
        raise ValueError("planar instance needs coordinates")
    half = grid.side / 2.0
    for c in instance.clients:
        if c.radius > half * (1 + GEOM_TOL):
            raise ValueError(f"client radius {c.radius} exceeds M/2 = {half}")
    occupied = sorted(set(node_tiles))
    center = {}
    for u, t in enumerate(node_tiles):
        if t not in center:
            center[t] = u
    center[node_tiles[instance.root]] = instance.root
    occ = set(occupied)
    assigned = []
    profit = {t: 0.0 for t in occupied}
    for c in instance.clients:
        p = coords[c.location]
        home = node_tiles[c.location]
        near = [t for t in occupied if hex_distance(t, home) <= 2 and grid.distance_to(t, p) <= c.radius + GEOM_TOL * grid.side]
        if home not in near:
            near.append(home)
        near = sorted(set(near) & occ)
        if len(near) > 3:
            raise AssertionError(f"ball meets {len(near)} tiles")
        assigned.append(tuple(near))
        for t in near:
            profit[t] += c.profit
    return AuxGraph(occupied, center, {t: coloring[t] for t in occupied}, assigned, profit, grid)


def solve_bpcst(d: np.ndarray, profits: Sequence[float], root: int, budget: float, mode: str = "exact",
                exact_cap: int = 15) -> tuple[tuple[int, ...], float]:
    """Root-containing node set of MST cost <= budget with large profit.

    ``exact`` is a branch-and-bound over subsets (profit upper bound pruning);
    ``greedy`` repeatedly adds the best profit per extra MST cost (no guarantee).
    """
    n = len(profits)
    lim = budget * (1 + 1e-12) + 1e-12
    if mode == "greedy":
        chosen = [root]
        while True:
            base = mst_weight(d, chosen)
            best, arg = 0.0, None
            for u in range(n):
                if u in chosen or profits[u] <= 0:
                    continue
                w = mst_weight(d, chosen + [u])
                if w <= lim:
                    score = profits[u] / max(w - base, 1e-12)
                    if score > best:
                        best, arg = score, u
            if arg is None:
                break
            chosen.append(arg)
        nodes = tuple(sorted(chosen))
        return nodes, float(sum(profits[u] for u in nodes))
    if mode != "exact":
        raise ValueError(mode)
    if n > exact_cap:
        raise ValueError(f"{n} centres exceed the exact BPCST cap {exact_cap}")
    others = sorted((u for u in range(n) if u != root), key=lambda u: (-profits[u], u))
    suffix = np.concatenate([np.cumsum([profits[u] for u in others][::-1])[::-1], [0.0]])
    best = [float(profits[root]), (root,)]

    def dfs(i, chosen, val):
        if val + suffix[i] <= best[0]:
            return
        if i == len(others):
            if mst_weight(d, chosen) <= lim:
                best[0], best[1] = val, tuple(sorted(chosen))
            return
        u = others[i]
        dfs(i + 1, chosen + [u], val + profits[u])
        dfs(i + 1, chosen, val)

    dfs(0, [root], float(profits[root]))
    return best[1], best[0]


def solve_npcsta(instance: NPCSTInstance, eps: float = 0.5, subsolver: str = "exact") -> TriCriteriaSolution:
    metric = instance.metric
    if metric.coords is None:
        raise ValueError("planar instance needs coordinates")
    d = metric.array
    root = instance.root
    L = float(instance.budget)
    radii = [c.radius for c in instance.clients]
    if any(r <= 0 for r in radii):
        raise ValueError("planar NPCST needs positive radii")
    if not radii:
        return TriCriteriaSolution((root,), (), 0.0, 0.0, (), 1.0, 0.0, 0.0, {"colors": {}})
    side = 2.0 * max(radii)
    P = max(radii) / min(radii)
    sigma = 4 * P + 1
    grid, node_tiles = build_hex_tiling(metric.coords, side, root)
    coloring = color_tiles(set(node_tiles))
    aux = build_aux_graph(instance, grid, coloring, node_tiles)

    per_color = {}
    union = {root}
    served: set[int] = set()
    root_tile = node_tiles[root]
    for col in range(1, 8):
        tiles = [t for t in aux.tiles if aux.color[t] == col and t != root_tile]
        nodes = [root] + [aux.center[t] for t in tiles]
        profs = [0.0] * len(nodes)
        if aux.color[root_tile] == col:
            profs[0] = aux.profit[root_tile]
        for i, t in enumerate(tiles, start=1):
            profs[i] = aux.profit[t]
        sub = d[np.ix_(nodes, nodes)]
        picked, _ = solve_bpcst(sub, profs, 0, 5.0 * L, subsolver)
        chosen = [nodes[i] for i in picked]
        w = mst_weight(d, chosen)
        per_color[col] = {"nodes": chosen, "weight": w}
        union.update(chosen)
        chosen_tiles = {node_tiles[u] for u in chosen if aux.center.get(node_tiles[u]) == u}
        for j, ts in enumerate(aux.assigned):
            if any(t in chosen_tiles and aux.color[t] == col for t in ts):
                served.add(j)
    nodes = sorted(union)
    ordered = [root] + [u for u in nodes if u != root]
    edges = tuple(mst_edges(d, ordered))
    cost = float(sum(d[a, b] for a, b in edges))
    hit, profit = hit_profit(ordered, instance, sigma)
    # every client served through a coloured tile must be inside the stretched radius
    for j in served:
        c = instance.clients[j]
        near = float(d[c.location, ordered].min())
        if near > sigma * c.radius * (1 + GEOM_TOL) + GEOM_TOL:
            raise AssertionError(f"client {j} served at distance {near} > (4P+1) t_c")
    info = {"P": P, "side": side, "colors": per_color, "served": sorted(served),
            "union_weight": float(sum(v["weight"] for v in per_color.values())), "eps_prime": eps / 3}
    return TriCriteriaSolution(tuple(ordered), edges, cost, profit, hit, sigma,
                               stretch(ordered, instance, hit), cost / L if L > 0 else (0.0 if cost == 0 else math.inf),
                               info)
