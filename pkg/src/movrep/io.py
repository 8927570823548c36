"""Instance and result files.

Instance files are line oriented, ``#`` starts a comment::

    MRINST 1
    mode metric            # or: euclidean
    nodes 3
    dist 0 1 2.5           # metric mode: one row per node, decimal or p/q strings
    node 0 0.0 0.0         # euclidean mode: id x y
    repairman 0 0 1        # id depot speed
    client 0 2 1/2         # id start speed
    npcst 0 4              # optional: root budget
    npcst_client 2 3 0.5   # location profit radius

Result files are a ``MRRESULT 1`` line followed by one JSON object with
sorted keys.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction
from pathlib import Path

from .model import Client, Instance, MetricSpace, Repairman, validate_metric
from .npcst import NPCSTClient, NPCSTInstance

INSTANCE_MAGIC = "MRINST 1"
RESULT_MAGIC = "MRRESULT 1"


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = "" if line is None else f"line {line}" + ("" if field is None else f", field {field}") + ": "
        super().__init__(where + message)
        self.line = line
        self.field = field
        self.message = message

    def record(self) -> dict:
        return {"error": "parse", "line": self.line, "field": self.field, "message": self.message}


@dataclass
class InstanceFile:
    mode: str
    metric: MetricSpace
    repairmen: list[Repairman] = field(default_factory=list)
    clients: list[Client] = field(default_factory=list)
    npcst_root: int | None = None
    npcst_budget: Fraction | None = None
    npcst_clients: list[tuple[int, Fraction, Fraction]] = field(default_factory=list)

    def instance(self) -> Instance:
        if not self.repairmen:
            raise ValueError("instance file has no repairmen")
        return Instance(self.metric, tuple(self.repairmen), tuple(self.clients))

    def npcst(self) -> NPCSTInstance:
        if self.npcst_root is None:
            raise ValueError("instance file has no npcst block")
        cl = tuple(NPCSTClient(u, float(p), float(r)) for u, p, r in self.npcst_clients)
        return NPCSTInstance(self.metric, self.npcst_root, cl, float(self.npcst_budget))


def parse_number(text: str, line: int | None = None, name: str | None = None) -> Fraction:
    try:
        val = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"malformed number {text!r}", line, name) from None
    return val


def format_number(x) -> str:
    """Exact decimal when the value has a finite expansion, otherwise ``p/q``."""
    x = Fraction(x)
    den = x.denominator
    while den % 2 == 0:
        den //= 2
    while den % 5 == 0:
        den //= 5
    if den != 1:
        return f"{x.numerator}/{x.denominator}"
    with localcontext() as ctx:
        ctx.prec = 4 * (len(str(x.numerator)) + len(str(x.denominator))) + 10
        s = format(Decimal(x.numerator) / Decimal(x.denominator), "f")
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return s


def _int(text: str, line: int, name: str, hi: int | None = None) -> int:
    try:
        v = int(text)
    except ValueError:
        raise ParseError(f"expected an integer, got {text!r}", line, name) from None
    if v < 0 or (hi is not None and v >= hi):
        raise ParseError(f"{name} {v} out of range", line, name)
    return v


def parse_instance_text(text: str) -> InstanceFile:
    lines = []
    for no, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            lines.append((no, body.split()))
    if not lines or " ".join(lines[0][1]) != INSTANCE_MAGIC:
        raise ParseError(f"first line must be {INSTANCE_MAGIC!r}", lines[0][0] if lines else 1, "header")
    mode, n = None, None
    rows: list[list[Fraction]] = []
    coords: dict[int, tuple[float, float]] = {}
    reps, clients, npc_clients = [], [], []
    npc = None
    for no, tok in lines[1:]:
        kw, args = tok[0], tok[1:]

        def need(k):
            if len(args) != k:
                raise ParseError(f"{kw} takes {k} fields, got {len(args)}", no, kw)

        if kw == "mode":
            need(1)
            if args[0] not in ("metric", "euclidean"):
                raise ParseError(f"unknown mode {args[0]!r}", no, "mode")
            mode = args[0]
        elif kw == "nodes":
            need(1)
            n = _int(args[0], no, "nodes")
            if n < 1:
                raise ParseError("need at least one node", no, "nodes")
        elif n is None and kw in ("dist", "node", "repairman", "client", "npcst", "npcst_client"):
            raise ParseError("'nodes' must come first", no, kw)
        elif kw == "dist":
            if mode != "metric":
                raise ParseError("dist rows need mode metric", no, kw)
            need(n)
            rows.append([parse_number(a, no, f"dist[{len(rows)}][{i}]") for i, a in enumerate(args)])
        elif kw == "node":
            if mode != "euclidean":
                raise ParseError("node lines need mode euclidean", no, kw)
            need(3)
            u = _int(args[0], no, "node id", n)
            if u in coords:
                raise ParseError(f"node {u} given twice", no, "node id")
            try:
                coords[u] = (float(args[1]), float(args[2]))
            except ValueError:
                raise ParseError("malformed coordinate", no, "node xy") from None
            if not all(math.isfinite(c) for c in coords[u]):
                raise ParseError("coordinates must be finite", no, "node xy")
        elif kw == "repairman":
            need(3)
            rid = _int(args[0], no, "repairman id")
            sp = parse_number(args[2], no, "speed")
            if sp <= 0:
                raise ParseError("repairman speed must be positive", no, "speed")
            reps.append(Repairman(rid, _int(args[1], no, "depot", n), sp))
        elif kw == "client":
            need(3)
            cid = _int(args[0], no, "client id")
            sp = parse_number(args[2], no, "speed")
            if sp < 0:
                raise ParseError("client speed must be non-negative", no, "speed")
            clients.append(Client(cid, _int(args[1], no, "start", n), sp))
        elif kw == "npcst":
            need(2)
            b = parse_number(args[1], no, "budget")
            if b < 0:
                raise ParseError("budget must be non-negative", no, "budget")
            npc = (_int(args[0], no, "root", n), b)
        elif kw == "npcst_client":
            need(3)
            p, r = parse_number(args[1], no, "profit"), parse_number(args[2], no, "radius")
            if p < 0 or r < 0:
                raise ParseError("profit and radius must be non-negative", no, "npcst_client")
            npc_clients.append((_int(args[0], no, "location", n), p, r))
        else:
            raise ParseError(f"unknown keyword {kw!r}", no, "keyword")
    last = lines[-1][0]
    if mode is None or n is None:
        raise ParseError("missing mode or nodes line", last, "header")
    for kind, items in (("repairman", reps), ("client", clients)):
        ids = [x.id for x in items]
        if ids != list(range(len(ids))):
            raise ParseError(f"{kind} ids must be 0..{len(ids) - 1} in order", last, kind)
    if npc_clients and npc is None:
        raise ParseError("npcst_client lines need an npcst line", last, "npcst")
    if mode == "metric":
        if len(rows) != n:
            raise ParseError(f"expected {n} dist rows, got {len(rows)}", last, "dist")
        bad = validate_metric(rows)
        if bad:
            kind, *where = bad[0]
            raise ParseError(f"metric violation: {kind} at {tuple(where)}", last, "dist")
        metric = MetricSpace.from_matrix(rows)
    else:
        if sorted(coords) != list(range(n)):
            raise ParseError(f"expected node lines for ids 0..{n - 1}", last, "node")
        metric = MetricSpace.from_points([coords[u] for u in range(n)])
    out = InstanceFile(mode, metric, reps, clients)
    if npc is not None:
        out.npcst_root, out.npcst_budget = npc
        out.npcst_clients = npc_clients
    return out


def parse_instance(path) -> InstanceFile:
    p = Path(path)
    if not p.exists():
        raise ParseError(f"no such file: {p}")
    return parse_instance_text(p.read_text())


def format_instance(f: InstanceFile) -> str:
    out = [INSTANCE_MAGIC, f"mode {f.mode}", f"nodes {f.metric.n}"]
    if f.mode == "metric":
        out += ["dist " + " ".join(format_number(v) for v in row) for row in f.metric.dist]
    else:
        out += [f"node {u} {x!r} {y!r}" for u, (x, y) in enumerate(f.metric.coords)]
    out += [f"repairman {r.id} {r.depot} {format_number(r.speed)}" for r in f.repairmen]
    out += [f"client {c.id} {c.start} {format_number(c.speed)}" for c in f.clients]
    if f.npcst_root is not None:
        out.append(f"npcst {f.npcst_root} {format_number(f.npcst_budget)}")
        out += [f"npcst_client {u} {format_number(p)} {format_number(r)}" for u, p, r in f.npcst_clients]
    return "\n".join(out) + "\n"


def write_instance(f: InstanceFile, path) -> None:
    Path(path).write_text(format_instance(f))


def content_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, Fraction):
        return format_number(x)
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if hasattr(x, "item"):  # numpy scalars
        return _jsonable(x.item())
    return x


def format_result(record: dict) -> str:
    return RESULT_MAGIC + "\n" + json.dumps(_jsonable(record), sort_keys=True, indent=1) + "\n"


def parse_result_text(text: str) -> dict:
    head, _, body = text.partition("\n")
    if head.strip() != RESULT_MAGIC:
        raise ParseError(f"first line must be {RESULT_MAGIC!r}", 1, "header")
    try:
        return json.loads(body)
    except json.JSONDecodeError as e:
        raise ParseError(f"bad JSON: {e.msg}", e.lineno + 1, "body") from None
