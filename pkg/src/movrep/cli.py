"""Command-line entry point: ``movrep <command> [flags]``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from .io import (InstanceFile, ParseError, content_hash, format_instance, format_result, parse_instance_text,
                 parse_result_text)
from .model import Schedule, Walk, evaluate_indirect, evaluate_perfect

COMMANDS = ("solve-sum", "solve-max", "npcst", "npcst-euclid", "embed", "oracle", "gen", "bench", "verify")
EXACT_TOL = 0.0


class VerifyError(RuntimeError):
    pass


# ----------------------------------------------------------------- helpers


def _load(path) -> tuple[InstanceFile, str]:
    p = Path(path)
    if not p.exists():
        raise ParseError(f"no such file: {p}")
    text = p.read_text()
    return parse_instance_text(text), text


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _walks(schedule: Schedule) -> list[dict]:
    return [{"owner": w.owner, "nodes": list(w.nodes), "arrive": list(w.arrive), "depart": list(w.depart)}
            for w in schedule.walks]


def _schedule(rec_walks, assignments=None) -> Schedule:
    walks = tuple(Walk(int(w["owner"]), tuple(int(u) for u in w["nodes"]), tuple(map(float, w["arrive"])),
                       tuple(map(float, w["depart"]))) for w in rec_walks)
    asg = None if assignments is None else tuple((int(u), float(t)) for u, t in assignments)
    return Schedule(walks, asg)


def _config(args) -> dict:
    skip = {"func", "out", "instance", "result", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def parse_caps(text: str | None):
    from .oracles import OracleBudget

    if not text:
        return OracleBudget()
    vals = {}
    for part in text.split(","):
        key, _, val = part.partition("=")
        key = key.strip().replace("-", "_")
        if key not in ("nodes", "clients", "repairmen", "walk_length", "seconds"):
            raise ValueError(f"unknown cap {key!r}")
        vals[key] = float(val) if key == "seconds" else int(val)
    return OracleBudget(**vals)


# ---------------------------------------------------------------- commands


def cmd_solve_sum(args) -> dict:
    from .summr import SumMRConfig, solve_sum_mr

    f, text = _load(args.instance)
    inst = f.instance()
    cfg = SumMRConfig(mode=args.mode, mu=args.mu, omega=args.omega, eps=args.epsilon, frt_count=args.frt_count,
                      seed=args.seed)
    rep = solve_sum_mr(inst, cfg)
    return {
        "command": "solve-sum", "service": "perfect", "instance_sha256": content_hash(text),
        "config": _config(args), "seed": args.seed,
        "objective": rep.total, "latencies": list(rep.latencies),
        "walks": _walks(rep.schedule), "assignments": [list(a) for a in rep.schedule.assignments],
        "indirect": {"objective": rep.indirect_total, "latencies": list(rep.indirect_latencies),
                     "walks": _walks(rep.indirect)},
        "certificates": rep.certificates,
    }


def cmd_solve_max(args) -> dict:
    from .maxmr import WALK_FACTOR, solve_max_mr

    f, text = _load(args.instance)
    inst = f.instance()
    res = solve_max_mr(inst, args.epsilon)
    return {
        "command": "solve-max", "service": "indirect", "instance_sha256": content_hash(text),
        "config": _config(args), "seed": args.seed,
        "objective": res.evaluation.maximum, "latencies": list(res.evaluation.latencies),
        "walks": _walks(res.schedule),
        "certificates": {"T": res.T, "lower_bound": res.lower_bound, "latency_limit": WALK_FACTOR * res.T,
                         "walk_limit": WALK_FACTOR * res.info["speed"] * res.T,
                         "walk_lengths": res.info["walk_lengths"], "largest_rejected": res.info["largest_rejected"],
                         "probes": [[t, ok] for t, ok in res.probes], "leaders": res.final.tagging.leaders,
                         "cover_bound": res.info["cover_bound"], "cover_max": res.info["cover_max"]},
    }


def _npcst_record(name, sol, text, args, structure, extra) -> dict:
    return {
        "command": name, "instance_sha256": content_hash(text), "config": _config(args), "seed": args.seed,
        "structure": structure, "nodes": list(sol.nodes), "edges": [list(e) for e in sol.edges],
        "objective": sol.profit, "profit": sol.profit, "cost": sol.cost, "hit": list(sol.hit), "sigma": sol.sigma,
        "certificates": {"sigma_measured": sol.sigma_meas, "phi_measured": sol.phi_meas, **extra},
    }


def cmd_npcst(args) -> dict:
    from .npcst import factors, solve_npcst_general

    f, text = _load(args.instance)
    inst = f.npcst()
    sol = solve_npcst_general(inst, A=args.A, eps=args.epsilon, seed=args.seed, count=args.frt_count)
    sigma, phi = factors(inst.metric.n, args.A)
    return _npcst_record("npcst", sol, text, args, "walk", {"sigma_declared": sigma, "phi_declared": phi})


def cmd_npcst_euclid(args) -> dict:
    from .euclid import solve_npcsta

    f, text = _load(args.instance)
    inst = f.npcst()
    sol = solve_npcsta(inst, args.epsilon, args.subsolver)
    colors = {str(k): {"nodes": v["nodes"], "weight": v["weight"]} for k, v in sol.info["colors"].items()}
    return _npcst_record("npcst-euclid", sol, text, args, "tree",
                         {"phi_declared": 35.0, "P": sol.info.get("P"), "union_weight": sol.info.get("union_weight"),
                          "colors": colors, "served": sol.info.get("served")})


def cmd_embed(args) -> dict:
    from .frt import check_domination, default_count, sample_distribution

    f, text = _load(args.instance)
    count = args.frt_count or default_count(f.metric.n)
    dist = sample_distribution(f.metric, count, args.seed)
    trees = [{"parent": list(t.parent), "level": list(t.level), "edge": [str(e) for e in t.edge],
              "leaf_of": list(t.leaf_of), "seed": t.seed, "beta": str(t.beta)} for t in dist.trees]
    bad = sum(len(check_domination(f.metric, t)) for t in dist.trees)
    return {"command": "embed", "instance_sha256": content_hash(text), "config": _config(args), "seed": args.seed,
            "trees": trees, "objective": dist.mean_distortion(f.metric),
            "certificates": {"domination_violations": bad, "mean_distortion": dist.mean_distortion(f.metric)}}


def cmd_oracle(args) -> dict:
    from .oracles import exact_max_mr, exact_npcst, exact_sum_mr

    f, text = _load(args.instance)
    rec = {"command": "oracle", "objective_kind": args.objective, "instance_sha256": content_hash(text),
           "config": _config(args), "seed": args.seed}
    if args.objective == "npcst":
        rec["objective"] = exact_npcst(f.npcst())
        return rec
    fn = exact_sum_mr if args.objective == "sum" else exact_max_mr
    res = fn(f.instance(), parse_caps(args.caps))
    rec["objective"] = res.value
    rec["walks"] = _walks(res.schedule)
    return rec


def cmd_gen(args) -> str:
    from .gen import gen_instance

    f = gen_instance(args.kind, args.nodes, args.repairmen, args.clients, args.seed,
                     equal_speeds=not args.mixed_speeds)
    return format_instance(f)


def bench_rows(count: int, seed: int, kind: str = "random-metric", nodes: int = 5, clients: int = 3,
               repairmen: int = 1, mode: str = "exact", eps: float = 0.5) -> list[dict]:
    from .gen import gen_instance
    from .maxmr import solve_max_mr
    from .oracles import exact_max_mr, exact_sum_mr
    from .summr import SumMRConfig, solve_sum_mr

    rows = []
    for s in range(seed, seed + count):
        inst = gen_instance(kind, nodes, repairmen, clients, s).instance()
        rep = solve_sum_mr(inst, SumMRConfig(mode=mode, eps=eps, seed=s))
        opt = exact_sum_mr(inst).value
        mres = solve_max_mr(inst, eps)
        mopt = exact_max_mr(inst).value

        def ratio(a, b):
            return a / b if b > 0 else (1.0 if a == 0 else math.inf)

        rows.append({"seed": s, "n": inst.n, "m": inst.m, "k": inst.k,
                     "sum_alg": rep.total, "sum_indirect": rep.indirect_total, "sum_opt": opt,
                     "sum_ratio": ratio(rep.total, opt), "max_alg": mres.max_latency, "max_opt": mopt,
                     "max_ratio": ratio(mres.max_latency, mopt)})
    return rows


def cmd_bench(args) -> dict:
    rows = bench_rows(args.count, args.seed, args.kind, args.nodes, args.clients, args.repairmen, args.mode,
                      args.epsilon)
    return {"command": "bench", "config": _config(args), "seed": args.seed, "rows": rows,
            "objective": max((r["sum_ratio"] for r in rows), default=0.0)}


# ------------------------------------------------------------------ verify


def _same(a, b) -> bool:
    a, b = float(a), float(b)
    return a == b or abs(a - b) <= EXACT_TOL * max(1.0, abs(b))


def _check_list(name, got, want, errors):
    want = [float(x) for x in want]
    if len(got) != len(want) or any(not _same(g, w) for g, w in zip(got, want)):
        errors.append(f"{name}: recomputed {list(got)} != reported {want}")


def verify_result(f: InstanceFile, text: str, rec: dict) -> list[str]:
    """Re-check a result record against its instance; returns the list of failures."""
    from .npcst import hit_profit, path_cost, stretch

    errors = []
    if rec.get("instance_sha256") is not None and rec["instance_sha256"] != content_hash(text):
        errors.append("instance hash does not match the result")
    cmd = rec.get("command")
    try:
        if cmd == "solve-sum":
            inst = f.instance()
            sched = _schedule(rec["walks"], rec["assignments"])
            ev = evaluate_perfect(inst, sched)
            _check_list("perfect latencies", ev.latencies, rec["latencies"], errors)
            if not _same(ev.total, rec["objective"]):
                errors.append(f"objective {rec['objective']} != {ev.total}")
            ind = evaluate_indirect(inst, _schedule(rec["indirect"]["walks"]))
            _check_list("indirect latencies", ind.latencies, rec["indirect"]["latencies"], errors)
            cert = rec["certificates"]
            if ind.total > cert["bound_indirect"] * (1 + 1e-9):
                errors.append("indirect total exceeds 32 mu omega LP")
        elif cmd in ("solve-max", "oracle"):
            if cmd == "oracle" and rec.get("objective_kind") == "npcst":
                from .oracles import exact_npcst

                if not _same(exact_npcst(f.npcst()), rec["objective"]):
                    errors.append("npcst oracle value does not reproduce")
                return errors
            inst = f.instance()
            ev = evaluate_indirect(inst, _schedule(rec["walks"]))
            if cmd == "solve-max":
                _check_list("latencies", ev.latencies, rec["latencies"], errors)
                val = ev.maximum
                cert = rec["certificates"]
                if val > cert["latency_limit"] * (1 + 1e-9):
                    errors.append("max latency exceeds 10 T")
                for w in _schedule(rec["walks"]).walks:
                    if w.length(inst.metric) > cert["walk_limit"] * (1 + 1e-9):
                        errors.append(f"walk of repairman {w.owner} exceeds 10 v T")
            else:
                val = ev.total if rec["objective_kind"] == "sum" else ev.maximum
            if not _same(val, rec["objective"]):
                errors.append(f"objective {rec['objective']} != recomputed {val}")
        elif cmd in ("npcst", "npcst-euclid"):
            inst = f.npcst()
            nodes = [int(u) for u in rec["nodes"]]
            if not nodes or nodes[0] != inst.root:
                errors.append("solution does not start at the root")
            d = inst.metric.array
            if rec["structure"] == "walk":
                cost = path_cost(inst.metric, nodes)
            else:
                cost = float(sum(d[a, b] for a, b in rec["edges"]))
            if not _same(cost, rec["cost"]):
                errors.append(f"cost {rec['cost']} != recomputed {cost}")
            hit, prof = hit_profit(nodes, inst, float(rec["sigma"]))
            if list(hit) != list(rec["hit"]) or not _same(prof, rec["profit"]):
                errors.append("hit set or profit does not reproduce")
            if not _same(stretch(nodes, inst, hit), rec["certificates"]["sigma_measured"]):
                errors.append("measured stretch does not reproduce")
        elif cmd == "embed":
            from .frt import DominatingTree, check_domination

            for i, t in enumerate(rec["trees"]):
                leaf_of = tuple(t["leaf_of"])
                members = [set() for _ in t["parent"]]
                for u, leaf in enumerate(leaf_of):
                    members[leaf].add(u)
                tree = DominatingTree(tuple(t["parent"]), tuple(t["level"]), tuple(Fraction(e) for e in t["edge"]),
                                      tuple(frozenset(m) for m in members), leaf_of, t["seed"], Fraction(t["beta"]))
                if check_domination(f.metric, tree):
                    errors.append(f"tree {i} does not dominate the metric")
        elif cmd == "bench":
            c = rec["config"]
            rows = bench_rows(c["count"], c["seed"], c["kind"], c["nodes"], c["clients"], c["repairmen"],
                              c["mode"], c["epsilon"])
            if json.loads(format_result({"rows": rows}).partition("\n")[2])["rows"] != rec["rows"]:
                errors.append("bench rows do not reproduce")
        else:
            errors.append(f"unknown result command {cmd!r}")
    except (KeyError, TypeError, ValueError) as e:
        errors.append(f"malformed result: {type(e).__name__}: {e}")
    return errors


def cmd_verify(args) -> dict:
    f, text = _load(args.instance)
    p = Path(args.result)
    if not p.exists():
        raise ParseError(f"no such file: {p}")
    rec = parse_result_text(p.read_text())
    errors = verify_result(f, text, rec)
    if errors:
        raise VerifyError("; ".join(errors))
    return {"verified": True, "command": rec.get("command")}


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="movrep", description="Movement repairmen solvers and checkers.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, instance=True):
        if instance:
            p.add_argument("--instance", required=True)
        p.add_argument("--out")
        p.add_argument("--seed", type=int, default=0)
        return p

    p = common(sub.add_parser("solve-sum", help="Sum-MR pipeline (LP, rounding, perfect service)"))
    p.add_argument("--mode", choices=("exact", "oracle"), default="exact")
    p.add_argument("--mu", type=float)
    p.add_argument("--omega", type=float)
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--frt-count", type=int, default=8)
    p.set_defaults(func=cmd_solve_sum)

    p = common(sub.add_parser("solve-max", help="Max-MR for equal-speed repairmen"))
    p.add_argument("--epsilon", type=float, default=0.5)
    p.set_defaults(func=cmd_solve_max)

    p = common(sub.add_parser("npcst", help="tri-criteria NPCST in a general metric"))
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--A", type=float, default=4.0)
    p.add_argument("--frt-count", type=int)
    p.set_defaults(func=cmd_npcst)

    p = common(sub.add_parser("npcst-euclid", help="planar NPCST via hexagon tiling"))
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--subsolver", choices=("exact", "greedy"), default="exact")
    p.set_defaults(func=cmd_npcst_euclid)

    p = common(sub.add_parser("embed", help="sample dominating tree embeddings"))
    p.add_argument("--frt-count", type=int)
    p.set_defaults(func=cmd_embed)

    p = common(sub.add_parser("oracle", help="exact solvers for small instances"))
    p.add_argument("--objective", choices=("sum", "max", "npcst"), default="sum")
    p.add_argument("--caps", help="e.g. nodes=6,clients=4,repairmen=2,seconds=60")
    p.set_defaults(func=cmd_oracle)

    p = common(sub.add_parser("gen", help="generate an instance file"), instance=False)
    p.add_argument("--kind", choices=("random-metric", "euclidean", "locker"), default="random-metric")
    p.add_argument("--nodes", type=int, default=6)
    p.add_argument("--repairmen", type=int, default=1)
    p.add_argument("--clients", type=int, default=3)
    p.add_argument("--mixed-speeds", action="store_true")
    p.set_defaults(func=cmd_gen)

    p = common(sub.add_parser("bench", help="algorithm/oracle ratio table over seeded instances"), instance=False)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--kind", choices=("random-metric", "euclidean", "locker"), default="random-metric")
    p.add_argument("--nodes", type=int, default=5)
    p.add_argument("--repairmen", type=int, default=1)
    p.add_argument("--clients", type=int, default=3)
    p.add_argument("--mode", choices=("exact", "oracle"), default="exact")
    p.add_argument("--epsilon", type=float, default=0.5)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="re-check a result file against its instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--result", required=True)
    p.set_defaults(func=cmd_verify)
    return ap


def _fail(record: dict, code: int) -> int:
    sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = args.func(args)
    except ParseError as e:
        return _fail(e.record(), 2)
    except VerifyError as e:
        return _fail({"error": "verify", "message": str(e)}, 3)
    except (ValueError, AssertionError, RuntimeError, KeyError) as e:
        return _fail({"error": type(e).__name__, "message": str(e)}, 1)
    if args.command == "gen":
        _emit(out, args.out)
    elif args.command == "verify":
        sys.stdout.write(json.dumps(out, sort_keys=True) + "\n")
    else:
        _emit(format_result(out), getattr(args, "out", None))
    return 0


if __name__ == "__main__":
    sys.exit(main())
