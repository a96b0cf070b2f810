"""Command-line entry point.

Every input accepts either a path to a JSON file or inline JSON.  Output is
JSON by default; ``--format tsv`` prints one ``key<TAB>value`` line per
top-level field.  Exit codes: 0 success, 1 theorem violation, 2 bad input
or unmet precondition, 3 cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

from . import actions, bgraph, fqalg, invariants, polymatroid, stacking, wordmeasure
from .errors import CapExceeded, LabError, PreconditionError, TheoremViolation

EXIT_OK, EXIT_VIOLATION, EXIT_PRECONDITION, EXIT_CAP = 0, 1, 2, 3

DEFAULT_CAPS = {
    "quotient_vertices": 16,
    "coverings": 10**5,
    "partitions": 2 * 10**6,
    "maps": 10**6,
    "vertices": 12,
}


# ---------------------------------------------------------------------------
# input and output


def load_json(text: str) -> Any:
    """Parse ``text`` as a path to a JSON file, or failing that as inline JSON."""
    path = Path(text)
    try:
        if path.is_file():
            return json.loads(path.read_text())
    except OSError:
        pass
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise PreconditionError(f"not a JSON file or inline JSON: {text!r}") from exc


def load_graph(text: str, strict: bool = True) -> bgraph.BGraph:
    data = load_json(text)
    try:
        return bgraph.BGraph.from_json(data, strict=strict)
    except (KeyError, TypeError) as exc:
        raise PreconditionError(f"malformed graph JSON: {exc}") from exc


def load_words(text: str) -> list[str]:
    data = load_json(text)
    if isinstance(data, dict):
        data = data.get("words")
    if not isinstance(data, list) or not all(isinstance(w, str) for w in data):
        raise PreconditionError("word lists are JSON arrays of strings")
    return data


def subgroup_graph(args) -> bgraph.BGraph:
    words = load_words(args.subgroup)
    letters = tuple(args.letters) if args.letters else None
    return bgraph.fold_words(words, letters)


def load_caps(text: str | None) -> dict:
    caps = dict(DEFAULT_CAPS)
    if text:
        given = load_json(text)
        if not isinstance(given, dict):
            raise PreconditionError("caps must be a JSON object")
        caps.update(given)
    for key, value in caps.items():
        if not isinstance(value, int) or value <= 0:
            raise PreconditionError(f"cap {key} must be a positive integer")
    return caps


def _plain(obj: Any) -> Any:
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [_plain(v) for v in items]
    if isinstance(obj, polymatroid.LogRational):
        return repr(obj)
    return obj


def emit(result: Any, fmt: str, out=None) -> None:
    out = out or sys.stdout
    result = _plain(result)
    if fmt == "tsv" and isinstance(result, dict):
        for key, value in result.items():
            cell = value if isinstance(value, (str, int)) else json.dumps(value, sort_keys=True)
            print(f"{key}\t{cell}", file=out)
    elif fmt == "tsv" and isinstance(result, list):
        for row in result:
            print("\t".join(json.dumps(c, sort_keys=True) if not isinstance(c, (str, int)) else str(c) for c in row)
                  if isinstance(row, list) else json.dumps(row, sort_keys=True), file=out)
    else:
        print(json.dumps(result, sort_keys=True, indent=None if fmt == "tsv" else 2), file=out)


def require_seed(args) -> int:
    if args.seed is None:
        raise PreconditionError("--seed is mandatory for sampling modes")
    return args.seed


# ---------------------------------------------------------------------------
# graph commands


def cmd_fold(args):
    g = subgroup_graph(argparse.Namespace(subgroup=args.words, letters=args.letters))
    return g.to_json()


def cmd_core(args):
    g = load_graph(args.graph)
    return bgraph.core(g, keep_basepoint=not args.drop_basepoint).to_json()


def cmd_pullback(args):
    pb = bgraph.pullback(load_graph(args.left), load_graph(args.right), keep_basepoint=args.basepointed)
    return {
        "graph": pb.graph.to_json(),
        "left_vertex": pb.left_vertex,
        "right_vertex": pb.right_vertex,
        "chi": pb.graph.euler_char(),
    }


def cmd_chi(args):
    return load_graph(args.graph, strict=False).euler_char()


def cmd_morphisms(args):
    source = load_graph(args.source)
    target = load_graph(args.target, strict=False)
    found = bgraph.enumerate_morphisms(source, target, basepointed=args.basepointed)
    return {
        "count": len(found),
        "morphisms": [{"vertices": list(m.vertex_map), "edges": [list(e) for e in m.edge_map]} for m in found],
    }


def cmd_coverings(args):
    g = load_graph(args.graph)
    covs = list(bgraph.enumerate_coverings(g, args.d, args.caps["coverings"]))
    return {"count": len(covs), "coverings": [[list(p) for p in c.perms] for c in covs]}


def cmd_quotients(args):
    g = load_graph(args.graph)
    qs = bgraph.quotients(g, cap=args.caps["quotient_vertices"])
    return {"count": len(qs), "quotients": [{"chi": q.euler_char(), "graph": q.to_json()} for q in qs]}


def cmd_stacking(args):
    g = load_graph(args.graph)
    st = stacking.minimal_stacking(g) if args.minimal else stacking.find_stacking(g)
    if st is None:
        return {"stackable": False}
    out = {
        "stackable": True,
        "heights": list(st.heights),
        "length": stacking.stacking_length(g, st.heights),
        "certified": st.certified,
    }
    if g.is_connected() and g.euler_char() <= 0:
        w = stacking.sigma_min_nonbridge(g, st.heights)
        out["edge"] = list(w.edge)
        out["edge_heights"] = list(w.heights)
        out["route"] = w.route
    return out


# ---------------------------------------------------------------------------
# word measures


def cmd_measure_sn(args):
    g = subgroup_graph(args)
    group = wordmeasure.symmetric_group(args.d) if args.mode == "subsets" else wordmeasure.trivial_group(args.d)
    if args.samples:
        est = wordmeasure.monte_carlo_check(g, args.d, args.n, args.samples, require_seed(args), group)
        return {"mean": est.mean, "stderr": est.stderr, "samples": est.samples, "seed": est.seed, "n": args.n}
    expr = wordmeasure.expected_fixed_subsets_symbolic(g, args.d, group, caps={"vertices": args.caps["vertices"]})
    out = expr.to_json()
    if expr.is_zero():
        out["degree"] = None
        out["leading"] = "0"
    else:
        deg, lc = expr.asymptotics()
        out["degree"] = deg
        out["leading"] = str(lc)
    if args.n is not None:
        out["value"] = str(expr.evaluate(args.n))
    if args.out:
        Path(args.out).write_text(json.dumps(_plain(out), sort_keys=True, indent=2) + "\n")
    return out


def cmd_measure_gl(args):
    g = subgroup_graph(args)
    if args.samples:
        field = fqalg.GF(args.q)
        words = bgraph.basis_words(g)
        images = load_json(args.beta) if args.beta else [fqalg.mat_identity(args.d) for _ in words]
        rep = fqalg.Rep(field, g.letters, words, images)
        total, inj = fqalg.expected_inter(g, rep, args.n, "mc", args.samples, require_seed(args))
        return {"inter": total, "injective": inj, "samples": args.samples, "seed": args.seed}
    value = fqalg.grassmann_fixed_bruteforce(g, args.n, args.q, args.d)
    return {"n": args.n, "q": args.q, "d": args.d, "expected_fixed_subspaces": value,
            "subspaces": fqalg.gaussian_binomial(args.n, args.d, args.q)}


# ---------------------------------------------------------------------------
# invariants, verification, probes


def cmd_invariant(args):
    g = subgroup_graph(args)
    caps = {k: args.caps[k] for k in ("coverings", "quotient_vertices", "partitions")}
    if args.which == "pibar":
        value, crit = invariants.pibar_exact(g, caps["quotient_vertices"])
        lattice = invariants.crit_lattice_check(g, caps["quotient_vertices"])
        return {"value": value, "method": "exact", "critical": [c.to_json() for c in crit],
                "lattice_closed": lattice.closed, "lattice_failures": lattice.failures}
    if args.d is None:
        raise PreconditionError("--d is required")
    fn = {
        "sbarpi": invariants.sbar_pi_d_exact,
        "sbarpi-triv": invariants.sbar_pi_d_triv_exact,
        "spi-upper": invariants.spi_d_upper,
    }[args.which]
    return fn(g, args.d, caps).to_json()


def _points(text: str | None, g: bgraph.BGraph, action: actions.FiniteAction, cap: int):
    if text is None:
        return [f for f, _ in actions.orbit_representatives(g, action, cap)]
    data = load_json(text)
    if data and isinstance(data[0], list):
        return [tuple(f) for f in data]
    return [tuple(data)]


def cmd_verify(args):
    if args.which == "shnc":
        a, b = load_graph(args.left), load_graph(args.right)
        lhs = -bgraph.pullback(a, b).graph.euler_char()
        rhs = a.euler_char() * b.euler_char()
        if lhs > rhs:
            raise TheoremViolation(f"-chi(pullback) = {lhs} exceeds chi(a) chi(b) = {rhs}")
        return {"lhs": lhs, "rhs": rhs, "tight": lhs == rhs}
    g = load_graph(args.graph)
    if args.which == "gap" and args.delta:
        delta = load_graph(args.delta)
        if args.d is None:
            return _gap(polymatroid.image_polymatroid(g, delta))
        subs = bgraph.find_coverings_in_pullback(g, delta, args.d)
        rows = [{"components": [list(c) for c in sub.components],
                 **_gap(polymatroid.covering_image_polymatroid(g, delta, sub))} for sub in subs]
        return {"coverings": len(rows), "results": rows}
    if not args.action:
        raise PreconditionError("--action is required")
    action = actions.FiniteAction.from_json(load_json(args.action))
    rows = []
    for f in _points(args.f, g, action, args.caps["maps"]):
        system = actions.EquationSystem(g, f)
        if args.which == "reiter":
            rep = actions.reiter_verify(system, action)
            rows.append({"f": list(f), **rep})
        else:
            gp = actions.action_polymatroid(system, action)
            rows.append({"f": list(f), **_gap(gp)})
    return {"instances": len(rows), "results": rows}


def _gap(gp) -> dict:
    g = gp.graph
    report = gp.check()
    if not report.ok:
        return {"certified": False, "reason": f"not a Γ-polymatroid: {report.violations[0].describe()}"}
    if g.rank() > 1:
        mode = "nonabelian"
    elif polymatroid.is_cycle_graph(g) and not bgraph.is_proper_power(polymatroid.cycle_word(g)) and gp.is_compact():
        mode = "nonpower"
    else:
        return {"certified": False, "reason": "hypothesis not met"}
    cert = polymatroid.verify_gap_certificate(gp, mode)
    return {"certified": True, "mode": mode, "letter": g.letters[cert.letter], "edge": cert.edge,
            "chi": cert.chi, "edge_value": cert.edge_value}


def cmd_probe(args):
    g = subgroup_graph(args)
    if args.which == "sbarpi-q":
        if args.d is None:
            raise PreconditionError("--d is required")
        rep = fqalg.sbarpi_q_probe(g, args.d, args.q, args.max_radius)
        return {"value": rep.value, "method": rep.method, "certificate": rep.certificate,
                "certified": rep.certified, "skipped": rep.skipped, "candidates": rep.candidates,
                "min_rank": rep.min_rank}
    if not args.module:
        raise PreconditionError("--module is required")
    module = fqalg.FqModule.from_json(load_json(args.module))
    rep = fqalg.khnc_probe(bgraph.basis_words(g), module)
    return {"rank_h": rep.rank_h, "rank_m": rep.rank_m, "rank_intersection": rep.rank_intersection,
            "codim_m": rep.codim_m, "codim_intersection": rep.codim_intersection,
            "lhs": rep.lhs, "rhs": rep.rhs, "slack": rep.slack}


def cmd_selftest(args):
    from .selftest import run_all

    only = [int(x) for x in args.only.split(",")] if args.only else None
    results = run_all(only)
    for r in results:
        print(r.line(), file=sys.stderr)
        for f in r.failures[:5]:
            print(f"    {f}", file=sys.stderr)
    summary = {"passed": sum(r.passed for r in results), "total": len(results),
               "criteria": {str(r.number): r.passed for r in results}}
    if summary["passed"] != summary["total"]:
        args._exit = EXIT_VIOLATION
    return summary


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    def common_options(parser, defaults: bool):
        extra = {} if defaults else {"default": argparse.SUPPRESS}
        parser.add_argument("--caps", help="JSON object (file or inline) overriding search caps", **extra)
        parser.add_argument("--seed", type=int, help="seed for sampling modes (mandatory there)", **extra)
        parser.add_argument("--format", choices=("json", "tsv"), **({"default": "json"} if defaults else extra))

    p = argparse.ArgumentParser(prog="stallings-lab", description="Stallings graphs, word measures and stable invariants.")
    common_options(p, True)
    common = argparse.ArgumentParser(add_help=False)
    common_options(common, False)
    sub = p.add_subparsers(dest="command", required=True)

    def graph_cmd(name, fn, help_text, *flags):
        sp = sub.add_parser(name, help=help_text, parents=[common])
        for flag in flags:
            sp.add_argument(flag, required=True)
        sp.set_defaults(func=fn)
        return sp

    sp = sub.add_parser("fold", help="Stallings graph of a word list", parents=[common])
    sp.add_argument("--words", required=True)
    sp.add_argument("--letters")
    sp.set_defaults(func=cmd_fold)

    sp = graph_cmd("core", cmd_core, "core of a graph", "--graph")
    sp.add_argument("--drop-basepoint", action="store_true")
    sp = graph_cmd("pullback", cmd_pullback, "core of the fiber product", "--left", "--right")
    sp.add_argument("--basepointed", action="store_true")
    graph_cmd("chi", cmd_chi, "Euler characteristic", "--graph")
    sp = graph_cmd("morphisms", cmd_morphisms, "all graph morphisms", "--source", "--target")
    sp.add_argument("--basepointed", action="store_true")
    sp = graph_cmd("coverings", cmd_coverings, "numbered coverings of degree d", "--graph")
    sp.add_argument("--d", type=int, required=True)
    graph_cmd("quotients", cmd_quotients, "folded quotients", "--graph")
    sp = graph_cmd("stacking", cmd_stacking, "a stacking and a minimal non-bridge edge", "--graph")
    sp.add_argument("--minimal", action="store_true")

    def subgroup_args(sp):
        sp.add_argument("--subgroup", required=True, help="JSON array of word strings")
        sp.add_argument("--letters", help="alphabet, e.g. xyz")

    measure = sub.add_parser("measure", help="word measures").add_subparsers(dest="group", required=True)
    sp = measure.add_parser("sn", help="fixed d-subsets or d-tuples under random permutations", parents=[common])
    subgroup_args(sp)
    sp.add_argument("--d", type=int, default=1)
    sp.add_argument("--mode", choices=("subsets", "tuples"), default="subsets")
    sp.add_argument("--n", type=int, help="also evaluate at this n (sample size for --samples)")
    sp.add_argument("--samples", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_measure_sn)
    sp = measure.add_parser("gl", help="fixed d-subspaces of F_q^n under random matrices", parents=[common])
    subgroup_args(sp)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--q", type=int, default=2)
    sp.add_argument("--d", type=int, default=1)
    sp.add_argument("--samples", type=int, default=0, help="estimate intertwiner counts by sampling")
    sp.add_argument("--beta", help="matrices for the basis of H (sampling mode), default identity")
    sp.set_defaults(func=cmd_measure_gl)

    sp = sub.add_parser("invariant", help="compressed ranks", parents=[common])
    sp.add_argument("which", choices=("pibar", "sbarpi", "sbarpi-triv", "spi-upper"))
    subgroup_args(sp)
    sp.add_argument("--d", type=int)
    sp.set_defaults(func=cmd_invariant)

    sp = sub.add_parser("verify", help="check inequalities on given instances", parents=[common])
    sp.add_argument("which", choices=("reiter", "gap", "shnc"))
    sp.add_argument("--graph")
    sp.add_argument("--action", help="action as JSON, e.g. {\"kind\":\"symmetric\",\"n\":4}")
    sp.add_argument("--f", help="point map or list of point maps; default all orbits")
    sp.add_argument("--delta", help="graph for the image polymatroid (gap only)")
    sp.add_argument("--d", type=int, help="with --delta, use each degree-d covering inside the pullback")
    sp.add_argument("--left")
    sp.add_argument("--right")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("probe", help="module probes over F_q", parents=[common])
    sp.add_argument("which", choices=("sbarpi-q", "khnc"))
    subgroup_args(sp)
    sp.add_argument("--d", type=int)
    sp.add_argument("--q", type=int, default=2)
    sp.add_argument("--max-radius", type=int, default=3)
    sp.add_argument("--module", help="module JSON (khnc)")
    sp.set_defaults(func=cmd_probe)

    sp = sub.add_parser("selftest", help="run the acceptance computations", parents=[common])
    sp.add_argument("--only", help="comma-separated criterion numbers")
    sp.set_defaults(func=cmd_selftest)
    return p


def run(argv: Sequence[str] | None = None, out=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # sweeps run in one thread; the variable is read so that bad values fail early
    threads = os.environ.get("STALLINGS_LAB_THREADS")
    try:
        if threads is not None and int(threads) <= 0:
            raise PreconditionError("STALLINGS_LAB_THREADS must be positive")
        args.caps = load_caps(args.caps)
        if args.command == "verify":
            need = ("--left", "--right") if args.which == "shnc" else ("--graph",)
            for flag in need:
                if getattr(args, flag[2:]) is None:
                    raise PreconditionError(f"{flag} is required")
        args._exit = EXIT_OK
        emit(args.func(args), args.format, out)
        return args._exit
    except ValueError as exc:
        if not isinstance(exc, LabError):
            exc = PreconditionError(str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except CapExceeded as exc:
        print(f"cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except TheoremViolation as exc:
        print(f"violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
