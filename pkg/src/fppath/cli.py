"""Command-line front end.

Commands::

    fppath analyze  --graph G.json [--out S.json] [--dot reactive --dot-out F.dot]
    fppath ergodic  --graph G.json [--cross-check] [--allow-periodic]
    fppath estimate --trajectories T.jsonl --A a --B b [--graph G.json]
    fppath simulate --graph G.json --samples N --seed S [--trajectories-out T.jsonl]
    fppath simulate --graph G.json --mode stationary --length N --seed S
    fppath rank     --graph G.json [--top-k K]

Every JSON document carries ``schema_version`` and a ``manifest`` (command,
input files with their SHA-256, a hash of the options, seed, tool version).
Wall-clock time is added only with ``--timing`` so that repeated runs stay
byte-identical.  Exit codes: 0 success, 2 invalid input, 3 numerical or
simulation failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
import warnings


from . import __version__
from .analysis import analyze, check_identities, rank_report
from .data import counting_stats, estimate_model, naive_stats
from .dot import FLUX_KINDS, to_dot
from .ergodic import analyze_ergodic
from .errors import ConsistencyError, SimulationError, SolverError, ValidationError
from .graph import ProblemSets, validate_assumption_1
from .io import (SCHEMA_VERSION, edge_records, empirical_document, ergodic_document, load_graph,
                 number_list, rank_document, read_trajectories, stats_document, write_json,
                 write_trajectories)
from .montecarlo import SimulationConfig, sample_first_passage, segment_and_count, stationary_run

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


class CommandError(Exception):
    """Failure carrying an exit code and an optional JSON-ready detail."""

    def __init__(self, message, code, detail=None):
        super().__init__(message)
        self.code = code
        self.detail = detail


def _file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


OUTPUT_OPTIONS = {"out", "dot_out", "trajectories_out", "timing", "func", "command"}


def manifest(args, inputs, started):
    options = {k: v for k, v in sorted(vars(args).items()) if k not in OUTPUT_OPTIONS}
    config = json.dumps(options, sort_keys=True, default=str)
    doc = {
        "command": args.command,
        "inputs": {p: _file_digest(p) for p in inputs},
        "config_hash": hashlib.sha256(config.encode()).hexdigest(),
        "seed": getattr(args, "seed", None),
        "version": __version__,
    }
    if args.timing:
        doc["wall_clock_seconds"] = time.perf_counter() - started
    return doc


def _split_labels(text):
    return [s for s in (part.strip() for part in text.split(",")) if s]


def _override_sets(sets, labels, args):
    if args.A is None and args.B is None:
        return sets
    index = {v: i for i, v in enumerate(labels)}

    def resolve(text, fallback):
        if text is None:
            return sorted(fallback)
        try:
            return [index[v] for v in _split_labels(text)]
        except KeyError as exc:
            raise ValidationError(f"unknown node {exc.args[0]!r} in --A/--B") from exc

    return ProblemSets.create(len(labels), resolve(args.A, sets.set_a), resolve(args.B, sets.set_b))


def _load(args):
    g = load_graph(args.graph)
    labels = [g.graph.label(i) for i in range(g.graph.node_count)]
    return g, labels, _override_sets(g.sets, labels, args)


def _validated(graph, model, sets):
    report = validate_assumption_1(graph, model, sets)
    if not report.ok:
        raise CommandError("assumption check failed: " + report.describe(), EXIT_INVALID,
                           report.as_dict())
    return report


def _document(args, inputs, started, body):
    doc = {"schema_version": SCHEMA_VERSION, "manifest": manifest(args, inputs, started)}
    doc.update(body)
    return doc


def cmd_analyze(args, started):
    g, labels, sets = _load(args)
    report = _validated(g.graph, g.model, sets)
    stats = analyze(g.model, sets, g.graph, validate=False)
    ids = check_identities(g.model, sets, stats)
    body = stats_document(stats, g.model, sets, labels, ids, report)
    if args.dot:
        dot_path = args.dot_out or (args.out.rsplit(".", 1)[0] + ".dot" if args.out else None)
        if dot_path is None:
            raise CommandError("--dot needs --dot-out or --out", EXIT_INVALID)
        with open(dot_path, "w") as fh:
            fh.write(to_dot(stats, labels, args.dot, sets))
    write_json(args.out, _document(args, [args.graph], started, body))


def cmd_ergodic(args, started):
    g, labels, sets = _load(args)
    erg, stats = analyze_ergodic(g.model, sets, g.graph, require_aperiodic=not args.allow_periodic,
                                 cross_check=args.cross_check)
    ids = check_identities(g.model, sets.with_mu(stats.mu), stats)
    body = stats_document(stats, g.model, sets.with_mu(stats.mu), labels, ids)
    body["ergodic"] = ergodic_document(erg, labels)
    write_json(args.out, _document(args, [args.graph], started, body))


def _trajectory_labels(path):
    """Labels in order of first appearance in a trajectory file."""
    seen = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                steps = json.loads(line)["steps"]
                for s in steps:
                    seen.setdefault(str(s[1] if isinstance(s, list) else s), None)
            except (json.JSONDecodeError, KeyError, TypeError, IndexError) as exc:
                raise ValidationError(f"line {lineno}: not a trajectory record") from exc
    if not seen:
        raise ValidationError(f"{path}: no trajectories")
    return list(seen)


def cmd_estimate(args, started):
    inputs = [args.trajectories]
    if args.graph:
        g, labels, sets = _load(args)
        inputs.append(args.graph)
    else:
        if args.A is None or args.B is None:
            raise CommandError("--A and --B are required without --graph", EXIT_INVALID)
        labels = _trajectory_labels(args.trajectories)
        index = {v: i for i, v in enumerate(labels)}
        try:
            a = [index[v] for v in _split_labels(args.A)]
            b = [index[v] for v in _split_labels(args.B)]
        except KeyError as exc:
            raise ValidationError(f"node {exc.args[0]!r} never appears in the trajectories") from exc
        sets = ProblemSets.create(len(labels), a, b)
    data = read_trajectories(args.trajectories, labels)
    est = estimate_model(data, sets)
    sub_labels = [labels[i] for i in est.nodes]
    report = _validated(est.graph, est.model, est.sets)
    stats = analyze(est.model, est.sets, est.graph, validate=False)
    ids = check_identities(est.model, est.sets, stats)
    counts = counting_stats(data, sets)
    naive = naive_stats(data, sets)
    body = stats_document(stats, est.model, est.sets, sub_labels, ids, report)
    body["estimated_model"] = {
        "nodes": sub_labels,
        "p": edge_records(est.model.p, sub_labels),
        "kappa": None if est.model.kappa is None else number_list(est.model.kappa),
        "mu": number_list(est.sets.mu),
        "trajectories": data.count,
    }
    body["counting"] = {"nodes": labels, "theta": number_list(counts.theta),
                        "J": edge_records(counts.J, labels), "L": counts.L}
    body["naive"] = {
        "tag": naive.tag, "nodes": labels,
        "q_data": number_list(naive.q_data), "theta_bar_data": number_list(naive.theta_bar_data),
        "q_model": None if naive.q_model is None else number_list(naive.q_model),
        "theta_bar_model": None if naive.theta_bar_model is None else number_list(naive.theta_bar_model),
        "discrepancy": naive.discrepancy,
    }
    write_json(args.out, _document(args, inputs, started, body))


def cmd_simulate(args, started):
    g, labels, sets = _load(args)
    _validated(g.graph, g.model, sets)
    source = g.process if g.process is not None else g.model
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        if args.mode == "stationary":
            if not args.length:
                raise CommandError("stationary mode needs --length", EXIT_INVALID)
            run = stationary_run(source, sets, args.length, seed=args.seed)
            body = {
                "mode": "stationary", "length": run.length, "transitions": run.transitions,
                "Z": {"value": run.Z.mean, "stderr": run.Z.stderr},
                "k_ab": None if run.k_ab is None else {"value": run.k_ab.mean,
                                                         "stderr": run.k_ab.stderr},
                "mu": {"value": number_list(run.mu.mean), "stderr": number_list(run.mu.stderr)},
                "q": {"value": number_list(run.q.mean), "stderr": number_list(run.q.stderr)},
                "q_minus": {"value": number_list(run.q_minus.mean),
                            "stderr": number_list(run.q_minus.stderr)},
                "ensemble": empirical_document(run.ensemble, labels),
            }
            data = run.segments
        else:
            config = SimulationConfig(args.samples, args.max_steps, args.seed)
            data = sample_first_passage(source, sets, config)
            body = {"mode": "first-passage",
                    "empirical": empirical_document(segment_and_count(data, sets), labels)}
    body["warnings"] = [str(w.message) for w in caught if issubclass(w.category, RuntimeWarning)]
    for message in body["warnings"]:
        print(f"warning: {message}", file=sys.stderr)
    if args.trajectories_out:
        write_trajectories(args.trajectories_out, data, labels)
    write_json(args.out, _document(args, [args.graph], started, body))


def cmd_rank(args, started):
    g, labels, sets = _load(args)
    _validated(g.graph, g.model, sets)
    stats = analyze(g.model, sets, g.graph, validate=False)
    body = rank_document(rank_report(stats, args.top_k), labels)
    write_json(args.out, _document(args, [args.graph], started, body))


def build_parser():
    parser = argparse.ArgumentParser(prog="fppath",
                                     description="First passage path statistics on graphs.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, graph_required=True):
        p.add_argument("--graph", required=graph_required, help="graph JSON file")
        p.add_argument("--out", help="output JSON file (default: stdout)")
        p.add_argument("--A", help="comma-separated labels overriding the source set")
        p.add_argument("--B", help="comma-separated labels overriding the target set")
        p.add_argument("--timing", action="store_true", help="record wall-clock time")

    p = sub.add_parser("analyze", help="exact first passage statistics")
    common(p)
    p.add_argument("--dot", choices=sorted(FLUX_KINDS), help="also write a DOT flux graph")
    p.add_argument("--dot-out", help="DOT output file (default: --out with .dot suffix)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("ergodic", help="equilibrium statistics of an ergodic chain")
    common(p)
    p.add_argument("--cross-check", action="store_true",
                   help="compare the closed forms with the generic pipeline")
    p.add_argument("--allow-periodic", action="store_true",
                   help="accept periodic irreducible chains")
    p.set_defaults(func=cmd_ergodic)

    p = sub.add_parser("estimate", help="estimate a chain from trajectories and analyze it")
    common(p, graph_required=False)
    p.add_argument("--trajectories", required=True, help="JSON-lines trajectory file")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="Monte Carlo sampling")
    common(p)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=1_000_000)
    p.add_argument("--mode", choices=["first-passage", "stationary"], default="first-passage")
    p.add_argument("--length", type=int, help="trajectory length in stationary mode")
    p.add_argument("--trajectories-out", help="write sampled paths as JSON lines")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rank", help="rank nodes and edges by each statistic")
    common(p)
    p.add_argument("--top-k", type=int)
    p.set_defaults(func=cmd_rank)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        args.func(args, started)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.detail is not None:
            print(json.dumps(exc.detail, sort_keys=True), file=sys.stderr)
        return exc.code
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.report is not None:
            print(json.dumps(exc.report.as_dict(), sort_keys=True), file=sys.stderr)
        return EXIT_INVALID
    except (SolverError, ConsistencyError, SimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
