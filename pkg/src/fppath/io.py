"""JSON readers and writers for graphs, trajectories and statistics.

Graph document::

    {"nodes": ["a", "b", ...],
     "edges": [{"from": "a", "to": "b", "law": {"type": "exp", "lambda": 2.0}}, ...],
     "A": ["a"], "B": ["b"], "mu": {"a": 1.0}}

Each edge carries either a waiting-time ``law`` (continuous process) or a
jump probability ``p`` (discrete chain); all edges must use the same kind.
Edges with neither give a discrete chain that jumps uniformly.  ``mu`` is
optional and defaults to uniform on ``A``.  Labels are compared as strings.

Trajectory file: JSON lines, one trajectory per line, either
``{"steps": ["a", "b", ...]}`` or ``{"steps": [[0.0, "a"], [0.7, "b"], ...]}``.

Floats are written with Python's shortest round-trip representation, so a
value read back is bit-identical to the value written.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import TrajectoryDataset
from .errors import ValidationError
from .graph import DirectedGraph, ProblemSets
from .model import DiscreteModel
from .waiting import ContinuousProcess, law_from_dict

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GraphInput:
    """A parsed graph document."""

    graph: DirectedGraph
    sets: ProblemSets
    model: DiscreteModel
    process: ContinuousProcess | None = None

    @property
    def labels(self):
        return self.graph.labels


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from exc


def _lookup(index, label, what):
    key = str(label)
    if key not in index:
        raise ValidationError(f"unknown node {key!r} in {what}")
    return index[key]


def parse_graph(doc, embed_method="auto"):
    """Build a :class:`GraphInput` from a decoded graph document."""
    if not isinstance(doc, dict):
        raise ValidationError("graph document must be a JSON object")
    for key in ("nodes", "edges", "A", "B"):
        if key not in doc:
            raise ValidationError(f"graph document lacks {key!r}")
    labels = [str(v) for v in doc["nodes"]]
    if len(set(labels)) != len(labels):
        raise ValidationError("duplicate node labels")
    index = {v: i for i, v in enumerate(labels)}
    n = len(labels)
    edges, laws, probs = [], {}, {}
    for e in doc["edges"]:
        x = _lookup(index, e.get("from"), "edges")
        y = _lookup(index, e.get("to"), "edges")
        edges.append((x, y))
        if "law" in e:
            laws[(x, y)] = law_from_dict(e["law"])
        if "p" in e:
            probs[(x, y)] = float(e["p"])
    if laws and probs:
        raise ValidationError("edges mix waiting-time laws and jump probabilities")
    if laws and len(laws) != len(edges):
        raise ValidationError("every edge needs a law when any edge has one")
    if probs and len(probs) != len(edges):
        raise ValidationError("every edge needs p when any edge has one")
    graph = DirectedGraph(n, edges, labels)
    a = [_lookup(index, v, "A") for v in doc["A"]]
    b = [_lookup(index, v, "B") for v in doc["B"]]
    mu = None
    if doc.get("mu") is not None:
        mu = {_lookup(index, k, "mu"): float(v) for k, v in doc["mu"].items()}
    sets = ProblemSets.create(n, a, b, mu)
    if laws:
        process = ContinuousProcess(graph, laws)
        return GraphInput(graph, sets, process.embed(embed_method), process)
    return GraphInput(graph, sets, DiscreteModel.from_graph(graph, probs or None))


def load_graph(path, embed_method="auto"):
    return parse_graph(_read_json(path), embed_method)


def graph_document(graph, sets, laws=None, probs=None):
    """Inverse of :func:`parse_graph`; ``laws`` or ``probs`` map edges to values."""
    labels = [graph.label(i) for i in range(graph.node_count)]
    edges = []
    for x, y in graph.edges:
        e = {"from": labels[x], "to": labels[y]}
        if laws is not None:
            e["law"] = laws[(x, y)].to_dict()
        elif probs is not None:
            e["p"] = float(probs[(x, y)])
        edges.append(e)
    return {
        "nodes": labels, "edges": edges,
        "A": [labels[i] for i in sorted(sets.set_a)],
        "B": [labels[i] for i in sorted(sets.set_b)],
        "mu": {labels[i]: float(sets.mu[i]) for i in sorted(sets.set_a) if sets.mu[i] > 0},
    }


# --- trajectories ------------------------------------------------------------------

def read_trajectories(path, labels):
    """Read a JSON-lines trajectory file against the node ``labels`` of a graph.

    Raises
    ------
    ValidationError
        For an empty file, a malformed line or an unknown label; the message
        names the line.
    """
    index = {str(v): i for i, v in enumerate(labels)}
    sequences, times = [], []
    timed = None
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
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValidationError(f"line {lineno}: not a trajectory record") from exc
            if not isinstance(steps, list) or not steps:
                raise ValidationError(f"line {lineno}: empty trajectory")
            has_times = isinstance(steps[0], list)
            if timed is None:
                timed = has_times
            elif timed != has_times:
                raise ValidationError(f"line {lineno}: mixes timed and untimed records")
            try:
                if has_times:
                    times.append([float(s[0]) for s in steps])
                    nodes = [index[str(s[1])] for s in steps]
                else:
                    nodes = [index[str(s)] for s in steps]
            except KeyError as exc:
                raise ValidationError(f"line {lineno}: unknown node {exc.args[0]!r}") from exc
            except (IndexError, TypeError, ValueError) as exc:
                raise ValidationError(f"line {lineno}: malformed step") from exc
            sequences.append(nodes)
    if not sequences:
        raise ValidationError(f"{path}: no trajectories")
    return TrajectoryDataset.from_sequences(sequences, len(labels), times if timed else None,
                                            tuple(str(v) for v in labels))


def write_trajectories(path, data, labels):
    with open(path, "w") as fh:
        for i in range(data.count):
            nodes, times = data.trajectory(i)
            if times is None:
                steps = [labels[v] for v in nodes.tolist()]
            else:
                steps = [[t, labels[v]] for t, v in zip(times.tolist(), nodes.tolist())]
            fh.write(json.dumps({"steps": steps}) + "\n")


# --- statistics ------------------------------------------------------------------

def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


def number_list(v):
    return [_num(x) for x in np.asarray(v, dtype=float).tolist()]


def edge_records(matrix, labels, stderr=None):
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    err = sp.csr_matrix(stderr) if stderr is not None else None
    out = []
    for k in order:
        x, y, v = int(coo.row[k]), int(coo.col[k]), coo.data[k]
        if v == 0:
            continue
        entry = {"from": labels[x], "to": labels[y], "value": _num(v)}
        if err is not None:
            entry["stderr"] = _num(err[x, y])
        out.append(entry)
    return out


def sets_document(sets, labels):
    return {
        "A": [labels[i] for i in sorted(sets.set_a)],
        "B": [labels[i] for i in sorted(sets.set_b)],
        "mu": number_list(sets.mu),
    }


def stats_document(stats, model, sets, labels, identities=None, report=None):
    """EnsembleStats as a JSON-ready dict; node vectors follow the order of ``labels``."""
    end_labels = list(labels) + ["end"]
    doc = {
        "nodes": list(labels),
        "sets": sets_document(sets, labels),
        "model": {"origin": model.origin,
                  "kappa": None if model.kappa is None else number_list(model.kappa)},
        "q": number_list(stats.q),
        "escape": number_list(stats.escape),
        "f": number_list(stats.f),
        "theta": number_list(stats.theta),
        "theta_bar": number_list(stats.theta_bar),
        "theta_bar_prime": number_list(stats.theta_bar_prime),
        "theta_tilde": number_list(stats.theta_tilde),
        "mu_r": number_list(stats.mu_r),
        "mu_r_last_exit": number_list(stats.mu_r_omega),
        "v_minus": [labels[i] for i in sorted(stats.v_minus)],
        "v_plus": [labels[i] for i in sorted(stats.v_plus)],
        "J": edge_records(stats.J, labels),
        "J_bar": edge_records(stats.J_bar, labels),
        "J_tilde": edge_records(stats.J_tilde, labels),
        "p_bar": edge_records(stats.p_bar, end_labels),
        "p_tilde": edge_records(stats.p_tilde, labels),
        "lengths": {"L_bar": stats.lengths.L_bar, "L_tilde": stats.lengths.L_tilde,
                    "L": stats.lengths.L},
        "times": None,
    }
    if stats.times is not None:
        t_bar, t_tilde, t = stats.times.totals
        doc["times"] = {"T_bar": number_list(stats.T_bar), "T_tilde": number_list(stats.T_tilde),
                        "T": number_list(stats.T), "total_bar": t_bar, "total_tilde": t_tilde,
                        "total": t}
    if identities is not None:
        doc["identities"] = {k: _num(v) for k, v in sorted(identities.items())}
    if report is not None:
        doc["validation"] = report.as_dict()
    return doc


def ergodic_document(erg, labels):
    """The ``ergodic`` block added to a stats document."""
    return {
        "m": number_list(erg.m),
        "q_minus": number_list(erg.q_minus),
        "Z": erg.Z,
        "Z_expressions": number_list(erg.z_values),
        "Z_residual": erg.z_residual,
        "mu_eq": number_list(erg.mu_eq),
        "k_ab": None if erg.k_ab is None else _num(erg.k_ab),
        "pi": None if erg.pi is None else number_list(erg.pi),
        "pipeline_deviation": None if erg.pipeline_deviation is None else erg.pipeline_deviation,
    }


def _estimate_entry(est):
    if sp.issparse(est.mean):
        return None
    if np.ndim(est.mean) == 0:
        return {"value": _num(est.mean), "stderr": _num(est.stderr)}
    return {"value": number_list(est.mean), "stderr": number_list(est.stderr)}


def empirical_document(emp, labels):
    """EmpiricalStats with a ``stderr`` next to every mean."""
    doc = {"nodes": list(labels), "sample_count": emp.sample_count, "rejected": emp.rejected}
    for name, est in emp.nodes.items():
        doc[name] = _estimate_entry(est)
    for name, est in emp.edges.items():
        doc[name] = edge_records(est.mean, labels, est.stderr)
    doc["scalars"] = {name: _estimate_entry(est) for name, est in emp.scalars.items()}
    return doc


def rank_document(report, labels):
    return {
        "nodes": {field: [{"node": labels[i], "value": _num(v)} for i, v in items]
                  for field, items in report["nodes"].items()},
        "edges": {field: [{"from": labels[x], "to": labels[y], "value": _num(v)}
                          for (x, y), v in items]
                  for field, items in report["edges"].items()},
    }


def dumps(doc):
    """Serialize deterministically (sorted keys, shortest round-trip floats)."""
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, doc):
    text = dumps(doc)
    if path is None or path == "-":
        import sys
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)
