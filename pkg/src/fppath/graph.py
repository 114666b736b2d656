"""Directed graphs, source/target sets and reachability.

Reachability is computed by breadth-first search over positive-probability
edges and serves as the ground truth for the sets ``V-`` (nodes that can
still return to ``A``) and ``V+`` (nodes that can still reach ``B``).
"""
from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConsistencyError, ValidationError

TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DirectedGraph:
    """Finite simple digraph on nodes ``0 .. node_count-1``.

    Edges are stored sorted.  Loops and duplicate edges are rejected.
    """

    node_count: int
    edges: tuple
    labels: tuple | None = None

    def __post_init__(self):
        n = int(self.node_count)
        if n <= 0:
            raise ValidationError("graph needs at least one node")
        edges = [(int(x), int(y)) for x, y in self.edges]
        if len(set(edges)) != len(edges):
            raise ValidationError("duplicate edges")
        for x, y in edges:
            if not (0 <= x < n and 0 <= y < n):
                raise ValidationError(f"edge {(x, y)} out of range")
            if x == y:
                raise ValidationError(f"loop edge at node {x}")
        object.__setattr__(self, "node_count", n)
        object.__setattr__(self, "edges", tuple(sorted(edges)))
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != n or len(set(labels)) != n:
                raise ValidationError("labels must be unique, one per node")
            object.__setattr__(self, "labels", labels)

    @cached_property
    def successors(self):
        out = [[] for _ in range(self.node_count)]
        for x, y in self.edges:
            out[x].append(y)
        return tuple(tuple(s) for s in out)

    @cached_property
    def sinks(self):
        return frozenset(x for x, s in enumerate(self.successors) if not s)

    @cached_property
    def support(self):
        n = self.node_count
        if not self.edges:
            return sp.csr_matrix((n, n), dtype=bool)
        x, y = np.array(self.edges).T
        return sp.csr_matrix((np.ones(len(x), bool), (x, y)), shape=(n, n))

    def label(self, i):
        return self.labels[i] if self.labels else str(i)

    @cached_property
    def index(self):
        return {self.label(i): i for i in range(self.node_count)}


@dataclass(frozen=True, eq=False)
class ProblemSets:
    """Source set ``A``, target set ``B`` and initial distribution ``mu`` on ``A``."""

    set_a: frozenset
    set_b: frozenset
    mu: np.ndarray

    def __post_init__(self):
        a = frozenset(int(x) for x in self.set_a)
        b = frozenset(int(x) for x in self.set_b)
        mu = np.array(self.mu, dtype=float)
        n = mu.shape[0]
        if not a or not b:
            raise ValidationError("A and B must be nonempty")
        if a & b:
            raise ValidationError(f"A and B overlap on {sorted(a & b)}")
        if not all(0 <= x < n for x in a | b):
            raise ValidationError("set members out of range")
        if np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-12:
            raise ValidationError("mu must be a probability vector")
        off = np.ones(n, bool)
        off[list(a)] = False
        if np.any(mu[off] != 0):
            raise ValidationError("mu must vanish outside A")
        mu.flags.writeable = False
        object.__setattr__(self, "set_a", a)
        object.__setattr__(self, "set_b", b)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def create(cls, n, a, b, mu=None):
        """``mu`` may be a length-n array, a ``{node: weight}`` dict or None (uniform on A)."""
        a = sorted(set(int(x) for x in a))
        vec = np.zeros(n)
        if mu is None:
            vec[a] = 1.0 / len(a) if a else 0.0
        elif isinstance(mu, dict):
            for k, v in mu.items():
                vec[int(k)] = v
        else:
            vec[:] = mu
        return cls(frozenset(a), frozenset(b), vec)

    @property
    def n(self):
        return self.mu.shape[0]

    @cached_property
    def in_a(self):
        m = np.zeros(self.n, bool)
        m[list(self.set_a)] = True
        m.flags.writeable = False
        return m

    @cached_property
    def in_b(self):
        m = np.zeros(self.n, bool)
        m[list(self.set_b)] = True
        m.flags.writeable = False
        return m

    @cached_property
    def interior(self):
        """Mask of ``(A u B)^c``."""
        m = ~(self.in_a | self.in_b)
        m.flags.writeable = False
        return m

    def with_mu(self, mu):
        return ProblemSets(self.set_a, self.set_b, mu)


def _adjacency(graph, probs):
    """Positive-probability edges; graph edges alone when ``probs`` is None."""
    if probs is None:
        return graph.support
    adj = probs.support
    if graph is not None:
        adj = adj.multiply(graph.support).tocsr()
    return adj


def reachable_to_set(graph, probs, target, avoid=()):
    """Nodes from which ``target`` can be reached with the interior avoiding ``avoid``.

    A node ``x`` qualifies if it lies in ``target`` or if there is a path
    ``x = x0 -> x1 -> ... -> xk`` with ``xk`` in ``target`` and
    ``x1 .. x(k-1)`` outside ``target | avoid``.  The start node itself
    may belong to ``avoid``.

    Parameters
    ----------
    graph : DirectedGraph or None
        Structural edges.  ``None`` uses the support of ``probs``.
    probs : DiscreteModel or None
        Edges with zero probability are ignored.  ``None`` uses every
        graph edge.
    target, avoid : iterable of int
        Disjoint node sets.

    Returns
    -------
    frozenset of int
    """
    adj = _adjacency(graph, probs)
    target = frozenset(int(x) for x in target)
    avoid = frozenset(int(x) for x in avoid)
    if target & avoid:
        raise ValueError("target and avoid must be disjoint")
    pred = adj.T.tocsr()
    seen = set(target)
    queue = deque(target)
    while queue:
        v = queue.popleft()
        for u in pred.indices[pred.indptr[v]:pred.indptr[v + 1]]:
            u = int(u)
            if u in seen:
                continue
            seen.add(u)
            if u not in avoid:
                queue.append(u)
    return frozenset(seen)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate_assumption_1`.

    Each field lists offending nodes; the report passes when all are empty.
    Two fields are informational.  ``complement_empty`` flags instances
    without intermediate nodes, where every path jumps straight from ``A``
    to ``B``; the statistics are still well defined.  ``a_without_direct_exit``
    lists ``A`` nodes that reach ``B`` only through other ``A`` nodes, so
    they can never be the last ``A`` node of a path.
    """

    complement_empty: bool = False
    stranded: tuple = ()
    no_exit_from_a: tuple = ()
    sinks_outside_b: tuple = ()
    a_without_direct_exit: tuple = ()

    @property
    def ok(self):
        return not (self.stranded or self.no_exit_from_a or self.sinks_outside_b)

    def describe(self):
        if self.ok:
            return "ok"
        parts = []
        if self.stranded:
            parts.append(f"nodes reaching neither A nor B: {list(self.stranded)}")
        if self.no_exit_from_a:
            parts.append(f"B unreachable from A nodes: {list(self.no_exit_from_a)}")
        if self.sinks_outside_b:
            parts.append(f"sinks outside B: {list(self.sinks_outside_b)}")
        return "; ".join(parts)

    def as_dict(self):
        return {
            "ok": self.ok,
            "complement_empty": self.complement_empty,
            "stranded": list(self.stranded),
            "no_exit_from_a": list(self.no_exit_from_a),
            "sinks_outside_b": list(self.sinks_outside_b),
            "a_without_direct_exit": list(self.a_without_direct_exit),
        }

    def raise_if_failed(self):
        if not self.ok:
            raise ValidationError("assumption check failed: " + self.describe(), self)
        return self


def validate_assumption_1(graph, probs, sets):
    """Check the structural requirements every analysis relies on.

    Every interior node must reach ``A`` or ``B`` without touching the
    other set, every node of ``A`` must reach ``B`` (possibly via other
    ``A`` nodes), and all sinks must lie in ``B``.  An empty interior and
    ``A`` nodes without a direct exit are reported but allowed.
    """
    a, b = sets.set_a, sets.set_b
    interior = np.flatnonzero(sets.interior)
    reach_a = reachable_to_set(graph, probs, a, b)
    reach_b = reachable_to_set(graph, probs, b, a)
    reach_b_any = reachable_to_set(graph, probs, b)
    stranded = tuple(int(x) for x in interior if x not in reach_a and x not in reach_b)
    no_exit = tuple(sorted(x for x in a if x not in reach_b_any))
    indirect = tuple(sorted(x for x in a if x not in reach_b))
    sinks = probs.sinks if probs is not None else sorted(graph.sinks)
    outside = tuple(int(x) for x in sinks if x not in b)
    return ValidationReport(interior.size == 0, stranded, no_exit, outside, indirect)


def v_minus_v_plus(graph, probs, sets, q, tol=TOL):
    """The supports of the nonreactive and reactive chains.

    ``V-`` holds nodes of ``B^c`` with ``q < 1``; ``V+`` those whose
    one-step escape probability ``sum_z p(z|x) q(z)`` is positive.  Both
    are taken from graph reachability and the committor is checked against
    them: a committor that places an unreachable node strictly inside the
    set means the solve went wrong.

    Returns
    -------
    (frozenset, frozenset)
    """
    q = np.asarray(q, dtype=float)
    not_b = ~sets.in_b
    reach_a = reachable_to_set(graph, probs, sets.set_a, sets.set_b)
    reach_b = reachable_to_set(graph, probs, sets.set_b, sets.set_a)
    v_minus = frozenset(x for x in reach_a if not_b[x])
    v_plus = frozenset(x for x in reach_b if not_b[x])
    escape = probs.p @ q
    q_minus = {int(x) for x in np.flatnonzero(not_b & (q < 1 - tol))}
    q_plus = {int(x) for x in np.flatnonzero(not_b & (escape > tol))}
    if q_minus - v_minus or q_plus - v_plus:
        raise ConsistencyError(
            "committor puts structurally unreachable nodes inside V-/V+: "
            f"{sorted(q_minus - v_minus)} / {sorted(q_plus - v_plus)}")
    faint = (v_minus - q_minus) | (v_plus - q_plus)
    if faint:
        warnings.warn(f"nodes {sorted(faint)} are reachable but their committor margin is below {tol}",
                      RuntimeWarning, stacklevel=2)
    return v_minus, v_plus
