"""Small reference instances and random instance generators.

The fixed instances have statistics that can be worked out by hand; the
random ones feed property tests, the Monte Carlo comparisons and the demos.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .graph import DirectedGraph, ProblemSets, validate_assumption_1
from .model import DiscreteModel
from .waiting import ContinuousProcess, Exponential, PowerLaw, Tabulated, Weibull

FAMILIES = ("exponential", "weibull", "powerlaw", "mixed")


@dataclass(frozen=True)
class Instance:
    """A graph, its chain, the source/target sets and, optionally, per-edge laws."""

    graph: DirectedGraph
    model: DiscreteModel
    sets: ProblemSets
    process: ContinuousProcess | None = None


def _discrete(graph, a, b, probs=None, mu=None):
    model = DiscreteModel.from_graph(graph, probs)
    return Instance(graph, model, ProblemSets.create(graph.node_count, a, b, mu))


def path_graph(n=5):
    """Symmetric walk on ``0 - 1 - ... - (n-1)`` from ``A = {0}`` to the sink ``B = {n-1}``."""
    edges = [(0, 1)]
    for x in range(1, n - 1):
        edges += [(x, x - 1), (x, x + 1)]
    return _discrete(DirectedGraph(n, edges), [0], [n - 1])


def single_edge():
    """``A = {0} -> B = {1}``."""
    return _discrete(DirectedGraph(2, [(0, 1)]), [0], [1])


def two_exits_one_gate():
    """Five nodes labelled 1..5 with ``A = {1, 2}`` and ``B = {5}``.

    Node 1 only talks to node 2, so every path leaves ``A`` through node 2
    and the last ``A`` node is always 2, whatever the initial law.
    """
    labels = ["1", "2", "3", "4", "5"]
    edges = [(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2), (3, 4)]
    return _discrete(DirectedGraph(5, edges, labels), [0, 1], [4])


def one_way_chain():
    """``0 -> 1 -> 2`` with ``A = {0}``, ``B = {2}``: node 1 cannot return to ``A``."""
    return _discrete(DirectedGraph(3, [(0, 1), (1, 2)]), [0], [2])


def exponential_chain(rates, a=None, b=None):
    """Continuous-time chain through ``len(rates)+1`` nodes with one exponential edge each."""
    n = len(rates) + 1
    graph = DirectedGraph(n, [(i, i + 1) for i in range(n - 1)])
    laws = {(i, i + 1): Exponential(r) for i, r in enumerate(rates)}
    process = ContinuousProcess(graph, laws)
    sets = ProblemSets.create(n, a or [0], b or [n - 1])
    return Instance(graph, process.embed(), sets, process)


def _random_weights(rng, graph):
    return {e: float(rng.uniform(0.1, 1.0)) for e in graph.edges}


def _normalize(graph, weights):
    probs = {}
    for x, succ in enumerate(graph.successors):
        total = sum(weights[(x, y)] for y in succ)
        for y in succ:
            probs[(x, y)] = weights[(x, y)] / total
    return probs


def random_law(rng, family, shape=None):
    """One waiting-time law drawn from ``family``."""
    if family == "exponential":
        return Exponential(float(rng.uniform(0.5, 2.0)))
    if family == "weibull":
        k = shape if shape is not None else float(rng.uniform(0.8, 3.0))
        return Weibull(k, float(rng.uniform(0.5, 2.0)))
    if family == "powerlaw":
        return PowerLaw(float(rng.uniform(2.5, 5.0)))
    if family == "table":
        end = float(rng.uniform(0.5, 3.0))
        t = np.linspace(0.0, end, 41)
        peak = float(rng.uniform(0.0, end))
        psi = np.maximum(1.0 - np.abs(t - peak) / end, 0.0) + 0.2
        return Tabulated(t, psi / trapezoid(psi, t))
    if family == "mixed":
        pick = rng.choice(["exponential", "weibull", "powerlaw", "table"], p=[0.3, 0.3, 0.3, 0.1])
        return random_law(rng, str(pick))
    raise ValueError(f"unknown family {family!r}")


def _random_edges(rng, n, density):
    edges = set()
    if rng.random() < 0.5:
        perm = rng.permutation(n)
        edges.update((int(perm[i]), int(perm[(i + 1) % n])) for i in range(n))
    extra = max(1, int(density * n))
    for _ in range(extra):
        x, y = (int(v) for v in rng.choice(n, 2, replace=False))
        edges.add((x, y))
    return sorted(edges)


def random_instance(rng, n, family=None, density=2.0, max_tries=200):
    """Random instance satisfying the structural assumptions.

    Parameters
    ----------
    rng : numpy.random.Generator
    n : int
        Node count, at least 3.
    family : str, optional
        Waiting-time family for a continuous process (one of
        :data:`FAMILIES`); ``None`` gives a discrete chain with random
        transition probabilities.
    density : float
        Extra random edges per node.
    """
    for _ in range(max_tries):
        edges = _random_edges(rng, n, density)
        size_a = int(rng.integers(1, max(2, n // 4) + 1))
        size_b = int(rng.integers(1, max(2, n // 4) + 1))
        nodes = rng.permutation(n)
        a = nodes[:size_a].tolist()
        b = nodes[size_a:size_a + size_b].tolist()
        if size_a + size_b >= n:
            continue
        # paths stop at B, so some B nodes are made sinks to exercise that branch
        drop = {x for x in b if rng.random() < 0.5}
        edges = [e for e in edges if e[0] not in drop]
        graph = DirectedGraph(n, edges)
        mu = rng.dirichlet(np.ones(size_a))
        mu_vec = np.zeros(n)
        mu_vec[a] = mu
        mu_vec /= mu_vec.sum()
        sets = ProblemSets.create(n, a, b, mu_vec)
        if family is None:
            model = DiscreteModel.from_graph(graph, _normalize(graph, _random_weights(rng, graph)))
            process = None
        else:
            shape = float(rng.uniform(0.8, 3.0)) if family == "weibull" else None
            laws = {e: random_law(rng, family, shape) for e in graph.edges}
            process = ContinuousProcess(graph, laws)
            model = DiscreteModel.from_graph(graph, {e: 1.0 / len(graph.successors[e[0]])
                                                     for e in graph.edges})
        if not validate_assumption_1(graph, model, sets).ok:
            continue
        if process is not None:
            model = process.embed()
        return Instance(graph, model, sets, process)
    raise RuntimeError("could not draw a valid instance")


def random_ergodic_instance(rng, n, family=None, density=1.5):
    """Irreducible, aperiodic, sink-free chain with random ``A`` and ``B``.

    A random Hamiltonian cycle gives irreducibility.  A chord skipping one
    step of that cycle closes a second cycle of length ``n - 1``, and
    ``gcd(n, n - 1) = 1`` makes the chain aperiodic.
    """
    perm = rng.permutation(n)
    edges = {(int(perm[i]), int(perm[(i + 1) % n])) for i in range(n)}
    edges.add((int(perm[0]), int(perm[2 % n])))
    for _ in range(int(density * n)):
        x, y = (int(v) for v in rng.choice(n, 2, replace=False))
        edges.add((x, y))
    graph = DirectedGraph(n, sorted(edges))
    nodes = rng.permutation(n)
    size_a = int(rng.integers(1, max(2, n // 4) + 1))
    size_b = int(rng.integers(1, max(2, n // 4) + 1))
    a, b = nodes[:size_a].tolist(), nodes[size_a:size_a + size_b].tolist()
    sets = ProblemSets.create(n, a, b)
    if family is None:
        model = DiscreteModel.from_graph(graph, _normalize(graph, _random_weights(rng, graph)))
        return Instance(graph, model, sets)
    shape = float(rng.uniform(0.8, 3.0)) if family == "weibull" else None
    process = ContinuousProcess(graph, {e: random_law(rng, family, shape) for e in graph.edges})
    return Instance(graph, process.embed(), sets, process)


def random_reversible_instance(rng, n, extra=None):
    """Random walk on a weighted undirected graph; reversible and aperiodic.

    The graph holds a random spanning path plus a triangle, so it is
    connected and has an odd cycle.
    """
    perm = rng.permutation(n)
    pairs = {tuple(sorted((int(perm[i]), int(perm[i + 1])))) for i in range(n - 1)}
    pairs.add(tuple(sorted((int(perm[0]), int(perm[2])))))
    for _ in range(extra if extra is not None else n):
        x, y = (int(v) for v in rng.choice(n, 2, replace=False))
        pairs.add(tuple(sorted((x, y))))
    weight = {p: float(rng.uniform(0.1, 1.0)) for p in pairs}
    edges = [(x, y) for x, y in pairs] + [(y, x) for x, y in pairs]
    graph = DirectedGraph(n, edges)
    sym = dict(weight)
    sym.update({(y, x): w for (x, y), w in weight.items()})
    model = DiscreteModel.from_graph(graph, _normalize(graph, sym))
    nodes = rng.permutation(n)
    size_a = int(rng.integers(1, max(2, n // 4) + 1))
    size_b = int(rng.integers(1, max(2, n // 4) + 1))
    sets = ProblemSets.create(n, nodes[:size_a].tolist(),
                              nodes[size_a:size_a + size_b].tolist())
    return Instance(graph, model, sets)


def cycle_walk(n):
    """Symmetric walk on an odd cycle of ``n`` nodes (uniform invariant law)."""
    if n % 2 == 0 or n < 3:
        raise ValueError("use an odd cycle of at least 3 nodes so the walk is aperiodic")
    edges = [(i, (i + 1) % n) for i in range(n)] + [((i + 1) % n, i) for i in range(n)]
    return _discrete(DirectedGraph(n, edges), [0], [n // 2])


def birth_death(n, up=0.6, rng=None):
    """Birth-death chain on ``0..n-1`` with an extra triangle at the left end.

    A pure birth-death chain is periodic; the chord ``0 <-> 2`` keeps the
    chain reversible (all weights symmetric) while making it aperiodic.
    Edge weights are ``(up/(1-up))**x`` on ``x - x+1`` and 1 on the chord.
    """
    ratio = up / (1.0 - up)
    weight = {(x, x + 1): ratio ** x for x in range(n - 1)}
    weight[(0, 2)] = 1.0
    sym = dict(weight)
    sym.update({(y, x): w for (x, y), w in weight.items()})
    graph = DirectedGraph(n, list(sym))
    model = DiscreteModel.from_graph(graph, _normalize(graph, sym))
    return Instance(graph, model, ProblemSets.create(n, [0], [n - 1]))


def maze(side, rng):
    """Grid maze with walls from a random spanning tree; ``A``/``B`` at opposite corners.

    The walker moves uniformly to any open neighbour.  Node ``r*side + c``
    is the cell in row ``r`` and column ``c``.
    """
    n = side * side
    visited = np.zeros(n, bool)
    stack = [0]
    visited[0] = True
    passages = []
    while stack:
        cell = stack[-1]
        r, c = divmod(cell, side)
        options = [(r + dr) * side + (c + dc) for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1))
                   if 0 <= r + dr < side and 0 <= c + dc < side]
        options = [o for o in options if not visited[o]]
        if not options:
            stack.pop()
            continue
        nxt = options[int(rng.integers(len(options)))]
        visited[nxt] = True
        passages.append((cell, nxt))
        stack.append(nxt)
    edges = passages + [(y, x) for x, y in passages]
    return _discrete(DirectedGraph(n, edges), [0], [n - 1])
