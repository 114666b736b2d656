"""Observed first passage trajectories and the estimators built on them.

A :class:`TrajectoryDataset` stores all trajectories back to back in flat
arrays (``nodes``, optional ``times``) with ``offsets`` marking where each
one starts, so every estimator here is a handful of vectorized reductions.

Two routes lead from data to statistics.  The sound one estimates the
chain (:func:`estimate_model`) and runs the analysis pipeline on it; for
visit counts and fluxes this coincides exactly with plain counting
(:func:`counting_stats`).  The naive route (:func:`naive_stats`) counts
committor and nonreactive visits directly from the paths.  It is biased:
a node that was only ever seen after the last ``A`` visit gets committor 1
even when the estimated chain can return to ``A`` from it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .analysis import analyze
from .errors import ValidationError
from .graph import DirectedGraph, ProblemSets, validate_assumption_1
from .model import DiscreteModel

BIASED_TAG = "biased — see documentation"


@dataclass(frozen=True, eq=False)
class TrajectoryDataset:
    """Trajectories ``i = 0..M-1`` stored as ``nodes[offsets[i]:offsets[i+1]]``.

    ``times`` (same layout) holds the arrival time at each node, starting
    from 0 in every trajectory; ``None`` for discrete data.  ``rejected``
    counts sampled paths that were discarded for exceeding the step cap.
    """

    nodes: np.ndarray
    offsets: np.ndarray
    node_count: int
    times: np.ndarray | None = None
    labels: tuple | None = None
    rejected: int = 0

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.int64)
        offsets = np.asarray(self.offsets, dtype=np.int64)
        if offsets.ndim != 1 or offsets.size < 1 or offsets[0] != 0 or offsets[-1] != nodes.size:
            raise ValidationError("offsets must run from 0 to the number of steps")
        if np.any(np.diff(offsets) < 1):
            raise ValidationError("empty trajectory")
        if nodes.size and (nodes.min() < 0 or nodes.max() >= self.node_count):
            raise ValidationError("node index out of range")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "offsets", offsets)
        if self.times is not None:
            times = np.asarray(self.times, dtype=float)
            if times.shape != nodes.shape:
                raise ValidationError("times must match nodes")
            object.__setattr__(self, "times", times)

    @classmethod
    def from_sequences(cls, sequences, node_count, times=None, labels=None):
        """Build from a list of node sequences (and optional matching time lists)."""
        lengths = [len(s) for s in sequences]
        offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        nodes = (np.concatenate([np.asarray(s, dtype=np.int64) for s in sequences])
                 if sequences else np.zeros(0, np.int64))
        flat_times = None
        if times is not None:
            flat_times = (np.concatenate([np.asarray(t, dtype=float) for t in times])
                          if times else np.zeros(0))
        return cls(nodes, offsets, node_count, flat_times, labels)

    @property
    def count(self):
        """Number of trajectories ``M``."""
        return self.offsets.size - 1

    @property
    def lengths(self):
        """Number of jumps ``tau_i`` per trajectory."""
        return np.diff(self.offsets) - 1

    @property
    def has_times(self):
        return self.times is not None

    def trajectory(self, i):
        sl = slice(self.offsets[i], self.offsets[i + 1])
        return self.nodes[sl], (None if self.times is None else self.times[sl])

    def path_ids(self):
        return np.repeat(np.arange(self.count), np.diff(self.offsets))

    def is_last(self):
        mask = np.zeros(self.nodes.size, bool)
        mask[self.offsets[1:] - 1] = True
        return mask

    def check_shape(self, sets):
        """Raise :class:`ValidationError` naming the first malformed trajectory."""
        if self.count == 0:
            raise ValidationError("dataset is empty")
        if sets.n != self.node_count:
            raise ValidationError("dataset and sets disagree on the node count")
        ids = self.path_ids()
        last = self.is_last()
        starts = self.offsets[:-1]
        problems = []
        short = np.flatnonzero(np.diff(self.offsets) < 2)
        if short.size:
            problems.append((short[0], "needs at least one jump"))
        bad = np.flatnonzero(~sets.in_a[self.nodes[starts]])
        if bad.size:
            problems.append((bad[0], "does not start in A"))
        bad = np.flatnonzero(~sets.in_b[self.nodes[self.offsets[1:] - 1]])
        if bad.size:
            problems.append((bad[0], "does not end in B"))
        bad = ids[sets.in_b[self.nodes] & ~last]
        if bad.size:
            problems.append((bad[0], "enters B before its last step"))
        if self.times is not None:
            bad = np.flatnonzero(self.times[starts] != 0)
            if bad.size:
                problems.append((bad[0], "does not start at time 0"))
            step = np.diff(self.times)
            bad = ids[:-1][(step <= 0) & ~last[:-1]]
            if bad.size:
                problems.append((bad[0], "has non-increasing times"))
        if problems:
            index, reason = min(problems, key=lambda item: item[0])
            raise ValidationError(f"trajectory {int(index)} {reason}")

    def last_a_positions(self, sets):
        """Flat index of the last ``A`` visit in each trajectory."""
        pos = np.where(sets.in_a[self.nodes], np.arange(self.nodes.size), -1)
        return np.maximum.reduceat(pos, self.offsets[:-1])

    def transitions(self):
        """Flat indices of steps that have a successor (``l < tau_i``)."""
        return np.flatnonzero(~self.is_last())


@dataclass(frozen=True, eq=False)
class Estimate:
    """Chain estimated from data on the visited nodes only.

    ``nodes[k]`` is the original index of reduced node ``k``.
    """

    model: DiscreteModel
    sets: ProblemSets
    graph: DirectedGraph
    nodes: np.ndarray

    def lift(self, values, n, fill=0.0):
        """Map a reduced node vector back to the original ``n`` nodes."""
        out = np.full(n, fill, dtype=float)
        out[self.nodes] = values
        return out

    def lift_edges(self, matrix, n):
        coo = sp.coo_matrix(matrix)
        return sp.csr_matrix((coo.data, (self.nodes[coo.row], self.nodes[coo.col])), shape=(n, n))


def estimate_model(data, sets):
    """Ratio estimators of jump probabilities, holding times and the initial law.

    Nodes never visited are dropped.  Nodes seen only as trajectory
    endpoints (necessarily in ``B``) become sinks.  With timestamps the
    mean holding time of a node is its total sojourn time divided by its
    number of departures.

    Returns
    -------
    Estimate
    """
    data.check_shape(sets)
    n = data.node_count
    visited = np.flatnonzero(np.bincount(data.nodes, minlength=n) > 0)
    index = np.full(n, -1)
    index[visited] = np.arange(visited.size)
    k = visited.size
    steps = data.transitions()
    src, dst = index[data.nodes[steps]], index[data.nodes[steps + 1]]
    departures = np.bincount(src, minlength=k).astype(float)
    counts = sp.csr_matrix((np.ones(steps.size), (src, dst)), shape=(k, k))
    counts.sum_duplicates()
    sinks = np.flatnonzero(departures == 0)
    safe = np.where(departures > 0, departures, 1.0)
    p = sp.diags(1.0 / safe) @ counts + sp.csr_matrix(
        (np.ones(sinks.size), (sinks, sinks)), shape=(k, k))
    kappa = None
    if data.has_times:
        hold = data.times[steps + 1] - data.times[steps]
        total = np.bincount(src, weights=hold, minlength=k)
        kappa = np.where(departures > 0, total / safe, np.nan)
    model = DiscreteModel(p, kappa, "estimated-from-data")
    starts = index[data.nodes[data.offsets[:-1]]]
    mu = np.bincount(starts, minlength=k) / data.count
    in_a = sets.in_a[visited]
    in_b = sets.in_b[visited]
    reduced = ProblemSets.create(k, np.flatnonzero(in_a), np.flatnonzero(in_b), mu)
    coo = counts.tocoo()
    labels = None
    if data.labels is not None:
        labels = [data.labels[v] for v in visited]
    graph = DirectedGraph(k, list(zip(coo.row.tolist(), coo.col.tolist())), labels)
    return Estimate(model, reduced, graph, visited)


@dataclass(frozen=True, eq=False)
class CountingStats:
    """Visit counts (including the ``B`` entry), edge fluxes and mean length, per path."""

    theta: np.ndarray
    J: sp.csr_matrix
    L: float


def counting_stats(data, sets):
    """Visit counts and edge fluxes by plain counting over the trajectories."""
    data.check_shape(sets)
    n, m = data.node_count, data.count
    theta = np.bincount(data.nodes, minlength=n) / m
    steps = data.transitions()
    J = sp.csr_matrix((np.full(steps.size, 1.0 / m),
                       (data.nodes[steps], data.nodes[steps + 1])), shape=(n, n))
    J.sum_duplicates()
    return CountingStats(theta, J, float(data.lengths.mean()))


@dataclass(frozen=True, eq=False)
class NaiveStats:
    """Direct-count committor and nonreactive visits; see the module notes on bias.

    ``q_data`` is ``nan`` at unvisited nodes.  ``discrepancy`` holds the
    largest gaps to the estimated-chain values, or ``None`` when the
    estimated chain fails validation.
    """

    q_data: np.ndarray
    theta_bar_data: np.ndarray
    tag: str = BIASED_TAG
    q_model: np.ndarray | None = None
    theta_bar_model: np.ndarray | None = None
    discrepancy: dict | None = None


def naive_stats(data, sets):
    """Committor and nonreactive visit counts read straight off the paths.

    ``q_data(x)`` is the fraction of visits to ``x`` that happen after the
    last ``A`` visit of their path, ``theta_bar_data(x)`` the mean number of
    visits up to and including that last ``A`` visit.  Both generally
    differ from the values of the estimated chain.
    """
    data.check_shape(sets)
    n, m = data.node_count, data.count
    sigma = data.last_a_positions(sets)
    after = np.arange(data.nodes.size) > sigma[data.path_ids()]
    visits = np.bincount(data.nodes, minlength=n).astype(float)
    late = np.bincount(data.nodes[after], minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        q_data = np.where(visits > 0, late / visits, np.nan)
    theta_bar_data = np.bincount(data.nodes[~after], minlength=n) / m
    est = estimate_model(data, sets)
    if not validate_assumption_1(est.graph, est.model, est.sets).ok:
        return NaiveStats(q_data, theta_bar_data)
    stats = analyze(est.model, est.sets, est.graph, validate=False)
    q_model = est.lift(stats.q, n, np.nan)
    theta_bar_model = est.lift(stats.theta_bar, n)
    seen = visits > 0
    discrepancy = {
        "q_max_abs": float(np.max(np.abs(q_data - q_model)[seen])),
        "theta_bar_max_abs": float(np.max(np.abs(theta_bar_data - theta_bar_model))),
    }
    return NaiveStats(q_data, theta_bar_data, BIASED_TAG, q_model, theta_bar_model, discrepancy)


def counterexample_dataset():
    """Two paths on four nodes, ``(0,1,2,3)`` and ``(0,2,0,2,3)``, with ``A={0}``, ``B={3}``.

    Node 1 is only seen after the last ``A`` visit, so naive counting gives
    it committor 1, although the estimated chain can go ``1 -> 2 -> 0``.
    """
    data = TrajectoryDataset.from_sequences([[0, 1, 2, 3], [0, 2, 0, 2, 3]], 4)
    return data, ProblemSets.create(4, [0], [3])
