"""Discrete-time Markov chain on the nodes of a graph.

A :class:`DiscreteModel` is either given directly, embedded from a
continuous-time process (see :mod:`fppath.waiting`) or estimated from
trajectories (see :mod:`fppath.data`).  Sink nodes carry the row
``p(.|x) = delta_x``; every other row lives on the graph's out-edges.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError

ORIGINS = ("given-discrete", "embedded-from-continuous", "estimated-from-data")

ROW_SUM_TOL = 1e-10


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class DiscreteModel:
    """Row-stochastic jump matrix ``p[x, y] = p(y|x)`` plus mean holding times.

    Parameters
    ----------
    p : sparse or dense (n, n) array
        Transition probabilities.  Off-diagonal entries only, except for
        sink rows which are ``delta_x``.
    kappa : (n,) array, optional
        Mean holding time per node.  ``nan`` on sinks.  ``None`` for a
        purely discrete chain.
    origin : str
        One of ``given-discrete``, ``embedded-from-continuous``,
        ``estimated-from-data``.
    jump_kappa : sparse (n, n) array, optional
        Mean holding time at ``x`` given that the next jump goes to ``y``.
        Only needed when holding time and jump target are dependent (out-edges
        of one node drawn from different families); ``None`` means they are
        independent and every entry equals ``kappa(x)``.
    """

    p: sp.csr_matrix
    kappa: np.ndarray | None = None
    origin: str = "given-discrete"
    jump_kappa: sp.csr_matrix | None = None

    def __post_init__(self):
        p = sp.csr_matrix(self.p, dtype=float)
        p.eliminate_zeros()
        p.sort_indices()
        n = p.shape[0]
        if p.shape != (n, n) or n == 0:
            raise ValidationError(f"transition matrix must be square and nonempty, got {p.shape}")
        if p.nnz and p.data.min() < 0:
            raise ValidationError("transition probabilities must be nonnegative")
        sums = np.asarray(p.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if bad.size:
            raise ValidationError(f"rows {bad.tolist()} do not sum to one")
        diag = p.diagonal()
        loops = np.flatnonzero((diag != 0) & (diag != 1.0))
        if loops.size:
            raise ValidationError(f"self-transitions on non-sink rows {loops.tolist()}")
        if self.origin not in ORIGINS:
            raise ValidationError(f"unknown origin {self.origin!r}")
        object.__setattr__(self, "p", p)
        if self.kappa is not None:
            kappa = _frozen(self.kappa)
            if kappa.shape != (n,):
                raise ValidationError("kappa must have one entry per node")
            live = diag != 1.0
            if not np.all(kappa[live] > 0):
                raise ValidationError("kappa must be positive on non-sink nodes")
            object.__setattr__(self, "kappa", kappa)
        if self.jump_kappa is not None:
            self._check_jump_kappa(p, live)

    def _check_jump_kappa(self, p, live):
        if self.kappa is None:
            raise ValidationError("jump_kappa requires kappa")
        jk = sp.csr_matrix(self.jump_kappa, dtype=float)
        jk.sort_indices()
        if jk.shape != p.shape:
            raise ValidationError("jump_kappa must match the transition matrix")
        off = p.copy()
        off.setdiag(0)
        off.eliminate_zeros()
        if (off.multiply(jk) != 0).nnz != off.nnz or (jk != 0).nnz != off.nnz:
            raise ValidationError("jump_kappa must be positive exactly on the jumps")
        mean = np.asarray(off.multiply(jk).sum(axis=1)).ravel()
        gap = np.abs(mean - np.where(live, self.kappa, 0.0))[live]
        if gap.size and not np.all(gap <= 1e-8 * np.maximum(1.0, self.kappa[live])):
            raise ValidationError("jump_kappa does not average to kappa")
        object.__setattr__(self, "jump_kappa", jk)

    @property
    def n(self):
        return self.p.shape[0]

    @cached_property
    def sinks(self):
        """Indices of absorbing rows."""
        return np.flatnonzero(self.p.diagonal() == 1.0)

    @cached_property
    def support(self):
        """Boolean CSR adjacency of positive-probability jumps (no sink loops)."""
        s = self.p.copy()
        s.setdiag(0)
        s.eliminate_zeros()
        s.data[:] = 1
        return s.astype(bool)

    @cached_property
    def dense(self):
        a = self.p.toarray()
        a.flags.writeable = False
        return a

    def with_kappa(self, kappa):
        return DiscreteModel(self.p, kappa, self.origin)

    def jump_means(self):
        """Conditional mean holding time per jump as a CSR matrix (requires ``kappa``)."""
        if self.jump_kappa is not None:
            return self.jump_kappa
        off = self.support.astype(float)
        return sp.csr_matrix(sp.diags(np.nan_to_num(self.kappa)) @ off)

    @classmethod
    def from_graph(cls, graph, probs=None, kappa=None, origin="given-discrete"):
        """Build a chain on ``graph``'s edges.

        ``probs`` maps ``(x, y)`` edges to probabilities; when omitted each
        node jumps uniformly to its out-neighbours.  Nodes without out-edges
        become sinks.
        """
        n = graph.node_count
        rows, cols, vals = [], [], []
        for x in range(n):
            succ = graph.successors[x]
            if not succ:
                rows.append(x), cols.append(x), vals.append(1.0)
                continue
            for y in succ:
                w = 1.0 / len(succ) if probs is None else float(probs.get((x, y), 0.0))
                rows.append(x), cols.append(y), vals.append(w)
        if probs is not None:
            extra = set(probs) - set(graph.edges)
            if extra:
                raise ValidationError(f"probabilities given for non-edges {sorted(extra)}")
        p = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        return cls(p, kappa, origin)
