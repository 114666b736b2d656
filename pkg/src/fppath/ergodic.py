"""Equilibrium transition statistics of an ergodic chain.

For an irreducible, aperiodic chain with invariant law ``m``, the
nonreactive and reactive segments cut out of one infinitely long
trajectory form a first passage ensemble whose entry law on ``A`` is
known in closed form.  This module computes that law, the closed-form
statistics of the ensemble, the normalization ``Z`` (transitions per step)
and the reaction rate (transitions per unit time), and cross-checks the
closed forms against the generic pipeline of :mod:`fppath.analysis`.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .analysis import analyze, escape_probability, solve_committor
from .errors import ConsistencyError, SolverError, ValidationError
from .graph import ProblemSets
from .model import DiscreteModel

Z_TOL = 1e-10
PIPELINE_TOL = 1e-8


def is_irreducible(model):
    count, _ = connected_components(model.support, directed=True, connection="strong")
    return count == 1


def period(model):
    """Period of an irreducible chain: gcd of ``level(u) + 1 - level(v)`` over all edges."""
    adj = model.support
    level = np.full(model.n, -1)
    level[0] = 0
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adj.indices[adj.indptr[u]:adj.indptr[u + 1]]:
            if level[v] < 0:
                level[v] = level[u] + 1
                queue.append(v)
    coo = adj.tocoo()
    g = 0
    for u, v in zip(coo.row, coo.col):
        g = math.gcd(g, int(abs(level[u] + 1 - level[v])))
    return g


def check_ergodic(model, require_aperiodic=True):
    """Raise :class:`ValidationError` naming the first failed requirement."""
    if model.sinks.size:
        raise ValidationError(f"ergodic analysis needs a sink-free chain; sinks {model.sinks.tolist()}")
    if not is_irreducible(model):
        raise ValidationError("chain is reducible (positive-probability graph not strongly connected)")
    if require_aperiodic:
        d = period(model)
        if d != 1:
            raise ValidationError(f"chain is periodic with period {d}")


def invariant_measure(model, require_aperiodic=True):
    """Stationary law ``m`` with ``m P = m`` and ``sum m = 1``.

    Solved directly: the last balance equation is replaced by the
    normalization.  ``require_aperiodic=False`` admits periodic chains,
    whose invariant law is still unique.
    """
    check_ergodic(model, require_aperiodic)
    n = model.n
    mat = (model.p.T - sp.identity(n)).tolil()
    mat[n - 1, :] = np.ones(n)
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        m = splu(sp.csc_matrix(mat)).solve(rhs)
    except RuntimeError as exc:
        raise SolverError(f"invariant measure solve failed: {exc}") from exc
    res = np.max(np.abs(model.p.T @ m - m))
    if not res < 1e-10 or np.any(m <= 0):
        raise SolverError(f"invariant measure residual {res:.3e} or nonpositive entries")
    return m / m.sum()


def reversed_chain(model, m):
    """Time reversal ``p-(y|x) = m(y) p(x|y) / m(x)``."""
    rev = sp.diags(1.0 / m) @ model.p.T @ sp.diags(m)
    rev = sp.csr_matrix(rev)
    sums = np.asarray(rev.sum(axis=1)).ravel()
    rev = sp.diags(1.0 / sums) @ rev
    return DiscreteModel(rev, None, model.origin)


def backward_committor(model, m, sets):
    """Probability of having come from ``A`` rather than ``B``.

    This is the committor of the reversed chain with the roles of ``A``
    and ``B`` exchanged.
    """
    swapped = ProblemSets.create(model.n, sets.set_b, sets.set_a)
    return solve_committor(reversed_chain(model, m), swapped)


def z_expressions(model, m, q, q_minus, sets):
    """The four expressions for ``Z``.

    Flux into ``A`` from nodes last coming from ``B``, flux into ``B`` from
    nodes last coming from ``A``, committed flux out of ``A`` and
    uncommitted flux out of ``B``.
    """
    p = model.p
    return np.array([
        ((m * (1.0 - q_minus)) @ p)[sets.in_a].sum(),
        ((m * q_minus) @ p)[sets.in_b].sum(),
        (m * (p @ q))[sets.in_a].sum(),
        (m * (p @ (1.0 - q)))[sets.in_b].sum(),
    ])


def normalization_z(model, m, q, q_minus, sets):
    """Mean number of ``A -> B`` transitions per step, checked four ways.

    Returns
    -------
    (float, ndarray)
        The mean of the four expressions and the expressions themselves.

    Raises
    ------
    ConsistencyError
        If any two expressions differ by more than 1e-10.
    """
    z = z_expressions(model, m, q, q_minus, sets)
    spread = z.max() - z.min()
    if not spread <= Z_TOL:
        raise ConsistencyError(f"normalization expressions disagree by {spread:.3e}: {z}")
    if not z.min() > 0:
        raise ConsistencyError("normalization constant is not positive")
    return float(z.mean()), z


@dataclass(frozen=True)
class EquilibriumEnsemble:
    mu: np.ndarray
    theta: np.ndarray
    theta_bar: np.ndarray
    theta_tilde: np.ndarray
    mu_r: np.ndarray


def equilibrium_ensemble(model, m, q, q_minus, sets, z=None):
    """Closed-form statistics of the segments cut from a stationary trajectory."""
    if z is None:
        z, _ = normalization_z(model, m, q, q_minus, sets)
    p = model.p
    in_a, in_b = sets.in_a, sets.in_b
    inflow_from_b = ((m * (1.0 - q_minus)) @ p) / z
    inflow_from_a = ((m * q_minus) @ p) / z
    r = escape_probability(model, q)
    mu = np.where(in_a, inflow_from_b, 0.0)
    theta = np.where(in_b, inflow_from_a, m * q_minus / z)
    theta_bar = m * q_minus * (1.0 - q) / z
    mu_r = np.where(in_a, m * r / z, 0.0)
    theta_tilde = np.where(in_b, inflow_from_a, m * q_minus * q / z + mu_r)
    return EquilibriumEnsemble(mu, theta, theta_bar, theta_tilde, mu_r)


@dataclass(frozen=True)
class Rate:
    k_ab: float
    pi: np.ndarray
    variants: np.ndarray


def reaction_rate(model, m, q, sets, z_values=None):
    """Transitions from ``A`` to ``B`` per unit time, and the time-weighted law.

    ``k_ab`` divides the committed flux out of ``A`` by the mean holding
    time under ``m``; ``variants`` repeats the ratio with each of the four
    ``Z`` expressions when ``z_values`` is supplied.
    """
    if model.kappa is None:
        raise ValidationError("reaction rate requires mean holding times")
    weights = m * model.kappa
    total = weights.sum()
    numer = (m * escape_probability(model, q))[sets.in_a].sum()
    variants = np.asarray(z_values if z_values is not None else [numer]) / total
    return Rate(float(numer / total), weights / total, variants)


@dataclass(frozen=True, eq=False)
class ErgodicStats:
    """Equilibrium quantities; ``k_ab``/``pi`` are ``None`` without holding times."""

    m: np.ndarray
    q: np.ndarray
    q_minus: np.ndarray
    Z: float
    z_values: np.ndarray
    ensemble: EquilibriumEnsemble
    k_ab: float | None
    pi: np.ndarray | None
    pipeline_deviation: float | None = None

    @property
    def mu_eq(self):
        return self.ensemble.mu

    @property
    def z_residual(self):
        return float(self.z_values.max() - self.z_values.min())


def pipeline_deviation(closed, stats):
    """Largest entrywise gap between closed forms and the generic pipeline.

    Gaps are divided by ``max(1, max theta)`` so that large visit counts do
    not inflate round-off.
    """
    scale = max(1.0, float(np.max(stats.theta)))
    pairs = [(closed.theta, stats.theta), (closed.theta_bar, stats.theta_bar),
             (closed.theta_tilde, stats.theta_tilde), (closed.mu_r, stats.mu_r)]
    return max(float(np.max(np.abs(a - b))) for a, b in pairs) / scale


def analyze_ergodic(model, sets, graph=None, require_aperiodic=True, cross_check=True):
    """Full equilibrium analysis.

    Returns
    -------
    (ErgodicStats, EnsembleStats)
        The equilibrium quantities and the generic pipeline run with the
        equilibrium entry law on ``A``.

    Raises
    ------
    ConsistencyError
        If ``cross_check`` and the closed forms deviate from the pipeline
        by more than 1e-8.
    """
    m = invariant_measure(model, require_aperiodic)
    q = solve_committor(model, sets)
    q_minus = backward_committor(model, m, sets)
    z, z_values = normalization_z(model, m, q, q_minus, sets)
    closed = equilibrium_ensemble(model, m, q, q_minus, sets, z)
    k_ab = pi = None
    if model.kappa is not None:
        rate = reaction_rate(model, m, q, sets, z_values)
        k_ab, pi = rate.k_ab, rate.pi
    mu = closed.mu / closed.mu.sum()
    stats = analyze(model, sets.with_mu(mu), graph)
    deviation = None
    if cross_check:
        deviation = pipeline_deviation(closed, stats)
        if not deviation <= PIPELINE_TOL:
            raise ConsistencyError(f"closed forms deviate from the pipeline by {deviation:.3e}")
    result = ErgodicStats(m, q, q_minus, z, z_values, closed, k_ab, pi, deviation)
    return result, stats
