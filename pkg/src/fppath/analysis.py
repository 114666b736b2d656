"""Exact first passage path statistics of a discrete chain.

Every quantity comes from one of two sparse linear systems restricted to
the non-target nodes:

* the committor system on ``(A u B)^c`` (forward harmonic equation), and
* the absorbing system ``I - P`` on ``B^c``, solved once for the mean
  first hitting time and once, transposed, for the visit counts ``theta``.

The split of each path at its last visit to ``A`` into a nonreactive and
a reactive segment then follows from ``q`` and ``theta`` by pointwise
formulas; the fixed-point equations the segment statistics satisfy are
kept as checks (see :func:`check_identities`).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConsistencyError, SolverError, ValidationError
from .graph import reachable_to_set, v_minus_v_plus, validate_assumption_1

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
FLUX_TOL = 1e-8
DENOM_TOL = 1e-14


def _factor(matrix):
    try:
        return splu(sp.csc_matrix(matrix))
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from exc


class _AbsorbingSystem:
    """LU factors of ``I - P`` restricted to the nodes outside ``B``."""

    def __init__(self, model, sets):
        self.idx = np.flatnonzero(~sets.in_b)
        self.p = model.p
        sub = model.p[self.idx][:, self.idx]
        self.matrix = sp.identity(self.idx.size, format="csc") - sub
        self.lu = _factor(self.matrix)

    def solve(self, rhs, trans=False):
        x = self.lu.solve(np.asarray(rhs, dtype=float), trans="T" if trans else "N")
        mat = self.matrix.T if trans else self.matrix
        res = np.max(np.abs(mat @ x - rhs)) if x.size else 0.0
        if not res <= RESIDUAL_TOL * max(1.0, np.max(np.abs(x)) if x.size else 1.0):
            raise SolverError(f"absorbing-system residual {res:.3e} exceeds tolerance")
        return x


def solve_committor(model, sets):
    """Probability of reaching ``B`` before ``A``.

    Solves ``sum_y p(y|x) q(y) = q(x)`` on ``(A u B)^c`` with ``q = 0`` on
    ``A`` and ``q = 1`` on ``B``.

    Raises
    ------
    SolverError
        If the system is singular or the harmonic residual exceeds 1e-10.
    """
    n = model.n
    q = np.zeros(n)
    q[sets.in_b] = 1.0
    inner = np.flatnonzero(sets.interior)
    if inner.size:
        p_inner = model.p[inner]
        rhs = np.asarray(p_inner[:, sets.in_b].sum(axis=1)).ravel()
        mat = sp.identity(inner.size, format="csc") - p_inner[:, inner]
        q[inner] = _factor(mat).solve(rhs)
        res = np.max(np.abs(model.p[inner] @ q - q[inner]))
        if not res < RESIDUAL_TOL:
            raise SolverError(f"committor residual {res:.3e} exceeds {RESIDUAL_TOL}")
    return np.clip(q, 0.0, 1.0)


def _check_b_reachable(model, sets):
    reach = reachable_to_set(None, model, sets.set_b)
    stuck = sorted(set(range(model.n)) - reach)
    if stuck:
        raise ValidationError(f"mfpt undefined: B unreachable from nodes {stuck}")


def solve_mfpt(model, sets, system=None):
    """Mean number of jumps until the first visit to ``B``.

    Requires ``B`` to be reachable from every node; otherwise the hitting
    time is infinite with positive probability and a
    :class:`ValidationError` is raised.
    """
    _check_b_reachable(model, sets)
    system = system or _AbsorbingSystem(model, sets)
    f = np.zeros(model.n)
    f[system.idx] = system.solve(np.ones(system.idx.size))
    return f


def solve_theta(model, sets, mu=None, system=None):
    """Expected visits to each node along a first passage path started from ``mu``.

    Visits are counted from the start up to and including the first entry
    into ``B``, so ``theta`` restricted to ``B`` is the distribution of the
    entry node and sums to one.

    Parameters
    ----------
    model : DiscreteModel
    sets : ProblemSets
    mu : array, optional
        Initial distribution; defaults to ``sets.mu``.
    """
    mu = sets.mu if mu is None else np.asarray(mu, dtype=float)
    system = system or _AbsorbingSystem(model, sets)
    theta = np.zeros(model.n)
    theta[system.idx] = system.solve(mu[system.idx], trans=True)
    theta[sets.in_b] = (model.p[system.idx].T @ theta[system.idx])[sets.in_b]
    total = theta[sets.in_b].sum()
    if abs(total - 1.0) > RESIDUAL_TOL * max(1.0, theta.max()):
        raise SolverError(f"visit counts on B sum to {total!r}, not 1")
    return theta


def escape_probability(model, q):
    """``sum_z p(z|x) q(z)``: chance that the next step commits towards ``B``."""
    return model.p @ q


@dataclass(frozen=True)
class SegmentStats:
    theta_bar: np.ndarray
    theta_bar_prime: np.ndarray
    theta_tilde: np.ndarray
    mu_r: np.ndarray


def segment_stats(model, sets, mu, q, theta):
    """Split visit counts at the last visit to ``A``.

    Returns
    -------
    SegmentStats
        ``theta_bar`` counts visits up to and including the last ``A`` visit,
        ``theta_bar_prime`` the same without that final ``A`` visit,
        ``theta_tilde`` the visits of the reactive segment (which starts at
        the last ``A`` node), and ``mu_r`` the law of that last ``A`` node.
    """
    r = escape_probability(model, q)
    theta_bar = theta * (1.0 - q)
    mu_r = np.where(sets.in_a, theta_bar * r, 0.0)
    theta_bar_prime = theta_bar - mu_r
    theta_tilde = np.where(sets.in_b, theta, theta * q + mu_r)
    return SegmentStats(theta_bar, theta_bar_prime, theta_tilde, mu_r)


def _scaled_rows(p, rows_keep, cols_keep, row_scale, col_scale):
    coo = p.tocoo()
    keep = rows_keep[coo.row] & cols_keep[coo.col] & (coo.row != coo.col)
    r, c = coo.row[keep], coo.col[keep]
    return r, c, coo.data[keep] * col_scale[c] / row_scale[r]


def segment_chains(model, sets, q, v_minus, v_plus):
    """Transition matrices of the nonreactive and reactive segments.

    Returns
    -------
    p_bar : csr_matrix, shape (n+1, n+1)
        Chain on ``V-`` plus an absorbing ``end`` state with index ``n``;
        leaving ``A`` for good is the jump to ``end``.  Rows outside ``V-``
        are empty.
    p_tilde : csr_matrix, shape (n, n)
        Chain on ``V+ u B`` with ``B`` absorbing.  Rows elsewhere are empty.
    """
    n = model.n
    r = escape_probability(model, q)
    in_vm = np.zeros(n, bool)
    in_vm[list(v_minus)] = True
    in_vp = np.zeros(n, bool)
    in_vp[list(v_plus)] = True

    one_minus = 1.0 - q
    if np.any(one_minus[in_vm] < DENOM_TOL):
        raise ConsistencyError("nonreactive chain has a row with 1 - q below 1e-14")
    safe = np.where(in_vm, one_minus, 1.0)
    rows, cols, vals = _scaled_rows(model.p, in_vm, in_vm, safe, one_minus)
    a_rows = np.flatnonzero(sets.in_a & in_vm)
    end = np.full(a_rows.size, n)
    p_bar = sp.csr_matrix(
        (np.concatenate([vals, r[a_rows], [1.0]]),
         (np.concatenate([rows, a_rows, [n]]), np.concatenate([cols, end, [n]]))),
        shape=(n + 1, n + 1))

    denom = np.where(sets.in_a, r, q)
    if np.any(denom[in_vp] < DENOM_TOL):
        raise ConsistencyError("reactive chain has a row whose denominator is below 1e-14")
    safe = np.where(in_vp, denom, 1.0)
    rows, cols, vals = _scaled_rows(model.p, in_vp, in_vp | sets.in_b, safe, q)
    b_nodes = np.flatnonzero(sets.in_b)
    p_tilde = sp.csr_matrix(
        (np.concatenate([vals, np.ones(b_nodes.size)]),
         (np.concatenate([rows, b_nodes]), np.concatenate([cols, b_nodes]))),
        shape=(n, n))
    for m in (p_bar, p_tilde):
        m.eliminate_zeros()
        m.sort_indices()
    return p_bar, p_tilde


def _row_sums(m):
    return np.asarray(m.sum(axis=1)).ravel()


def _col_sums(m):
    return np.asarray(m.sum(axis=0)).ravel()


def flux_residuals(sets, mu, theta_bar, theta_bar_prime, theta_tilde, J_bar, J_tilde):
    """Maximum violation of each flux conservation law."""
    not_a = ~sets.in_a
    return {
        "nonreactive_inflow": np.max(np.abs(_col_sums(J_bar) - (theta_bar - mu * sets.in_a))),
        "nonreactive_outflow": np.max(np.abs(_row_sums(J_bar) - theta_bar_prime)),
        "reactive_outflow": np.max(np.abs((_row_sums(J_tilde) - theta_tilde)[~sets.in_b])),
        "reactive_inflow": np.max(np.abs((_col_sums(J_tilde) - theta_tilde)[not_a])),
        "reactive_source_total": abs(_row_sums(J_tilde)[sets.in_a].sum() - 1.0),
        "reactive_sink_total": abs(_col_sums(J_tilde)[sets.in_b].sum() - 1.0),
    }


def fluxes(model, sets, mu, theta, theta_bar, theta_bar_prime, theta_tilde, p_bar, p_tilde,
           check=True):
    """Expected edge traversals per path: total, nonreactive and reactive.

    Returns
    -------
    (J, J_bar, J_tilde) : csr_matrix, shape (n, n)
        Entry ``[x, y]`` is the flux of edge ``x -> y``.

    Raises
    ------
    ConsistencyError
        If ``check`` and a conservation law fails by more than 1e-8
        relative to the largest visit count.
    """
    n = model.n
    out = ~sets.in_b
    J = sp.diags(np.where(out, theta, 0.0)) @ model.p
    J_bar = (sp.diags(np.append(theta_bar, 0.0)) @ p_bar)[:n, :n]
    J_tilde = sp.diags(np.where(out, theta_tilde, 0.0)) @ p_tilde
    mats = []
    for m in (J, J_bar, J_tilde):
        m = sp.csr_matrix(m)
        m.setdiag(0)
        m.eliminate_zeros()
        m.sort_indices()
        mats.append(m)
    if check:
        res = flux_residuals(sets, mu, theta_bar, theta_bar_prime, theta_tilde, mats[1], mats[2])
        scale = max(1.0, float(np.max(theta)))
        bad = {k: v for k, v in res.items() if not v <= FLUX_TOL * scale}
        if bad:
            raise ConsistencyError(f"flux conservation violated: {bad}")
    return tuple(mats)


@dataclass(frozen=True)
class PathLengths:
    """Mean jump counts: nonreactive (``sigma``), reactive (``tau - sigma``), whole path."""

    L_bar: float
    L_tilde: float
    L: float


def path_lengths(sets, theta, theta_bar_prime, theta_tilde):
    """Mean segment lengths as sums of visit counts over ``B^c``."""
    out = ~sets.in_b
    return PathLengths(float(theta_bar_prime[out].sum()), float(theta_tilde[out].sum()),
                       float(theta[out].sum()))


@dataclass(frozen=True)
class TimeStats:
    T_bar: np.ndarray
    T_tilde: np.ndarray
    T: np.ndarray

    @property
    def totals(self):
        """Mean clock time of the nonreactive segment, reactive segment and whole path."""
        return float(self.T_bar.sum()), float(self.T_tilde.sum()), float(self.T.sum())


def time_stats(model, sets, theta, theta_bar_prime, theta_tilde, J_bar=None, J_tilde=None):
    """Mean clock time spent at each node, per segment.

    When holding time and jump target are independent the time at ``x`` is
    ``kappa(x)`` times the number of departures from ``x``.  Otherwise
    (``model.jump_kappa`` set) the split at the last ``A`` visit is
    correlated with the clock that fired, and each segment's time is
    ``sum_y J(x -> y) * E[hold | x -> y]`` over that segment's fluxes, which
    must then be supplied.  The total ``T = kappa * theta`` is unaffected.

    Raises
    ------
    ValidationError
        If the model carries no mean holding times.
    """
    if model.kappa is None:
        raise ValidationError("time statistics require a continuous-time model")
    out = ~sets.in_b
    kappa = np.where(out, model.kappa, 0.0)
    if not np.all(np.isfinite(kappa)):
        raise ValidationError("holding times must be finite outside B")
    if model.jump_kappa is not None:
        if J_bar is None or J_tilde is None:
            raise ValidationError("segment fluxes are needed when holding times depend on the jump")
        jk = model.jump_kappa
        T_bar = np.asarray(sp.csr_matrix(J_bar).multiply(jk).sum(axis=1)).ravel()
        T_tilde = np.asarray(sp.csr_matrix(J_tilde).multiply(jk).sum(axis=1)).ravel()
        return TimeStats(np.where(out, T_bar, 0.0), np.where(out, T_tilde, 0.0),
                         kappa * np.where(out, theta, 0.0))
    return TimeStats(kappa * theta_bar_prime, kappa * np.where(out, theta_tilde, 0.0),
                     kappa * np.where(out, theta, 0.0))


def mu_r_via_omega(model, sets, q, mu=None, system=None):
    """Law of the last ``A`` node, via last-exit probabilities.

    For every ``y`` in ``A`` the probability ``omega(x, y)`` that ``y`` is
    the last ``A`` node seen from ``x`` solves ``(I - P) omega(., y) =
    r(y) e_y`` on ``B^c``, with ``r`` the escape probability.  All columns
    share one factorization.
    """
    mu = sets.mu if mu is None else np.asarray(mu, dtype=float)
    system = system or _AbsorbingSystem(model, sets)
    r = escape_probability(model, q)
    a_nodes = np.array(sorted(sets.set_a))
    pos = np.searchsorted(system.idx, a_nodes)
    rhs = np.zeros((system.idx.size, a_nodes.size))
    rhs[pos, np.arange(a_nodes.size)] = r[a_nodes]
    omega = system.lu.solve(rhs)
    res = np.max(np.abs(system.matrix @ omega - rhs))
    if not res <= RESIDUAL_TOL * max(1.0, np.max(np.abs(omega))):
        raise SolverError(f"last-exit system residual {res:.3e} exceeds tolerance")
    mu_r = np.zeros(model.n)
    mu_r[a_nodes] = mu[a_nodes] @ omega[pos]
    return mu_r


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    """All first passage path statistics of one instance.

    Node-indexed vectors have length ``n``; flux fields are sparse
    ``(n, n)`` matrices.  Time fields are ``None`` for purely discrete
    chains.
    """

    q: np.ndarray
    escape: np.ndarray
    mu: np.ndarray
    v_minus: frozenset
    v_plus: frozenset
    f: np.ndarray
    theta: np.ndarray
    theta_bar: np.ndarray
    theta_bar_prime: np.ndarray
    theta_tilde: np.ndarray
    mu_r: np.ndarray
    mu_r_omega: np.ndarray
    p_bar: sp.csr_matrix
    p_tilde: sp.csr_matrix
    J: sp.csr_matrix
    J_bar: sp.csr_matrix
    J_tilde: sp.csr_matrix
    lengths: PathLengths
    times: TimeStats | None = None
    extras: dict = field(default_factory=dict)

    @property
    def T(self):
        return None if self.times is None else self.times.T

    @property
    def T_bar(self):
        return None if self.times is None else self.times.T_bar

    @property
    def T_tilde(self):
        return None if self.times is None else self.times.T_tilde

    @property
    def mean_sigma(self):
        """Mean index of the last ``A`` visit."""
        return float(self.theta_bar.sum() - 1.0)


def analyze(model, sets, graph=None, validate=True):
    """Run the full pipeline: committor, visit counts, segments, fluxes, lengths, times.

    Parameters
    ----------
    model : DiscreteModel
    sets : ProblemSets
    graph : DirectedGraph, optional
        Restricts reachability to structural edges when given.
    validate : bool
        Refuse to run (``ValidationError`` carrying the report) when the
        structural assumptions fail.

    Returns
    -------
    EnsembleStats
    """
    if model.n != sets.n:
        raise ValidationError("model and sets disagree on the node count")
    if validate:
        validate_assumption_1(graph, model, sets).raise_if_failed()
    mu = sets.mu
    q = solve_committor(model, sets)
    system = _AbsorbingSystem(model, sets)
    theta = solve_theta(model, sets, mu, system)
    seg = segment_stats(model, sets, mu, q, theta)
    v_minus, v_plus = v_minus_v_plus(graph, model, sets, q)
    p_bar, p_tilde = segment_chains(model, sets, q, v_minus, v_plus)
    J, J_bar, J_tilde = fluxes(model, sets, mu, theta, seg.theta_bar, seg.theta_bar_prime,
                               seg.theta_tilde, p_bar, p_tilde)
    f = solve_mfpt(model, sets, system)
    lengths = path_lengths(sets, theta, seg.theta_bar_prime, seg.theta_tilde)
    times = None
    if model.kappa is not None:
        times = time_stats(model, sets, theta, seg.theta_bar_prime, seg.theta_tilde,
                           J_bar, J_tilde)
    mu_r_omega = mu_r_via_omega(model, sets, q, mu, system)
    logger.debug("analyzed %d nodes, |V-|=%d, |V+|=%d", model.n, len(v_minus), len(v_plus))
    return EnsembleStats(
        q=q, escape=escape_probability(model, q), mu=np.array(mu), v_minus=v_minus,
        v_plus=v_plus, f=f, theta=theta, theta_bar=seg.theta_bar,
        theta_bar_prime=seg.theta_bar_prime, theta_tilde=seg.theta_tilde, mu_r=seg.mu_r,
        mu_r_omega=mu_r_omega, p_bar=p_bar, p_tilde=p_tilde, J=J, J_bar=J_bar,
        J_tilde=J_tilde, lengths=lengths, times=times)


COUNT_IDENTITIES = (
    "theta_equation", "theta_bar_product", "theta_split", "flux_split",
    "nonreactive_fixed_point", "reactive_fixed_point", "nonreactive_inflow",
    "nonreactive_outflow", "reactive_outflow", "reactive_inflow",
)
LENGTH_IDENTITIES = ("mfpt_theta", "length_split")


def check_identities(model, sets, stats):
    """Residual of every exact identity linking the computed statistics.

    Identities between probabilities are reported as absolute errors.
    Identities between visit counts, fluxes or lengths are divided by
    ``max(1, size)`` where size is the largest visit count (the mean path
    length for the length identities), since their round-off grows with
    the magnitude of the terms.

    Returns
    -------
    dict
        Identity name to its maximum violation.  A correct solution keeps
        every entry near machine precision.
    """
    s = stats
    n = model.n
    in_a, in_b = sets.in_a, sets.in_b
    out = ~in_b
    mu = s.mu
    res = {}
    res["q_bounds"] = max(0.0, -s.q.min(), s.q.max() - 1.0)
    res["q_boundary"] = max(np.max(np.abs(s.q[in_a])), np.max(np.abs(s.q[in_b] - 1.0)))
    inner = sets.interior
    res["q_harmonic"] = float(np.max(np.abs((model.p @ s.q - s.q)[inner]))) if inner.any() else 0.0
    feed = np.where(out, s.theta, 0.0) @ model.p
    res["theta_equation"] = float(np.max(np.abs(s.theta - mu * in_a - feed)))
    res["theta_B_sum"] = abs(s.theta[in_b].sum() - 1.0)
    res["theta_tilde_B_sum"] = abs(s.theta_tilde[in_b].sum() - 1.0)
    res["mu_r_sum"] = abs(s.mu_r[in_a].sum() - 1.0)
    res["mu_r_support"] = float(np.max(np.abs(s.mu_r[~in_a]))) if (~in_a).any() else 0.0
    res["mu_r_nonnegative"] = max(0.0, -s.mu_r.min())
    res["theta_bar_product"] = float(np.max(np.abs(s.theta_bar - s.theta * (1.0 - s.q))))
    res["theta_split"] = float(np.max(np.abs(s.theta - s.theta_bar_prime - s.theta_tilde)))
    diff = s.J - s.J_bar - s.J_tilde
    res["flux_split"] = float(np.max(np.abs(diff.data))) if diff.nnz else 0.0
    in_vm = np.zeros(n, bool)
    in_vm[list(s.v_minus)] = True
    in_vp = np.zeros(n, bool)
    in_vp[list(s.v_plus)] = True
    bar_feed = np.append(s.theta_bar, 0.0) @ s.p_bar
    res["nonreactive_fixed_point"] = float(
        np.max(np.abs((s.theta_bar - mu * in_a - bar_feed[:n])[in_vm])))
    tilde_feed = np.where(in_vp, s.theta_tilde, 0.0) @ s.p_tilde
    res["reactive_fixed_point"] = float(np.max(np.abs((s.theta_tilde - tilde_feed)[~in_a])))
    res["theta_bar_escape_sum"] = abs(float(s.theta_bar[in_a] @ s.escape[in_a]) - 1.0)
    res.update(flux_residuals(sets, mu, s.theta_bar, s.theta_bar_prime, s.theta_tilde,
                              s.J_bar, s.J_tilde))
    mean_f = float(mu @ s.f)
    res["mfpt_theta"] = abs(mean_f - s.theta[out].sum())
    res["length_split"] = abs(mean_f - s.lengths.L_bar - s.lengths.L_tilde)
    res["mu_r_two_routes"] = float(np.max(np.abs(s.mu_r - s.mu_r_omega)))
    count_scale = max(1.0, float(np.max(s.theta)))
    length_scale = max(1.0, mean_f)
    for key in COUNT_IDENTITIES:
        res[key] /= count_scale
    for key in LENGTH_IDENTITIES:
        res[key] /= length_scale
    vm_rows = np.append(in_vm, True)
    res["p_bar_rows"] = float(np.max(np.abs(_row_sums(s.p_bar)[vm_rows] - 1.0)))
    res["p_tilde_rows"] = float(np.max(np.abs(_row_sums(s.p_tilde)[in_vp | in_b] - 1.0)))
    if s.times is not None:
        scale = max(1.0, float(np.max(s.T)))
        res["time_split"] = float(np.max(np.abs(s.T - s.T_bar - s.T_tilde))) / scale
    return {k: float(v) for k, v in res.items()}


def _round_sig(values, digits=12):
    values = np.asarray(values, dtype=float)
    out = np.zeros_like(values)
    nz = values != 0
    mag = np.floor(np.log10(np.abs(values[nz])))
    scale = 10.0 ** (digits - 1 - mag)
    out[nz] = np.round(values[nz] * scale) / scale
    return out


NODE_FIELDS = ("q", "theta", "theta_bar_prime", "theta_tilde")
TIME_FIELDS = ("T", "T_bar", "T_tilde")
EDGE_FIELDS = ("J", "J_bar", "J_tilde")


def rank_report(stats, top_k=None):
    """Nodes and edges ordered by importance.

    Nodes are ranked by each of ``q``, ``theta``, ``theta_bar_prime``,
    ``theta_tilde`` (and the time fields when present), edges by each flux
    with zero-flux edges left out.  Values are compared after rounding to
    12 significant digits so that round-off does not reorder ties; ties
    go to the smaller node index (lexicographic for edges).

    Returns
    -------
    dict
        ``{"nodes": {field: [(node, value), ...]}, "edges": {field: [((x, y), value), ...]}}``
    """
    nodes = {}
    fields = NODE_FIELDS + (TIME_FIELDS if stats.times is not None else ())
    for name in fields:
        v = np.asarray(getattr(stats, name), dtype=float)
        order = np.lexsort((np.arange(v.size), -_round_sig(v)))
        nodes[name] = [(int(i), float(v[i])) for i in order[:top_k]]
    edges = {}
    for name in EDGE_FIELDS:
        coo = getattr(stats, name).tocoo()
        keep = coo.data != 0
        r, c, d = coo.row[keep], coo.col[keep], coo.data[keep]
        order = np.lexsort((c, r, -_round_sig(d)))
        edges[name] = [((int(r[i]), int(c[i])), float(d[i])) for i in order[:top_k]]
    return {"nodes": nodes, "edges": edges}
