"""Waiting-time laws and the embedded discrete chain of a jump process.

Each edge ``x -> y`` carries a waiting-time density.  At node ``x`` all
out-edges run independent clocks and the first one to ring decides the
jump, so

* ``a(t|x)``, the probability of still sitting at ``x`` at time ``t``, is
  the product of the per-edge survival functions, and
* ``b(t, x->y)``, the density of jumping to ``y`` at time ``t``, is the
  ``y`` density times the survival of every competing edge.

Integrating ``b`` over time gives the jump probabilities ``p(y|x)`` and
integrating ``a`` gives the mean holding time ``kappa(x)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy import integrate
from scipy.signal import fftconvolve
from scipy.special import gamma

from .errors import SolverError, ValidationError
from .model import DiscreteModel

TABLE_TOL = 1e-6
RENORM_TOL = 1e-8


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValidationError("exponential rate must be positive")

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        return self.rate * np.exp(-self.rate * t)

    def sf(self, t):
        return np.exp(-self.rate * np.asarray(t, dtype=float))

    def isf(self, u):
        return -np.log(u) / self.rate

    def to_dict(self):
        return {"type": "exp", "lambda": self.rate}


@dataclass(frozen=True)
class Weibull:
    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValidationError("Weibull shape and rate must be positive")

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        k, lam = self.shape, self.rate
        if k == 1.0:
            return lam * np.exp(-lam * t)
        # log space keeps the large-t tail at 0 instead of inf * 0
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            z = np.log(lam * t)
            return np.exp(np.log(k * lam) + (k - 1) * z - np.exp(k * z))

    def sf(self, t):
        with np.errstate(over="ignore"):
            return np.exp(-((self.rate * np.asarray(t, dtype=float)) ** self.shape))

    def isf(self, u):
        return (-np.log(u)) ** (1.0 / self.shape) / self.rate

    def to_dict(self):
        return {"type": "weibull", "k": self.shape, "lambda": self.rate}


@dataclass(frozen=True)
class PowerLaw:
    """Density ``alpha (1+t)^-(alpha+1)``; ``alpha > 1`` keeps the mean finite."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValidationError("power-law exponent must exceed 1")

    def pdf(self, t):
        return self.alpha * (1.0 + np.asarray(t, dtype=float)) ** (-(self.alpha + 1))

    def sf(self, t):
        return (1.0 + np.asarray(t, dtype=float)) ** (-self.alpha)

    def isf(self, u):
        return np.asarray(u, dtype=float) ** (-1.0 / self.alpha) - 1.0

    def to_dict(self):
        return {"type": "powerlaw", "alpha": self.alpha}


class Tabulated:
    """Piecewise-linear density through ``(t, psi)`` samples, zero past the last point.

    The trapezoid mass of the table must be one within ``1e-6``; the
    samples are then rescaled so the mass is exactly one.
    """

    def __init__(self, t, psi):
        t = np.array(t, dtype=float)
        psi = np.array(psi, dtype=float)
        if t.ndim != 1 or t.shape != psi.shape or t.size < 2:
            raise ValidationError("table needs matching t and psi arrays of length >= 2")
        if t[0] != 0 or np.any(np.diff(t) <= 0):
            raise ValidationError("table times must start at 0 and increase strictly")
        if np.any(psi < 0):
            raise ValidationError("table density must be nonnegative")
        mass = integrate.trapezoid(psi, t)
        if abs(mass - 1.0) > TABLE_TOL:
            raise ValidationError(f"table density integrates to {mass}, not 1")
        self.t = t
        self.psi = psi / mass
        widths = np.diff(t)
        self._cum = np.concatenate([[0.0], np.cumsum(0.5 * widths * (self.psi[1:] + self.psi[:-1]))])
        self._cum[-1] = 1.0
        for arr in (self.t, self.psi, self._cum):
            arr.flags.writeable = False

    def __eq__(self, other):
        return (isinstance(other, Tabulated) and np.array_equal(self.t, other.t)
                and np.array_equal(self.psi, other.psi))

    def __hash__(self):
        return hash((self.t.tobytes(), self.psi.tobytes()))

    def __repr__(self):
        return f"Tabulated(points={self.t.size}, end={self.t[-1]})"

    @property
    def end(self):
        return self.t[-1]

    def pdf(self, t):
        return np.interp(t, self.t, self.psi, left=0.0, right=0.0)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        i = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, self.t.size - 2)
        s = np.clip(t - self.t[i], 0.0, None)
        h = self.t[i + 1] - self.t[i]
        slope = (self.psi[i + 1] - self.psi[i]) / h
        c = self._cum[i] + self.psi[i] * s + 0.5 * slope * s * s
        return np.where(t >= self.end, 1.0, np.where(t <= 0, 0.0, np.minimum(c, 1.0)))

    def sf(self, t):
        return 1.0 - self.cdf(t)

    def isf(self, u):
        """Inverse survival function, solving the segment quadratic exactly."""
        target = 1.0 - np.asarray(u, dtype=float)
        i = np.clip(np.searchsorted(self._cum, target, side="right") - 1, 0, self.t.size - 2)
        rem = target - self._cum[i]
        p0 = self.psi[i]
        slope = (self.psi[i + 1] - p0) / (self.t[i + 1] - self.t[i])
        # s solves 0.5*slope*s^2 + p0*s = rem; the stable root avoids cancellation
        disc = np.sqrt(np.maximum(p0 * p0 + 2.0 * slope * rem, 0.0))
        denom = p0 + disc
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(denom > 0, 2.0 * rem / denom, 0.0)
        return np.minimum(self.t[i] + s, self.t[i + 1])

    def to_dict(self):
        return {"type": "table", "t": self.t.tolist(), "psi": self.psi.tolist()}


def law_from_dict(doc):
    """Build a law from its JSON form, e.g. ``{"type": "exp", "lambda": 2.0}``."""
    kind = doc.get("type")
    try:
        if kind == "exp":
            return Exponential(float(doc["lambda"]))
        if kind == "weibull":
            return Weibull(float(doc["k"]), float(doc["lambda"]))
        if kind == "powerlaw":
            return PowerLaw(float(doc["alpha"]))
        if kind == "table":
            return Tabulated(doc["t"], doc["psi"])
    except KeyError as exc:
        raise ValidationError(f"law {doc!r} lacks field {exc}") from None
    raise ValidationError(f"unknown law type {kind!r}")


def _require_edges(out_laws):
    if not out_laws:
        raise ValidationError("no out-edges")


def survival(out_laws, t):
    """``a(t|x)``: probability that no clock of ``x`` has rung by time ``t``."""
    _require_edges(out_laws)
    out = np.ones_like(np.asarray(t, dtype=float))
    for law in out_laws:
        out = out * law.sf(t)
    return out


def jump_density(out_laws, j, t):
    """``b(t, x->y_j)``: density of leaving ``x`` through its ``j``-th out-edge at ``t``."""
    _require_edges(out_laws)
    if not 0 <= j < len(out_laws):
        raise ValidationError(f"edge index {j} is not an out-edge")
    out = out_laws[j].pdf(t)
    for i, law in enumerate(out_laws):
        if i != j:
            out = out * law.sf(t)
    return out


def _closed_form(out_laws):
    """Closed-form ``(p, kappa)`` or None when the node mixes families."""
    if all(isinstance(l, PowerLaw) for l in out_laws):
        alpha = np.array([l.alpha for l in out_laws])
        total = alpha.sum()
        return alpha / total, 1.0 / (total - 1.0)
    shapes = set()
    rates = []
    for law in out_laws:
        if isinstance(law, Exponential):
            shapes.add(1.0)
            rates.append(law.rate)
        elif isinstance(law, Weibull):
            shapes.add(law.shape)
            rates.append(law.rate)
        else:
            return None
    if len(shapes) != 1:
        return None
    k = shapes.pop()
    weights = np.array(rates) ** k
    total = weights.sum()
    return weights / total, gamma(1.0 / k) / (k * total ** (1.0 / k))


def _quad_half_line(fn, scale):
    """Integrate ``fn`` over ``[0, inf)`` after substituting ``t = expm1(u)``.

    The substitution turns algebraic tails into exponential ones, so the
    same rule serves power-law and light-tailed integrands.
    """
    def g(u):
        if u > 700.0:
            # every admissible integrand has decayed to zero long before here
            return 0.0
        return fn(math.expm1(u)) * math.exp(u)

    cut = math.log1p(scale)
    opts = dict(epsabs=1e-14, epsrel=1e-12, limit=500)
    head, err1 = integrate.quad(g, 0.0, cut, **opts)
    tail, err2 = integrate.quad(g, cut, np.inf, **opts)
    return head + tail, err1 + err2


def _quad_finite(fn, end, breaks):
    opts = dict(epsabs=1e-14, epsrel=1e-12, limit=200)
    edges = np.unique(np.concatenate([[0.0], breaks[breaks < end], [end]]))
    total, err = 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, e = integrate.quad(fn, lo, hi, **opts)
        total += v
        err += e
    return total, err


def _quadrature(out_laws, with_means=False):
    tables = [l for l in out_laws if isinstance(l, Tabulated)]

    def a(t):
        return float(survival(out_laws, t))

    def b(j):
        return lambda t: float(jump_density(out_laws, j, t))

    if tables:
        end = min(l.end for l in tables)
        breaks = np.unique(np.concatenate([l.t for l in tables]))

        def run(fn):
            return _quad_finite(fn, end, breaks)
    else:
        scale = min(float(l.isf(0.01)) for l in out_laws)

        def run(fn):
            return _quad_half_line(fn, max(scale, 1e-12))

    kappa, err = run(a)
    p = np.empty(len(out_laws))
    for j in range(len(out_laws)):
        p[j], e = run(b(j))
        err += e
    if err > 1e-7:
        raise SolverError(f"quadrature error estimate {err:.2e} too large")
    if not with_means:
        return p, kappa
    moments = np.empty(len(out_laws))
    for j in range(len(out_laws)):
        bj = b(j)
        moments[j], e = run(lambda t, bj=bj: t * bj(t))
        if e > 1e-7 * max(1.0, abs(moments[j])):
            raise SolverError(f"quadrature error estimate {e:.2e} too large")
    return p, kappa, moments


def holding_stats(out_laws, method="auto", jump_means=False):
    """Jump probabilities and mean holding time at one node.

    Parameters
    ----------
    out_laws : sequence of laws
        One per out-edge, in successor order.
    method : {"auto", "closed", "quad"}
        ``auto`` uses the closed form when every out-edge belongs to one
        family (exponential and Weibull with a common shape, or power law)
        and adaptive quadrature otherwise.

    jump_means : bool
        Also return the mean holding time conditional on each jump.

    Returns
    -------
    p : ndarray
        ``p(y|x)`` for each out-edge, summing to one.
    kappa : float
    means : ndarray
        Only with ``jump_means``.  Equal to ``kappa`` for every edge when a
        closed form exists, because the holding time is then independent of
        which clock fires.  The means are rescaled so that their
        ``p``-weighted average is exactly ``kappa``.
    """
    _require_edges(out_laws)
    if method not in ("auto", "closed", "quad"):
        raise ValueError(f"unknown method {method!r}")
    closed = _closed_form(out_laws) if method != "quad" else None
    moments = None
    if closed is not None:
        p, kappa = closed
    elif method == "closed":
        raise ValidationError("no closed form for this combination of laws")
    elif jump_means:
        p, kappa, moments = _quadrature(out_laws, True)
    else:
        p, kappa = _quadrature(out_laws)
    if not np.isfinite(kappa):
        raise ValidationError("infinite mean holding time")
    drift = abs(p.sum() - 1.0)
    if drift > RENORM_TOL:
        raise SolverError(f"jump probabilities sum to {p.sum()} (drift {drift:.2e})")
    p = p / p.sum()
    if not jump_means:
        return p, float(kappa)
    if moments is None:
        return p, float(kappa), np.full(p.size, float(kappa))
    means = moments / p
    means *= kappa / (p @ means)
    return p, float(kappa), means


class ContinuousProcess:
    """A graph with one waiting-time law per edge.

    Parameters
    ----------
    graph : DirectedGraph
    laws : dict
        Maps every edge ``(x, y)`` to a law.
    """

    def __init__(self, graph, laws):
        missing = set(graph.edges) - set(laws)
        extra = set(laws) - set(graph.edges)
        if missing or extra:
            raise ValidationError(f"laws must cover exactly the edges; missing {sorted(missing)}, "
                                  f"extra {sorted(extra)}")
        self.graph = graph
        self.laws = dict(laws)

    def out_laws(self, x):
        return [self.laws[(x, y)] for y in self.graph.successors[x]]

    def embed(self, method="auto"):
        """The embedded discrete chain with its mean holding times."""
        n = self.graph.node_count
        rows, cols, vals, means = [], [], [], []
        kappa = np.full(n, np.nan)
        dependent = False
        for x in range(n):
            succ = self.graph.successors[x]
            if not succ:
                rows.append(x), cols.append(x), vals.append(1.0), means.append(0.0)
                continue
            laws = self.out_laws(x)
            p, kappa[x], m = holding_stats(laws, method, jump_means=True)
            dependent = dependent or _closed_form(laws) is None
            rows.extend([x] * len(succ))
            cols.extend(succ)
            vals.extend(p)
            means.extend(m)
        p = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        jump_kappa = None
        if dependent:
            jump_kappa = sp.csr_matrix((means, (rows, cols)), shape=(n, n))
            jump_kappa.setdiag(0)
            jump_kappa.eliminate_zeros()
        return DiscreteModel(p, kappa, "embedded-from-continuous", jump_kappa)


def embed_discrete(graph, laws, method="auto"):
    """Shorthand for ``ContinuousProcess(graph, laws).embed(method)``."""
    return ContinuousProcess(graph, laws).embed(method)


def sample_holding(out_laws, rng):
    """Run the competing clocks of one node once.

    Returns
    -------
    (float, int)
        The waiting time and the index of the out-edge that fired.
    """
    _require_edges(out_laws)
    u = rng.random(len(out_laws))
    # 1 - u lies in (0, 1], keeping log finite
    times = np.array([law.isf(1.0 - ui) for law, ui in zip(out_laws, u)], dtype=float)
    j = int(np.argmin(times))
    return float(times[j]), j


@dataclass(frozen=True)
class ArrivalDensities:
    """Densities along a fixed node sequence on a uniform grid.

    ``r[k-1]`` is the density of completing the ``k``-th jump at time
    ``t``; ``eta`` the density of being at the last node at ``t`` after
    exactly the prescribed jumps.
    """

    t: np.ndarray
    r: tuple
    eta: np.ndarray

    def total(self, k=None):
        """Trapezoid integral of ``r_k`` (default the last one)."""
        k = len(self.r) if k is None else k
        return float(integrate.trapezoid(self.r[k - 1], self.t))


def _trapezoid_convolution(f, g, h):
    full = fftconvolve(f, g)[: f.size]
    return h * (full - 0.5 * (f[0] * g + f * g[0]))


def arrival_density(sequence, process, h, t_max):
    """Convolution recursion for arrival-time densities along ``sequence``.

    Parameters
    ----------
    sequence : sequence of int
        Nodes ``x0 .. xN`` with consecutive pairs being edges.
    process : ContinuousProcess
    h : float
        Grid step.
    t_max : float
        Grid end.

    Returns
    -------
    ArrivalDensities
    """
    seq = [int(x) for x in sequence]
    if len(seq) < 2:
        raise ValidationError("sequence needs at least one jump")
    graph = process.graph
    t = np.arange(0.0, t_max + 0.5 * h, h)
    rs = []
    for k, (x, y) in enumerate(zip(seq[:-1], seq[1:])):
        succ = graph.successors[x]
        if y not in succ:
            raise ValidationError(f"({x}, {y}) is not an edge")
        b = jump_density(process.out_laws(x), succ.index(y), t)
        rs.append(b if k == 0 else _trapezoid_convolution(rs[-1], b, h))
    last = seq[-1]
    if graph.successors[last]:
        a = survival(process.out_laws(last), t)
    else:
        a = np.ones_like(t)
    eta = _trapezoid_convolution(rs[-1], a, h)
    return ArrivalDensities(t, tuple(rs), eta)
