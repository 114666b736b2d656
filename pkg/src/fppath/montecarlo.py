"""Monte Carlo sampling of first passage paths and empirical statistics.

Paths are simulated in lockstep blocks: every live path of a block takes
one jump per iteration, so each iteration is a few vectorized numpy calls.
Block ``b`` draws from its own generator seeded by ``(seed, b)``; with the
block size fixed, results do not depend on how blocks are scheduled.

Continuous processes are simulated with the competing-clocks mechanism:
one clock per out-edge, the earliest one fires.  A discrete chain that
carries mean holding times is simulated with exponential holding times of
those means.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .data import TrajectoryDataset
from .errors import SimulationError, ValidationError
from .model import DiscreteModel
from .waiting import ContinuousProcess, Exponential, PowerLaw, Tabulated, Weibull

BLOCK_SIZE = 8192
MODES = ("first-passage", "stationary")


@dataclass(frozen=True)
class SimulationConfig:
    """Sampling controls.

    ``length`` is the number of steps of the single trajectory used in
    ``stationary`` mode.
    """

    sample_count: int = 100_000
    max_steps: int = 1_000_000
    seed: int = 0
    mode: str = "first-passage"
    length: int | None = None

    def __post_init__(self):
        if self.sample_count < 1 or self.max_steps < 1:
            raise ValidationError("sample_count and max_steps must be at least 1")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")


def block_rng(seed, block):
    """Generator for block ``block`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(block,)))


class _DiscreteStepper:
    def __init__(self, model):
        p = model.p.tocsr()
        self.n = model.n
        self.indices = p.indices
        rows = np.repeat(np.arange(self.n), np.diff(p.indptr))
        # key[k] = row + cumulative probability within the row; each row ends at row + 1
        cum = np.cumsum(p.data)
        row_start = np.concatenate([[0.0], cum])[p.indptr[:-1]]
        key = rows + (cum - row_start[rows])
        key[p.indptr[1:] - 1] = np.arange(self.n) + 1.0
        self.key = key
        self.kappa = model.kappa
        self.timed = model.kappa is not None

    def step(self, nodes, rng):
        u = rng.random(nodes.size)
        k = np.searchsorted(self.key, nodes + u, side="right")
        nxt = self.indices[k]
        hold = None
        if self.timed:
            hold = rng.exponential(self.kappa[nodes])
        return nxt, hold

    def step_from(self, x, size, rng):
        return self.step(np.full(size, x, np.int64), rng)


class _ClockStepper:
    """Vectorized competing clocks over a whole process."""

    def __init__(self, process):
        graph = process.graph
        self.n = graph.node_count
        edges = graph.edges
        self.src = np.array([e[0] for e in edges], dtype=np.int64)
        self.dst = np.array([e[1] for e in edges], dtype=np.int64)
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(self.src, minlength=self.n))])
        laws = [process.laws[e] for e in edges]
        m = len(laws)
        self.code = np.zeros(m, np.int8)
        self.a = np.ones(m)
        self.b = np.ones(m)
        self.tables = {}
        for i, law in enumerate(laws):
            if isinstance(law, Exponential):
                self.code[i], self.a[i] = 0, law.rate
            elif isinstance(law, Weibull):
                self.code[i], self.a[i], self.b[i] = 1, law.rate, 1.0 / law.shape
            elif isinstance(law, PowerLaw):
                self.code[i], self.a[i] = 2, -1.0 / law.alpha
            elif isinstance(law, Tabulated):
                self.code[i] = 3
                self.tables.setdefault(law, []).append(i)
            else:
                raise ValidationError(f"cannot sample law {law!r}")
        self.table_of = np.full(m, -1)
        self.table_laws = list(self.tables)
        for j, law in enumerate(self.table_laws):
            self.table_of[self.tables[law]] = j
        self.timed = True

    def clock_times(self, edges, u):
        """Ring time of each edge clock given survival levels ``u`` in (0, 1]."""
        code = self.code[edges]
        t = np.empty(edges.size)
        e = code == 0
        t[e] = -np.log(u[e]) / self.a[edges[e]]
        e = code == 1
        t[e] = (-np.log(u[e])) ** self.b[edges[e]] / self.a[edges[e]]
        e = code == 2
        t[e] = u[e] ** self.a[edges[e]] - 1.0
        e = np.flatnonzero(code == 3)
        if e.size:
            which = self.table_of[edges[e]]
            for j in np.unique(which):
                sel = e[which == j]
                t[sel] = self.table_laws[j].isf(u[sel])
        return t

    def step(self, nodes, rng):
        start = self.indptr[nodes]
        deg = self.indptr[nodes + 1] - start
        if np.any(deg == 0):
            raise SimulationError("a live path sits on a node without out-edges")
        seg_start = np.concatenate([[0], np.cumsum(deg)[:-1]])
        seg = np.repeat(np.arange(nodes.size), deg)
        edges = start[seg] + np.arange(seg.size) - seg_start[seg]
        u = 1.0 - rng.random(seg.size)
        t = self.clock_times(edges, u)
        # earliest clock per path; ties have probability zero
        fastest = np.minimum.reduceat(t, seg_start)
        hit = np.flatnonzero(t == fastest[seg])
        _, first = np.unique(seg[hit], return_index=True)
        first = hit[first]
        return self.dst[edges[first]], t[first]

    def step_from(self, x, size, rng):
        """``size`` independent jumps out of the single node ``x``."""
        edges = np.arange(self.indptr[x], self.indptr[x + 1])
        if edges.size == 0:
            raise SimulationError(f"node {x} has no out-edges")
        u = 1.0 - rng.random((size, edges.size))
        t = self.clock_times(np.tile(edges, size), u.ravel()).reshape(size, edges.size)
        j = t.argmin(axis=1)
        return self.dst[edges[j]], t[np.arange(size), j]


def make_stepper(source):
    if isinstance(source, ContinuousProcess):
        return _ClockStepper(source)
    if isinstance(source, DiscreteModel):
        return _DiscreteStepper(source)
    raise ValidationError("source must be a DiscreteModel or a ContinuousProcess")


def _source_size(source):
    return source.graph.node_count if isinstance(source, ContinuousProcess) else source.n


def _run_block(stepper, starts, stop, max_steps, rng, record=True):
    """Advance paths from ``starts`` until they hit ``stop`` or exceed ``max_steps``.

    Returns the final node and step count per path, a rejection mask and,
    when ``record``, the step records ``(path, node, time)`` in step order.
    """
    size = starts.size
    current = starts.copy()
    clock = np.zeros(size)
    steps = np.zeros(size, np.int64)
    alive = np.flatnonzero(~stop[current])
    rec_path, rec_node, rec_time = [np.arange(size)], [starts], [clock.copy()]
    count = 0
    while alive.size and count < max_steps:
        nxt, hold = stepper.step(current[alive], rng)
        current[alive] = nxt
        steps[alive] += 1
        if hold is not None:
            clock[alive] += hold
        if record:
            rec_path.append(alive)
            rec_node.append(nxt)
            rec_time.append(clock[alive])
        alive = alive[~stop[nxt]]
        count += 1
    rejected = np.zeros(size, bool)
    rejected[alive] = True
    if not record:
        return current, steps, clock, rejected, None
    paths = np.concatenate(rec_path)
    order = np.argsort(paths, kind="stable")
    records = (paths[order], np.concatenate(rec_node)[order], np.concatenate(rec_time)[order])
    return current, steps, clock, rejected, records


def _check_rejections(rejected, total, max_steps):
    if total == 0:
        return
    frac = rejected / total
    if frac > 0.5:
        raise SimulationError(f"max_steps too small: {rejected} of {total} paths exceeded {max_steps} steps")
    if frac > 0.01:
        warnings.warn(f"{rejected} of {total} paths exceeded {max_steps} steps and were rejected",
                      RuntimeWarning, stacklevel=3)


def sample_first_passage(source, sets, config, mu=None):
    """Sample first passage paths from ``mu`` (default ``sets.mu``) until ``B``.

    Parameters
    ----------
    source : DiscreteModel or ContinuousProcess
    sets : ProblemSets
    config : SimulationConfig

    Returns
    -------
    TrajectoryDataset
        Accepted paths in sampling order; ``rejected`` counts the paths
        that hit ``max_steps`` and were dropped.  Times are present when
        the source has a clock.
    """
    mu = sets.mu if mu is None else np.asarray(mu, dtype=float)
    stepper = make_stepper(source)
    n = _source_size(source)
    timed = stepper.timed
    nodes, times, lengths = [], [], []
    rejected = 0
    remaining = config.sample_count
    block = 0
    while remaining > 0:
        size = min(BLOCK_SIZE, remaining)
        rng = block_rng(config.seed, block)
        starts = rng.choice(n, size=size, p=mu)
        _, steps, _, rej, (paths, rec_nodes, rec_times) = _run_block(
            stepper, starts, sets.in_b, config.max_steps, rng)
        keep = ~rej[paths]
        nodes.append(rec_nodes[keep])
        times.append(rec_times[keep])
        lengths.append(steps[~rej] + 1)
        rejected += int(rej.sum())
        remaining -= size
        block += 1
    _check_rejections(rejected, config.sample_count, config.max_steps)
    lengths = np.concatenate(lengths)
    if lengths.size == 0:
        raise SimulationError("no path finished within max_steps")
    offsets = np.concatenate([[0], np.cumsum(lengths)])
    return TrajectoryDataset(np.concatenate(nodes), offsets, n,
                             np.concatenate(times) if timed else None, rejected=rejected)


def sample_hitting(source, start, stop, count, seed=0, max_steps=1_000_000):
    """Run ``count`` paths from node ``start`` until they enter ``stop``.

    Returns
    -------
    (final_nodes, steps, clock)
        Arrays over the accepted paths.
    """
    stepper = make_stepper(source)
    stop_mask = np.zeros(_source_size(source), bool)
    stop_mask[list(stop)] = True
    finals, steps_all, clocks = [], [], []
    rejected = 0
    block = 0
    remaining = count
    while remaining > 0:
        size = min(BLOCK_SIZE, remaining)
        rng = block_rng(seed, block)
        starts = np.full(size, start, np.int64)
        final, steps, clock, rej, _ = _run_block(stepper, starts, stop_mask, max_steps, rng,
                                                 record=False)
        finals.append(final[~rej])
        steps_all.append(steps[~rej])
        clocks.append(clock[~rej])
        rejected += int(rej.sum())
        remaining -= size
        block += 1
    _check_rejections(rejected, count, max_steps)
    return np.concatenate(finals), np.concatenate(steps_all), np.concatenate(clocks)


@dataclass(frozen=True)
class Estimate:
    """Sample mean with its standard error; sparse matrices for edge statistics."""

    mean: object
    stderr: object


@dataclass(frozen=True, eq=False)
class EmpiricalStats:
    """Per-path averages over a sample of first passage paths.

    ``nodes``, ``edges`` and ``scalars`` map statistic names (as in
    :class:`fppath.analysis.EnsembleStats`) to :class:`Estimate` values.
    Standard errors come from the per-path sample variance.
    """

    sample_count: int
    rejected: int
    nodes: dict
    edges: dict
    scalars: dict = field(default_factory=dict)

    def mean(self, name):
        return self._lookup(name).mean

    def stderr(self, name):
        return self._lookup(name).stderr

    def _lookup(self, name):
        for table in (self.nodes, self.edges, self.scalars):
            if name in table:
                return table[name]
        raise KeyError(name)


def _moments(keys, order, bounds, weights, count, modulus):
    """Mean and standard error over paths of per-path sums grouped by ``key % modulus``."""
    per_key = np.add.reduceat(weights[order], bounds[:-1]) if bounds.size > 1 else np.zeros(0)
    ids = keys[order][bounds[:-1]] % modulus if bounds.size > 1 else np.zeros(0, np.int64)
    total = np.bincount(ids, weights=per_key, minlength=modulus)
    square = np.bincount(ids, weights=per_key * per_key, minlength=modulus)
    mean = total / count
    var = np.maximum(square / count - mean * mean, 0.0) * count / max(count - 1, 1)
    return mean, np.sqrt(var / count)


def _grouping(keys):
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    bounds = np.concatenate([[0], np.flatnonzero(np.diff(sk)) + 1, [sk.size]])
    return order, bounds


def _scalar(values):
    values = np.asarray(values, dtype=float)
    m = values.size
    sd = values.std(ddof=1) if m > 1 else 0.0
    return Estimate(float(values.mean()), float(sd / np.sqrt(m)))


def segment_and_count(data, sets):
    """Split each path at its last ``A`` visit and average every statistic.

    For a path ``x_0 .. x_tau`` with last ``A`` index ``sigma``:

    * ``theta`` counts ``l = 0..tau``; ``theta_bar`` counts ``l = 0..sigma``;
      ``theta_bar_prime`` counts ``l < sigma``; ``theta_tilde`` counts
      ``l = sigma..tau``; ``mu_r`` is the indicator of ``x_sigma``;
    * ``J`` counts jumps ``l -> l+1`` for ``l < tau``, ``J_bar`` those with
      ``l < sigma`` and ``J_tilde`` those with ``l >= sigma``;
    * with timestamps, ``T``/``T_bar``/``T_tilde`` add the holding time at
      ``x_l`` over ``l < tau``, ``l < sigma`` and ``sigma <= l < tau``.

    Returns
    -------
    EmpiricalStats
    """
    data.check_shape(sets)
    n, m = data.node_count, data.count
    size = data.nodes.size
    path = data.path_ids()
    pos = np.arange(size)
    sigma = data.last_a_positions(sets)[path]
    last = data.is_last()
    nodes = data.nodes

    keys = path * n + nodes
    order, bounds = _grouping(keys)
    ones = np.ones(size)
    before = (pos < sigma).astype(float)
    at = (pos == sigma).astype(float)
    after = (pos >= sigma).astype(float)
    node_stats = {
        "theta": _moments(keys, order, bounds, ones, m, n),
        "theta_bar": _moments(keys, order, bounds, before + at, m, n),
        "theta_bar_prime": _moments(keys, order, bounds, before, m, n),
        "theta_tilde": _moments(keys, order, bounds, after, m, n),
        "mu_r": _moments(keys, order, bounds, at, m, n),
    }
    scalars = {
        "sigma": _scalar(sigma[data.offsets[:-1]] - data.offsets[:-1]),
        "tau": _scalar(data.lengths),
        "reactive_length": _scalar(data.offsets[1:] - 1 - sigma[data.offsets[:-1]]),
    }
    if data.has_times:
        hold = np.where(last, 0.0, np.diff(data.times, append=0.0))
        node_stats["T"] = _moments(keys, order, bounds, hold, m, n)
        node_stats["T_bar"] = _moments(keys, order, bounds, hold * before, m, n)
        node_stats["T_tilde"] = _moments(keys, order, bounds, hold * after, m, n)
        end = data.times[data.offsets[1:] - 1]
        t_sigma = data.times[sigma[data.offsets[:-1]]]
        scalars["time"] = _scalar(end)
        scalars["nonreactive_time"] = _scalar(t_sigma)
        scalars["reactive_time"] = _scalar(end - t_sigma)

    steps = np.flatnonzero(~last)
    src, dst = nodes[steps], nodes[steps + 1]
    ekeys = (path[steps] * n + src) * n + dst
    eorder, ebounds = _grouping(ekeys)
    jump_before = (steps < sigma[steps]).astype(float)
    edge_stats = {}
    for name, w in (("J", np.ones(steps.size)), ("J_bar", jump_before),
                    ("J_tilde", 1.0 - jump_before)):
        mean, err = _moments(ekeys, eorder, ebounds, w, m, n * n)
        edge_stats[name] = Estimate(sp.csr_matrix(mean.reshape(n, n)),
                                    sp.csr_matrix(err.reshape(n, n)))
    nodes_out = {k: Estimate(*v) for k, v in node_stats.items()}
    return EmpiricalStats(m, data.rejected, nodes_out, edge_stats, scalars)


@dataclass(frozen=True)
class Comparison:
    """Outcome of checking analytic values against empirical 3-sigma bands."""

    name: str
    checked: int
    violations: int
    max_z: float
    worst_index: object


def compare(analytic, estimate, name, width=3.0, exact_tol=1e-9, unobserved_count=None):
    """Count analytic entries outside ``mean +- width * stderr``.

    Entries with zero standard error (never observed, or constant over all
    paths) must match exactly up to ``exact_tol``.  Passing the number of
    paths as ``unobserved_count`` instead gives never-observed entries the
    Poisson standard error ``sqrt(analytic / count)`` of a rare event.
    """
    if sp.issparse(estimate.mean):
        a = sp.csr_matrix(analytic).toarray().ravel()
        mean = estimate.mean.toarray().ravel()
        err = estimate.stderr.toarray().ravel()
    else:
        a = np.asarray(analytic, dtype=float).ravel()
        mean = np.asarray(estimate.mean, dtype=float).ravel()
        err = np.asarray(estimate.stderr, dtype=float).ravel()
    gap = np.abs(a - mean)
    if unobserved_count is not None:
        unseen = (err == 0) & (mean == 0) & (a > 0)
        err = np.where(unseen, np.sqrt(np.abs(a) / unobserved_count), err)
    relevant = (a != 0) | (mean != 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(err > 0, gap / err, np.where(gap <= exact_tol, 0.0, np.inf))
    z = np.where(relevant, z, 0.0)
    bad = z > width
    worst = int(np.argmax(z)) if z.size else -1
    if sp.issparse(estimate.mean) and worst >= 0:
        worst = divmod(worst, estimate.mean.shape[1])
    return Comparison(name, int(relevant.sum()), int(bad.sum()), float(z.max()) if z.size else 0.0,
                      worst)


NODE_ORACLE_FIELDS = ("theta", "theta_bar", "theta_bar_prime", "theta_tilde", "mu_r")
TIME_ORACLE_FIELDS = ("T", "T_bar", "T_tilde")
EDGE_ORACLE_FIELDS = ("J", "J_bar", "J_tilde")


def compare_with_analysis(stats, empirical, width=3.0, poisson_unobserved=False):
    """Compare every per-node and per-edge statistic; returns a list of :class:`Comparison`."""
    count = empirical.sample_count if poisson_unobserved else None
    out = []
    fields = NODE_ORACLE_FIELDS
    if stats.times is not None and "T" in empirical.nodes:
        fields = fields + TIME_ORACLE_FIELDS
    for name in fields:
        out.append(compare(getattr(stats, name), empirical.nodes[name], name, width,
                           unobserved_count=count))
    for name in EDGE_ORACLE_FIELDS:
        out.append(compare(getattr(stats, name), empirical.edges[name], name, width,
                           unobserved_count=count))
    return out


# --- long stationary trajectory -------------------------------------------------------

class _Pools:
    """Pre-drawn jumps per node, refilled on demand.

    Every draw gets a global id; node ``x`` hands out the ids of its own
    draws through a plain iterator, so the sequential walk only touches
    Python ints and the path is gathered afterwards in one vectorized step.
    """

    def __init__(self, stepper, rng, expected):
        self.stepper = stepper
        self.rng = rng
        self.successor = []
        self.chunks = []
        self.iters = [self._draw(x, int(expected[x] * 1.05) + 64) for x in range(stepper.n)]

    def _draw(self, x, size):
        nxt, hold = self.stepper.step_from(x, size, self.rng)
        first = len(self.successor)
        self.successor.extend(nxt.tolist())
        self.chunks.append((nxt, hold))
        return iter(range(first, first + size))

    def refill(self, x):
        self.iters[x] = self._draw(x, 4096)
        return next(self.iters[x])

    def gather(self, ids):
        nxt = np.concatenate([c[0] for c in self.chunks])
        hold = None
        if self.stepper.timed:
            hold = np.concatenate([c[1] for c in self.chunks])[ids]
        return nxt[ids], hold


def _simulate_chain(stepper, start, length, rng, m):
    pools = _Pools(stepper, rng, m * length)
    iters, successor = pools.iters, pools.successor
    x = int(start)
    ids = []
    append = ids.append
    for _ in range(length):
        try:
            k = next(iters[x])
        except StopIteration:
            k = pools.refill(x)
        append(k)
        x = successor[k]
    nxt, holds = pools.gather(np.array(ids, dtype=np.int64))
    return np.concatenate([[int(start)], nxt]), holds


def _transition_segments(path, sets):
    """Start (``tau_A``) and end (``tau_B``) indices of every completed ``A -> B`` passage."""
    label = np.where(sets.in_a[path], 1, np.where(sets.in_b[path], 2, 0))
    marked = np.flatnonzero(label)
    lab = label[marked]
    prev = np.concatenate([[2], lab[:-1]])
    # first A after a B (or at the start) opens a passage, first B after an A closes it
    opens = marked[(lab == 1) & (prev == 2)]
    closes = marked[(lab == 2) & (prev == 1)]
    count = min(opens.size, closes.size)
    return opens[:count], closes[:count]


def _batch_ratio(num, den, batches):
    """Ratio estimate ``sum(num)/sum(den)`` with a batch-means standard error."""
    nb = np.array([b.sum() for b in np.array_split(num, batches)], dtype=float)
    db = np.array([b.sum() for b in np.array_split(den, batches)], dtype=float)
    ratio = num.sum() / den.sum()
    per = nb / np.where(db > 0, db, np.nan)
    per = per[np.isfinite(per)]
    err = per.std(ddof=1) / np.sqrt(per.size) if per.size > 1 else np.inf
    return Estimate(float(ratio), float(err))


@dataclass(frozen=True, eq=False)
class StationaryRun:
    """Statistics of one long stationary trajectory.

    ``segments`` holds the completed ``A -> B`` passages (start at the first
    ``A`` visit after the previous passage, end at the following ``B`` entry)
    as first passage paths; ``ensemble`` their empirical statistics.  ``Z``
    estimates passages per step, ``k_ab`` passages per unit time, ``mu``
    the law of the passage start; ``q`` and ``q_minus`` are the observed
    fractions of visits that next reach ``B`` before ``A`` and that last came
    from ``A`` rather than ``B``.  Standard errors use 100 batch means.
    """

    length: int
    transitions: int
    Z: Estimate
    k_ab: Estimate | None
    mu: Estimate
    q: Estimate
    q_minus: Estimate
    segments: TrajectoryDataset
    ensemble: EmpiricalStats


def _committed_fractions(path, sets, batches):
    n = sets.n
    label = np.where(sets.in_a[path], 1, np.where(sets.in_b[path], 2, 0))
    idx = np.arange(path.size)
    has = label != 0
    # label of the most recent marked node at or before l
    last_idx = np.maximum.accumulate(np.where(has, idx, -1))
    back = np.where(last_idx >= 0, label[np.maximum(last_idx, 0)], 0)
    # label of the next marked node at or after l
    next_idx = np.minimum.accumulate(np.where(has, idx, path.size)[::-1])[::-1]
    fwd = np.where(next_idx < path.size, label[np.minimum(next_idx, path.size - 1)], 0)
    fwd = np.where(sets.in_a[path], 1, fwd)
    fwd = np.where(sets.in_b[path], 2, fwd)
    estimates = []
    for lab, hit in ((fwd, 2), (back, 1)):
        known = lab != 0
        chunks = np.array_split(np.arange(path.size), batches)
        num = np.zeros((batches, n))
        den = np.zeros((batches, n))
        for b, c in enumerate(chunks):
            sel = c[known[c]]
            den[b] = np.bincount(path[sel], minlength=n)
            num[b] = np.bincount(path[sel], weights=(lab[sel] == hit).astype(float), minlength=n)
        tot_n, tot_d = num.sum(0), den.sum(0)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = tot_n / tot_d
            per = num / den
            good = np.isfinite(per)
            cnt = good.sum(0)
            mu_b = np.where(good, per, 0).sum(0) / np.maximum(cnt, 1)
            var = np.where(good, (per - mu_b) ** 2, 0).sum(0) / np.maximum(cnt - 1, 1)
            err = np.sqrt(var / np.maximum(cnt, 1))
        estimates.append(Estimate(mean, err))
    return estimates


def stationary_run(source, sets, length, seed=0, m=None, batches=100):
    """Simulate one ``length``-step trajectory started from the invariant law.

    Parameters
    ----------
    source : DiscreteModel or ContinuousProcess
    sets : ProblemSets
    length : int
        Number of jumps ``N``.
    m : array, optional
        Invariant law of the embedded chain; computed when omitted.

    Raises
    ------
    SimulationError
        If no ``A -> B`` passage completes.
    """
    from .ergodic import invariant_measure

    stepper = make_stepper(source)
    if m is None:
        model = source.embed() if isinstance(source, ContinuousProcess) else source
        m = invariant_measure(model, require_aperiodic=False)
    rng = block_rng(seed, 0)
    start = rng.choice(m.size, p=m)
    path, holds = _simulate_chain(stepper, start, length, rng, m)
    opens, closes = _transition_segments(path, sets)
    count = opens.size
    if count == 0:
        raise SimulationError("N too small: no completed A -> B transition")
    done = np.zeros(length + 1)
    done[closes] = 1.0
    Z = _batch_ratio(done[1:], np.ones(length), batches)
    k_ab = None
    if holds is not None:
        k_ab = _batch_ratio(done[1:], holds, batches)
    seg_len = closes - opens + 1
    offsets = np.concatenate([[0], np.cumsum(seg_len)])
    flat = np.repeat(opens - offsets[:-1], seg_len) + np.arange(offsets[-1])
    times = None
    if holds is not None:
        clock = np.concatenate([[0.0], np.cumsum(holds)])
        times = clock[flat] - np.repeat(clock[opens], seg_len)
    segments = TrajectoryDataset(path[flat], offsets, sets.n, times)
    ensemble = segment_and_count(segments, sets)
    start_counts = np.bincount(path[opens], minlength=sets.n).astype(float)
    mu_mean = start_counts / count
    mu = Estimate(mu_mean, np.sqrt(mu_mean * (1 - mu_mean) / count))
    q, q_minus = _committed_fractions(path, sets, batches)
    return StationaryRun(length, count, Z, k_ab, mu, q, q_minus, segments, ensemble)
