"""Graphviz DOT export of a flux field.

Nodes appear in ascending index order with their visit count in the
label; edges appear in lexicographic order with a pen width proportional
to the chosen flux.  Zero-flux edges are left out.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

FLUX_KINDS = {
    "reactive": ("J_tilde", "theta_tilde"),
    "nonreactive": ("J_bar", "theta_bar_prime"),
    "total": ("J", "theta"),
}
MAX_PENWIDTH = 8.0
MIN_PENWIDTH = 0.2


def _quote(text):
    return '"' + str(text).replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(stats, labels, kind="reactive", sets=None, digits=4):
    """Render one flux field of ``stats`` as a DOT digraph.

    Parameters
    ----------
    stats : EnsembleStats
    labels : sequence of str
    kind : {"reactive", "nonreactive", "total"}
        Selects ``J_tilde``/``theta_tilde``, ``J_bar``/``theta_bar_prime`` or
        ``J``/``theta``.
    sets : ProblemSets, optional
        Marks ``A`` nodes as boxes and ``B`` nodes as double circles.
    """
    if kind not in FLUX_KINDS:
        raise ValueError(f"kind must be one of {sorted(FLUX_KINDS)}")
    flux_name, count_name = FLUX_KINDS[kind]
    flux = sp.coo_matrix(getattr(stats, flux_name))
    counts = np.asarray(getattr(stats, count_name), dtype=float)
    keep = flux.data != 0
    rows, cols, vals = flux.row[keep], flux.col[keep], flux.data[keep]
    order = np.lexsort((cols, rows))
    top = float(np.max(np.abs(vals))) if vals.size else 1.0
    lines = [f"digraph {_quote(kind + '_flux')} {{"]
    for i, label in enumerate(labels):
        attrs = [f"label={_quote(f'{label} ({count_name}={counts[i]:.{digits}g})')}"]
        if sets is not None and sets.in_a[i]:
            attrs.append("shape=box")
        elif sets is not None and sets.in_b[i]:
            attrs.append("shape=doublecircle")
        lines.append(f"  {_quote(label)} [{', '.join(attrs)}];")
    for k in order:
        v = float(vals[k])
        width = max(MIN_PENWIDTH, MAX_PENWIDTH * abs(v) / top)
        lines.append(f"  {_quote(labels[rows[k]])} -> {_quote(labels[cols[k]])} "
                     f"[penwidth={width:.4f}, label={_quote(f'{v:.{digits}g}')}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def max_width_edge(dot_text):
    """``(from, to)`` labels of the widest edge in a document made by :func:`to_dot`."""
    best, edge = -1.0, None
    for line in dot_text.splitlines():
        if "->" not in line or "penwidth=" not in line:
            continue
        head, attrs = line.split("[", 1)
        src, dst = (part.strip().strip('"') for part in head.split("->"))
        width = float(attrs.split("penwidth=")[1].split(",")[0])
        if width > best:
            best, edge = width, (src, dst)
    return edge
