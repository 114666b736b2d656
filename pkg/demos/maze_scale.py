"""Full analysis of a 30 x 30 random maze from one corner to the other.

    python demos/maze_scale.py
"""
import time

import numpy as np

from fppath import analyze, check_identities
from fppath.generators import maze

inst = maze(30, np.random.default_rng(8))
start = time.perf_counter()
stats = analyze(inst.model, inst.sets, inst.graph)
elapsed = time.perf_counter() - start
res = check_identities(inst.model, inst.sets, stats)

print(f"{inst.sets.n} cells analysed in {elapsed:.2f}s")
print(f"mean path length {stats.lengths.L:.0f} jumps, of which {stats.lengths.L_tilde:.0f} reactive")
print(f"largest identity residual {max(res.values()):.1e}")
# the reactive segment spends its time near the corridor between the corners
busy = np.flatnonzero(stats.theta_tilde >= 1.0)
print(f"{busy.size} cells get at least one reactive visit per path on average")
