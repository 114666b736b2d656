"""Walk through every statistic on the five-node path graph.

A walker starts at node 0, steps left or right with equal probability
and stops at node 4.  All numbers below are small fractions that can be
checked by hand.

    python demos/path_graph_walkthrough.py
"""
import numpy as np

from fppath import analyze, rank_report
from fppath.dot import to_dot
from fppath.generators import path_graph

np.set_printoptions(precision=4, suppress=True)

inst = path_graph(5)
stats = analyze(inst.model, inst.sets, inst.graph)

print("committor q          ", stats.q)
print("visits theta         ", stats.theta)
print("mean hitting time f  ", stats.f)
# visits before the last stay in A, and visits from there on
print("nonreactive visits   ", stats.theta_bar_prime)
print("reactive visits      ", stats.theta_tilde)
print("last A node law mu_r ", stats.mu_r)
print(f"lengths: nonreactive {stats.lengths.L_bar:.1f}, reactive {stats.lengths.L_tilde:.1f}, "
      f"total {stats.lengths.L:.1f}")

print("\nreactive flux, strongest edges first")
for (x, y), v in rank_report(stats, top_k=4)["edges"]["J_tilde"]:
    print(f"  {x} -> {y}: {v:.3f}")

print("\nDOT rendering of the reactive flux:\n")
print(to_dot(stats, [str(i) for i in range(5)], "reactive", inst.sets))
