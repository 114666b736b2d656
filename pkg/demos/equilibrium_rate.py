"""Transition rate of an ergodic process, exact and from one long run.

Cuts A -> B passages out of a single stationary trajectory and compares
their frequency (per step and per unit time) with the closed forms.

    python demos/equilibrium_rate.py
"""
import numpy as np

from fppath import analyze_ergodic, stationary_run
from fppath.generators import random_ergodic_instance

inst = random_ergodic_instance(np.random.default_rng(3), 10, "weibull")
erg, stats = analyze_ergodic(inst.model, inst.sets, inst.graph)
print("the four normalization expressions", erg.z_values)

run = stationary_run(inst.process, inst.sets, 2_000_000, seed=0, m=erg.m)
print(f"passages per step: exact {erg.Z:.5f}, simulated {run.Z.mean:.5f} +- {run.Z.stderr:.5f}")
print(f"passages per time: exact {erg.k_ab:.5f}, "
      f"simulated {run.k_ab.mean:.5f} +- {run.k_ab.stderr:.5f}")
print(f"{run.transitions} passages observed")
