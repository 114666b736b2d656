"""Why counting committors straight off the data is misleading.

Two observed paths on four nodes, (0,1,2,3) and (0,2,0,2,3), go from
A = {0} to B = {3}.  Node 1 only ever appears after the last visit to
node 0, so direct counting says it always commits to B.  The chain
estimated from the same data can go 1 -> 2 -> 0, and its committor
says otherwise.

    python demos/naive_counting_bias.py
"""
import numpy as np

from fppath.data import counterexample_dataset, counting_stats, estimate_model, naive_stats

np.set_printoptions(precision=4, suppress=True)

data, sets = counterexample_dataset()
est = estimate_model(data, sets)
print("estimated jump probabilities\n", est.model.dense)

naive = naive_stats(data, sets)
print(f"\n[{naive.tag}]")
print("q from counting        ", naive.q_data)
print("q of estimated chain   ", naive.q_model)
print("theta_bar from counting", naive.theta_bar_data)
print("theta_bar of chain     ", naive.theta_bar_model)

# plain visit counts agree with the estimated chain exactly
print("\nvisit counts per path  ", counting_stats(data, sets).theta)
