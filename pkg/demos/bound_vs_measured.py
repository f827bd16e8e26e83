"""
Measured convergence against the analytic slot bound
====================================================

The analysis bounds the number of reset epochs B(N, delta, eps) after
which the colouring is improper with probability at most eps.  Here we
compare (delta+1)*B with the median measured convergence slot.
"""

import math

from fcfl.bounds import expected_z_bound, theorem1_bound, theorem2_bound
from fcfl.experiments import expected_z_at_resets, ratio_experiment

print("B(100, 9, 1/2) =", round(theorem2_bound(100, 9, 0.5).value, 3))

# the bound grows like log N
for N in (10, 100, 1000, 10_000):
    print(N, round(10 * theorem2_bound(N, 9, 0.5).value, 1), "slots")

# the general-graph bound is astronomically larger; it is evaluated in log space
t1 = theorem1_bound(10, 10, 10, 0.5)
print("general bound: value", t1.value, " log10", round(t1.log_value / math.log(10), 1))

# median measured slots are a small fraction of the bound
for row in ratio_experiment(["complete", "bipartite"], [48, 96], runs=200, seed=7):
    print(f"{row['kind']:>9} N={row['N']:3d}  median {row['median_slots']:6.1f}  "
          f"bound {row['bound_slots']:8.1f}  ratio {row['ratio']:.3f}")

# the expected unsettled count entering each reset against its closed-form bound
for r in expected_z_at_resets(10, runs=2000, seed=3, taus=range(1, 5)):
    print(f"tau={r['tau']}  measured {r['mean_before']:.3f}  bound {expected_z_bound(r['tau'], 10, 9):.3f}")
