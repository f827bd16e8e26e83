"""
Why resets can push the wrong way
=================================

On a complete graph with as many colours as vertices, take a reset slot
where Z vertices are unsettled.  The unsettled ones may settle, but the
settled ones can be knocked out by an unsettled vertex landing on their
colour.  For small Z the second effect wins: the expected count goes *up*.
"""

from fcfl.experiments import drift_closed_form, drift_curve, drift_exact

# exact values by brute force for tiny graphs
for N in (2, 3, 4, 5):
    print(N, [round(drift_exact(N, Z), 3) for Z in range(N + 1)])

# a simulated curve with its standard error, next to the closed form
print(f"{'Z':>3} {'simulated':>10} {'+/-':>7} {'closed form':>12}")
for p in drift_curve(10, trials=20000, seed=1, exact=False):
    print(f"{p.Z:3d} {p.drift:10.3f} {p.stderr:7.3f} {drift_closed_form(10, p.Z):12.3f}")
