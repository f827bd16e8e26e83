"""
Colouring a graph without talking
=================================

Every vertex picks a colour at random, listens for a clash, and keeps
its colour once it hears none.  A global reset every few slots lets
settled vertices be knocked out again, which is what guarantees the
process finds a proper colouring.
"""

import numpy as np

from fcfl import Engine, GraphSpec, build, make_config

# a complete 4-partite graph on 24 vertices: max degree 18, chromatic number 4
g = build(GraphSpec.k_partite(4, 24))
print(g)

# D = max degree + 1 colours, a reset every max degree + 1 slots, b = 1
cfg = make_config("simplified_fcfl", g, D=g.max_degree + 1, seed=3)
eng = Engine(g, cfg)

# step slot by slot and watch the number of unsettled vertices
for _ in range(8):
    out = eng.step()
    print(f"slot {out.t:2d}  reset={out.reset!s:5}  unsettled={out.Z:2d}  proper={out.proper}")

# or just run to the end
res, trace = eng.run_until_proper()
print("first proper slot:", res.R, " first reset entered proper:", res.tau_star)

# the colouring is proper and stays that way
colours = eng.colours
assert not any(colours[u] == colours[v] for u, v in g.edges)
print("colours used:", np.unique(colours).size, "of", cfg.D)
