"""
Reading RFID tags with colouring tags
=====================================

Tags that remember the slot in which they were last read stop colliding
once every tag owns a slot.  After that, one superframe reads every tag,
while framed Aloha keeps paying for collisions on every inventory.
"""

from fcfl.rfid import CollisionModel, TimingModel, run_bfsa, run_dfsa, run_fcfl_rfid

model = CollisionModel.complete(200)
timing = TimingModel()  # 1 ms per slot, 6 ms per successful read

fcfl = run_fcfl_rfid(model, D=200, seed=4)
print("FCFL first inventory:", fcfl.slots_first, "slots,", fcfl.ms_first, "ms")
print("     schedule settled after superframe", fcfl.converged_superframe)
print("     steady state:", fcfl.slots_steady, "slots per pass,", fcfl.ms_steady, "ms")

# framed Aloha never settles: every inventory costs the same on average
for name, run in (("BFSA", run_bfsa), ("DFSA", run_dfsa)):
    r = run(model, 256, seed=4)
    print(f"{name} inventory: {r.slots_first} slots, {r.ms_first} ms, frames {len(r.collisions)}")
