"""RFID tag inventory: FCFL-modified tags versus framed slotted Aloha.

Time is divided into superframes of ``D`` slots, each opened by a QUERY.
A tag answering in a slot is *read* when no interfering tag answers in
the same slot.  Under FCFL the reader also sets flag B on a read tag
whose slot is not already held by a flagged tag it interferes with; a
flagged tag stays silent but keeps its slot, and every ``S_low``
superframes a QueryAdjust (sent right after the QUERY) returns all
flagged tags to flag A on their stored slot.

That is FCFL with b = 1 where superframe ``s`` (0-based) is colouring
slot ``s + 1``, a slot number is a colour and flag B is permanence.  The
superframe loop here shares the engine's random streams, so
``run_fcfl_rfid`` hands the learning phase to the compiled engine once
every tag has been read and reproduces it exactly.

``SlotReader`` is an independent command-by-command model (QUERY,
QUERY REP, QueryAdjust, per-tag counters) used to cross-check the
vectorised code and to mix in unmodified tags.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from ._rng import derive_seed, stream_keys, uniform_cdf, uniforms
from .engine import EngineConfig, FastState, ResetSchedule, fast_run
from .experiments import parallel_map, _chunks
from .graph import Graph, GraphSpec, build, is_proper

__all__ = [
    "TimingModel",
    "CollisionModel",
    "TagState",
    "ReaderState",
    "InventoryResult",
    "SlotReader",
    "run_fcfl_rfid",
    "run_bfsa",
    "run_dfsa",
    "fcfl_schedule",
    "inventory_batch",
    "fig6_experiment",
    "DFSA_BOUNDS",
]

DFSA_BOUNDS = (16, 1024)
STEADY_PASSES = 5


@dataclass(frozen=True)
class TimingModel:
    slot_ms: float = 1.0
    read_ms: float = 6.0

    def ms(self, slots: int, reads: int) -> float:
        return slots * self.slot_ms + reads * self.read_ms


class CollisionModel:
    """Which tags can spoil each other's replies: an interference graph."""

    def __init__(self, g: Graph):
        self.g = g
        self.n = g.n
        self._part = g.part_of() if g.parts is not None else None

    @classmethod
    def complete(cls, n: int) -> "CollisionModel":
        return cls(build(GraphSpec.complete(n)))

    def interferes(self, i: int, j: int) -> bool:
        if i == j:
            return False
        if self._part is not None:
            return self._part[i] != self._part[j]
        return j in set(self.g.neighbours(i).tolist())

    def hits(self, active: np.ndarray, slot: np.ndarray, D: int) -> np.ndarray:
        """For each tag: does an interfering tag in ``active`` sit on the same slot?"""
        n = self.n
        if self._part is not None:
            nparts = len(self.g.parts)
            a = np.flatnonzero(active)
            cnt = np.bincount(slot[a], minlength=D)
            pcnt = np.bincount(self._part[a] * D + slot[a], minlength=nparts * D)
            # same-part tags never interfere, which also drops the tag itself
            return cnt[slot] - pcnt[self._part * D + slot] > 0
        e = self.g.edges
        u, v = e[:, 0], e[:, 1]
        same = slot[u] == slot[v]
        out = np.zeros(n, dtype=bool)
        out[u[same & active[v]]] = True
        out[v[same & active[u]]] = True
        return out


@dataclass
class TagState:
    tag_id: int
    flag: str = "A"
    counter: int = -1
    stored: int = -1
    legacy: bool = False

    @property
    def permanent(self) -> bool:
        return self.flag == "B"


@dataclass
class ReaderState:
    D: int
    S_low: int
    t: int = 0
    inventory: set = field(default_factory=set)
    slot_owner: dict = field(default_factory=dict)


@dataclass
class InventoryResult:
    protocol: str
    N: int
    D: int
    complete: bool
    slots_first: int
    reads_first: int
    ms_first: float
    slots_steady: Optional[int] = None
    reads_steady: Optional[int] = None
    ms_steady: Optional[float] = None
    steady_collisions: Optional[int] = None
    converged_superframe: Optional[int] = None
    collisions: list = field(default_factory=list)


def fcfl_schedule(S_low: int) -> ResetSchedule:
    """Colouring-slot resets equivalent to a QueryAdjust every ``S_low`` superframes.

    The QueryAdjust on superframe 0 meets no flagged tag and is dropped.
    """
    return ResetSchedule.periodic(S_low, offset=1)


# -- command-level model ---------------------------------------------------------------

class SlotReader:
    """Reader and tags stepped one slot (one command) at a time.

    Modified tags follow the FCFL tag rules; ``legacy`` tags ignore flag
    B and pick a fresh counter at every QUERY.
    """

    def __init__(self, model: CollisionModel, D: int, S_low: int, seed: int,
                 legacy: Optional[Sequence[bool]] = None):
        self.model = model
        self.D = D
        self.reader = ReaderState(D, S_low)
        lg = np.zeros(model.n, dtype=bool) if legacy is None else np.asarray(legacy, dtype=bool)
        self.tags = [TagState(i, legacy=bool(lg[i])) for i in range(model.n)]
        self.keys = stream_keys(seed, np.arange(model.n))
        self.cdf = uniform_cdf(D)
        self.reads = 0
        self.first_read = {}
        self.history = []

    def _draw(self, i: int, superframe: int) -> int:
        u = uniforms(self.keys[i:i + 1], superframe + 1)[0]
        return min(int(np.count_nonzero(self.cdf <= u)), self.D - 1)

    def step(self):
        r, D = self.reader, self.D
        pos = r.t % D
        sf = r.t // D
        if pos == 0:
            # QUERY: every flag-A tag draws a counter
            for tag in self.tags:
                if tag.flag == "A":
                    tag.counter = self._draw(tag.tag_id, sf)
            if r.t % (r.S_low * D) == 0:
                # QueryAdjust: flagged tags return on their stored number
                for tag in self.tags:
                    if tag.flag == "B":
                        tag.flag = "A"
                        tag.counter = tag.stored
                r.slot_owner = {}
        else:
            for tag in self.tags:
                if tag.flag == "A":
                    tag.counter -= 1
        talking = [t.tag_id for t in self.tags if t.flag == "A" and t.counter == 0]
        heard = []
        for i in talking:
            if not any(self.model.interferes(i, j) for j in talking if j != i):
                heard.append(i)
        for i in heard:
            tag = self.tags[i]
            self.reads += 1
            r.inventory.add(i)
            self.first_read.setdefault(i, r.t + 1)
            if tag.legacy:
                continue
            owners = r.slot_owner.get(pos, ())
            if not any(self.model.interferes(i, j) for j in owners):
                tag.flag = "B"
                tag.stored = pos
                r.slot_owner.setdefault(pos, []).append(i)
        self.history.append((r.t, tuple(talking), tuple(heard)))
        r.t += 1
        return talking, heard

    def run_superframes(self, count: int):
        for _ in range(count * self.D):
            self.step()

    def flagged(self) -> np.ndarray:
        return np.array([t.flag == "B" for t in self.tags])


# -- vectorised superframe loop -----------------------------------------------------------

class _Superframes:
    def __init__(self, model: CollisionModel, D: int, S_low: int, seed: int, flag_every_read: bool = False):
        self.model, self.D, self.S_low = model, D, S_low
        self.flag_every_read = flag_every_read
        n = model.n
        self.keys = stream_keys(seed, np.arange(n))
        self.cdf = uniform_cdf(D)
        self.slot = np.zeros(n, dtype=np.int64)
        self.flag_b = np.zeros(n, dtype=bool)
        self.keep = np.zeros(n, dtype=bool)
        self.s = 0
        self.tau = 1

    def step(self):
        """One superframe: returns (read mask, number of slots with a failed reply)."""
        if self.s % self.S_low == 0:
            if self.s > 0:
                self.tau += 1
            self.flag_b[:] = False
        talk = ~self.flag_b
        draw = talk & ~self.keep
        if draw.any():
            u = uniforms(self.keys[draw], self.s + 1)
            self.slot[draw] = np.minimum(np.searchsorted(self.cdf, u, side="right"), self.D - 1)
        read = talk & ~self.model.hits(talk, self.slot, self.D)
        held = self.model.hits(self.flag_b, self.slot, self.D)
        new_b = read if self.flag_every_read else read & ~held
        self.flag_b |= new_b
        self.keep = self.flag_b.copy()
        lost = talk & ~read
        collisions = int(np.unique(self.slot[lost]).size)
        self.s += 1
        return read, collisions

    def state(self) -> FastState:
        return FastState(self.slot.copy(), self.flag_b.copy(), self.keep.copy(), self.s + 1, self.tau)


def run_fcfl_rfid(model: CollisionModel, D: int, S_low: Optional[int] = None, seed: int = 0, *,
                  max_superframes: Optional[int] = None, timing: TimingModel = TimingModel(),
                  steady: bool = True, flag_every_read: bool = False) -> InventoryResult:
    """Inventory with FCFL tags until every tag is read, then until the schedule settles.

    ``S_low`` defaults to max degree + 1 superframes.  The steady-state
    figures come from the QueryAdjust superframes that follow the settled
    schedule (``STEADY_PASSES`` of them): slots per pass is ``D`` when a
    pass reads every tag, reads and collisions are totals over a pass.

    ``flag_every_read`` silences every tag the reader hears, even in a
    slot a flagged tag already holds.  That is no longer FCFL (two tags
    can end up sharing a stored slot until the next QueryAdjust); it is
    kept for comparison with plain Aloha with flagging.
    """
    g = model.g
    S_low = g.max_degree + 1 if S_low is None else int(S_low)
    cap = 10_000 * (g.max_degree + 1) if max_superframes is None else int(max_superframes)
    sim = _Superframes(model, D, S_low, seed, flag_every_read)
    seen = np.zeros(model.n, dtype=bool)
    reads = 0
    collisions = []
    first_slots = first_reads = None
    while sim.s < cap:
        sf = sim.s
        read, col = sim.step()
        collisions.append(col)
        fresh = read & ~seen
        seen |= read
        if seen.all():
            last = int(sim.slot[fresh].max())
            first_slots = sf * D + last + 1
            first_reads = reads + int(np.count_nonzero(read & (sim.slot <= last)))
            break
        reads += int(read.sum())
    if first_slots is None:
        return InventoryResult("fcfl", model.n, D, False, cap * D, reads, timing.ms(cap * D, reads),
                               collisions=collisions)
    res = InventoryResult("fcfl", model.n, D, True, first_slots, first_reads,
                          timing.ms(first_slots, first_reads), collisions=collisions)
    if not steady:
        return res
    cfg = EngineConfig(D, 1.0, fcfl_schedule(S_low), seed)
    st = sim.state()
    if flag_every_read:
        # outside the colouring model: step until the stored slots form a proper colouring
        while not (sim.flag_b.all() and is_proper(g, sim.slot)):
            if sim.s >= cap:
                return res
            sim.step()
        conv_sf = sim.s - 1
    elif sim.flag_b.all():
        conv_sf = sim.s - 1
    else:
        run = fast_run(g, cfg, max(1, cap - sim.s), st, record=False)
        if not run.converged:
            return res
        conv_sf = run.R - 1
        sim.slot[:] = st.colour
        sim.flag_b[:] = st.m
        sim.keep[:] = st.sticky
        sim.tau = st.tau
    res.converged_superframe = conv_sf
    pass_reads, pass_col = [], []
    nxt = (conv_sf // S_low + 1) * S_low
    for _ in range(STEADY_PASSES):
        # flagged tags are silent between QueryAdjusts, so skipping ahead is exact
        sim.s = nxt
        read, col = sim.step()
        pass_reads.append(int(read.sum()))
        pass_col.append(col)
        nxt += S_low
    res.reads_steady = min(pass_reads)
    res.steady_collisions = max(pass_col)
    clean = res.steady_collisions == 0 and res.reads_steady == model.n
    res.slots_steady = D if clean else None
    res.ms_steady = timing.ms(D, res.reads_steady) if clean else None
    return res


# -- framed slotted Aloha baselines --------------------------------------------------------------

def _aloha(model: CollisionModel, seed: int, frame_sizes, timing: TimingModel, protocol: str,
           max_slots: int, round_id: int = 0) -> InventoryResult:
    """Framed Aloha with flagging; ends after one frame in which nobody answers."""
    n = model.n
    keys = stream_keys(seed, np.arange(n) + round_id * n)
    left = np.ones(n, dtype=bool)
    slots = reads = frame = 0
    collisions = []
    D = frame_sizes(None)
    slot = np.zeros(n, dtype=np.int64)
    while slots < max_slots:
        if not left.any():
            slots += D  # silent frame that tells the reader it is done
            return InventoryResult(protocol, n, D, True, slots, reads, timing.ms(slots, reads),
                                   collisions=collisions)
        u = uniforms(keys[left], frame + 1)
        slot[left] = np.minimum((u * D).astype(np.int64), D - 1)
        slot[~left] = 0  # silent tags; keeps stale numbers inside a shrunk frame
        read = left & ~model.hits(left, slot, D)
        col = int(np.unique(slot[left & ~read]).size)
        collisions.append(col)
        reads += int(read.sum())
        left &= ~read
        slots += D
        frame += 1
        D = frame_sizes((D, col))
    return InventoryResult(protocol, n, D, False, slots, reads, timing.ms(slots, reads),
                           collisions=collisions)


def run_bfsa(model: CollisionModel, D: int = 256, seed: int = 0, *, max_slots: Optional[int] = None,
             timing: TimingModel = TimingModel(), round_id: int = 0) -> InventoryResult:
    """Basic framed slotted Aloha: fixed frame of ``D`` slots, read tags fall silent."""
    cap = 10_000 * max(D, model.n) if max_slots is None else max_slots
    return _aloha(model, seed, lambda prev: D, timing, "bfsa", cap, round_id)


def dfsa_next(D: int, collided: int, bounds=DFSA_BOUNDS) -> int:
    if collided > 0.7 * D:
        D *= 2
    elif collided < 0.3 * D:
        D //= 2
    return int(min(max(D, bounds[0]), bounds[1]))


def run_dfsa(model: CollisionModel, D0: int = 256, seed: int = 0, *, max_slots: Optional[int] = None,
             timing: TimingModel = TimingModel(), bounds=DFSA_BOUNDS, round_id: int = 0) -> InventoryResult:
    """Dynamic framed Aloha: frame doubles above 70 % collided slots, halves below 30 %."""
    if D0 < 1:
        raise ValueError("initial frame size must be >= 1")
    cap = 10_000 * max(D0, model.n) if max_slots is None else max_slots
    sizes = lambda prev: D0 if prev is None else dfsa_next(prev[0], prev[1], bounds)
    return _aloha(model, seed, sizes, timing, "dfsa", cap, round_id)


# -- batches ---------------------------------------------------------------------------------------

def _model_for(graph: str, n: int) -> CollisionModel:
    if graph == "complete":
        return CollisionModel(build(GraphSpec.complete(n)))
    if graph.startswith("multipartite:"):
        return CollisionModel(build(GraphSpec.k_partite(int(graph.split(":")[1]), n)))
    raise ValueError(f"unknown interference graph {graph!r}")


def _batch_chunk(args):
    protocol, graph, n, D, S_low, seeds = args
    model = _model_for(graph, n)
    out = []
    for s in seeds:
        if protocol == "fcfl":
            r = run_fcfl_rfid(model, D, S_low, s)
            out.append((r.slots_first, r.reads_first, r.slots_steady or -1, r.reads_steady or 0,
                        int(r.complete)))
        else:
            run = run_bfsa if protocol == "bfsa" else run_dfsa
            a = run(model, D, s)
            b = run(model, D, s, round_id=1)  # a later, independent inventory round
            out.append((a.slots_first, a.reads_first, b.slots_first, b.reads_first,
                        int(a.complete and b.complete)))
    return out


def inventory_batch(protocol: str, graph: str, n: int, runs: int, seed: int, *, D: Optional[int] = None,
                    S_low: Optional[int] = None, jobs: int = 1, timing: TimingModel = TimingModel()) -> dict:
    """Medians of first-inventory and steady-state slots and times over ``runs`` seeded runs."""
    if protocol not in ("fcfl", "bfsa", "dfsa"):
        raise ValueError("protocol is fcfl, bfsa or dfsa")
    model = _model_for(graph, n)
    if D is None:
        D = model.g.max_degree + 1 if protocol == "fcfl" else 256
    seeds = [derive_seed(seed, n, r) for r in range(runs)]
    tasks = [(protocol, graph, n, D, S_low, [seeds[i] for i in ch]) for ch in _chunks(runs, jobs)]
    rows = np.array([x for part in parallel_map(_batch_chunk, tasks, jobs) for x in part], dtype=float)
    ok = rows[:, 4] > 0
    steady_ok = ok & (rows[:, 2] >= 0)
    ms_first = rows[:, 0] * timing.slot_ms + rows[:, 1] * timing.read_ms
    ms_steady = rows[:, 2] * timing.slot_ms + rows[:, 3] * timing.read_ms
    med = lambda a, m: float(np.median(a[m])) if m.any() else math.nan
    return {"protocol": protocol, "graph": graph, "tags": n, "D": D, "runs": runs,
            "completed": int(ok.sum()), "steady_measured": int(steady_ok.sum()),
            "median_slots_first": med(rows[:, 0], ok), "median_slots_steady": med(rows[:, 2], steady_ok),
            "median_ms_first": med(ms_first, ok), "median_ms_steady": med(ms_steady, steady_ok),
            "slots_first": rows[:, 0].astype(int).tolist()}


def fig6_experiment(N_grid: Iterable[int], runs: int, seed: int, parts: int = 12, jobs: int = 1) -> list:
    """Reading times on a complete multipartite interference graph, D = max degree + 1."""
    rows = []
    graph = f"multipartite:{parts}"
    for n in N_grid:
        D = _model_for(graph, n).g.max_degree + 1
        f = inventory_batch("fcfl", graph, n, runs, seed, D=D, jobs=jobs)
        a = inventory_batch("bfsa", graph, n, runs, seed, D=D, jobs=jobs)
        rows.append({"N": n, "D": D,
                     "fcfl_ms_first": f["median_ms_first"], "fcfl_ms_steady": f["median_ms_steady"],
                     "aloha_ms_first": a["median_ms_first"], "aloha_ms_steady": a["median_ms_steady"]})
    return rows
