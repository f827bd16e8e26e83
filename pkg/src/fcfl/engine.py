"""Slot-synchronous execution of FCFL and its special cases.

Two engines share one random-stream layout (see ``_rng``):

``Engine``
    numpy reference.  Holds the full probability matrix, supports any
    ``0 < b <= 1``, checks the protocol invariants on every slot, and
    exposes single-slot stepping, perturbation and topology changes.

``fast_run``
    compiled loop for ``b = 1`` (every variant used in the experiments).
    It produces the same colours and Z series as ``Engine`` for the same
    seed, which ``tests/test_kernel.py`` pins.

Slot ``t`` runs in this order: reset (if ``t`` is a reset time), draw,
sense, update.  ``Z`` reported for slot ``t`` is the number of
non-permanent vertices after the update, i.e. the number that enter
slot ``t + 1`` without permanence.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Optional, Sequence, Union

import numpy as np

from . import _kernel
from ._rng import stream_keys, uniforms
from .graph import Graph, unsatisfied_mask

__all__ = [
    "ResetSchedule",
    "EngineConfig",
    "VertexState",
    "SlotOutcome",
    "Trace",
    "ConvergenceResult",
    "InvariantViolation",
    "Engine",
    "FastState",
    "FastRun",
    "make_config",
    "fast_run",
    "default_max_slots",
    "VARIANTS",
]

VARIANTS = ("fcfl", "simplified_fcfl", "cfl", "learning_beb", "motskin")


class InvariantViolation(AssertionError):
    """A protocol invariant failed during simulation."""


@dataclass(frozen=True)
class ResetSchedule:
    """Global reset times ``S_1 <= S_2 <= ...``.

    ``periodic(M, offset)`` gives ``S_tau = tau * M + offset``.  ``explicit`` takes a
    finite list; repeated entries collapse into one reset because a slot
    is either a reset slot or not.  ``never()`` is the empty list.
    """

    period: int = 0
    times: tuple = ()
    offset: int = 0

    @classmethod
    def periodic(cls, M: int, offset: int = 0) -> "ResetSchedule":
        if int(M) < 1:
            raise ValueError("reset period must be >= 1")
        if int(M) + int(offset) < 1:
            raise ValueError("first reset must fall on a slot >= 1")
        return cls(period=int(M), offset=int(offset))

    @classmethod
    def explicit(cls, times: Sequence[int]) -> "ResetSchedule":
        ts = tuple(int(x) for x in times)
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("reset times must be non-decreasing")
        if ts and ts[0] < 1:
            raise ValueError("reset times are slot indices >= 1")
        return cls(period=0, times=tuple(sorted(set(ts))))

    @classmethod
    def never(cls) -> "ResetSchedule":
        return cls(period=0, times=())

    @property
    def is_periodic(self) -> bool:
        return self.period > 0

    @property
    def first(self) -> Optional[int]:
        if self.is_periodic:
            return self.period + self.offset
        return self.times[0] if self.times else None

    @property
    def min_gap(self) -> Optional[float]:
        """Smallest gap between consecutive resets (inf with < 2 resets)."""
        if self.is_periodic:
            return self.period
        if len(self.times) < 2:
            return math.inf
        return int(np.diff(self.times).min())

    def is_reset(self, t: int) -> bool:
        if self.is_periodic:
            return t >= self.period + self.offset and (t - self.offset) % self.period == 0
        return t in self.times

    def reset_time(self, tau: int) -> Optional[int]:
        """``S_tau`` (1-based), or None past the end of a finite list."""
        if tau < 1:
            raise ValueError("tau starts at 1")
        if self.is_periodic:
            return tau * self.period + self.offset
        return self.times[tau - 1] if tau <= len(self.times) else None

    def first_index_at_or_after(self, t: int) -> Optional[int]:
        """Smallest ``tau`` with ``S_tau >= t``."""
        if self.is_periodic:
            return max(1, -(-(t - self.offset) // self.period))
        i = int(np.searchsorted(np.asarray(self.times, dtype=np.int64), t))
        return i + 1 if i < len(self.times) else None

    def kernel_args(self):
        if self.is_periodic:
            return np.zeros(0, dtype=np.int64), self.period + self.offset, self.period
        return np.asarray(self.times, dtype=np.int64), 0, 0


@dataclass(frozen=True)
class EngineConfig:
    D: int
    b: float
    schedule: ResetSchedule
    seed: int = 0

    def __post_init__(self):
        if int(self.D) < 1:
            raise ValueError("palette size D must be >= 1")
        if not (0.0 < float(self.b) <= 1.0):
            raise ValueError("learning parameter b must lie in (0, 1]")


def make_config(variant: str, g: Graph, D: int, seed: int = 0, *, M: Optional[int] = None,
                b: Optional[float] = None) -> EngineConfig:
    """Configuration for one of the named protocol variants.

    fcfl             periodic resets every ``M`` slots, learning rate ``b``
    simplified_fcfl  periodic resets every ``max_degree + 1`` slots, b = 1
    cfl              a reset every slot, learning rate ``b``
    learning_beb     a reset every slot, b = 1
    motskin          no resets, b = 1
    """
    if variant == "fcfl":
        if M is None:
            raise ValueError("fcfl needs the reset period M")
        return EngineConfig(D, 1.0 if b is None else b, ResetSchedule.periodic(M), seed)
    if variant == "simplified_fcfl":
        return EngineConfig(D, 1.0, ResetSchedule.periodic(g.max_degree + 1), seed)
    if variant == "cfl":
        if b is None:
            raise ValueError("cfl needs the learning parameter b")
        return EngineConfig(D, b, ResetSchedule.periodic(1), seed)
    if variant == "learning_beb":
        return EngineConfig(D, 1.0, ResetSchedule.periodic(1), seed)
    if variant == "motskin":
        return EngineConfig(D, 1.0, ResetSchedule.never(), seed)
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def default_max_slots(g: Graph) -> int:
    return 10_000 * (g.max_degree + 1)


@dataclass
class VertexState:
    p: np.ndarray
    m: bool
    colour: int


@dataclass
class SlotOutcome:
    t: int
    reset: bool
    colours: np.ndarray
    unsatisfied: np.ndarray
    Z: int
    proper: bool


@dataclass
class Trace:
    """Per-slot record.  ``sets`` holds the non-permanent vertex sets when requested."""

    t: list = field(default_factory=list)
    Z: list = field(default_factory=list)
    proper: list = field(default_factory=list)
    sets: Optional[list] = None
    colours: Optional[dict] = None

    def __len__(self):
        return len(self.t)

    def append(self, out: SlotOutcome, nonperm=None, dump=False):
        self.t.append(out.t)
        self.Z.append(out.Z)
        self.proper.append(out.proper)
        if self.sets is not None and nonperm is not None:
            self.sets.append(frozenset(np.flatnonzero(nonperm).tolist()))
        if dump:
            if self.colours is None:
                self.colours = {}
            self.colours[out.t] = out.colours.tolist()

    def records(self):
        for i, (t, z, pr) in enumerate(zip(self.t, self.Z, self.proper)):
            rec = {"t": int(t), "Z": int(z), "proper": bool(pr)}
            if self.colours and t in self.colours:
                rec["colours"] = self.colours[t]
            yield rec

    def to_jsonl(self, out: Union[str, IO[str]]):
        lines = "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in self.records())
        if isinstance(out, str):
            with open(out, "w") as fh:
                fh.write(lines)
        else:
            out.write(lines)


@dataclass
class ConvergenceResult:
    R: Optional[int]
    tau_star: Optional[int]
    slots_run: int
    converged: bool


def tau_star_for(schedule: ResetSchedule, R: Optional[int]) -> Optional[int]:
    """First reset index whose reset slot starts with a proper colouring.

    The colouring entering slot ``S_tau`` is proper exactly when the first
    proper slot ``R`` is at most ``S_tau - 1``.
    """
    if R is None:
        return None
    return schedule.first_index_at_or_after(R + 1)


class Engine:
    """Reference implementation of one FCFL network.

    ``check=True`` raises ``InvariantViolation`` as soon as one of these
    fails on a slot:

    * every vertex permanent implies a proper colouring;
    * a vertex permanent at the start of a slot only collides with vertices
      that were not permanent at the start of that slot;
    * once a slot ends proper, the colours never change again;
    * rows of p are distributions (sum 1 within 1e-12, no negatives);
    * a vertex left unsatisfied since its last permanence gives every
      colour probability at least b/D;
    * a permanent vertex has p equal to the indicator of its colour.

    The first two do not hold across an external perturbation or graph
    change; they are suspended until the next reset slot re-establishes
    them.
    """

    def __init__(self, g: Graph, cfg: EngineConfig, start=None, *, check: bool = True,
                 keep_sets: bool = False, dump_every: Optional[int] = None):
        self.g = g
        self.cfg = cfg
        self.D = int(cfg.D)
        self.b = float(cfg.b)
        self.check = check
        self.dump_every = dump_every
        n = g.n
        self.p = np.full((n, self.D), 1.0 / self.D)
        self.m = np.zeros(n, dtype=bool)
        self.colour = np.zeros(n, dtype=np.int64)
        if start is not None:
            start = np.asarray(start, dtype=np.int64)
            if start.shape != (n,):
                raise ValueError("start colouring length does not match the graph")
            if start.min() < 1 or start.max() > self.D:
                raise ValueError("start colours must lie in 1..D")
            self.colour = start - 1
        self.t = 1
        self.tau = 1
        self.keys = stream_keys(cfg.seed, np.arange(n))
        self._tainted = False
        self._frozen = None
        self._learning = np.zeros(n, dtype=bool)
        self.R: Optional[int] = None
        self.trace = Trace(sets=[] if keep_sets else None)

    # -- views -------------------------------------------------------------

    @property
    def n(self) -> int:
        return self.g.n

    @property
    def colours(self) -> np.ndarray:
        return self.colour + 1

    @property
    def Z(self) -> int:
        return int(np.count_nonzero(~self.m))

    def vertex(self, i: int) -> VertexState:
        return VertexState(self.p[i].copy(), bool(self.m[i]), int(self.colour[i]) + 1)

    # -- one slot ------------------------------------------------------------

    def _fail(self, msg):
        raise InvariantViolation(f"slot {self.t}: {msg}")

    def step(self) -> SlotOutcome:
        g, t = self.g, self.t
        reset = self.cfg.schedule.is_reset(t)
        if reset:
            self.m[:] = False
            self.tau += 1
            self._tainted = False
        m_start = self.m.copy()

        u = uniforms(self.keys, t)
        cdf = np.cumsum(self.p, axis=1)
        drawn = np.minimum((cdf <= u[:, None]).sum(axis=1), self.D - 1)
        self.colour = drawn.astype(np.int64)

        unsat = unsatisfied_mask(g, self.colour)
        if self.check and not self._tainted and g.n_edges:
            a, c = g.edges[:, 0], g.edges[:, 1]
            clash = self.colour[a] == self.colour[c]
            if np.any(clash & m_start[a] & m_start[c]):
                self._fail("two vertices permanent at slot start drew the same colour")

        free = ~m_start
        sat = free & ~unsat
        bad = free & unsat
        if np.any(sat):
            self.p[sat] = 0.0
            self.p[sat, self.colour[sat]] = 1.0
            self.m[sat] = True
            self._learning[sat] = False
        if np.any(bad):
            self.p[bad] = (1.0 - self.b) * self.p[bad] + self.b / self.D
            self._learning[bad] = True

        proper = not np.any(unsat)
        if self.check:
            self._check_after(proper)
        if proper:
            if self.R is None:
                self.R = t
            if self._frozen is None:
                self._frozen = self.colour.copy()
        out = SlotOutcome(t, reset, self.colours, unsat, self.Z, proper)
        dump = self.dump_every is not None and (t - 1) % self.dump_every == 0
        self.trace.append(out, ~self.m, dump)
        self.t += 1
        return out

    def _check_after(self, proper):
        p = self.p
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
            self._fail("probability vector left the simplex")
        if np.any(self._learning):
            floor = self.b / self.D
            if np.any(p[self._learning].min(axis=1) < floor):
                self._fail("a learning vertex gives some colour less than b/D")
        if np.any(self.m):
            rows = np.flatnonzero(self.m)
            if np.any(p[rows, self.colour[rows]] != 1.0):
                self._fail("a permanent vertex does not hold an indicator vector")
        if not self._tainted and self.m.all() and not proper:
            self._fail("all vertices permanent but the colouring is not proper")
        if self._frozen is not None and not np.array_equal(self._frozen, self.colour):
            self._fail("colours changed after the colouring became proper")

    # -- runs ----------------------------------------------------------------

    def run(self, slots: int) -> list:
        return [self.step() for _ in range(int(slots))]

    def run_until_proper(self, max_slots: Optional[int] = None):
        """Step until a slot ends proper or ``max_slots`` slots have run."""
        cap = default_max_slots(self.g) if max_slots is None else int(max_slots)
        if cap < 1:
            raise ValueError("max_slots must be >= 1")
        t_begin = self.t
        hit = None
        for _ in range(cap):
            if self.step().proper:
                hit = self.t - 1
                break
        res = ConvergenceResult(hit, tau_star_for(self.cfg.schedule, hit), self.t - t_begin,
                                hit is not None)
        return res, self.trace

    # -- external changes ----------------------------------------------------

    def perturb_colours(self, fraction: float, seed, *, reset_permanence: bool = False) -> np.ndarray:
        """Give ``ceil(fraction * N)`` random vertices a fresh uniform colour.

        The chosen vertices stick to their new colour (p becomes the
        indicator) and keep their permanence flag unless
        ``reset_permanence`` is set.  Returns the chosen vertex ids.
        """
        if not (0.0 <= fraction <= 1.0):
            raise ValueError("fraction must lie in [0, 1]")
        if np.any(unsatisfied_mask(self.g, self.colour)):
            raise ValueError("perturbation starts from a proper colouring")
        count = perturbed_count(fraction, self.n)
        if count == 0:
            return np.zeros(0, dtype=np.int64)
        rng = np.random.default_rng(seed)
        who = np.sort(rng.choice(self.n, size=count, replace=False))
        new = rng.integers(0, self.D, size=count)
        self.colour[who] = new
        self.p[who] = 0.0
        self.p[who, new] = 1.0
        self._learning[who] = False
        if reset_permanence:
            self.m[who] = False
        self._tainted = True
        self._frozen = None
        self.R = None
        return who

    def replace_graph(self, g: Graph):
        """Continue on a changed topology.  New vertices start fresh."""
        if g.n < self.n:
            raise ValueError("vertex removal is not supported mid-run")
        extra = g.n - self.n
        if extra:
            self.p = np.vstack([self.p, np.full((extra, self.D), 1.0 / self.D)])
            self.m = np.concatenate([self.m, np.zeros(extra, dtype=bool)])
            self.colour = np.concatenate([self.colour, np.zeros(extra, dtype=np.int64)])
            self._learning = np.concatenate([self._learning, np.zeros(extra, dtype=bool)])
            self.keys = stream_keys(self.cfg.seed, np.arange(g.n))
        self.g = g
        self._tainted = True
        self._frozen = None
        self.R = None


def perturbed_count(fraction: float, n: int) -> int:
    # round first so that e.g. 0.1 * 30 counts as 3, not 4
    return int(math.ceil(round(fraction * n, 9)))


# -- compiled path ---------------------------------------------------------

@dataclass
class FastState:
    """Compressed b = 1 state: colour (0-based), permanence, stickiness."""

    colour: np.ndarray
    m: np.ndarray
    sticky: np.ndarray
    t: int = 1
    tau: int = 1

    @classmethod
    def cold(cls, n: int) -> "FastState":
        return cls(np.zeros(n, dtype=np.int64), np.zeros(n, dtype=bool), np.zeros(n, dtype=bool))

    def copy(self) -> "FastState":
        return FastState(self.colour.copy(), self.m.copy(), self.sticky.copy(), self.t, self.tau)


@dataclass
class FastRun:
    R: Optional[int]
    tau_star: Optional[int]
    slots_run: int
    converged: bool
    Z: np.ndarray
    state: FastState


def _sensing(g: Graph):
    empty = np.zeros(0, dtype=np.int64)
    if g.parts is not None:
        if all(s == 1 for s in g.parts):
            return _kernel.MODE_COMPLETE, empty, 1, empty, empty
        return _kernel.MODE_MULTI, g.part_of().astype(np.int64), len(g.parts), empty, empty
    return _kernel.MODE_CSR, empty, 1, np.asarray(g.indptr), np.asarray(g.indices)


def fast_run(g: Graph, cfg: EngineConfig, max_slots: Optional[int] = None,
             state: Optional[FastState] = None, *, stop_when_proper: bool = True,
             record: bool = True) -> FastRun:
    """Run the compiled b = 1 loop, continuing ``state`` if given (modified in place)."""
    if cfg.b != 1.0:
        raise ValueError("the compiled loop covers b = 1 only; use Engine for other b")
    cap = default_max_slots(g) if max_slots is None else int(max_slots)
    if cap < 1:
        raise ValueError("max_slots must be >= 1")
    st = FastState.cold(g.n) if state is None else state
    if st.colour.shape != (g.n,) or st.colour.min() < 0 or st.colour.max() >= cfg.D:
        raise ValueError("state does not fit the graph and palette")
    mode, part, nparts, indptr, indices = _sensing(g)
    r_explicit, r_first, r_period = cfg.schedule.kernel_args()
    R, t_next, tau, steps, z = _kernel.run_colouring(
        mode, g.n, int(cfg.D), part, nparts, indptr, indices, np.uint64(cfg.seed),
        r_explicit, r_first, r_period, int(st.t), int(st.tau),
        st.colour, st.m, st.sticky, cap, stop_when_proper, record)
    st.t, st.tau = int(t_next), int(tau)
    hit = None if R < 0 else int(R)
    return FastRun(hit, tau_star_for(cfg.schedule, hit), int(steps), hit is not None, z, st)


def perturb_fast(state: FastState, fraction: float, D: int, seed, *, reset_permanence: bool = False):
    """Same perturbation as ``Engine.perturb_colours`` on a compiled-loop state."""
    n = state.colour.shape[0]
    count = perturbed_count(fraction, n)
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    rng = np.random.default_rng(seed)
    who = np.sort(rng.choice(n, size=count, replace=False))
    state.colour[who] = rng.integers(0, D, size=count)
    state.sticky[who] = True
    if reset_permanence:
        state.m[who] = False
    return who
