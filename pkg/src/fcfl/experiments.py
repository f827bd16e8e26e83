"""Monte Carlo experiments: drift curve, bound ratios, perturbation recovery.

Every run draws its randomness from ``derive_seed(seed_base, ...)`` keyed
by the run's position in the experiment, so serial and parallel
execution produce identical results.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from itertools import product
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ._rng import derive_seed
from .bounds import DriftParams, expected_z_bound, psi_tight, phi, theorem2_bound
from .engine import (Engine, EngineConfig, FastState, ResetSchedule, fast_run, make_config,
                     perturb_fast)
from .graph import Graph, GraphSpec, build, is_proper, unsatisfied_mask

__all__ = [
    "ExperimentSpec",
    "ExperimentFailure",
    "DriftPoint",
    "parallel_map",
    "drift_exact",
    "drift_closed_form",
    "drift_curve",
    "ratio_graph_spec",
    "ratio_experiment",
    "ratio_table_csv",
    "perturbation_experiment",
    "theorem2_tail",
    "expected_z_at_resets",
    "permanence_rate",
    "reset_survival",
    "CONVERGED_SHARE",
]

CONVERGED_SHARE = 0.95
RATIO_HEADER = ("kind", "N", "delta", "D", "runs", "median_slots", "bound_slots", "ratio")


class ExperimentFailure(RuntimeError):
    """Too many runs hit their slot cap, or a checked property failed."""


@dataclass
class ExperimentSpec:
    experiment: str
    graphs: list
    runs: int
    seed_base: int
    params: dict = field(default_factory=dict)
    out: Optional[str] = None

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("run count must be >= 1")

    def to_dict(self):
        return asdict(self)


@dataclass
class DriftPoint:
    Z: int
    drift: float
    stderr: float
    trials: int
    exact: Optional[float] = None


def parallel_map(fn: Callable, items: Sequence, jobs: int = 1) -> list:
    """Ordered map, in worker processes when ``jobs > 1``."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _chunks(n: int, jobs: int) -> list:
    size = max(1, math.ceil(n / max(1, 4 * jobs)))
    return [range(i, min(n, i + size)) for i in range(0, n, size)]


@lru_cache(maxsize=16)
def _graph(spec: GraphSpec) -> Graph:
    return build(spec)


# -- drift of the non-permanent count on complete graphs --------------------------

def drift_closed_form(N: int, Z: int) -> float:
    """Exact E[Z'] - Z for one reset slot on K_N with N colours.

    A permanent vertex is knocked out when some non-permanent vertex picks
    its colour; a non-permanent vertex settles when it picks one of the Z
    free colours that nobody else picks.
    """
    q = 1 - 1 / N
    after = (N - Z) * (1 - q ** Z) + (Z * (1 - (Z / N) * q ** (Z - 1)) if Z else 0.0)
    return after - Z


def drift_exact(N: int, Z: int) -> float:
    """Same quantity by enumerating all N^Z draws of the non-permanent vertices."""
    if N > 6:
        raise ValueError("enumeration is limited to N <= 6")
    fixed = np.arange(N - Z)
    total = 0
    for draw in product(range(N), repeat=Z):
        c = np.concatenate([fixed, np.asarray(draw, dtype=np.int64)])
        counts = np.bincount(c, minlength=N)
        total += int(np.count_nonzero(counts[c] > 1))
    return total / N ** Z - Z


def _drift_samples(N: int, Z: int, trials: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    # permanent vertices hold distinct colours; by symmetry which ones is irrelevant,
    # but they are drawn without replacement anyway
    perm = np.argsort(rng.random((trials, N)), axis=1)[:, :N - Z]
    free = rng.integers(0, N, size=(trials, Z))
    c = np.concatenate([perm, free], axis=1)
    flat = c + N * np.arange(trials)[:, None]
    counts = np.bincount(flat.ravel(), minlength=trials * N)
    unsat = counts[flat] > 1
    return unsat.sum(axis=1) - Z


def drift_curve(N: int, trials: int, seed: int, *, exact: Optional[bool] = None) -> list:
    """Estimated drift of the non-permanent count at a reset slot, for Z = 0..N.

    Setting: complete graph, D = N colours, a reset every slot, b = 1.
    ``exact`` (default: N <= 5) also fills in the enumerated value.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    exact = N <= 5 if exact is None else exact
    pts = []
    for Z in range(N + 1):
        s = _drift_samples(N, Z, trials, derive_seed(seed, N, Z))
        se = float(s.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.nan
        pts.append(DriftPoint(Z, float(s.mean()), se, trials, drift_exact(N, Z) if exact else None))
    return pts


# -- convergence-time batches ---------------------------------------------------------

def _converge_chunk(args):
    spec, D, M, seeds, cap, seed_tag = args
    g = _graph(spec)
    out = np.empty(len(seeds), dtype=np.int64)
    taus = np.empty(len(seeds), dtype=np.int64)
    for j, s in enumerate(seeds):
        cfg = EngineConfig(D, 1.0, ResetSchedule.periodic(M), s)
        r = fast_run(g, cfg, cap, record=False)
        out[j] = r.R if r.converged else -1
        taus[j] = r.tau_star if r.converged else -1
    return out, taus


def convergence_times(spec: GraphSpec, D: int, M: int, runs: int, seed_base: int, key: Sequence[int],
                      cap: Optional[int] = None, jobs: int = 1):
    """First proper slot R and reset index tau* for ``runs`` cold starts (-1 if capped)."""
    g = _graph(spec)
    cap = 10_000 * (g.max_degree + 1) if cap is None else cap
    seeds = [derive_seed(seed_base, *key, r) for r in range(runs)]
    tasks = [(spec, D, M, [seeds[i] for i in ch], cap, tuple(key)) for ch in _chunks(runs, jobs)]
    parts = parallel_map(_converge_chunk, tasks, jobs)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def ratio_graph_spec(kind: str, N: int) -> GraphSpec:
    if kind == "complete":
        return GraphSpec.complete(N)
    if kind == "bipartite":
        return GraphSpec.multipartite([N // 2, N - N // 2])
    if kind.endswith("-partite"):
        return GraphSpec.k_partite(int(kind.split("-")[0]), N)
    raise ValueError(f"unknown graph kind {kind!r}")


_KIND_CODE = {"complete": 1, "bipartite": 2}


def _kind_code(kind):
    return _KIND_CODE.get(kind, 100 + int(kind.split("-")[0]) if kind.endswith("-partite") else 0)


def ratio_experiment(kinds: Iterable[str], N_grid: Iterable[int], runs: int, seed: int,
                     jobs: int = 1, eps: float = 0.5) -> list:
    """Median convergence slots of simplified FCFL over the slot bound (delta+1)*B(N, delta, eps)."""
    rows = []
    for kind in kinds:
        for N in N_grid:
            spec = ratio_graph_spec(kind, N)
            g = _graph(spec)
            delta = g.max_degree
            D = delta + 1
            R, taus = convergence_times(spec, D, delta + 1, runs, seed, (_kind_code(kind), N), jobs=jobs)
            ok = R >= 0
            if ok.mean() < CONVERGED_SHARE:
                raise ExperimentFailure(f"{kind} N={N}: only {ok.sum()}/{runs} runs converged")
            med = float(np.median(R[ok]))
            bound = (delta + 1) * theorem2_bound(N, delta, eps).value
            rows.append({"kind": kind, "N": N, "delta": delta, "D": D, "runs": runs,
                         "median_slots": med, "bound_slots": bound, "ratio": med / bound,
                         "converged": int(ok.sum()),
                         # slot index of the first reset entered with a proper colouring
                         "median_reset_slot": float(np.median(taus[ok] * (delta + 1))),
                         "reset_ratio": float(np.median(taus[ok] * (delta + 1))) / bound})
    return rows


def ratio_table_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RATIO_HEADER)
    for r in rows:
        w.writerow([r["kind"], r["N"], r["delta"], r["D"], r["runs"], repr(r["median_slots"]),
                    repr(r["bound_slots"]), repr(r["ratio"])])
    return buf.getvalue()


# -- reset-epoch statistics on complete graphs -------------------------------------------

def _z_trace_chunk(args):
    N, seeds, horizon = args
    g = _graph(GraphSpec.complete(N))
    out = np.zeros((len(seeds), horizon), dtype=np.int64)
    for j, s in enumerate(seeds):
        r = fast_run(g, EngineConfig(N, 1.0, ResetSchedule.periodic(N), s), horizon)
        out[j, :len(r.Z)] = r.Z
    return out


def expected_z_at_resets(N: int, runs: int, seed: int, taus: Iterable[int] = range(1, 11), jobs: int = 1):
    """Mean non-permanent count entering and leaving reset slots on K_N.

    D = N colours, resets every N slots, b = 1.  For each tau returns the
    Monte Carlo mean and standard error of the count entering slot S_tau,
    the closed-form bound on it, the mean after the reset slot, and the
    one-step bound evaluated at the measured entering mean.
    """
    taus = list(taus)
    horizon = max(taus) * N + 1
    seeds = [derive_seed(seed, N, r) for r in range(runs)]
    parts = parallel_map(_z_trace_chunk, [(N, [seeds[i] for i in ch], horizon)
                                          for ch in _chunks(runs, jobs)], jobs)
    Z = np.vstack(parts)  # Z[:, t-1] = count after slot t
    p = DriftParams(N, N - 1, 1.0)
    rows = []
    for tau in taus:
        S = tau * N
        before = Z[:, S - 2].astype(float)
        after = Z[:, S - 1].astype(float)
        zhat = before.mean()
        rows.append({
            "tau": tau,
            "mean_before": zhat,
            "se_before": before.std(ddof=1) / math.sqrt(runs),
            "bound_before": expected_z_bound(tau, N, N - 1, 1.0),
            "mean_after": after.mean(),
            "se_after": after.std(ddof=1) / math.sqrt(runs),
            "one_step_bound": phi(zhat, p) + psi_tight(zhat, N, p),
        })
    return rows


def theorem2_tail(N: int, runs: int, seed: int, eps: float = 0.5, jobs: int = 1) -> dict:
    """Share of cold starts on K_N whose first proper reset index reaches ceil(B)."""
    spec = GraphSpec.complete(N)
    _, taus = convergence_times(spec, N, N, runs, seed, (7, N), jobs=jobs)
    B = theorem2_bound(N, N - 1, eps).value
    threshold = math.ceil(B)
    ok = taus >= 0
    tail = float(np.mean((taus >= threshold) | ~ok))
    return {"N": N, "runs": runs, "B": B, "threshold": threshold, "tail_share": tail,
            "median_tau": float(np.median(taus[ok])) if ok.any() else math.nan,
            "capped": int((~ok).sum())}


# -- perturbation recovery -------------------------------------------------------------------

def _perturb_chunk(args):
    (n, thin, fraction, seeds, cap, reset_perm, beb_cap) = args
    out = []
    for s in seeds:
        gseed, rseed, pseed = (derive_seed(s, i) for i in range(3))
        spec = GraphSpec.thinned(GraphSpec.complete(n), thin, seed=gseed)
        g = _graph(spec)
        D = g.max_degree + 1
        cfg = make_config("simplified_fcfl", g, D, rseed)
        cold = fast_run(g, cfg, cap, record=False)
        if not cold.converged:
            out.append((-1, -1, -1))
            continue
        st = cold.state
        base = st.copy()
        perturb_fast(st, fraction, D, pseed, reset_permanence=reset_perm)
        if is_proper(g, st.colour):
            rec = 0
        else:
            r = fast_run(g, cfg, cap, st, record=False)
            rec = r.R - cold.R if r.converged else -1
        beb = -2
        if beb_cap is not None:
            st2 = base
            perturb_fast(st2, fraction, D, pseed, reset_permanence=reset_perm)
            if is_proper(g, st2.colour):
                beb = 0
            else:
                beb_cfg = make_config("learning_beb", g, D, rseed)
                r = fast_run(g, beb_cfg, max(1, beb_cap), st2, record=False)
                beb = r.R - cold.R if r.converged else -1
        out.append((cold.R, rec, beb))
    return out


def perturbation_experiment(runs: int, seed: int, *, n: int = 60, thin: float = 0.2,
                            fraction: float = 0.02, reset_permanence: bool = False,
                            beb_runs: int = 50, beb_cap_factor: int = 1000,
                            cap: Optional[int] = None, jobs: int = 1) -> dict:
    """Cold-start and post-perturbation convergence of simplified FCFL.

    Each run builds its own thinned complete graph, converges from a cold
    start, re-colours ``ceil(fraction * n)`` random vertices and counts the
    slots until the colouring is proper again (0 if it never broke).  The
    first ``beb_runs`` runs then replay the same perturbation with resets
    every slot (learning BEB), capped at ``beb_cap_factor`` times the FCFL
    median recovery.
    """
    cap = 10_000 * n if cap is None else cap
    seeds = [derive_seed(seed, 60, r) for r in range(runs)]

    def go(idx, beb_cap):
        tasks = [(n, thin, fraction, [seeds[i] for i in ch], cap, reset_permanence, beb_cap)
                 for ch in _chunks(len(idx), jobs) for ch in [[idx[i] for i in ch]]]
        return [x for part in parallel_map(_perturb_chunk, tasks, jobs) for x in part]

    res = np.asarray(go(list(range(runs)), None), dtype=np.int64)
    cold, rec = res[:, 0], res[:, 1]
    ok = (cold >= 0) & (rec >= 0)
    if ok.mean() < CONVERGED_SHARE:
        raise ExperimentFailure(f"only {ok.sum()}/{runs} perturbation runs converged")
    med_rec = float(np.median(rec[ok]))
    med_cold = float(np.median(cold[cold >= 0]))
    out = {"runs": runs, "n": n, "thin": thin, "fraction": fraction,
           "perturbed": int(math.ceil(round(fraction * n, 9))),
           "cold_slots": cold.tolist(), "recovery_slots": rec.tolist(),
           "median_cold": med_cold, "median_recovery": med_rec,
           "converged": int(ok.sum())}
    if beb_runs:
        beb_cap = int(math.ceil(beb_cap_factor * med_rec))
        b = np.asarray(go(list(range(min(beb_runs, runs))), beb_cap), dtype=np.int64)[:, 2]
        out.update({"beb_cap": beb_cap, "beb_runs": len(b), "beb_recovery_slots": b.tolist(),
                    "beb_failed_share": float(np.mean(b < 0))})
    return out


# -- per-slot probabilities for the drift lemmas --------------------------------------------

def permanence_rate(g: Graph, cfg: EngineConfig, slots: int, runs: int, seed: int) -> dict:
    """Share of (non-permanent vertex, slot) pairs that become permanent in that slot."""
    trials = hits = 0
    for r in range(runs):
        e = Engine(g, EngineConfig(cfg.D, cfg.b, cfg.schedule, derive_seed(seed, r)))
        for _ in range(slots):
            sched = e.cfg.schedule
            free = ~e.m if not sched.is_reset(e.t) else np.ones(g.n, dtype=bool)
            e.step()
            trials += int(free.sum())
            hits += int((free & e.m).sum())
    rate = hits / trials if trials else math.nan
    return {"pairs": trials, "rate": rate,
            "stderr": math.sqrt(rate * (1 - rate) / trials) if trials else math.nan}


def reset_survival(g: Graph, cfg: EngineConfig, slots: int, runs: int, seed: int) -> dict:
    """At reset slots, share of previously permanent vertices still satisfied.

    Keyed by the number of neighbours that were non-permanent when the
    slot began.  Values are ``(survived, total)``.
    """
    table = {}
    for r in range(runs):
        e = Engine(g, EngineConfig(cfg.D, cfg.b, cfg.schedule, derive_seed(seed, r)))
        for _ in range(slots):
            if not cfg.schedule.is_reset(e.t):
                e.step()
                continue
            was_perm = e.m.copy()
            free = (~was_perm).astype(np.int64)
            n_free = np.add.reduceat(free[g.indices], g.indptr[:-1]) if g.indices.size else np.zeros(g.n, int)
            n_free = np.where(g.degrees > 0, n_free, 0)
            out = e.step()
            for i in np.flatnonzero(was_perm):
                s, t = table.get(int(n_free[i]), (0, 0))
                table[int(n_free[i])] = (s + int(not out.unsatisfied[i]), t + 1)
    return dict(sorted(table.items()))
