"""The compiled b = 1 loop against the reference engine, bit for bit."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fcfl.engine import (Engine, EngineConfig, FastState, ResetSchedule, fast_run, make_config,
                         perturb_fast)
from fcfl.graph import Graph, GraphSpec, build

FAMILIES = [
    GraphSpec.complete(12),
    GraphSpec.k_partite(3, 13),
    GraphSpec.erdos_renyi(25, 0.25, seed=4),
    GraphSpec.thinned(GraphSpec.complete(20), 0.2, seed=2),
]
SCHEDULES = [
    lambda g: ResetSchedule.periodic(g.max_degree + 1),
    lambda g: ResetSchedule.periodic(3, offset=1),
    lambda g: ResetSchedule.explicit([2, 7, 8, 20, 41]),
    lambda g: ResetSchedule.never(),
]


def reference(g, cfg, slots):
    e = Engine(g, cfg, check=False)
    e.run(slots)
    return e


@pytest.mark.parametrize("spec", FAMILIES, ids=lambda s: s.kind)
@pytest.mark.parametrize("sched", range(len(SCHEDULES)))
@pytest.mark.parametrize("seed", [0, 17])
def test_trace_matches_reference(spec, sched, seed):
    g = build(spec)
    D = g.max_degree + 1
    cfg = EngineConfig(D, 1.0, SCHEDULES[sched](g), seed)
    run = fast_run(g, cfg, 60, stop_when_proper=False)
    e = reference(g, cfg, 60)
    assert run.Z.tolist() == e.trace.Z
    assert (run.state.colour == e.colour).all() and (run.state.m == e.m).all()
    R = next((t for t, p in zip(e.trace.t, e.trace.proper) if p), None)
    assert run.R == R


def test_stops_at_first_proper_slot():
    g = build(FAMILIES[2])
    cfg = make_config("simplified_fcfl", g, g.max_degree + 1, 3)
    run = fast_run(g, cfg)
    e = Engine(g, cfg)
    res, _ = e.run_until_proper()
    assert (run.R, run.tau_star, run.slots_run) == (res.R, res.tau_star, res.slots_run)
    assert (run.state.colour == e.colour).all()


def test_split_run_equals_one_run():
    g = build(FAMILIES[1])
    cfg = EngineConfig(5, 1.0, ResetSchedule.periodic(4), 8)
    whole = fast_run(g, cfg, 50, stop_when_proper=False)
    st_ = FastState.cold(g.n)
    a = fast_run(g, cfg, 23, st_, stop_when_proper=False)
    b = fast_run(g, cfg, 27, st_, stop_when_proper=False)
    assert np.concatenate([a.Z, b.Z]).tolist() == whole.Z.tolist()
    assert st_.t == 51 and st_.tau == whole.state.tau


def test_perturbation_matches_reference():
    g = build(GraphSpec.thinned(GraphSpec.complete(30), 0.2, seed=5))
    D = g.max_degree + 1
    cfg = make_config("simplified_fcfl", g, D, 2)
    run = fast_run(g, cfg)
    e = Engine(g, cfg)
    e.run_until_proper()
    for reset in (False, True):
        st_ = run.state.copy()
        e2 = Engine(g, cfg, check=False)
        e2.run_until_proper()
        who_a = perturb_fast(st_, 0.1, D, 99, reset_permanence=reset)
        who_b = e2.perturb_colours(0.1, 99, reset_permanence=reset)
        assert who_a.tolist() == who_b.tolist()
        assert (st_.colour == e2.colour).all() and (st_.m == e2.m).all()
        r = fast_run(g, cfg, 500, st_, stop_when_proper=False)
        e2.run(500)
        assert r.Z.tolist() == e2.trace.Z[-500:]


def test_rejects_partial_learning_and_bad_state():
    g = build(GraphSpec.complete(4))
    with pytest.raises(ValueError):
        fast_run(g, EngineConfig(4, 0.5, ResetSchedule.periodic(4)))
    bad = FastState(np.full(4, 7), np.zeros(4, bool), np.zeros(4, bool))
    with pytest.raises(ValueError):
        fast_run(g, EngineConfig(4, 1.0, ResetSchedule.periodic(4)), state=bad)


@settings(max_examples=50)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=5), st.integers(0, 2**40), st.integers(1, 6))
def test_multipartite_counting_matches_edge_scan(sizes, seed, M):
    """Per-part colour counting and neighbour scanning give the same run."""
    g = build(GraphSpec.multipartite(sizes))
    plain = Graph(g.n, g.edges)  # same graph without the part structure
    cfg = EngineConfig(g.max_degree + 1, 1.0, ResetSchedule.periodic(M), seed)
    a = fast_run(g, cfg, 40, stop_when_proper=False)
    b = fast_run(plain, cfg, 40, stop_when_proper=False)
    assert a.Z.tolist() == b.Z.tolist() and a.R == b.R
