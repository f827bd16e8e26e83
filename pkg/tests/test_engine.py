import io
import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fcfl.engine import (Engine, EngineConfig, InvariantViolation, ResetSchedule, make_config,
                         perturbed_count, tau_star_for)
from fcfl.graph import Graph, GraphSpec, build, is_proper, unsatisfied_mask


def k(n):
    return build(GraphSpec.complete(n))


def cfg(D, M=None, b=1.0, seed=0, schedule=None):
    return EngineConfig(D, b, schedule or (ResetSchedule.periodic(M) if M else ResetSchedule.never()), seed)


# -- schedule ------------------------------------------------------------------------------

def test_periodic_schedule():
    s = ResetSchedule.periodic(3)
    assert [t for t in range(1, 13) if s.is_reset(t)] == [3, 6, 9, 12]
    assert s.reset_time(2) == 6 and s.first == 3 and s.min_gap == 3
    assert s.first_index_at_or_after(7) == 3


def test_offset_schedule():
    s = ResetSchedule.periodic(4, offset=1)
    assert [t for t in range(1, 14) if s.is_reset(t)] == [5, 9, 13]
    assert s.first_index_at_or_after(5) == 1


def test_explicit_schedule_collapses_duplicates():
    s = ResetSchedule.explicit([2, 2, 5])
    assert s.times == (2, 5) and s.min_gap == 3
    assert s.reset_time(3) is None
    with pytest.raises(ValueError):
        ResetSchedule.explicit([4, 2])
    with pytest.raises(ValueError):
        ResetSchedule.explicit([0])


def test_never_schedule():
    s = ResetSchedule.never()
    assert s.first is None and s.min_gap == math.inf and not s.is_reset(1)


def test_tau_star_is_first_reset_after_R():
    s = ResetSchedule.periodic(5)
    assert tau_star_for(s, 4) == 1   # colouring entering slot 5 is proper
    assert tau_star_for(s, 5) == 2
    assert tau_star_for(s, None) is None


@pytest.mark.parametrize("D, b", [(0, 1.0), (3, 0.0), (3, 1.5)])
def test_config_validation(D, b):
    with pytest.raises(ValueError):
        EngineConfig(D, b, ResetSchedule.never())


def test_variants():
    g = k(10)
    c = make_config("simplified_fcfl", g, 10)
    assert c.schedule.period == 10 and c.b == 1.0
    assert make_config("learning_beb", g, 10).schedule.period == 1
    assert make_config("cfl", g, 10, b=0.3).b == 0.3
    assert make_config("motskin", g, 10).schedule.first is None
    for bad in (dict(variant="fcfl"), dict(variant="cfl"), dict(variant="aloha")):
        with pytest.raises(ValueError):
            make_config(bad["variant"], g, 10)


# -- single slots ---------------------------------------------------------------------------

def test_initial_state_is_uniform():
    e = Engine(k(3), cfg(3, 3))
    assert np.allclose(e.p, 1 / 3) and not e.m.any()


def test_single_colour_palette_is_deterministic():
    e = Engine(Graph(3, [(0, 1)]), cfg(1, 2))
    for _ in range(4):
        e.step()
        assert (e.colours == 1).all()


def test_isolated_vertex_settles_in_slot_one():
    e = Engine(Graph(1), cfg(2, 2))
    out = e.step()
    assert out.proper and e.m.all()
    res, _ = Engine(Graph(1), cfg(2, 2)).run_until_proper()
    assert res.R == 1


def test_edgeless_graph_all_permanent_after_one_slot():
    for seed in range(20):
        e = Engine(Graph(2), cfg(2, 2, seed=seed))
        e.step()
        assert e.m.all()


def test_k2_both_permanent_half_the_time():
    # enumeration: 2 of the 4 equally likely draw pairs differ
    exact = sum(a != b for a, b in itertools.product(range(2), repeat=2)) / 4
    runs = 4000
    hits = 0
    for seed in range(runs):
        e = Engine(k(2), cfg(2, 2, seed=seed))
        e.step()
        hits += bool(e.m.all())
    assert abs(hits / runs - exact) < 3 * math.sqrt(exact * (1 - exact) / runs)


def test_k2_converges_within_four_slots_often():
    runs = 2000
    ok = sum(Engine(k(2), cfg(2, 2, seed=s)).run_until_proper(4)[0].converged for s in range(runs))
    assert ok / runs >= 0.75 - 3 * math.sqrt(0.75 * 0.25 / runs)


def test_cold_start_convergence_and_tau_star():
    res, trace = Engine(k(10), make_config("simplified_fcfl", k(10), 10, 3)).run_until_proper()
    assert res.converged and trace.proper[-1] and not any(trace.proper[:-1])
    assert res.R == len(trace) and res.tau_star == -(-(res.R + 1) // 10)


def test_learning_beb_never_keeps_permanence_into_next_slot():
    g = build(GraphSpec.k_partite(3, 9))
    e = Engine(g, make_config("learning_beb", g, 4, 1))
    for _ in range(30):
        out = e.step()
        assert out.reset
        # every vertex competes again: the unsatisfied set is over all vertices
        assert out.Z == int(np.count_nonzero(out.unsatisfied))


def test_motskin_count_never_increases():
    g = build(GraphSpec.erdos_renyi(20, 0.3, seed=2))
    e = Engine(g, make_config("motskin", g, g.max_degree + 1, 5))
    z = [o.Z for o in e.run(200)]
    assert all(b <= a for a, b in zip(z, z[1:]))


def test_cfl_with_partial_learning_converges():
    g = build(GraphSpec.k_partite(4, 16))
    res, _ = Engine(g, make_config("cfl", g, g.max_degree + 1, 11, b=0.3)).run_until_proper(20000)
    assert res.converged


def test_same_seed_same_trace():
    g = build(GraphSpec.erdos_renyi(15, 0.4, seed=1))
    a = Engine(g, cfg(g.max_degree + 1, 5, seed=9)).run_until_proper()[1]
    b = Engine(g, cfg(g.max_degree + 1, 5, seed=9)).run_until_proper()[1]
    assert a.Z == b.Z and a.proper == b.proper


def test_trace_jsonl():
    e = Engine(k(4), cfg(4, 4, seed=2), dump_every=1)
    e.run_until_proper()
    buf = io.StringIO()
    e.trace.to_jsonl(buf)
    recs = [json.loads(x) for x in buf.getvalue().splitlines()]
    assert [r["t"] for r in recs] == list(range(1, len(recs) + 1))
    assert recs[-1]["proper"] and sorted(recs[-1]["colours"]) == [1, 2, 3, 4]


def test_start_colouring_validation():
    with pytest.raises(ValueError):
        Engine(k(3), cfg(3, 3), start=[1, 2])
    with pytest.raises(ValueError):
        Engine(k(3), cfg(3, 3), start=[1, 2, 4])


def test_invariant_violation_is_raised():
    e = Engine(k(3), cfg(3, 3))
    e.step()
    e.p[0] = [0.5, 0.5, 0.5]
    with pytest.raises(InvariantViolation):
        e.step()


# -- perturbations and topology changes ---------------------------------------------------------

def converged_engine(g, D, seed):
    e = Engine(g, make_config("simplified_fcfl", g, D, seed))
    assert e.run_until_proper()[0].converged
    return e


def test_perturbed_count():
    assert perturbed_count(0.02, 60) == 2
    assert perturbed_count(0.1, 30) == 3
    assert perturbed_count(0.0, 60) == 0


def test_zero_fraction_leaves_state_alone():
    e = converged_engine(k(6), 6, 0)
    before = e.colours.copy()
    assert e.perturb_colours(0.0, 1).size == 0
    assert (e.colours == before).all()


def test_two_percent_of_sixty():
    g = build(GraphSpec.thinned(GraphSpec.complete(60), 0.2, seed=1))
    e = converged_engine(g, g.max_degree + 1, 1)
    assert e.perturb_colours(0.02, 5).size == 2


def test_perturb_requires_proper_colouring():
    e = Engine(k(4), cfg(4, 4))
    e.step()
    e.colour[:] = 0
    with pytest.raises(ValueError):
        e.perturb_colours(0.5, 1)


@pytest.mark.parametrize("N, D", [(3, 3), (4, 5), (5, 6)])
def test_probability_still_proper_after_one_recolouring(N, D):
    # enumeration oracle: the chosen vertex takes each of the D colours equally often;
    # exactly the colours unused by the other N-1 vertices keep K_N proper
    base = np.arange(N)
    good = 0
    for v, c in itertools.product(range(N), range(D)):
        col = base.copy()
        col[v] = c
        good += len(set(col.tolist())) == N
    exact = good / (N * D)
    runs = 3000
    e0 = converged_engine(k(N), D, 0)
    hits = 0
    for s in range(runs):
        e = Engine(k(N), e0.cfg, start=e0.colours)
        e.perturb_colours(1 / N, s)
        hits += is_proper(e.g, e.colour)
    assert abs(hits / runs - exact) < 3 * math.sqrt(exact * (1 - exact) / runs)


def test_recovery_after_perturbation():
    g = build(GraphSpec.thinned(GraphSpec.complete(20), 0.2, seed=3))
    e = converged_engine(g, g.max_degree + 1, 4)
    e.perturb_colours(0.1, 8)
    assert e.run_until_proper()[0].converged


def test_replace_graph_adds_vertices():
    e = converged_engine(k(5), 7, 1)
    g2 = build(GraphSpec.complete(6))
    e.replace_graph(g2)
    assert e.n == 6 and not e.m[5]
    assert e.run_until_proper()[0].converged
    with pytest.raises(ValueError):
        e.replace_graph(k(3))


# -- properties -----------------------------------------------------------------------------------

@st.composite
def small_runs(draw):
    n = draw(st.integers(2, 9))
    pairs = list(itertools.combinations(range(n), 2))
    edges = draw(st.lists(st.sampled_from(pairs), unique=True, min_size=1))
    g = Graph(n, edges)
    D = g.max_degree + 1 + draw(st.integers(0, 2))
    M = draw(st.integers(g.max_degree + 1, g.max_degree + 4))
    b = draw(st.sampled_from([0.2, 0.5, 1.0]))
    return g, EngineConfig(D, b, ResetSchedule.periodic(M), draw(st.integers(0, 2**32)))


@settings(max_examples=60)
@given(small_runs())
def test_invariants_hold_on_every_slot(run):
    g, c = run
    e = Engine(g, c, check=True)
    for _ in range(150):
        out = e.step()
        # all permanent means proper
        if e.m.all():
            assert out.proper
        # permanent vertices keep an indicator vector
        rows = np.flatnonzero(e.m)
        assert np.all(e.p[rows, e.colour[rows]] == 1.0)


@settings(max_examples=40)
@given(small_runs())
def test_proper_colouring_is_absorbing(run):
    g, c = run
    e = Engine(g, c)
    res, _ = e.run_until_proper(5000)
    if res.converged:
        frozen = e.colours.copy()
        for _ in range(3 * c.schedule.period):
            assert e.step().proper
        assert (e.colours == frozen).all()


@settings(max_examples=40)
@given(small_runs())
def test_z_never_increases_between_resets(run):
    g, c = run
    e = Engine(g, c)
    prev = g.n
    for _ in range(100):
        out = e.step()
        if not out.reset:
            assert out.Z <= prev
        prev = out.Z
