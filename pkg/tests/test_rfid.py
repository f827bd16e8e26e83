import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fcfl.engine import Engine, EngineConfig
from fcfl.graph import Graph, GraphSpec, build
from fcfl.rfid import (DFSA_BOUNDS, CollisionModel, SlotReader, TimingModel, _Superframes, dfsa_next,
                       fcfl_schedule, fig6_experiment, inventory_batch, run_bfsa, run_dfsa, run_fcfl_rfid)


def test_timing_model():
    assert TimingModel().ms(1000, 1000) == 7000.0
    assert TimingModel(2.0, 5.0).ms(3, 4) == 26.0


def test_collision_hits_match_pairwise_definition():
    for g in (build(GraphSpec.erdos_renyi(30, 0.2, seed=1)), build(GraphSpec.k_partite(4, 30))):
        m = CollisionModel(g)
        rng = np.random.default_rng(0)
        for _ in range(20):
            active = rng.random(g.n) < 0.6
            slot = rng.integers(0, 5, g.n)
            expect = [any(active[j] and slot[j] == slot[i] and m.interferes(i, j) for j in range(g.n))
                      for i in range(g.n)]
            assert m.hits(active, slot, 5).tolist() == expect


def test_single_tag_read_in_first_superframe():
    r = run_fcfl_rfid(CollisionModel.complete(1), 4, seed=3)
    assert r.complete and r.slots_first <= 4 and r.reads_first == 1


def engine_first_inventory(g, D, S_low, seed, cap=5000):
    """Superframe and slot of the last first read, from plain engine stepping."""
    e = Engine(g, EngineConfig(D, 1.0, fcfl_schedule(S_low), seed), check=False)
    seen = np.zeros(g.n, dtype=bool)
    adj = g.adjacency()
    for s in range(cap):
        if fcfl_schedule(S_low).is_reset(e.t):
            talking = np.ones(g.n, dtype=bool)
        else:
            talking = ~e.m
        e.step()
        read = [talking[i] and not any(talking[j] and e.colour[j] == e.colour[i] for j in adj[i])
                for i in range(g.n)]
        fresh = np.array(read) & ~seen
        seen |= np.array(read)
        if seen.all():
            return s, int(e.colour[fresh].max())
    return None


@pytest.mark.parametrize("spec", [GraphSpec.complete(25), GraphSpec.k_partite(3, 20),
                                  GraphSpec.erdos_renyi(20, 0.3, seed=2)], ids=lambda s: s.kind)
def test_first_inventory_matches_engine(spec):
    g = build(spec)
    D = g.max_degree + 1
    model = CollisionModel(g)
    for seed in range(15):
        r = run_fcfl_rfid(model, D, seed=seed, steady=False)
        s, pos = engine_first_inventory(g, D, g.max_degree + 1, seed)
        assert r.slots_first == s * D + pos + 1


@pytest.mark.parametrize("spec", [GraphSpec.complete(12), GraphSpec.k_partite(4, 30),
                                  GraphSpec.erdos_renyi(25, 0.3, seed=3)], ids=lambda s: s.kind)
@pytest.mark.parametrize("S_low", [1, 3, None])
def test_superframes_are_engine_slots(spec, S_low):
    g = build(spec)
    m = CollisionModel(g)
    D = g.max_degree + 1
    S = g.max_degree + 1 if S_low is None else S_low
    for seed in range(3):
        e = Engine(g, EngineConfig(D, 1.0, fcfl_schedule(S), seed))
        sf = _Superframes(m, D, S, seed)
        reader = SlotReader(m, D, S, seed)
        for _ in range(40):
            e.step()
            sf.step()
            reader.run_superframes(1)
            assert (e.colour == sf.slot).all() and (e.m == sf.flag_b).all()
            assert (reader.flagged() == e.m).all()


def test_reader_inventory_grows_and_slot_owners_are_compatible():
    g = build(GraphSpec.k_partite(3, 12))
    m = CollisionModel(g)
    reader = SlotReader(m, 9, 9, 4)
    size = 0
    for _ in range(30 * 9):
        reader.step()
        assert len(reader.reader.inventory) >= size
        size = len(reader.reader.inventory)
        for owners in reader.reader.slot_owner.values():
            assert not any(m.interferes(i, j) for i in owners for j in owners)


def test_legacy_tags_are_never_flagged():
    m = CollisionModel.complete(6)
    legacy = [True, True, False, False, False, False]
    reader = SlotReader(m, 8, 8, 1, legacy=legacy)
    reader.run_superframes(40)
    assert not reader.flagged()[:2].any()
    assert {0, 1} <= reader.reader.inventory


@settings(max_examples=20)
@given(st.integers(1, 12), st.integers(0, 2**32))
def test_steady_state_reads_every_tag_once_per_pass(n, seed):
    r = run_fcfl_rfid(CollisionModel.complete(n), n, seed=seed)
    assert r.complete
    assert r.slots_steady == n and r.reads_steady == n and r.steady_collisions == 0
    assert r.ms_steady == n * 7.0


def test_bfsa_single_tag():
    r = run_bfsa(CollisionModel.complete(1), 256, seed=0)
    # read in the first frame; the reader stops after one silent frame
    assert r.complete and len(r.collisions) == 1 and r.reads_first == 1
    assert r.slots_first == 2 * 256


def test_bfsa_uses_whole_frames():
    r = run_bfsa(CollisionModel.complete(50), 64, seed=5)
    assert r.slots_first % 64 == 0 and r.reads_first == 50


def test_dfsa_resize_rule():
    assert dfsa_next(256, 0) == 128
    assert dfsa_next(256, 256) == 512
    assert dfsa_next(256, 128) == 256
    assert dfsa_next(16, 0) == DFSA_BOUNDS[0] and dfsa_next(1024, 1024) == DFSA_BOUNDS[1]
    with pytest.raises(ValueError):
        run_dfsa(CollisionModel.complete(3), 0)


def test_dfsa_reads_everything():
    r = run_dfsa(CollisionModel.complete(200), 256, seed=2)
    assert r.complete and r.reads_first == 200


def test_batch_medians_are_seeded():
    a = inventory_batch("fcfl", "complete", 40, 10, 3)
    b = inventory_batch("fcfl", "complete", 40, 10, 3, jobs=2)
    assert a == b and a["median_slots_steady"] == 40
    with pytest.raises(ValueError):
        inventory_batch("edfsa", "complete", 10, 2, 1)
    with pytest.raises(ValueError):
        inventory_batch("fcfl", "ring", 10, 2, 1)


def test_fig6_rows():
    rows = fig6_experiment([60], runs=5, seed=1)
    (r,) = rows
    assert r["D"] == 60 - 5 + 1
    assert r["fcfl_ms_steady"] < r["aloha_ms_steady"]


def test_flag_every_read_variant():
    m = CollisionModel.complete(40)
    plain = run_fcfl_rfid(m, 40, seed=2, steady=False)
    loose = run_fcfl_rfid(m, 40, seed=2, steady=False, flag_every_read=True)
    assert loose.complete and loose.reads_first >= 40
    # identical until the first read lands in a slot a flagged tag holds
    assert loose.collisions[0] == plain.collisions[0]
