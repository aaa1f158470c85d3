import random

import pytest
from hypothesis import given, settings, strategies as st

from gridrts.engine import (ATTACK, BARRACKS, BASE, HARVEST, HEAVY, LIGHT, MOVE, P1, P2, PRODUCE,
                            RANGED, RESOURCE, RETURN, WORKER, EventKind, GameError,
                            UnitActionCommand as Cmd, attack_index, attack_offset, default_utt,
                            is_valid_command, legal_commands, load_map, new_game, parse_map,
                            parse_utt, simulate_issue, state_hash, step, valid_unit_actions)
from helpers import empty_map, random_commands, random_reachable_states


def src(s, u):
    return u.x + u.y * s.w


# -- unit table and maps -------------------------------------------------------

def test_default_unit_table_matches_documented_stats():
    utt = default_utt()
    assert [u.name for u in utt] == ["resource", "base", "barracks", "worker", "light", "heavy", "ranged"]
    base, barracks, worker, light, heavy, ranged = utt[1:]
    assert (base.cost, base.max_hp, base.produce_time) == (10, 10, 250)
    assert (barracks.cost, barracks.max_hp, barracks.produce_time) == (5, 4, 200)
    assert (worker.cost, worker.max_hp, worker.attack_damage, worker.attack_range, worker.move_time,
            worker.harvest_time, worker.return_time, worker.produce_time, worker.harvest_amount) == \
        (1, 1, 1, 1, 10, 20, 10, 50, 1)
    assert (light.cost, light.max_hp, light.attack_damage, light.move_time, light.produce_time) == (2, 4, 2, 8, 80)
    assert (heavy.cost, heavy.max_hp, heavy.attack_damage, heavy.move_time, heavy.produce_time) == (2, 4, 4, 12, 120)
    assert (ranged.cost, ranged.max_hp, ranged.attack_range, ranged.produce_time) == (2, 1, 3, 100)
    assert all(u.attack_time == 5 for u in utt if u.can_attack)
    assert [u.name for u in utt if u.can_harvest] == ["worker"]
    assert utt[RESOURCE].produces == ()


def test_unit_table_rejects_zero_duration():
    text = "\n".join(l if not l.startswith("move_time = 10") else "move_time = 0"
                     for l in _utt_text().splitlines())
    with pytest.raises(GameError):
        new_game(load_map("basesWorkers8x8"), utt=parse_utt(text))


def _utt_text():
    from importlib import resources
    return resources.files("gridrts.data").joinpath("utt.ini").read_text()


def test_bases_workers_16_layout(map16):
    s = new_game(map16, seed=42)
    kinds = sorted((u.type, u.owner, u.x, u.y) for u in s.units.values())
    assert kinds == sorted([(RESOURCE, -1, 0, 0), (RESOURCE, -1, 0, 1), (RESOURCE, -1, 15, 14),
                            (RESOURCE, -1, 15, 15), (BASE, P1, 2, 2), (WORKER, P1, 1, 1),
                            (BASE, P2, 13, 13), (WORKER, P2, 14, 14)])
    assert s.tick == 0 and s.resources == [5, 5]
    assert all(u.carried == 25 for u in s.units.values() if u.type == RESOURCE)


def test_map_is_symmetric_under_rotation(map16):
    pos = {(u.type_id, u.owner, u.x, u.y) for u in map16.units}
    flipped = {(t, {P1: P2, P2: P1}.get(o, o), 15 - x, 15 - y) for t, o, x, y in pos}
    assert pos == flipped


def test_same_inputs_same_hash(map16):
    assert state_hash(new_game(map16, seed=42)) == state_hash(new_game(map16, seed=42))
    assert state_hash(new_game(map16, seed=42)) != state_hash(new_game(map16, seed=43))


@pytest.mark.parametrize("text", [
    "rtsmap v1\n3 3\nww.\n...\n...\n",        # fine, used as control below
])
def test_parse_map_control(text):
    assert len(parse_map(text).units) == 2


@pytest.mark.parametrize("text", [
    "rtsmap v2\n2 2\n..\n..\n",
    "rtsmap v1\n2 2\n..\n",
    "rtsmap v1\n2 2\n...\n..\n",
    "rtsmap v1\n2 2\n.x\n..\n",
    "rtsmap v1\n2 2\n.r\n..\nresource 0 0 3\n",
    "rtsmap v1\n2 2\n.r\n..\nstockpile 3 4\n",
])
def test_malformed_maps_raise(text):
    with pytest.raises(GameError):
        parse_map(text)


def test_overlapping_units_raise():
    with pytest.raises(GameError):
        new_game(empty_map(4, 4, [(WORKER, P1, 1, 1), (WORKER, P1, 1, 1)]))
    with pytest.raises(GameError):
        new_game(empty_map(4, 4, [(WORKER, P1, 4, 1)]))


def test_map_directives():
    spec = parse_map("rtsmap v1\n3 2\nr.w\n..W\nresource 0 0 7\nstockpile 2 9\n# comment\n")
    s = new_game(spec)
    assert s.unit_at(0, 0).carried == 7
    assert s.resources == [5, 9]


# -- oracle examples ----------------------------------------------------------

def test_worker_next_to_resource_can_harvest_west():
    s = new_game(empty_map(5, 5, [(RESOURCE, -1, 0, 1, 10), (WORKER, P1, 1, 1), (BASE, P2, 4, 4)]))
    w = s.unit_at(1, 1)
    assert Cmd(src(s, w), HARVEST, harvest=3) in valid_unit_actions(s, w.id)


def test_base_without_money_only_noop():
    s = new_game(empty_map(5, 5, [(BASE, P1, 2, 2), (BASE, P2, 4, 4)], stockpiles=(0, 0)))
    b = s.unit_at(2, 2)
    assert valid_unit_actions(s, b.id) == [Cmd(src(s, b))]


def test_light_adjacent_to_enemy_has_one_attack():
    s = new_game(empty_map(5, 5, [(LIGHT, P1, 2, 2), (WORKER, P2, 3, 2)]))
    lt = s.unit_at(2, 2)
    attacks = [c for c in valid_unit_actions(s, lt.id) if c.action_type == ATTACK]
    assert attacks == [Cmd(src(s, lt), ATTACK, attack_pos=25)]


def test_ranged_attack_range_is_circular():
    # (dx, dy) = (3, 1) is inside the 7x7 window but outside the circle of radius 3
    s = new_game(empty_map(7, 7, [(RANGED, P1, 3, 3), (WORKER, P2, 6, 4), (WORKER, P2, 3, 0)]))
    r = s.unit_at(3, 3)
    attacks = {c.attack_pos for c in valid_unit_actions(s, r.id) if c.action_type == ATTACK}
    assert attacks == {attack_index(0, -3)}


def test_attack_index_layout():
    assert attack_index(0, 0) == 24
    assert attack_index(1, 0) == 25
    assert attack_index(-3, -3) == 0 and attack_index(3, 3) == 48
    assert all(attack_index(*attack_offset(i)) == i for i in range(49))


def test_oracle_errors(map8):
    s = new_game(map8)
    res = next(u for u in s.units.values() if u.type == RESOURCE)
    with pytest.raises(GameError):
        valid_unit_actions(s, res.id)
    with pytest.raises(GameError):
        valid_unit_actions(s, 999)
    w = next(u for u in s.units.values() if u.type == WORKER and u.owner == P1)
    s2 = simulate_issue(s, w.id, Cmd(src(s, w)))
    with pytest.raises(GameError):
        valid_unit_actions(s2, w.id)


def test_fast_enumeration_matches_oracle(map16):
    for s in random_reachable_states(map16, 200, seed=5):
        for u in s.units.values():
            if u.owner >= 0 and u.busy is None:
                assert legal_commands(s, u) == valid_unit_actions(s, u.id)


# -- durative actions, events and resolution ---------------------------------

def test_move_resolves_after_move_time():
    s = new_game(empty_map(5, 5, [(WORKER, P1, 1, 1), (BASE, P2, 4, 4)]))
    w = s.unit_at(1, 1)
    step(s, [Cmd(src(s, w), MOVE, move=2)])
    for t in range(1, 10):
        assert (w.x, w.y) == (1, 1) and w.busy is not None, t
        step(s)
    assert (w.x, w.y) == (1, 2) and w.busy is None
    assert s.tick == 10


def test_noop_lasts_one_tick():
    s = new_game(empty_map(5, 5, [(WORKER, P1, 1, 1), (BASE, P2, 4, 4)]))
    w = s.unit_at(1, 1)
    s2 = simulate_issue(s, w.id, Cmd(src(s, w)))
    assert s2.units[w.id].busy.ticks_remaining == 1
    assert state_hash(s) != state_hash(s2)
    s2.units[w.id].busy = None
    assert state_hash(s) == state_hash(s2)
    step(s, [Cmd(src(s, w))])
    assert w.busy is None


def test_attack_event_at_issue_damage_after_attack_time():
    s = new_game(empty_map(5, 5, [(LIGHT, P1, 2, 2), (BASE, P2, 3, 2), (WORKER, P2, 4, 4)]))
    lt, base = s.unit_at(2, 2), s.unit_at(3, 2)
    res = step(s, [Cmd(src(s, lt), ATTACK, attack_pos=25)])
    assert [e.kind for e in res.events] == [EventKind.ATTACK_ISSUED]
    assert res.events[0].tick == 0
    for _ in range(3):
        assert not step(s).events
        assert base.hp == 10
    step(s)
    assert base.hp == 8


def test_simultaneous_attacks_kill_each_other():
    s = new_game(empty_map(4, 4, [(WORKER, P1, 1, 1), (WORKER, P2, 2, 1), (BASE, P1, 0, 3), (BASE, P2, 3, 3)]))
    a, b = s.unit_at(1, 1), s.unit_at(2, 1)
    step(s, [Cmd(src(s, a), ATTACK, attack_pos=attack_index(1, 0))],
         [Cmd(src(s, b), ATTACK, attack_pos=attack_index(-1, 0))])
    for _ in range(4):
        step(s)
    assert a.id not in s.units and b.id not in s.units


def test_attack_on_dead_target_misses():
    s = new_game(empty_map(5, 5, [(HEAVY, P1, 1, 1), (WORKER, P2, 2, 1), (BASE, P2, 4, 4)]))
    h, w = s.unit_at(1, 1), s.unit_at(2, 1)
    step(s, [Cmd(src(s, h), ATTACK, attack_pos=25)])
    w.hp = 0  # dies some other way before the swing lands
    s.units.pop(w.id)
    s.grid[src(s, w)] = None
    for _ in range(4):
        step(s)
    assert h.busy is None and not s.done


def test_contested_cell_lower_id_wins():
    s = new_game(empty_map(3, 3, [(WORKER, P1, 0, 1), (WORKER, P2, 2, 1), (BASE, P1, 0, 0), (BASE, P2, 2, 2)]))
    a, b = s.unit_at(0, 1), s.unit_at(2, 1)
    assert a.id < b.id
    step(s, [Cmd(src(s, a), MOVE, move=1)], [Cmd(src(s, b), MOVE, move=3)])
    for _ in range(9):
        step(s)
    assert (a.x, a.y) == (1, 1) and (b.x, b.y) == (2, 1)
    assert a.busy is None and b.busy is None


def test_produce_cost_at_issue_and_refund_when_blocked():
    s = new_game(empty_map(3, 3, [(BASE, P1, 1, 1), (WORKER, P1, 0, 0), (BASE, P2, 2, 2)]))
    base, w = s.unit_at(1, 1), s.unit_at(0, 0)
    res = step(s, [Cmd(src(s, base), PRODUCE, produce_dir=0, produce_type=WORKER)])
    assert s.resources[P1] == 4 and res.events[0].kind == EventKind.PRODUCE_WORKER
    # the reserved cell cannot be entered while the production is pending
    assert not is_valid_command(s, w, Cmd(src(s, w), MOVE, move=1))
    total = s.total_resources()
    for _ in range(49):
        step(s)
    new = s.unit_at(1, 0)
    assert new is not None and new.type == WORKER and s.total_resources() == total


def test_produce_refund_path():
    s = new_game(empty_map(3, 3, [(BASE, P1, 1, 1), (BASE, P2, 2, 2)]))
    base = s.unit_at(1, 1)
    step(s, [Cmd(src(s, base), PRODUCE, produce_dir=0, produce_type=WORKER)])
    s.add_unit(WORKER, P2, 1, 0)  # something appears in the target cell
    for _ in range(49):
        step(s)
    assert s.resources[P1] == 5 and s.unit_at(1, 0).owner == P2


def test_harvest_and_return_cycle():
    s = new_game(empty_map(4, 4, [(RESOURCE, -1, 0, 0, 2), (WORKER, P1, 1, 0), (BASE, P1, 1, 1),
                                  (BASE, P2, 3, 3)], stockpiles=(0, 0)))
    w = s.unit_at(1, 0)
    res = step(s, [Cmd(src(s, w), HARVEST, harvest=3)])
    assert [e.kind for e in res.events] == [EventKind.HARVEST]
    for _ in range(19):
        step(s)
    assert w.carried == 1 and s.unit_at(0, 0).carried == 1
    res = step(s, [Cmd(src(s, w), RETURN, ret=2)])
    assert [e.kind for e in res.events] == [EventKind.RETURN_RESOURCE]
    for _ in range(9):
        step(s)
    assert w.carried == 0 and s.resources[P1] == 1


def test_invalid_commands_dropped_and_counted(map8):
    s = new_game(map8)
    w = next(u for u in s.units.values() if u.type == WORKER and u.owner == P1)
    res = step(s, [Cmd(src(s, w), HARVEST, harvest=2), Cmd(999), Cmd(src(s, w)), Cmd(src(s, w))])
    assert res.dropped[P1] == 3 and res.dropped[P2] == 0


def test_overspending_is_dropped():
    s = new_game(empty_map(4, 4, [(BASE, P1, 1, 1), (WORKER, P1, 3, 0), (BASE, P2, 3, 3)], stockpiles=(10, 0)))
    base, w = s.unit_at(1, 1), s.unit_at(3, 0)
    res = step(s, [Cmd(src(s, w), PRODUCE, produce_dir=2, produce_type=BARRACKS),
                   Cmd(src(s, base), PRODUCE, produce_dir=0, produce_type=WORKER),
                   ])
    assert res.dropped == (0, 0) and s.resources[P1] == 4
    s = new_game(empty_map(4, 4, [(BASE, P1, 1, 1), (WORKER, P1, 3, 0), (BASE, P2, 3, 3)], stockpiles=(5, 0)))
    base, w = s.unit_at(1, 1), s.unit_at(3, 0)
    res = step(s, [Cmd(src(s, w), PRODUCE, produce_dir=2, produce_type=BARRACKS),
                   Cmd(src(s, base), PRODUCE, produce_dir=0, produce_type=WORKER)])
    assert res.dropped == (1, 0) and s.resources[P1] == 0


def test_noop_game_draws_at_max_ticks(map16):
    s = new_game(map16, max_ticks=2000)
    res = None
    while not s.done:
        res = step(s)
    assert s.tick == 2000 and s.winner == -1
    assert {(e.kind, e.player) for e in res.events} == {(EventKind.DRAW, P1), (EventKind.DRAW, P2)}
    with pytest.raises(GameError):
        step(s)


def test_elimination_win():
    s = new_game(empty_map(3, 1, [(LIGHT, P1, 0, 0), (WORKER, P2, 1, 0)]))
    lt = s.unit_at(0, 0)
    step(s, [Cmd(src(s, lt), ATTACK, attack_pos=25)])
    for _ in range(4):
        res = step(s)
    assert s.winner == P1
    assert {(e.kind, e.player) for e in res.events} == {(EventKind.WIN, P1), (EventKind.LOSS, P2)}


def test_simulate_issue_reserves_funds_and_cells():
    s = new_game(empty_map(5, 5, [(BASE, P1, 2, 2), (WORKER, P1, 0, 0), (WORKER, P1, 2, 0), (BASE, P2, 4, 4)],
                             stockpiles=(5, 5)))
    base, w1, w2 = s.unit_at(2, 2), s.unit_at(0, 0), s.unit_at(2, 0)
    build = Cmd(src(s, w1), PRODUCE, produce_dir=1, produce_type=BARRACKS)
    sim = simulate_issue(s, w1.id, build)
    assert s.units[w1.id].busy is None and s.resources[P1] == 5  # real state untouched
    assert not any(c.action_type == PRODUCE for c in valid_unit_actions(sim, base.id))
    # w2 moving west would enter the barracks site at (1, 0)
    assert Cmd(src(s, w2), MOVE, move=3) in valid_unit_actions(s, w2.id)
    assert Cmd(src(s, w2), MOVE, move=3) not in valid_unit_actions(sim, w2.id)
    with pytest.raises(GameError):
        simulate_issue(s, w1.id, Cmd(src(s, w1), HARVEST))


def test_state_hash_clone_and_tick(map16):
    s = new_game(map16)
    assert state_hash(s) == state_hash(s.clone())
    t = s.clone()
    step(t)
    assert state_hash(s) != state_hash(t)


# -- properties ---------------------------------------------------------------

def _play(map_spec, seed, ticks):
    rng = random.Random(seed)
    s = new_game(map_spec, seed=seed, max_ticks=ticks)
    events = []
    while not s.done:
        res = step(s, random_commands(s, P1, rng), random_commands(s, P2, rng))
        events += res.events
    return s, events


def test_replay_determinism(map16):
    a, ea = _play(map16, 11, 2000)
    b, eb = _play(map16, 11, 2000)
    assert state_hash(a) == state_hash(b) and ea == eb


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_invariants_along_random_play(seed):
    map_spec = load_map("basesWorkers8x8")
    rng = random.Random(seed)
    s = new_game(map_spec, seed=seed, max_ticks=400)
    total = s.total_resources()
    last_tick = -1
    while not s.done:
        res = step(s, random_commands(s, P1, rng), random_commands(s, P2, rng))
        assert res.dropped == (0, 0)
        assert s.tick > last_tick
        last_tick = s.tick
        assert s.total_resources() == total
        cells = [(u.x, u.y) for u in s.units.values()]
        assert len(cells) == len(set(cells))
        assert all(0 < u.hp <= s.utt[u.type].max_hp or u.type == RESOURCE for u in s.units.values())
        assert all(v >= 0 for v in s.resources)
        for cell, u in enumerate(s.grid):
            assert u is None or (u.x + u.y * s.w == cell and s.units[u.id] is u)
    assert s.tick <= 400


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6), pick=st.integers(0, 10 ** 6))
def test_step_accepts_exactly_the_oracle(seed, pick):
    """A single command is accepted by step iff the oracle lists it."""
    states = random_reachable_states(load_map("basesWorkers8x8"), 1, seed=seed)
    s = states[0]
    units = s.actionable_units(P1) or s.actionable_units(P2)
    if not units:
        return
    u = units[pick % len(units)]
    r = random.Random(pick)
    cand = Cmd(src(s, u), r.randrange(6), r.randrange(4), r.randrange(4), r.randrange(4), r.randrange(4),
               r.randrange(7), r.randrange(49)).canonical()
    ok = cand in valid_unit_actions(s, u.id)
    t = s.clone()
    res = step(t, [cand] if u.owner == P1 else [], [cand] if u.owner == P2 else [])
    assert (res.dropped[u.owner] == 0) == ok
