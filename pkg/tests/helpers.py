"""Shared scenario builders for the test suite."""
import random

from gridrts.engine import MOVE, PRODUCE, MapSpec, MapUnit, legal_commands, new_game, step


def empty_map(w, h, units=(), stockpiles=(5, 5)):
    """MapSpec from (type_id, owner, x, y[, amount]) tuples."""
    mus = [MapUnit(*u) if len(u) == 5 else MapUnit(*u, 0) for u in units]
    return MapSpec(w, h, mus, list(stockpiles), "test")


def random_commands(s, player, rng):
    """Uniform legal commands for every idle unit, keeping budget and target cells consistent."""
    budget = s.resources[player]
    claimed = set()
    out = []
    for u in s.actionable_units(player):
        opts = []
        for c in legal_commands(s, u):
            if c.action_type == MOVE and s.nbr[c.source][c.move] in claimed:
                continue
            if c.action_type == PRODUCE and (s.utt[c.produce_type].cost > budget
                                       or s.nbr[c.source][c.produce_dir] in claimed):
                continue
            opts.append(c)
        c = opts[rng.randrange(len(opts))]
        if c.action_type == MOVE:
            claimed.add(s.nbr[c.source][c.move])
        elif c.action_type == PRODUCE:
            claimed.add(s.nbr[c.source][c.produce_dir])
            budget -= s.utt[c.produce_type].cost
        out.append(c)
    return out


def random_reachable_states(map_spec, count, seed=0, max_ticks=600):
    """States sampled along random-play trajectories."""
    rng = random.Random(seed)
    states = []
    game = 0
    while len(states) < count:
        s = new_game(map_spec, seed=seed + game, max_ticks=max_ticks)
        game += 1
        while not s.done and len(states) < count:
            step(s, random_commands(s, 0, rng), random_commands(s, 1, rng))
            if not s.done and rng.random() < 0.2:
                states.append(s.clone())
    return states
