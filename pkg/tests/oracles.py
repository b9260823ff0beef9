"""Reference computations that do not go through the hierarchical solver."""
from __future__ import annotations

import itertools
from collections import defaultdict

import numpy as np

from hispbvi.occupancy import (branch_probabilities, expected_reward, history_pool,
                               initial_occupancy, next_occupancy)


def all_rules(model, s):
    """Every joint decision rule on the histories of ``s``."""
    hists = [s.histories(i) for i in range(model.n_players)]
    per_player = []
    for i, hs in enumerate(hists):
        per_player.append([dict(zip(hs, acts)) for acts in
                           itertools.product(range(model.n_actions[i]), repeat=len(hs))])
    return itertools.product(*per_player)


def optimal_value(model, s=None, limit=5_000_000):
    """Exact optimum by exhaustive search over rules, branching on player 0's signal."""
    s = initial_occupancy(model) if s is None else s
    budget = [limit]

    def rec(s):
        if s.stage == model.horizon:
            return 0.0
        best = -np.inf
        for rule in all_rules(model, s):
            budget[0] -= 1
            if budget[0] < 0:
                raise RuntimeError("oracle enumeration limit hit")
            v = expected_reward(model, s, rule)
            if s.stage + 1 < model.horizon:
                probs = branch_probabilities(model, s, rule)
                for z, p in enumerate(probs):
                    if p > 0:
                        succ, _ = next_occupancy(model, s, rule, z)
                        v += model.discount * p * rec(succ)
            best = max(best, v)
        return best

    return rec(s)


def policy_value_by_trajectories(model, policy):
    """Value of ``policy(player, private action/obs sequence) -> action`` by full trajectory enumeration."""
    total = 0.0
    frontier = [(float(p), int(x), ((),) * model.n_players, 1.0)
                for x, p in enumerate(model.initial_belief) if p > 0]
    for t in range(model.horizon):
        nxt = []
        for p, x, hist, disc in frontier:
            u = tuple(policy(i, hist[i]) for i in range(model.n_players))
            ju = model.joint_action_index(u)
            total += p * disc * float(model.reward[x, ju])
            ys, zs, ps = model.outcomes(x, ju)
            for y, jz, q in zip(ys, zs, ps):
                z = model.joint_obs(int(jz))
                # player i sees its own and every subordinate's action/observation
                h2 = tuple(hist[i] + ((u[:i + 1], z[:i + 1]),) for i in range(model.n_players))
                nxt.append((p * q, int(y), h2, disc * model.discount))
        frontier = nxt
    return total


def random_occupancy(model, rng, steps, max_histories=20, drop=0.3):
    """Reachable occupancy after ``steps`` random rules and sampled public branches.

    Afterwards a random subset of joint histories is kept (at most
    ``max_histories``) and renormalised, which yields occupancy states that
    do not come from any single policy.
    """
    from hispbvi.occupancy import OccupancyState
    s = initial_occupancy(model)
    for _ in range(steps):
        rule = tuple({h: int(rng.integers(model.n_actions[i])) for h in s.histories(i)}
                     for i in range(model.n_players))
        probs = branch_probabilities(model, s, rule)
        z = int(rng.choice(len(probs), p=probs / probs.sum()))
        s, _ = next_occupancy(model, s, rule, z)
    hs = s.histories()
    keep = [h for h in hs if rng.random() > drop] or [hs[0]]
    if len(keep) > max_histories:
        keep = list(rng.choice(keep, size=max_histories, replace=False))
    keep = set(int(h) for h in keep)
    sup = {k: p * (0.5 + rng.random()) for k, p in s.support.items() if k[1] in keep}
    tot = sum(sup.values())
    return OccupancyState.from_dict(model, s.stage, {k: v / tot for k, v in sup.items()})


def reachable_occupancies(model, limit=200_000):
    """All occupancy states reachable at each stage under any rules and public branches."""
    from hispbvi.occupancy import initial_occupancy as init
    stages = [[init(model)]]
    seen = 0
    for t in range(model.horizon - 1):
        nxt = {}
        for s in stages[-1]:
            for rule in all_rules(model, s):
                for z, p in enumerate(branch_probabilities(model, s, rule)):
                    if p > 0:
                        succ, _ = next_occupancy(model, s, rule, z)
                        key = tuple(sorted((k, round(v, 12)) for k, v in succ.support.items()))
                        nxt.setdefault(key, succ)
                        seen += 1
                        if seen > limit:
                            raise RuntimeError("too many reachable occupancy states")
        stages.append(list(nxt.values()))
    return stages
