"""Tabular independent Q-learning over private histories."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .occupancy import history_pool

SINK = -1


class TableTooLarge(MemoryError):
    pass


@dataclass
class IqlConfig:
    episodes: int = 100_000
    lr: float = 0.2                # initial learning rate
    lr_decay: float = 0.0          # lr_t = lr / (1 + lr_decay * episode)
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_episodes: int = 50_000
    seed: int = 0
    eval_every: int = 5_000
    max_entries: int = 5_000_000

    def __post_init__(self):
        if not 0.0 < self.lr <= 1.0:
            raise ValueError("lr must be in (0, 1]")
        if self.lr_decay < 0:
            raise ValueError("lr_decay must be nonnegative")
        for name in ("eps_start", "eps_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.episodes < 0 or self.eval_every < 1:
            raise ValueError("episodes must be >= 0 and eval_every >= 1")

    def epsilon(self, episode):
        frac = min(1.0, episode / max(self.eps_decay_episodes, 1))
        return self.eps_start + frac * (self.eps_end - self.eps_start)

    def rate(self, episode):
        return self.lr / (1.0 + self.lr_decay * episode)


def greedy_policies(Q):
    """Per-player dict history -> argmax action (first on ties)."""
    return [{h: int(np.argmax(q)) for h, q in Qi.items()} for Qi in Q]


def evaluate_policies(model, policies) -> float:
    """Exact value of per-player history-keyed policies.

    Histories missing from a player's table play action 0, and so do all of
    their extensions; such histories are collapsed into a sink so the
    propagation only tracks histories the tables know about.
    """
    pool = history_pool(model)
    n = model.n_players
    adiv = [math.prod(model.n_actions[i + 1:]) for i in range(n)]
    zdiv = [math.prod(model.n_obs[i + 1:]) for i in range(n)]
    dist = defaultdict(float)
    for x in np.nonzero(model.initial_belief > 0)[0]:
        dist[(int(x), (0,) * n)] += float(model.initial_belief[x])
    total, disc = 0.0, 1.0
    for _ in range(model.horizon):
        nxt = defaultdict(float)
        for (x, hs), p in dist.items():
            u = [policies[i].get(h, 0) if h != SINK else 0 for i, h in enumerate(hs)]
            ju = model.joint_action_index(u)
            total += disc * p * float(model.reward[x, ju])
            ys, zs, ps = model.outcomes(x, ju)
            for y, jz, q in zip(ys, zs, ps):
                h2 = []
                for i, h in enumerate(hs):
                    if h == SINK:
                        h2.append(SINK)
                        continue
                    c = pool.children[i].get((h, ju // adiv[i], int(jz) // zdiv[i]))
                    h2.append(c if c is not None and c in policies[i] else SINK)
                nxt[(int(y), tuple(h2))] += p * q
        dist = nxt
        disc *= model.discount
    return total


def iql_train(model, config: IqlConfig = None):
    """Independent epsilon-greedy Q-learning with a shared reward.

    Returns ``(policies, curve)`` where ``policies`` holds one dict per
    player mapping private-history id to action, and ``curve`` is a list of
    ``(episode, exact value of the greedy policies)``.  The last point is
    taken after the final episode.
    """
    config = config or IqlConfig()
    rng = np.random.default_rng(config.seed)
    pool = history_pool(model)
    n = model.n_players
    nA = model.n_actions
    Q = [dict() for _ in range(n)]
    entries = 0
    b0 = np.cumsum(model.initial_belief)
    gamma = model.discount
    curve = []
    for ep in range(config.episodes):
        eps = config.epsilon(ep)
        lr = config.rate(ep)
        x = int(min(np.searchsorted(b0, rng.random() * b0[-1], side="right"), len(b0) - 1))
        j = 0
        for t in range(model.horizon):
            ids = pool.proj[j]
            u = []
            for i in range(n):
                q = Q[i].get(ids[i])
                if q is None:
                    q = np.zeros(nA[i])
                    Q[i][ids[i]] = q
                    entries += nA[i]
                if rng.random() < eps:
                    u.append(int(rng.integers(nA[i])))
                else:
                    u.append(int(np.argmax(q)))
            if entries > config.max_entries:
                raise TableTooLarge(f"Q-tables exceed {config.max_entries} entries")
            ju = model.joint_action_index(u)
            r = float(model.reward[x, ju])
            ys, zs, ps = model.outcomes(x, ju)
            k = int(np.searchsorted(np.cumsum(ps), rng.random() * ps.sum(), side="right"))
            k = min(k, len(ps) - 1)
            x = int(ys[k])
            j2 = pool.extend(j, ju, int(zs[k]))
            last = t == model.horizon - 1
            ids2 = pool.proj[j2]
            for i in range(n):
                target = r
                if not last:
                    q2 = Q[i].get(ids2[i])
                    if q2 is not None:
                        target += gamma * float(q2.max())
                q = Q[i][ids[i]]
                q[u[i]] += lr * (target - q[u[i]])
            j = j2
        if (ep + 1) % config.eval_every == 0 and ep + 1 < config.episodes:
            curve.append((ep + 1, evaluate_policies(model, greedy_policies(Q))))
    pols = greedy_policies(Q)
    curve.append((config.episodes, evaluate_policies(model, pols)))
    return pols, curve
