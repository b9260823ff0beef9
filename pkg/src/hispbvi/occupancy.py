"""Occupancy states over (hidden state, joint history) and history bookkeeping.

Histories are interned per model in a :class:`HistoryPool`.  A joint history
is a level-(n-1) id; its projection on players 0..i is a level-i id, which is
exactly player i's private history under hierarchical sharing.  Each private
history also carries a *feature*: a state filter computed from the history
alone (for the top player it is the exact belief, for lower players the
actions of superiors are marginalised uniformly).  Features are interned with
a 1e-4 rounding (configurable per model) and give histories from different occupancy states a common
vocabulary, which is what the value functions key their decision rules on.
"""
from __future__ import annotations

import math
from collections import defaultdict

import numpy as np

from .model import DecPomdpModel

BELIEF_DECIMALS = 8   # posterior rounding for equivalence keys
FEATURE_DECIMALS = 4  # rounding that decides when two history features coincide


class HistoryPool:
    def __init__(self, model: DecPomdpModel):
        self.model = model
        n = model.n_players
        self.n = n
        self.parent = [[-1] for _ in range(n)]
        self.step = [[None] for _ in range(n)]
        self.length = [[0] for _ in range(n)]
        self.children = [dict() for _ in range(n)]
        self.proj = [(0,) * n]          # joint id -> ids of every level
        self.sub = [[0 if i else -1] for i in range(n)]  # level-i id -> level-(i-1) id
        # mixed-radix divisors to cut a joint index down to players 0..i
        self.a_div = [math.prod(model.n_actions[i + 1:]) for i in range(n)]
        self.z_div = [math.prod(model.n_obs[i + 1:]) for i in range(n)]
        decimals = model.cache.get("feature_decimals", FEATURE_DECIMALS)
        self.features = [FeatureTable(model, i, decimals) for i in range(n)]
        self.fid = [[self.features[i].root] for i in range(n)]
        self.adv_cache = {}  # (feature tuple, ju, jz) -> successor feature tuple
        self.vec_cache = {}  # feature-id prefix -> concatenated feature vectors

    def extend_level(self, level: int, h: int, jup: int, jzp: int) -> int:
        """Level-``level`` history ``h`` followed by prefix action/observation."""
        key = (h, jup, jzp)
        c = self.children[level].get(key)
        if c is None:
            c = len(self.parent[level])
            self.children[level][key] = c
            self.parent[level].append(h)
            self.step[level].append((jup, jzp))
            self.length[level].append(self.length[level][h] + 1)
            if level:
                sub = self.extend_level(level - 1, self.sub[level][h],
                                        jup // self.model.n_actions[level],
                                        jzp // self.model.n_obs[level])
            else:
                sub = -1
            self.sub[level].append(sub)
            self.fid[level].append(self.features[level].advance(self.fid[level][h], jup, jzp))
            if level == self.n - 1:
                ids = [c]
                for lv in range(level, 0, -1):
                    ids.append(self.sub[lv][ids[-1]])
                self.proj.append(tuple(reversed(ids)))
        return c

    def extend(self, j: int, ju: int, jz: int) -> int:
        """Joint history ``j`` followed by joint action ``ju`` and observation ``jz``."""
        return self.extend_level(self.n - 1, j, ju, jz)

    def feature_key(self, j: int) -> tuple:
        """Feature ids of every level of joint history ``j``."""
        return tuple(self.fid[i][h] for i, h in enumerate(self.proj[j]))

    def sequence(self, level: int, h: int) -> list:
        """Private history as a list of ((u_0..u_i), (z_0..z_i)) steps."""
        out = []
        m = self.model
        while h > 0:
            jup, jzp = self.step[level][h]
            u = _decode(jup, m.n_actions[:level + 1])
            z = _decode(jzp, m.n_obs[:level + 1])
            out.append((u, z))
            h = self.parent[level][h]
        return out[::-1]

    def labelled(self, j: int) -> list:
        """Per-player sequences of (action label, observation label) pairs."""
        m = self.model
        steps = self.sequence(self.n - 1, j)
        return [[(m.actions[i][u[i]], m.observations[i][z[i]]) for u, z in steps]
                for i in range(self.n)]


def _decode(ix, radix):
    out = []
    for k in reversed(radix):
        ix, r = divmod(ix, k)
        out.append(r)
    return tuple(reversed(out))


class FeatureTable:
    """Interned history-intrinsic state filters for one level of the hierarchy."""

    def __init__(self, model: DecPomdpModel, level: int, decimals: int = BELIEF_DECIMALS):
        self.model = model
        self.level = level
        self.decimals = decimals
        self.vectors = []
        self.index = {}
        self._next = {}
        self._marg = {}  # (x, jup) -> {observation prefix: (next states, probabilities)}
        self.n_sup = math.prod(model.n_actions[level + 1:])
        self.z_div = math.prod(model.n_obs[level + 1:])
        self.root = self.intern(model.initial_belief)

    def intern(self, v) -> int:
        v = np.asarray(v, dtype=float)
        key = tuple(np.round(v, self.decimals) + 0.0)
        f = self.index.get(key)
        if f is None:
            f = len(self.vectors)
            self.index[key] = f
            self.vectors.append(v)
        return f

    def advance(self, f: int, jup: int, jzp: int) -> int:
        key = (f, jup, jzp)
        g = self._next.get(key)
        if g is None:
            g = self.intern(self._filter(self.vectors[f], jup, jzp))
            self._next[key] = g
        return g

    def _marginal(self, x, jup):
        """Outcomes of (x, jup) averaged over superiors, grouped by observation prefix."""
        key = (x, jup)
        d = self._marg.get(key)
        if d is None:
            m = self.model
            w = 1.0 / self.n_sup
            acc = defaultdict(float)
            for sup in range(self.n_sup):
                ys, zs, ps = m.outcomes(x, jup * self.n_sup + sup)
                for y, z, p in zip(ys.tolist(), (zs // self.z_div).tolist(), ps.tolist()):
                    acc[(z, y)] += w * p
            grouped = defaultdict(lambda: ([], []))
            for (zp, y), p in sorted(acc.items()):
                grouped[zp][0].append(y)
                grouped[zp][1].append(p)
            d = {zp: (np.array(ys, dtype=np.int64), np.array(ps)) for zp, (ys, ps) in grouped.items()}
            self._marg[key] = d
        return d

    def _filter(self, b, jup, jzp):
        out = np.zeros(self.model.n_states)
        for x in np.nonzero(b > 0)[0].tolist():
            hit = self._marginal(x, jup).get(jzp)
            if hit is not None:
                out[hit[0]] += b[x] * hit[1]
        tot = out.sum()
        if tot <= 0.0:
            return b
        return out / tot


def history_pool(model: DecPomdpModel) -> HistoryPool:
    pool = model.cache.get("pool")
    if pool is None:
        pool = HistoryPool(model)
        model.cache["pool"] = pool
    return pool


class OccupancyState:
    """Sparse distribution over (state, joint history id) at a given stage."""

    __slots__ = ("model", "stage", "xs", "hs", "ps", "_memo")

    def __init__(self, model, stage, xs, hs, ps):
        self.model = model
        self.stage = stage
        self.xs = np.asarray(xs, dtype=np.int64)
        self.hs = np.asarray(hs, dtype=np.int64)
        self.ps = np.asarray(ps, dtype=float)
        self._memo = {}

    @classmethod
    def from_dict(cls, model, stage, support: dict):
        items = sorted((k, p) for k, p in support.items() if p > 0.0)
        return cls(model, stage, [k[0] for k, _ in items], [k[1] for k, _ in items],
                   [p for _, p in items])

    @property
    def support(self) -> dict:
        d = self._memo.get("support")
        if d is None:
            d = {(int(x), int(h)): float(p) for x, h, p in zip(self.xs, self.hs, self.ps)}
            self._memo["support"] = d
        return d

    @property
    def empty(self) -> bool:
        return len(self.ps) == 0

    def __len__(self):
        return len(self.ps)

    def total(self) -> float:
        return float(self.ps.sum())

    def histories(self, level=None) -> list:
        """Sorted distinct history ids of ``level`` (default: joint)."""
        pool = history_pool(self.model)
        level = self.model.n_players - 1 if level is None else level
        key = ("hist", level)
        out = self._memo.get(key)
        if out is None:
            out = sorted({pool.proj[int(h)][level] for h in self.hs})
            self._memo[key] = out
        return out

    def __repr__(self):
        return f"OccupancyState(stage={self.stage}, support={len(self)})"


def initial_occupancy(model: DecPomdpModel) -> OccupancyState:
    b0 = model.initial_belief
    xs = np.nonzero(b0 > 0)[0]
    return OccupancyState(model, 0, xs, np.zeros(len(xs), dtype=np.int64), b0[xs])


class RuleError(ValueError):
    pass


def joint_actions_on(model, s: OccupancyState, rule) -> np.ndarray:
    """Joint action index prescribed by ``rule`` for every support entry."""
    pool = history_pool(model)
    out = np.empty(len(s), dtype=np.int64)
    cache = {}
    for k, h in enumerate(s.hs):
        h = int(h)
        ju = cache.get(h)
        if ju is None:
            ju = 0
            for i, hi in enumerate(pool.proj[h]):
                try:
                    a = rule[i][hi]
                except KeyError:
                    raise RuleError(f"decision rule of player {i} undefined on history {hi}") from None
                ju = ju * model.n_actions[i] + int(a)
            cache[h] = ju
        out[k] = ju
    return out


def next_occupancy(model, s: OccupancyState, a, z1=None):
    """Successor occupancy after rule ``a`` and public observation ``z1``.

    Returns ``(successor, probability of z1)``.  ``z1=None`` keeps every branch
    (the unconditioned successor, probability 1).  A zero-probability branch
    returns an empty state and 0.
    """
    pool = history_pool(model)
    if z1 is not None and not isinstance(z1, (int, np.integer)):
        z1 = model.obs_index(0, z1)
    zdiv = pool.z_div[0]
    jus = joint_actions_on(model, s, a)
    acc = defaultdict(float)
    for x, h, p, ju in zip(s.xs, s.hs, s.ps, jus):
        ys, zs, ps = model.outcomes(int(x), int(ju))
        if z1 is not None:
            keep = zs // zdiv == z1
            ys, zs, ps = ys[keep], zs[keep], ps[keep]
        for y, z, q in zip(ys, zs, ps):
            acc[(int(y), pool.extend(int(h), int(ju), int(z)))] += p * q
    total = sum(acc.values())
    if total <= 0.0:
        return OccupancyState(model, s.stage + 1, [], [], []), 0.0
    base = s.total()
    succ = OccupancyState.from_dict(model, s.stage + 1, {k: v / total for k, v in acc.items()})
    return succ, total / base


def branch_probabilities(model, s: OccupancyState, a) -> np.ndarray:
    """Pr(z1 | s, a) for every player-0 observation."""
    pool = history_pool(model)
    zdiv = pool.z_div[0]
    out = np.zeros(model.n_obs[0])
    jus = joint_actions_on(model, s, a)
    for x, p, ju in zip(s.xs, s.ps, jus):
        ys, zs, ps = model.outcomes(int(x), int(ju))
        np.add.at(out, zs // zdiv, p * ps)
    return out / s.total()


def expected_reward(model, s: OccupancyState, a) -> float:
    jus = joint_actions_on(model, s, a)
    return float(np.dot(s.ps, model.reward[s.xs, jus]))


def occupancy_distance(s1: OccupancyState, s2: OccupancyState, key=None) -> float:
    """L1 distance; histories matched by ``key(x, h)`` (default: identical ids)."""
    if s1.stage != s2.stage:
        raise ValueError(f"stage mismatch: {s1.stage} vs {s2.stage}")
    d1 = _keyed(s1, key)
    d2 = _keyed(s2, key)
    return float(sum(abs(d1.get(k, 0.0) - d2.get(k, 0.0)) for k in d1.keys() | d2.keys()))


def _keyed(s, key):
    if key is None:
        return s.support
    memo = s._memo.get("keyed")
    if memo is not None and memo[0] is key:
        return memo[1]
    out = defaultdict(float)
    for (x, h), p in s.support.items():
        out[key(x, h)] += p
    s._memo["keyed"] = (key, out)
    return out


def feature_key(model):
    """Matching key (state, feature ids) used to compare points across runs."""
    fn = model.cache.get("feature_key_fn")
    if fn is None:
        pool = history_pool(model)
        fn = model.cache["feature_key_fn"] = lambda x, h: (x, pool.feature_key(h))
    return fn


# ---------------------------------------------------------------------------
# compression

class LabelMap:
    """Original history -> representative history, per level."""

    def __init__(self, maps):
        self.maps = maps  # list over levels of dicts

    @property
    def joint(self) -> dict:
        return self.maps[-1]

    def __getitem__(self, h):
        return self.maps[-1].get(h, h)

    def rep(self, level, h):
        return self.maps[level].get(h, h)

    def lift(self, rule):
        """Extend a joint rule on representatives to the original histories."""
        out = []
        for i, r in enumerate(rule):
            d = dict(r)
            for h, rep in self.maps[i].items():
                if rep in r:
                    d[h] = r[rep]
            out.append(d)
        return tuple(out)

    def is_identity(self) -> bool:
        return all(h == r for m in self.maps for h, r in m.items())


def _round(p):
    return round(float(p), BELIEF_DECIMALS) + 0.0


def cluster_histories(model, s: OccupancyState):
    """Merge histories with equal nested beliefs and subordinate histories.

    Works top-down from the last player.  Two private histories of player i
    are merged when they share the subordinate history, their own feature and
    the canonical form of their nested belief; the merged state keeps one
    representative per class.  Returns ``(compressed state, LabelMap)``.
    """
    pool = history_pool(model)
    n = model.n_players
    mass = defaultdict(float)
    for x, h, p in zip(s.xs, s.hs, s.ps):
        mass[(int(x), int(h))] += float(p)
    maps = [dict() for _ in range(n)]
    for j in {h for _, h in mass}:
        for i in range(n):
            maps[i][pool.proj[j][i]] = pool.proj[j][i]

    # level n-1: same subordinate history, same feature, same state posterior
    post = _state_posteriors(mass)
    groups = {}
    for j in sorted(maps[n - 1]):
        key = (pool.sub[n - 1][j] if n > 1 else -1, pool.fid[n - 1][j], post[j])
        rep = groups.setdefault(key, j)
        maps[n - 1][j] = rep
    _apply(mass, maps[n - 1])

    for level in range(n - 2, -1, -1):
        keys = _nested_keys(pool, mass, level)
        groups = {}
        remap = {}
        below = defaultdict(list)
        for _, j in mass:
            below[pool.proj[j][level]].append(j)
        for h in sorted({pool.proj[j][level] for _, j in mass}):
            key = (pool.sub[level][h], pool.fid[level][h], keys[level][h])
            rep = groups.setdefault(key, h)
            if rep != h:
                _match_subtree(pool, keys, below, level, h, rep, remap)
            maps[level][h] = rep
        if remap:
            _apply(mass, remap)
            for j, r in remap.items():
                maps[n - 1][j] = r
            for lv in range(level + 1, n - 1):
                for j, r in remap.items():
                    maps[lv][pool.proj[j][lv]] = pool.proj[r][lv]
    # compose joint maps so every original id points at its final representative
    for i in range(n):
        m = maps[i]
        for h in list(m):
            r = m[h]
            while m.get(r, r) != r:
                r = m[r]
            m[h] = r
    for j in list(maps[n - 1]):
        r = maps[n - 1][j]
        for i in range(n - 1):
            maps[i].setdefault(pool.proj[j][i], pool.proj[r][i])
    total = sum(mass.values())
    out = OccupancyState.from_dict(model, s.stage, {k: v / total for k, v in mass.items()})
    return out, LabelMap(maps)


def _apply(mass, remap):
    moved = [(k, v) for k, v in mass.items() if remap.get(k[1], k[1]) != k[1]]
    for (x, j), v in moved:
        del mass[(x, j)]
        mass[(x, remap[j])] += v


def _state_posteriors(mass):
    by_j = defaultdict(dict)
    for (x, j), p in mass.items():
        by_j[j][x] = p
    out = {}
    for j, d in by_j.items():
        tot = sum(d.values())
        out[j] = tuple(sorted((x, _round(p / tot)) for x, p in d.items()))
    return out


def _nested_keys(pool, mass, level):
    """Canonical nested-belief keys of every history at levels >= ``level``."""
    n = pool.n
    jm = defaultdict(float)
    for (x, j), p in mass.items():
        jm[j] += p
    post = _state_posteriors(mass)
    keys = {n - 1: {j: (pool.fid[n - 1][j], post[j]) for j in jm}}
    weight = {n - 1: dict(jm)}
    for lv in range(n - 2, level - 1, -1):
        w = defaultdict(float)
        kids = defaultdict(list)
        for c, p in weight[lv + 1].items():
            par = pool.sub[lv + 1][c]
            w[par] += p
            kids[par].append(c)
        kd = {}
        for h, cs in kids.items():
            acc = defaultdict(float)
            for c in cs:
                acc[keys[lv + 1][c]] += weight[lv + 1][c] / w[h]
            kd[h] = (pool.fid[lv][h], tuple(sorted((k, _round(p)) for k, p in acc.items())))
        keys[lv] = kd
        weight[lv] = dict(w)
    return keys


def _match_subtree(pool, keys, below, level, h, rep, remap):
    """Map joint histories under ``h`` onto equivalent ones under ``rep``.

    ``below`` lists the joint histories under each history of ``level``.
    """
    n = pool.n

    def cls(lv, node):
        return keys[lv][node] if lv < n - 1 else keys[n - 1][node]

    def walk(lv, a, b):
        if lv == n - 1:
            remap[a] = b
            return
        ca = {pool.proj[j][lv + 1] for j in below[h] if pool.proj[j][lv] == a}
        cb = {pool.proj[j][lv + 1] for j in below[rep] if pool.proj[j][lv] == b}
        by_key = {}
        for c in sorted(cb):
            by_key.setdefault(cls(lv + 1, c), c)
        for c in sorted(ca):
            walk(lv + 1, c, by_key[cls(lv + 1, c)])

    walk(level, h, rep)
