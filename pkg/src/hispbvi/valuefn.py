"""Linear value functions under fixed continuation policies.

An :class:`AlphaVector` is a lazily evaluated linear function over
(state, joint history).  It stores a stage decision rule for every player and
the next-stage vectors to continue with, one per public (player-0)
observation.  Decision rules are keyed on history features rather than raw
history ids, which makes them total: a history the rule was never built on
is served by the entry with the nearest features.  Because features evolve
as a Markov filter, the value of a history depends on it only through its
feature tuple, so memoisation is over (state, feature tuple) and stays small.
"""
from __future__ import annotations

import numpy as np

from .occupancy import OccupancyState, history_pool, joint_actions_on


class DecisionRule(dict):
    """Private decision rule of one player: history id -> action index."""

    def __init__(self, player: int, table=()):
        super().__init__(table)
        self.player = player

    def __repr__(self):
        return f"DecisionRule(player={self.player}, {dict.__repr__(self)})"


class FeatureRule:
    """Total private rule keyed on the feature ids of levels 0..i."""

    def __init__(self, model, player, keys, actions):
        self.model = model
        self.player = player
        self.table = {}
        order = []
        for k, a in zip(keys, actions):
            if k not in self.table:
                self.table[k] = int(a)
                order.append(k)
        self.keys = order
        self.actions = [self.table[k] for k in order]
        self.conflicts = sum(1 for k, a in zip(keys, actions) if self.table[k] != int(a))
        self._mat = None
        self._cache = {}

    def __call__(self, fkey) -> int:
        a = self.table.get(fkey)
        if a is not None:
            return a
        a = self._cache.get(fkey)
        if a is None:
            a = self._nearest(fkey)
            self._cache[fkey] = a
        return a

    def _vec(self, fkey):
        pool = history_pool(self.model)
        v = pool.vec_cache.get(fkey)
        if v is None:
            v = np.concatenate([pool.features[i].vectors[f] for i, f in enumerate(fkey)])
            pool.vec_cache[fkey] = v
        return v

    def _nearest(self, fkey):
        if self._mat is None:
            self._mat = np.array([self._vec(k) for k in self.keys])
        d = np.abs(self._mat - self._vec(fkey)).sum(axis=1)
        return self.actions[int(np.argmin(d))]


class AlphaVector:
    """alpha_tau(x, o) of a fixed stage rule followed by per-branch continuations."""

    _ids = 0

    def __init__(self, model, stage, rules=None, nexts=None, origin=None):
        self.model = model
        self.stage = stage
        self.rules = rules          # tuple of FeatureRule, None at the boundary
        self.nexts = nexts          # tuple over player-0 observations
        self.origin = origin        # free-form provenance (point index, etc.)
        self.memo = {}
        AlphaVector._ids += 1
        self.uid = AlphaVector._ids

    @classmethod
    def zero(cls, model, stage=None):
        return cls(model, model.horizon if stage is None else stage)

    @property
    def is_zero(self) -> bool:
        return self.rules is None

    @classmethod
    def from_rule(cls, model, s: OccupancyState, rule, nexts, origin=None):
        """Lift a history-keyed joint rule on ``s`` to a feature-keyed vector."""
        pool = history_pool(model)
        rules = []
        for i in range(model.n_players):
            keys, acts = [], []
            for h in s.histories(i):
                keys.append(_prefix_key(pool, i, h))
                acts.append(rule[i][h])
            rules.append(FeatureRule(model, i, keys, acts))
        if nexts is None:
            nexts = (cls.zero(model, s.stage + 1),) * model.n_obs[0]
        return cls(model, s.stage, tuple(rules), tuple(nexts), origin)

    def joint_action(self, fkey) -> int:
        ju = 0
        for i, r in enumerate(self.rules):
            ju = ju * self.model.n_actions[i] + r(fkey[:i + 1])
        return ju

    def value(self, x: int, fkey: tuple) -> float:
        if self.rules is None:
            return 0.0
        key = (x, fkey)
        v = self.memo.get(key)
        if v is not None:
            return v
        ju = self.joint_action(fkey)
        v = float(self.model.reward[x, ju]) + self.model.discount * continuation(
            self.model, self.nexts, x, fkey, ju)
        self.memo[key] = v
        return v

    def clear_memo(self):
        seen = set()
        stack = [self]
        while stack:
            a = stack.pop()
            if a.uid in seen:
                continue
            seen.add(a.uid)
            a.memo.clear()
            if a.nexts:
                stack.extend(a.nexts)

    def __repr__(self):
        return f"AlphaVector(stage={self.stage}, uid={self.uid}, origin={self.origin})"


def _prefix_key(pool, level, h):
    ids = [h]
    for lv in range(level, 0, -1):
        ids.append(pool.sub[lv][ids[-1]])
    ids.reverse()
    return tuple(pool.fid[lv][hid] for lv, hid in enumerate(ids))


def advance_key(model, fkey, ju, jz):
    pool = history_pool(model)
    key = (fkey, ju, jz)
    out = pool.adv_cache.get(key)
    if out is None:
        out = tuple(pool.features[i].advance(f, ju // pool.a_div[i], jz // pool.z_div[i])
                    for i, f in enumerate(fkey))
        pool.adv_cache[key] = out
    return out


def _outcome_list(model, x, ju):
    """Outcomes of (x, ju) as a list of (y, z, p) Python tuples."""
    cache = model.cache.setdefault("outcome_lists", {})
    row = cache.get((x, ju))
    if row is None:
        ys, zs, ps = model.outcomes(x, ju)
        row = list(zip(ys.tolist(), zs.tolist(), ps.tolist()))
        cache[(x, ju)] = row
    return row


def continuation(model, nexts, x, fkey, ju) -> float:
    """E[alpha_{tau+1}(y, o') | x, o, u] with the branch picked by player 0's signal."""
    if nexts is None:
        return 0.0
    pool = history_pool(model)
    zdiv = pool.z_div[0]
    adv = pool.adv_cache
    tot = 0.0
    for y, z, p in _outcome_list(model, x, ju):
        nxt = nexts[z // zdiv]
        if nxt.rules is not None:
            f2 = adv.get((fkey, ju, z))
            if f2 is None:
                f2 = advance_key(model, fkey, ju, z)
            v = nxt.memo.get((y, f2))
            tot += p * (v if v is not None else nxt.value(y, f2))
    return tot


class BetaVector:
    """beta_tau(x, o, u) = r(x, u) + gamma E[alpha_{tau+1}(y, (o, u, z))]."""

    def __init__(self, model, stage, nexts):
        self.model = model
        self.stage = stage
        if isinstance(nexts, AlphaVector):
            nexts = (nexts,) * model.n_obs[0]
        self.nexts = tuple(nexts)
        self.memo = {}

    @classmethod
    def immediate(cls, model, stage):
        return cls(model, stage, AlphaVector.zero(model, stage + 1))

    def value(self, x: int, fkey: tuple, ju: int) -> float:
        key = (x, fkey, ju)
        v = self.memo.get(key)
        if v is None:
            v = float(self.model.reward[x, ju]) + self.model.discount * continuation(
                self.model, self.nexts, x, fkey, ju)
            self.memo[key] = v
        return v

    def matrix(self, s: OccupancyState) -> np.ndarray:
        """beta over the support of ``s`` (rows) and joint actions (columns)."""
        pool = history_pool(self.model)
        JU = self.model.n_joint_actions
        out = np.empty((len(s), JU))
        rows = {}
        for k, (x, h) in enumerate(zip(s.xs, s.hs)):
            key = (int(x), pool.feature_key(int(h)))
            row = rows.get(key)
            if row is None:
                row = np.array([self.value(key[0], key[1], ju) for ju in range(JU)])
                rows[key] = row
            out[k] = row
        return out


def _as_index(model, x, o):
    if not isinstance(x, (int, np.integer)):
        x = model.state_index(x)
    return int(x), int(o)


def eval_beta(model, beta: BetaVector, x, o, u) -> float:
    x, o = _as_index(model, x, o)
    ju = u if isinstance(u, (int, np.integer)) else model.encode_action(u)
    return beta.value(x, history_pool(model).feature_key(o), int(ju))


def eval_alpha(model, alpha: AlphaVector, x, o) -> float:
    x, o = _as_index(model, x, o)
    return alpha.value(x, history_pool(model).feature_key(o))


def alpha_dot(model, s: OccupancyState, alpha: AlphaVector) -> float:
    if alpha.rules is None:
        return 0.0
    pool = history_pool(model)
    return float(sum(p * alpha.value(int(x), pool.feature_key(int(h)))
                     for x, h, p in zip(s.xs, s.hs, s.ps)))


def value_at(model, s: OccupancyState, V):
    """max over ``V`` of <s, alpha>; ties go to the earliest element."""
    V = list(V)
    if not V:
        raise ValueError("empty collection of alpha vectors")
    best, arg = -np.inf, None
    for a in V:
        if a.stage != s.stage and a.rules is not None:
            raise ValueError(f"alpha stage {a.stage} does not match occupancy stage {s.stage}")
        v = alpha_dot(model, s, a)
        if v > best:
            best, arg = v, a
    return best, arg


def q_value(model, s: OccupancyState, a, beta) -> float:
    """sum_{x,o} s(x,o) beta(x, o, a(o)).

    ``beta`` is a :class:`BetaVector` or any callable ``(x, o, ju) -> float``.
    """
    jus = joint_actions_on(model, s, a)
    if isinstance(beta, BetaVector):
        pool = history_pool(model)
        vals = [beta.value(int(x), pool.feature_key(int(h)), int(ju))
                for x, h, ju in zip(s.xs, s.hs, jus)]
    else:
        vals = [beta(int(x), int(h), int(ju)) for x, h, ju in zip(s.xs, s.hs, jus)]
    return float(np.dot(s.ps, vals))


def prune_dominated(model, V, points):
    """Drop vectors pointwise dominated on the support of ``points``.

    A vector is dropped if another one is >= on every (state, history) of the
    stage's points; among exact duplicates the earliest is kept.
    """
    V = list(V)
    if len(V) < 2 or not points:
        return V
    pool = history_pool(model)
    dom = sorted({(int(x), pool.feature_key(int(h))) for s in points for x, h in zip(s.xs, s.hs)})
    M = np.array([[a.value(x, f) for x, f in dom] for a in V])
    keep = []
    for i in range(len(V)):
        dominated = False
        for j in range(len(V)):
            if i == j:
                continue
            ge = (M[j] >= M[i] - 1e-12).all()
            if ge and ((M[j] > M[i] + 1e-12).any() or j < i):
                dominated = True
                break
        if not dominated:
            keep.append(V[i])
    return keep
