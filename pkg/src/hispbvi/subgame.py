"""Stage subgames: pick a joint decision rule maximising <s, beta>.

Two solvers are provided.  :func:`solve_enum` is the reference: it
enumerates every decision rule of the subordinate players and lets the top
player best-respond history by history (or, with ``full=True``, enumerates
the top player too).  :func:`solve_hierarchical` runs the backward/forward
pass over the hierarchy of private histories, where each player's choice is
a greedy maximisation given its subordinates' actions and the continuation
values of its superiors.  Nodes with identical nested beliefs can share a
single computation (``share=True``).

The nested-belief helpers at the bottom implement the recursive belief of a
player over its superiors' histories, with the observation predictor and
the Bayes update that go with it.
"""
from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field

import time

import numpy as np

from .occupancy import BELIEF_DECIMALS, OccupancyState, history_pool
from .valuefn import BetaVector, DecisionRule, _prefix_key

ENUM_GUARD = 10_000_000


class TooManyCandidates(RuntimeError):
    """Raised when brute-force enumeration would exceed the guard."""


class EnumTimeout(RuntimeError):
    """Raised when enumeration runs past its deadline."""


def _beta_rows(model, s, beta):
    if isinstance(beta, np.ndarray):
        if beta.shape != (len(s), model.n_joint_actions):
            raise ValueError(f"beta matrix shape {beta.shape} does not match support")
        return lambda k: beta[k]
    if isinstance(beta, BetaVector):
        pool = history_pool(model)
        JU = model.n_joint_actions
        cache = {}

        def row(k):
            key = (int(s.xs[k]), pool.feature_key(int(s.hs[k])))
            r = cache.get(key)
            if r is None:
                r = np.fromiter((beta.value(key[0], key[1], ju) for ju in range(JU)),
                                float, JU)
                cache[key] = r
            return r
        return row
    # generic callable (x, joint history, ju)
    JU = model.n_joint_actions
    return lambda k: np.array([beta(int(s.xs[k]), int(s.hs[k]), ju) for ju in range(JU)])


def _rules_from_table(model, s, table):
    return tuple(DecisionRule(i, {h: int(table[i][h]) for h in s.histories(i)})
                 for i in range(model.n_players))


def enum_candidates(model, s, full=False) -> int:
    n = model.n_players
    last = n if full else n - 1
    return math.prod(model.n_actions[i] ** len(s.histories(i)) for i in range(last))


def solve_enum(model, s: OccupancyState, beta, full=False, guard=ENUM_GUARD, deadline=None):
    """Exact maximiser of sum_{x,o} s(x,o) beta(x,o,a(o)) by enumeration.

    Candidates are scanned in lexicographic order of (player 0 actions per
    sorted history, player 1 ..., ...); the first maximiser wins.  Returns
    ``(joint rule, value)``.  ``deadline`` is a ``time.perf_counter`` value
    after which :class:`EnumTimeout` is raised.
    """
    if s.empty:
        raise ValueError("empty occupancy state")
    count = enum_candidates(model, s, full)
    if count > guard:
        raise TooManyCandidates(f"{count} candidate rules exceed the guard of {guard}")
    n = model.n_players
    pool = history_pool(model)
    rows = _beta_rows(model, s, beta)
    B = np.array([rows(k) for k in range(len(s))]) * s.ps[:, None]
    nA = model.n_actions
    top = n - 1
    last = n if full else top
    slots = [(i, h) for i in range(last) for h in s.histories(i)]
    pos = {sl: k for k, sl in enumerate(slots)}
    radix = [nA[i] for i, _ in slots]
    # per support entry: slot positions of its private histories
    entry_slots = np.array([[pos[(i, pool.proj[int(j)][i])] for i in range(last)]
                            for j in s.hs], dtype=np.int64).reshape(len(s), last)
    mult = np.array([math.prod(nA[i + 1:last]) for i in range(last)], dtype=np.int64)
    if full:
        Bp = B                                    # (K, JU)
    else:
        Bp = B.reshape(len(s), -1, nA[top])       # (K, prefix, U_top)
        tops = s.histories(top)
        tix = {h: g for g, h in enumerate(tops)}
        group = np.array([tix[pool.proj[int(j)][top]] for j in s.hs])
    K = len(s)
    kk = np.arange(K)
    best_v, best_c, best_top = -np.inf, None, None
    chunk = max(1, 200_000 // max(K, 1))
    it = itertools.product(*[range(r) for r in radix]) if radix else iter([()])
    while True:
        if deadline is not None and time.perf_counter() > deadline:
            raise EnumTimeout("enumeration ran past its deadline")
        block = list(itertools.islice(it, chunk))
        if not block:
            break
        A = np.array(block, dtype=np.int64).reshape(len(block), len(slots))
        if last:
            acts = A[:, entry_slots]                          # (C, K, last)
            ix = (acts * mult).sum(axis=2)                    # (C, K)
        else:
            ix = np.zeros((len(block), K), dtype=np.int64)
        if full:
            vals = Bp[kk[None, :], ix].sum(axis=1)
            tb = None
        else:
            contrib = Bp[kk[None, :], ix]                     # (C, K, U_top)
            G = np.zeros((len(block), len(tops), nA[top]))
            np.add.at(G, (slice(None), group), contrib)
            vals = G.max(axis=2).sum(axis=1)
            tb = G
        c = int(np.argmax(vals))
        if best_c is None or vals[c] > best_v:
            best_v, best_c = float(vals[c]), block[c]
            best_top = None if tb is None else tb[c].argmax(axis=1)
    table = [dict() for _ in range(n)]
    for (i, h), a in zip(slots, best_c):
        table[i][h] = a
    if not full:
        for g, h in enumerate(tops):
            table[top][h] = int(best_top[g])
    return _rules_from_table(model, s, table), best_v


# ---------------------------------------------------------------------------
# hierarchical backward / forward pass

@dataclass
class SolveStats:
    nodes: int = 0            # (history, subordinate actions) nodes visited
    computed: int = 0         # node tables actually computed
    shared: int = 0           # node tables served from the B1 table
    extra: dict = field(default_factory=dict)


def _structure(model, s):
    pool = history_pool(model)
    n = model.n_players
    entries = defaultdict(list)
    mass = defaultdict(float)
    for k, (j, p) in enumerate(zip(s.hs.tolist(), s.ps.tolist())):
        entries[j].append(k)
        mass[j] += p
    kid_sets = [defaultdict(set) for _ in range(n)]
    weight = [defaultdict(float) for _ in range(n)]
    for j, m in mass.items():
        ids = pool.proj[j]
        for i in range(n):
            weight[i][ids[i]] += m
            if i + 1 < n:
                kid_sets[i][ids[i]].add(ids[i + 1])
    kids = [defaultdict(list) for _ in range(n)]
    for i in range(n - 1):
        for h, cs in kid_sets[i].items():
            kids[i][h] = sorted(cs)
    return entries, kids, weight


def _r(p):
    return round(float(p), BELIEF_DECIMALS) + 0.0


def _share_keys(model, s, entries, kids, weight):
    """B1 keys per (level, history): prefix features plus canonical nested belief."""
    pool = history_pool(model)
    n = model.n_players
    top = n - 1
    nested = [dict() for _ in range(n)]
    for j, ks in entries.items():
        acc = defaultdict(float)
        for k in ks:
            acc[int(s.xs[k])] += float(s.ps[k])
        w = weight[top][j]
        nested[top][j] = (pool.fid[top][j], tuple(sorted((x, _r(p / w)) for x, p in acc.items())))
    for lv in range(n - 2, -1, -1):
        for h, cs in kids[lv].items():
            acc = defaultdict(float)
            for c in cs:
                acc[nested[lv + 1][c]] += weight[lv + 1][c] / weight[lv][h]
            nested[lv][h] = (pool.fid[lv][h], tuple(sorted((k, _r(p)) for k, p in acc.items())))
    keys = [dict() for _ in range(n)]
    for lv in range(n):
        for h, key in nested[lv].items():
            keys[lv][h] = (lv, _prefix_key(pool, lv, h)[:-1], key)
    return keys


def solve_hierarchical(model, s: OccupancyState, beta, share=False, stats=None):
    """Greedy backward induction over the hierarchy of private histories.

    Backward pass: the top player's table for a joint history is the
    conditional expectation of beta over its states, indexed by every
    prefix of actions; a level-i table sums its superiors' tables after
    maximising out the superior's own action.  Forward pass: each player,
    knowing its subordinates' actions, takes the first maximising action.
    Returns ``(joint rule, value)``.

    ``share=True`` reuses one table for histories with equal nested beliefs,
    which is only sound when beta sees a history through its features; a raw
    per-row matrix carries no such guarantee and is rejected.
    """
    if s.empty:
        raise ValueError("empty occupancy state")
    if share and isinstance(beta, np.ndarray):
        raise ValueError("belief sharing needs a feature-based beta, not a raw matrix")
    n = model.n_players
    nA = model.n_actions
    top = n - 1
    pool = history_pool(model)
    rows = _beta_rows(model, s, beta)
    entries, kids, weight = _structure(model, s)
    keys = _share_keys(model, s, entries, kids, weight) if share else None
    st = stats if stats is not None else SolveStats()
    tables = {}

    def key_of(lv, h):
        return keys[lv][h] if share else (lv, h)

    def table(lv, h):
        key = key_of(lv, h)
        t = tables.get(key)
        if t is not None:
            st.shared += 1
            return t
        st.computed += 1
        w = weight[lv][h]
        if lv == top:
            acc = np.zeros(model.n_joint_actions)
            for k in entries[h]:
                acc += (float(s.ps[k]) / w) * rows(k)
            t = acc.reshape(nA)
        else:
            t = None
            for c in kids[lv][h]:
                sub = table(lv + 1, c).max(axis=lv + 1) * (weight[lv + 1][c] / w)
                t = sub if t is None else t + sub
        tables[key] = t
        return t

    value = 0.0
    for h0 in sorted(weight[0]):
        value += weight[0][h0] * float(table(0, h0).max())

    # forward pass
    rule = [dict() for _ in range(n)]
    prefix = {}
    for h0 in sorted(weight[0]):
        a = int(np.argmax(table(0, h0)))
        rule[0][h0] = a
        prefix[(0, h0)] = (a,)
    for lv in range(1, n):
        for h in sorted(weight[lv]):
            u = prefix[(lv - 1, pool.sub[lv][h])]
            a = int(np.argmax(table(lv, h)[u]))
            rule[lv][h] = a
            prefix[(lv, h)] = u + (a,)
    st.nodes += sum(len(weight[lv]) * math.prod(nA[:lv]) for lv in range(n))
    return tuple(DecisionRule(i, rule[i]) for i in range(n)), value


def node_bound(model, s: OccupancyState) -> int:
    """Upper bound on the (history, subordinate actions) nodes of a subgame."""
    return sum(len(s.histories(lv)) * math.prod(model.n_actions[:lv])
               for lv in range(model.n_players))


# ---------------------------------------------------------------------------
# nested beliefs

class NestedBelief:
    """Player ``level``'s belief over its superiors' histories and beliefs.

    At the top level ``states`` maps hidden state -> probability.  Below it,
    ``children`` is a list of ``(probability, NestedBelief)`` where each child
    belongs to a history of the next player up.
    """

    def __init__(self, model, level, history, states=None, children=None, u_sub=()):
        self.model = model
        self.level = level
        self.history = history
        self.states = states
        self.children = children
        self.u_sub = tuple(u_sub)

    def canonical(self, ids=True):
        pool = history_pool(self.model)
        tag = self.history if ids else pool.fid[self.level][self.history]
        if self.states is not None:
            return (tag, tuple(sorted((x, _r(p)) for x, p in self.states.items() if p > 0)))
        acc = defaultdict(float)
        for p, c in self.children:
            acc[c.canonical(ids)] += p
        return (tag, tuple(sorted((k, _r(p)) for k, p in acc.items() if p > 0)))

    def distance(self, other) -> float:
        """Max abs difference between two beliefs over the same histories."""
        if self.states is not None:
            keys = set(self.states) | set(other.states)
            return max(abs(self.states.get(k, 0.0) - other.states.get(k, 0.0)) for k in keys)
        a = {c.history: (p, c) for p, c in self.children}
        b = {c.history: (p, c) for p, c in other.children}
        if set(a) != set(b):
            return math.inf
        return max(max(abs(a[h][0] - b[h][0]), a[h][1].distance(b[h][1])) for h in a)

    def __repr__(self):
        return f"NestedBelief(level={self.level}, history={self.history})"


def compute_nested_belief(model, s: OccupancyState, player, history, u_sub=()):
    """Nested belief of ``player`` at its private ``history`` by direct conditioning."""
    pool = history_pool(model)
    n = model.n_players
    top = n - 1
    mass = defaultdict(float)
    for x, j, p in zip(s.xs, s.hs, s.ps):
        if pool.proj[int(j)][player] == history:
            mass[(int(x), int(j))] += float(p)
    if not mass:
        raise KeyError(f"history {history} of player {player} has no mass in the occupancy")

    def build(lv, h, items):
        tot = sum(items.values())
        if lv == top:
            st = defaultdict(float)
            for (x, _), p in items.items():
                st[x] += p / tot
            return NestedBelief(model, lv, h, states=dict(st))
        by = defaultdict(dict)
        for (x, j), p in items.items():
            by[pool.proj[j][lv + 1]][(x, j)] = p
        ch = [(sum(d.values()) / tot, build(lv + 1, c, d)) for c, d in sorted(by.items())]
        return NestedBelief(model, lv, h, children=ch)

    b = build(player, history, mass)
    b.u_sub = tuple(u_sub)
    return b


def _act(rule, h):
    return int(rule(h)) if callable(rule) else int(rule[h])


def _joint_obs_dist(model, b, u_prefix, rules):
    """Distribution over joint observations implied by nested belief ``b``."""
    lv = b.level
    out = np.zeros(model.n_joint_obs)
    if b.states is not None:
        ju = 0
        for i, a in enumerate(u_prefix):
            ju = ju * model.n_actions[i] + int(a)
        for x, p in b.states.items():
            ys, zs, ps = model.outcomes(int(x), ju)
            np.add.at(out, zs, p * ps)
        return out
    rule = rules[0]
    for p, c in b.children:
        out += p * _joint_obs_dist(model, c, tuple(u_prefix) + (_act(rule, c.history),), rules[1:])
    return out


def _check_args(model, b, u_prefix, rules):
    if len(u_prefix) != b.level + 1:
        raise ValueError(f"expected actions of players 0..{b.level}, got {len(u_prefix)}")
    if len(rules) != model.n_players - 1 - b.level:
        raise ValueError(f"expected {model.n_players - 1 - b.level} superior rules, got {len(rules)}")


def predict_observation(model, b: NestedBelief, u_prefix, rules, effective=False):
    """Probability of each next observation of player ``b.level``.

    ``u_prefix`` holds the current actions of players 0..level and ``rules``
    the superiors' decision rules (level+1 .. n-1) keyed on their history ids.
    With ``effective=True`` the distribution is over the whole observation
    prefix z^0..z^level (mixed-radix index), which is what the player actually
    sees under hierarchical sharing.
    """
    _check_args(model, b, u_prefix, rules)
    pool = history_pool(model)
    d = _joint_obs_dist(model, b, u_prefix, rules)
    lv = b.level
    m = model.n_obs[lv] if not effective else math.prod(model.n_obs[:lv + 1])
    out = np.zeros(m)
    idx = np.arange(model.n_joint_obs) // pool.z_div[lv]
    if not effective:
        idx = idx % model.n_obs[lv]
    np.add.at(out, idx, d)
    return out


def update_nested_belief(model, b: NestedBelief, u_prefix, rules, z):
    """Bayes update of ``b`` after actions ``u_prefix`` and observation prefix ``z``.

    ``z`` is the tuple (z^0, ..., z^level) of observations the player sees, or
    its mixed-radix index.  Returns the nested belief attached to the
    extended private history.  Raises ``ValueError`` on a zero-probability
    observation.
    """
    _check_args(model, b, u_prefix, rules)
    pool = history_pool(model)
    lv = b.level
    if isinstance(z, (tuple, list)):
        jzp = 0
        for i, zi in enumerate(z):
            jzp = jzp * model.n_obs[i] + int(zi)
    else:
        jzp = int(z)
    out = _update(model, pool, b, tuple(int(a) for a in u_prefix), list(rules), jzp)
    if out is None:
        raise ValueError("observation has zero probability under the nested belief")
    return out


def _update(model, pool, b, u_prefix, rules, jzp):
    lv = b.level
    jup = 0
    for i, a in enumerate(u_prefix):
        jup = jup * model.n_actions[i] + a
    h2 = pool.extend_level(lv, b.history, jup, jzp)
    if b.states is not None:
        acc = defaultdict(float)
        for x, p in b.states.items():
            ys, zs, ps = model.outcomes(int(x), jup)
            for y, zz, q in zip(ys, zs, ps):
                if int(zz) == jzp:
                    acc[int(y)] += p * q
        tot = sum(acc.values())
        if tot <= 0.0:
            return None
        return NestedBelief(model, lv, h2, states={y: p / tot for y, p in acc.items()})
    rule, rest = rules[0], rules[1:]
    nz = model.n_obs[lv + 1]
    zdiv = pool.z_div[lv + 1]
    ch = []
    for p, c in b.children:
        u2 = u_prefix + (_act(rule, c.history),)
        d = _joint_obs_dist(model, c, u2, rest)
        sums = np.zeros(math.prod(model.n_obs[:lv + 2]))
        np.add.at(sums, np.arange(model.n_joint_obs) // zdiv, d)
        for zc in range(nz):
            q = p * sums[jzp * nz + zc]
            if q > 0.0:
                nc = _update(model, pool, c, u2, rest, jzp * nz + zc)
                if nc is not None:
                    ch.append((q, nc))
    tot = sum(q for q, _ in ch)
    if tot <= 0.0:
        return None
    return NestedBelief(model, lv, h2, children=[(q / tot, c) for q, c in ch])


def b1_lookup_key(model, b: NestedBelief, u_sub=()):
    """Lookup key under which beta-equivalent subgame nodes can share results.

    Two nodes get the same key when their owners' feature labels agree and
    their nested beliefs coincide after forgetting which exact superior
    histories carry each branch.  The feature labels are part of the key
    because continuation values are keyed on them.
    """
    pool = history_pool(model)
    return (b.level, _prefix_key(pool, b.level, b.history)[:-1], b.canonical(ids=False),
            tuple(int(a) for a in u_sub))
