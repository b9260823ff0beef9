"""Point-based value iteration over occupancy states.

Each stage keeps a small set of reachable occupancy states (the points) and
a collection of alpha vectors.  ``improve`` sweeps the stages backwards and
adds one backed-up vector per point; ``expand`` grows the point sets by
simulating candidate decision rules forward from the existing points.
``solve`` alternates the two until the value at the initial occupancy stops
moving or the budget runs out.
"""
from __future__ import annotations

import logging
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .occupancy import (OccupancyState, branch_probabilities, cluster_histories,
                        feature_key, history_pool, initial_occupancy, next_occupancy,
                        occupancy_distance)
from .subgame import ENUM_GUARD, EnumTimeout, SolveStats, solve_enum, solve_hierarchical
from .valuefn import AlphaVector, BetaVector, advance_key, alpha_dot, value_at

log = logging.getLogger(__name__)

BACKUPS = ("enum", "hier")
COMPRESSIONS = ("none", "b1", "b1b2")


class BudgetExceeded(RuntimeError):
    """The wall-clock budget ran out in the middle of a computation."""


@dataclass
class SolverConfig:
    backup: str = "hier"
    compress: str = "b1b2"
    eps_add: float = 0.01
    points_cap: int = 64
    eps_conv: float = 1e-6
    budget_secs: float = 1800.0
    max_iters: int = 50
    seed: int = 0
    patience: int = 3            # iterations without value change before stopping
    candidates_per_point: int = 2
    refine_rounds: int = 2       # rule/continuation alternations inside a backup
    enum_guard: float = ENUM_GUARD
    max_support: int = 20_000    # larger successors are not kept as points

    def __post_init__(self):
        if self.backup not in BACKUPS:
            raise ValueError(f"backup must be one of {BACKUPS}, got {self.backup!r}")
        if self.compress not in COMPRESSIONS:
            raise ValueError(f"compress must be one of {COMPRESSIONS}, got {self.compress!r}")
        for name in ("eps_add", "eps_conv", "budget_secs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.points_cap < 1:
            raise ValueError("points_cap must be at least 1")
        if self.max_support < 1:
            raise ValueError("max_support must be at least 1")


class PointSet:
    """Per-stage lists of occupancy states, stage 0 holding only s0.

    Points are tagged as exploratory or on-policy.  A full stage still accepts
    an on-policy point by evicting its oldest exploratory point, so the
    current policy's own reachable states are never locked out by the cap.
    """

    def __init__(self, model, stages=None, tags=None):
        self.model = model
        if stages is None:
            stages = [[initial_occupancy(model)]] + [[] for _ in range(model.horizon - 1)]
        self.stages = stages
        self.tags = tags if tags is not None else [[True] * len(p) for p in stages]

    def __getitem__(self, t):
        return self.stages[t]

    def __len__(self):
        return len(self.stages)

    def sizes(self):
        return [len(p) for p in self.stages]

    def copy(self):
        return PointSet(self.model, [list(p) for p in self.stages], [list(g) for g in self.tags])

    def add(self, t, s, eps, cap, key=None, on_policy=False) -> bool:
        """Add ``s`` at stage ``t`` if it is farther than ``eps`` from every point."""
        if s.empty:
            return False
        key = key or feature_key(self.model)
        if not self.stages[t] and not math.inf > eps:
            return False  # distance to an empty set is infinite
        for p in self.stages[t]:
            if occupancy_distance(p, s, key) <= eps:
                return False
        if len(self.stages[t]) >= cap:
            if not on_policy or all(self.tags[t]):
                return False
            k = self.tags[t].index(False)
            del self.stages[t][k]
            del self.tags[t][k]
        self.stages[t].append(s)
        self.tags[t].append(on_policy)
        return True


def _compress(model, s, config):
    if config.compress == "b1b2":
        return cluster_histories(model, s)[0]
    return s


def _deadline_check(deadline):
    if deadline is not None and time.perf_counter() > deadline:
        raise BudgetExceeded("time budget exhausted")


def _solve_subgame(model, s, beta, config, stats=None, deadline=None):
    if config.compress == "b1b2":
        c, labels = cluster_histories(model, s)
    else:
        c, labels = s, None
    if config.backup == "enum":
        try:
            rule, val = solve_enum(model, c, beta, guard=config.enum_guard, deadline=deadline)
        except EnumTimeout as e:
            raise BudgetExceeded(str(e)) from None
    else:
        rule, val = solve_hierarchical(model, c, beta, share=config.compress != "none",
                                       stats=stats)
    if labels is not None:
        rule = labels.lift(rule)
    return rule, val


def _best_nexts(model, s, rule, V_next, default):
    """Best continuation in ``V_next`` for each public-observation branch."""
    nz = model.n_obs[0]
    nexts = []
    for z in range(nz):
        succ, p = next_occupancy(model, s, rule, z)
        if p <= 0.0:
            nexts.append(default)
        else:
            nexts.append(value_at(model, succ, V_next)[1])
    return tuple(nexts)


def backup(model, s: OccupancyState, V_next, config: SolverConfig = None,
           stats: dict = None, deadline=None) -> AlphaVector:
    """Backed-up alpha vector at ``s`` from the next-stage collection.

    Every vector of ``V_next`` is tried as a constant continuation; the best
    (rule, continuation) pair wins with ties to the lowest index.  The winner
    is then refined by switching continuations per public observation and
    re-solving the subgame under the switched continuation, keeping whichever
    is better on ``s``.
    """
    config = config or SolverConfig()
    V_next = list(V_next)
    if not V_next:
        raise ValueError("V_next must be nonempty (use the zero vector at the boundary)")
    t0 = time.perf_counter()
    sg = SolveStats()
    best = None
    for k, a_next in enumerate(V_next):
        _deadline_check(deadline)
        beta = BetaVector(model, s.stage, a_next)
        rule, val = _solve_subgame(model, s, beta, config, sg, deadline)
        if best is None or val > best[0]:
            best = (val, k, rule)
    val, k, rule = best
    default = V_next[k]
    nexts = (default,) * model.n_obs[0]
    alpha = AlphaVector.from_rule(model, s, rule, nexts, origin=("backup", s.stage, k))
    value = alpha_dot(model, s, alpha)
    last_boundary = all(a.is_zero for a in V_next)
    for _ in range(0 if last_boundary else config.refine_rounds):
        _deadline_check(deadline)
        nexts2 = _best_nexts(model, s, rule, V_next, default)
        cand = AlphaVector.from_rule(model, s, rule, nexts2, origin=("switch", s.stage, k))
        v2 = alpha_dot(model, s, cand)
        if v2 > value + 1e-12:
            alpha, value, nexts = cand, v2, nexts2
        beta = BetaVector(model, s.stage, nexts)
        rule2, _ = _solve_subgame(model, s, beta, config, sg, deadline)
        cand = AlphaVector.from_rule(model, s, rule2, nexts, origin=("resolve", s.stage, k))
        v3 = alpha_dot(model, s, cand)
        if v3 > value + 1e-12:
            alpha, value, rule = cand, v3, rule2
        else:
            break
    if stats is not None:
        stats["backups"] = stats.get("backups", 0) + 1
        stats["backup_time"] = stats.get("backup_time", 0.0) + time.perf_counter() - t0
        stats["subgame_nodes"] = stats.get("subgame_nodes", 0) + sg.nodes
    return alpha


def _point_prune(model, V, points):
    """Keep the vectors that are best at some point; order preserved."""
    if not points or len(V) < 2:
        return V
    keep = set()
    for s in points:
        keep.add(value_at(model, s, V)[1].uid)
    return [a for a in V if a.uid in keep]


def improve(model, V, points: PointSet, config: SolverConfig = None, stats=None,
            deadline=None):
    """One backward sweep: a backup per point per stage, then pruning.

    ``V`` is a list over stages 0..horizon of alpha collections (the last is
    the zero boundary).  Returns the updated list; on budget exhaustion the
    sweep stops early and the partially updated list is returned.
    """
    config = config or SolverConfig()
    V = [list(v) for v in V]
    ell = model.horizon
    for t in range(ell - 1, -1, -1):
        if not points[t]:
            continue
        for s in points[t]:
            try:
                a = backup(model, s, V[t + 1], config, stats, deadline)
            except BudgetExceeded:
                if stats is not None:
                    stats["budget_exhausted"] = True
                return V
            V[t].append(a)
        V[t] = _point_prune(model, V[t], points[t])
    return V


def initial_values(model):
    ell = model.horizon
    return [[] for _ in range(ell)] + [[AlphaVector.zero(model, ell)]]


# ---------------------------------------------------------------------------
# underlying MDP and exploration rules

def underlying_mdp_values(model):
    """V^MDP_t(x) for t = 0..horizon, computed by backward induction."""
    key = "mdp_values"
    out = model.cache.get(key)
    if out is not None:
        return out
    S, JU = model.n_states, model.n_joint_actions
    P = np.zeros((S, JU, S))
    for x in range(S):
        for ju in range(JU):
            ys, _, ps = model.outcomes(x, ju)
            np.add.at(P[x, ju], ys, ps)
    V = [np.zeros(S) for _ in range(model.horizon + 1)]
    Q = [None] * model.horizon
    for t in range(model.horizon - 1, -1, -1):
        Q[t] = model.reward + model.discount * P @ V[t + 1]
        V[t] = Q[t].max(axis=1)
    model.cache[key] = (V, Q)
    return V, Q


def mdp_values(model):
    return underlying_mdp_values(model)[0]


def random_rule(model, s, rng):
    return tuple({h: int(rng.integers(model.n_actions[i])) for h in s.histories(i)}
                 for i in range(model.n_players))


def mdp_greedy_rule(model, s):
    """Decentralised rule from the joint MDP-greedy action of each history.

    For every joint history the joint action maximising the expected MDP
    Q-value under its state posterior is computed; each player then plays its
    component of the action chosen at its most probable joint history.
    """
    _, Q = underlying_mdp_values(model)
    Qt = Q[s.stage]
    pool = history_pool(model)
    n = model.n_players
    acc = defaultdict(lambda: np.zeros(model.n_joint_actions))
    mass = defaultdict(float)
    for x, j, p in zip(s.xs, s.hs, s.ps):
        acc[int(j)] += p * Qt[int(x)]
        mass[int(j)] += float(p)
    best_ju = {j: int(np.argmax(q)) for j, q in acc.items()}
    rule = [dict() for _ in range(n)]
    heavy = [dict() for _ in range(n)]
    for j in sorted(best_ju):
        u = model.joint_action(best_ju[j])
        for i in range(n):
            h = pool.proj[j][i]
            if h not in heavy[i] or mass[j] > heavy[i][h]:
                heavy[i][h] = mass[j]
                rule[i][h] = int(u[i])
    return tuple(rule)


def policy_rule(model, s, V):
    """Rule of the best vector at ``s`` restricted to the histories of ``s``."""
    if not V:
        return None
    _, a = value_at(model, s, V)
    if a.is_zero:
        return None
    pool = history_pool(model)
    from .valuefn import _prefix_key
    return tuple({h: a.rules[i](_prefix_key(pool, i, h)) for h in s.histories(i)}
                 for i in range(model.n_players))


def _sample_branch(model, s, rule, rng):
    probs = branch_probabilities(model, s, rule)
    probs = probs / probs.sum()
    z = int(rng.choice(len(probs), p=probs))
    return next_occupancy(model, s, rule, z)[0]


def expand(model, points: PointSet, V, config: SolverConfig, rng, deadline=None) -> PointSet:
    """Grow the point sets by one simulated step from every existing point.

    Candidate rules per point: ``candidates_per_point`` uniformly random
    rules and the MDP-greedy rule, each followed along one sampled
    public-observation branch.  When value functions are available the rule
    of the current best vector is added too, followed along every branch of
    positive probability so the policy's own reachable points are covered.
    """
    out = points.copy()
    key = feature_key(model)
    for t in range(model.horizon - 1):
        for s in list(out[t]):
            if deadline is not None and time.perf_counter() > deadline:
                return out
            rules = [random_rule(model, s, rng) for _ in range(config.candidates_per_point)]
            rules.append(mdp_greedy_rule(model, s))
            for rule in rules:
                succ = _compress(model, _sample_branch(model, s, rule, rng), config)
                if len(succ) <= config.max_support:
                    out.add(t + 1, succ, config.eps_add, config.points_cap, key)
            if V is not None:
                rule = policy_rule(model, s, V[t])
                if rule is not None:
                    # the current policy's own successors: every public branch
                    for z, p in enumerate(branch_probabilities(model, s, rule)):
                        if p > 0.0:
                            succ = _compress(model, next_occupancy(model, s, rule, z)[0], config)
                            if len(succ) > config.max_support:
                                continue
                            out.add(t + 1, succ, config.eps_add, config.points_cap, key,
                                    on_policy=True)
    return out


def seed_points(model, config, rng) -> PointSet:
    """One MDP-greedy trajectory and one random trajectory from s0."""
    pts = PointSet(model)
    key = feature_key(model)
    for kind in ("greedy", "random"):
        s = pts[0][0]
        for t in range(model.horizon - 1):
            rule = mdp_greedy_rule(model, s) if kind == "greedy" else random_rule(model, s, rng)
            s = _compress(model, _sample_branch(model, s, rule, rng), config)
            if len(s) > config.max_support:
                break
            pts.add(t + 1, s, config.eps_add if kind == "random" else -1.0, config.points_cap, key,
                    on_policy=kind == "greedy")
    return pts


# ---------------------------------------------------------------------------
# policy evaluation and solve

def rollout_value(model, alpha0: AlphaVector) -> float:
    """Exact value of the policy encoded by ``alpha0`` by forward propagation.

    The distribution is carried over (state, feature tuple, vector) and each
    vector's rules and branch continuations are applied step by step, so the
    result is independent of the recursive evaluation in :mod:`valuefn`.
    """
    pool = history_pool(model)
    zdiv = pool.z_div[0]
    root = tuple(pool.features[i].root for i in range(model.n_players))
    dist = defaultdict(float)
    for x in np.nonzero(model.initial_belief > 0)[0]:
        dist[(int(x), root, alpha0)] += float(model.initial_belief[x])
    total, disc = 0.0, 1.0
    for _ in range(model.horizon):
        nxt = defaultdict(float)
        for (x, f, a), p in dist.items():
            if a.is_zero:
                continue
            ju = a.joint_action(f)
            total += disc * p * float(model.reward[x, ju])
            ys, zs, ps = model.outcomes(x, ju)
            for y, z, q in zip(ys, zs, ps):
                nxt[(int(y), advance_key(model, f, ju, int(z)), a.nexts[int(z) // zdiv])] += p * q
        dist = nxt
        disc *= model.discount
    return total


@dataclass
class PbviResult:
    value: float
    policy: AlphaVector
    V: list
    points: PointSet
    stats: dict = field(default_factory=dict)


def solve(model, config: SolverConfig = None, callback=None) -> PbviResult:
    """Alternate improve and expand until the value at s0 stabilises.

    Convergence is declared when an iteration changes the value by less than
    ``eps_conv`` and adds no point, or after ``patience`` consecutive
    iterations without a value change.  Running out of budget is reported in
    the stats rather than raised.
    """
    config = config or SolverConfig()
    rng = np.random.default_rng(config.seed)
    start = time.perf_counter()
    deadline = start + config.budget_secs
    s0 = initial_occupancy(model)
    stats = {"backups": 0, "backup_time": 0.0, "iterations": 0, "converged": False,
             "budget_exhausted": False, "history": []}
    points = seed_points(model, config, rng)
    V = initial_values(model)
    value = -math.inf
    still = 0
    for it in range(config.max_iters):
        V = improve(model, V, points, config, stats, deadline)
        if not V[0]:
            stats["budget_exhausted"] = True
            break
        stats["iterations"] = it + 1
        new_value, _ = value_at(model, s0, V[0])
        stats["history"].append((time.perf_counter() - start, new_value))
        if callback is not None:
            callback(it, new_value, time.perf_counter() - start)
        log.info("iteration %d value %.6f points %s", it + 1, new_value, points.sizes())
        if stats["budget_exhausted"]:
            value = max(value, new_value)
            break
        delta = new_value - value if value > -math.inf else math.inf
        value = new_value
        grown = expand(model, points, V, config, rng, deadline)
        added = sum(grown.sizes()) - sum(points.sizes())
        points = grown
        if abs(delta) < config.eps_conv:
            still += 1
            if added == 0 or still >= config.patience:
                stats["converged"] = True
                break
        else:
            still = 0
        if time.perf_counter() > deadline:
            stats["budget_exhausted"] = True
            break
    if not V[0]:
        raise BudgetExceeded("budget exhausted before the first sweep completed")
    value, alpha0 = value_at(model, s0, V[0])
    stats["wall"] = time.perf_counter() - start
    stats["backup_time_mean"] = stats["backup_time"] / max(stats["backups"], 1)
    stats["points"] = points.sizes()
    stats["rollout_value"] = rollout_value(model, alpha0)
    return PbviResult(value, alpha0, V, points, stats)


def error_bound(c, delta, gamma, horizon) -> float:
    """2 c delta (1 + l g^(l+1) - (l+1) g^l) / (1 - g)^2 for discount g < 1."""
    if c < 0 or delta < 0:
        raise ValueError("c and delta must be nonnegative")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if not 0.0 < gamma < 1.0:
        raise ValueError("the bound is only defined for a discount strictly inside (0, 1)")
    ell = horizon
    num = 1.0 + ell * gamma ** (ell + 1) - (ell + 1) * gamma ** ell
    return 2.0 * c * delta * num / (1.0 - gamma) ** 2


def reward_bound(model) -> float:
    """Sup-norm of the reward table."""
    return float(np.abs(model.reward).max())
