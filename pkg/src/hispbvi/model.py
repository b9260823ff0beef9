"""Finite n-player Dec-POMDP with hierarchical information sharing.

Players are indexed 0..n-1 internally; player 0 is the public bottom of the
hierarchy and player n-1 sees everything.  Only base observation alphabets are
stored.  The composite observation of player i (its own signal plus the
action and observation of player i-1, recursively) is never materialised: a
private history of player i is simply the projection of the joint history on
players 0..i, which is how the sharing map is realised.

Dynamics are kept in the factored form p(y, z | x, u) = T(y | x, u) O(z | u, y)
used by the standard benchmark files.  Joint actions and joint observations
are encoded as mixed-radix integers with player 0 as the most significant
digit, so a vector over joint actions reshapes to (|U^0|, ..., |U^{n-1}|).
"""
from __future__ import annotations

import itertools
import math
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

PROB_TOL = 1e-9


class LabelError(KeyError):
    """Raised when a state, action or observation label is unknown."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown label"


class RowTable:
    """Lazy, memoised map from a finite key set to sparse rows.

    Rows are ``(indices, probabilities)`` pairs of numpy arrays.  Generated
    benchmarks with many players would not fit as eager dicts, so rows are
    produced on demand by ``fn`` and cached.
    """

    def __init__(self, fn: Callable, keys: Callable[[], Iterable]):
        self._fn = fn
        self._keys = keys
        self._rows: dict = {}

    def __getitem__(self, key):
        row = self._rows.get(key)
        if row is None:
            row = self._fn(*key)
            self._rows[key] = row
        return row

    def keys(self):
        return self._keys()

    def items(self):
        for k in self.keys():
            yield k, self[k]


def _dict_table(rows: dict, keys: Callable[[], Iterable]) -> RowTable:
    empty = (np.zeros(0, dtype=np.int64), np.zeros(0))
    return RowTable(lambda *k: rows.get(k, empty), keys)


class DecPomdpModel:
    """Immutable Dec-POMDP in index form with label tables for I/O.

    ``trans[(x, ju)]`` is a sparse row over next states and ``obs[(ju, y)]``
    a sparse row over joint observations.  ``reward`` is a dense
    ``(n_states, n_joint_actions)`` array.
    """

    def __init__(self, states: Sequence[str], actions: Sequence[Sequence[str]],
                 observations: Sequence[Sequence[str]], trans: RowTable, obs: RowTable,
                 reward: np.ndarray, initial_belief: np.ndarray, discount: float = 1.0,
                 horizon: int = 1, name: str = "model", issues: Sequence[str] = ()):
        self.states = tuple(states)
        self.actions = tuple(tuple(a) for a in actions)
        self.observations = tuple(tuple(z) for z in observations)
        self.n_players = len(self.actions)
        self.trans = trans
        self.obs = obs
        self.reward = np.asarray(reward, dtype=float)
        self.initial_belief = np.asarray(initial_belief, dtype=float)
        self.discount = float(discount)
        self.horizon = int(horizon)
        self.name = name
        self.issues = tuple(issues)
        self.n_states = len(self.states)
        self.n_actions = tuple(len(a) for a in self.actions)
        self.n_obs = tuple(len(z) for z in self.observations)
        self.n_joint_actions = math.prod(self.n_actions)
        self.n_joint_obs = math.prod(self.n_obs)
        self._state_ix = {s: i for i, s in enumerate(self.states)}
        self._action_ix = [{a: i for i, a in enumerate(acts)} for acts in self.actions]
        self._obs_ix = [{z: i for i, z in enumerate(zs)} for zs in self.observations]
        self._outcomes: dict = {}
        self.cache: dict = {}  # derived structures owned by other modules

    # -- derived copies -------------------------------------------------
    def with_horizon(self, horizon: int, discount: float | None = None) -> "DecPomdpModel":
        m = DecPomdpModel(self.states, self.actions, self.observations, self.trans, self.obs,
                          self.reward, self.initial_belief,
                          self.discount if discount is None else discount, horizon,
                          self.name, self.issues)
        m._outcomes = self._outcomes  # dynamics are shared, so is the cache
        return m

    # -- encodings --------------------------------------------------------
    def joint_action_index(self, u: Sequence[int]) -> int:
        ix = 0
        for k, ui in zip(self.n_actions, u):
            ix = ix * k + int(ui)
        return ix

    def joint_action(self, ju: int) -> tuple:
        return _decode(ju, self.n_actions)

    def joint_obs_index(self, z: Sequence[int]) -> int:
        ix = 0
        for k, zi in zip(self.n_obs, z):
            ix = ix * k + int(zi)
        return ix

    def joint_obs(self, jz: int) -> tuple:
        return _decode(jz, self.n_obs)

    def joint_action_table(self) -> np.ndarray:
        """``(n_joint_actions, n_players)`` array of per-player actions."""
        t = self.cache.get("ja_table")
        if t is None:
            t = np.array(list(itertools.product(*[range(k) for k in self.n_actions])),
                         dtype=np.int64).reshape(self.n_joint_actions, self.n_players)
            self.cache["ja_table"] = t
        return t

    def joint_obs_table(self) -> np.ndarray:
        t = self.cache.get("jo_table")
        if t is None:
            t = np.array(list(itertools.product(*[range(k) for k in self.n_obs])),
                         dtype=np.int64).reshape(self.n_joint_obs, self.n_players)
            self.cache["jo_table"] = t
        return t

    # -- label lookup -------------------------------------------------------
    def state_index(self, x) -> int:
        if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
            if 0 <= x < self.n_states:
                return int(x)
            raise LabelError(f"unknown state index {x}")
        try:
            return self._state_ix[x]
        except KeyError:
            raise LabelError(f"unknown state label {x!r}") from None

    def action_index(self, player: int, a) -> int:
        if isinstance(a, (int, np.integer)) and not isinstance(a, bool):
            if 0 <= a < self.n_actions[player]:
                return int(a)
            raise LabelError(f"unknown action index {a} for player {player}")
        try:
            return self._action_ix[player][a]
        except KeyError:
            raise LabelError(f"unknown action label {a!r} for player {player}") from None

    def obs_index(self, player: int, z) -> int:
        if isinstance(z, (int, np.integer)) and not isinstance(z, bool):
            if 0 <= z < self.n_obs[player]:
                return int(z)
            raise LabelError(f"unknown observation index {z} for player {player}")
        try:
            return self._obs_ix[player][z]
        except KeyError:
            raise LabelError(f"unknown observation label {z!r} for player {player}") from None

    def encode_action(self, u) -> int:
        if len(u) != self.n_players:
            raise LabelError(f"joint action {u!r} has {len(u)} components, expected {self.n_players}")
        return self.joint_action_index([self.action_index(i, a) for i, a in enumerate(u)])

    # -- dynamics -------------------------------------------------------------
    def outcomes(self, x: int, ju: int):
        """Sparse joint outcome row ``(ys, jzs, probs)`` of p(y, z | x, u)."""
        key = (x, ju)
        row = self._outcomes.get(key)
        if row is None:
            ys, pt = self.trans[key]
            yl, zl, pl = [], [], []
            for y, p in zip(ys, pt):
                if p <= 0.0:
                    continue
                zs, po = self.obs[(ju, int(y))]
                keep = po > 0.0
                yl.append(np.full(int(keep.sum()), int(y), dtype=np.int64))
                zl.append(np.asarray(zs, dtype=np.int64)[keep])
                pl.append(p * np.asarray(po)[keep])
            if yl:
                row = (np.concatenate(yl), np.concatenate(zl), np.concatenate(pl))
            else:
                row = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0))
            self._outcomes[key] = row
        return row

    def transition_prob(self, x, u, y, z) -> float:
        xi, ju, yi = self.state_index(x), self.encode_action(u), self.state_index(y)
        jz = self.joint_obs_index([self.obs_index(i, zi) for i, zi in enumerate(z)])
        ys, zs, ps = self.outcomes(xi, ju)
        return float(ps[(ys == yi) & (zs == jz)].sum())

    def __repr__(self):
        return (f"DecPomdpModel({self.name!r}, n={self.n_players}, |X|={self.n_states}, "
                f"|U|={self.n_actions}, |Z|={self.n_obs}, horizon={self.horizon}, "
                f"discount={self.discount})")


def _decode(ix: int, radix: Sequence[int]) -> tuple:
    out = []
    for k in reversed(radix):
        ix, r = divmod(ix, k)
        out.append(r)
    return tuple(reversed(out))


def all_row_keys(model_or_shape, kind: str):
    """Key iterator for ``trans`` (kind='T') or ``obs`` (kind='O') tables."""
    n_states, n_ja = model_or_shape
    if kind == "T":
        return lambda: itertools.product(range(n_states), range(n_ja))
    return lambda: itertools.product(range(n_ja), range(n_states))


def from_tables(states, actions, observations, transition: Mapping, observation: Mapping,
                reward: Mapping, initial_belief, discount: float = 1.0, horizon: int = 1,
                name: str = "model") -> DecPomdpModel:
    """Build a model from label-keyed dictionaries.

    transition:  {(x, (u_0..u_{n-1})): {y: p}}
    observation: {((u_0..), y): {(z_0..): p}}
    reward:      {(x, (u_0..)): r}   (missing entries are 0)
    initial_belief: {x: p} or a sequence aligned with ``states``.

    Entries with unknown labels are dropped and recorded as issues, which
    :func:`validate` reports; construction itself never fails on them.
    """
    states = list(states)
    actions = [list(a) for a in actions]
    observations = [list(z) for z in observations]
    sx = {s: i for i, s in enumerate(states)}
    ax = [{a: i for i, a in enumerate(acts)} for acts in actions]
    zx = [{z: i for i, z in enumerate(zs)} for zs in observations]
    n_ja = math.prod(len(a) for a in actions)
    issues = []

    def enc(labels, tables, what):
        if len(labels) != len(tables):
            raise KeyError(f"{what} {labels!r} has wrong arity")
        ix = 0
        for lab, tab in zip(labels, tables):
            if lab not in tab:
                raise KeyError(f"unknown {what} label {lab!r}")
            ix = ix * len(tab) + tab[lab]
        return ix

    t_rows = {}
    for (x, u), row in transition.items():
        try:
            key = (_lookup(sx, x, "state"), enc(tuple(u), ax, "action"))
            ys = [_lookup(sx, y, "state") for y in row]
        except KeyError as e:
            issues.append(f"transition entry {(x, u)!r}: {e.args[0]}")
            continue
        t_rows[key] = (np.asarray(ys, dtype=np.int64), np.asarray(list(row.values()), dtype=float))
    o_rows = {}
    for (u, y), row in observation.items():
        try:
            key = (enc(tuple(u), ax, "action"), _lookup(sx, y, "state"))
            zs = [enc(tuple(z), zx, "observation") for z in row]
        except KeyError as e:
            issues.append(f"observation entry {(u, y)!r}: {e.args[0]}")
            continue
        o_rows[key] = (np.asarray(zs, dtype=np.int64), np.asarray(list(row.values()), dtype=float))
    r = np.zeros((len(states), n_ja))
    for (x, u), val in reward.items():
        try:
            r[_lookup(sx, x, "state"), enc(tuple(u), ax, "action")] = float(val)
        except KeyError as e:
            issues.append(f"reward entry {(x, u)!r}: {e.args[0]}")
    if isinstance(initial_belief, Mapping):
        b0 = np.zeros(len(states))
        for x, p in initial_belief.items():
            try:
                b0[_lookup(sx, x, "state")] = p
            except KeyError as e:
                issues.append(f"initial belief: {e.args[0]}")
    else:
        b0 = np.asarray(initial_belief, dtype=float)
    shape = (len(states), n_ja)
    return DecPomdpModel(states, actions, observations,
                         _dict_table(t_rows, all_row_keys(shape, "T")),
                         _dict_table(o_rows, all_row_keys(shape, "O")),
                         r, b0, discount, horizon, name, issues)


def _lookup(table, label, what):
    if label not in table:
        raise KeyError(f"unknown {what} label {label!r}")
    return table[label]


def validate(model: DecPomdpModel) -> list[str]:
    """All invariant violations of ``model``; an empty list means valid."""
    out = list(model.issues)
    if model.n_players < 1:
        out.append("model has no players")
    if not (0.0 < model.discount <= 1.0):
        out.append(f"discount {model.discount} outside (0, 1]")
    if model.horizon < 1:
        out.append(f"horizon {model.horizon} is not positive")
    b0 = model.initial_belief
    if b0.shape != (model.n_states,):
        out.append("initial belief has wrong length")
    else:
        if (b0 < 0).any():
            out.append("initial belief has negative entries")
        if abs(b0.sum() - 1.0) > PROB_TOL:
            out.append(f"initial belief sums to {b0.sum():.12g}")
    if model.reward.shape != (model.n_states, model.n_joint_actions):
        out.append("reward table has wrong shape")
    elif not np.isfinite(model.reward).all():
        out.append("reward table has non-finite entries")

    def check(kind, key, idx, probs, bound):
        label = _row_label(model, kind, key)
        if len(idx) and ((idx < 0).any() or (idx >= bound).any()):
            out.append(f"{kind} row {label} references an unknown index")
        if (probs < 0).any():
            out.append(f"{kind} row {label} has negative probabilities")
        tot = float(probs.sum())
        if abs(tot - 1.0) > PROB_TOL:
            out.append(f"{kind} row {label} sums to {tot:.12g}")

    for key, (ys, ps) in model.trans.items():
        check("transition", key, ys, ps, model.n_states)
    for key, (zs, ps) in model.obs.items():
        check("observation", key, zs, ps, model.n_joint_obs)
    return out


def _row_label(model, kind, key):
    if kind == "transition":
        x, ju = key
        return f"(x={model.states[x]}, u={_labels(model, model.joint_action(ju))})"
    ju, y = key
    return f"(u={_labels(model, model.joint_action(ju))}, y={model.states[y]})"


def _labels(model, u):
    return ",".join(model.actions[i][a] for i, a in enumerate(u))


def joint_reward(model: DecPomdpModel, x, u) -> float:
    """r(x, u) for labels or indices; unknown labels raise :class:`LabelError`."""
    return float(model.reward[model.state_index(x), model.encode_action(u)])
