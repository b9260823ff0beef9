"""Benchmark generators and the text model format.

Families: tiger, recycling, mabc (multi-access broadcast channel) and
grid3x3.  Every generator returns a factored model whose two-player instance
follows the classic construction; the n-player versions use the reward
formulas described in the module README section of the package docs.

The text format is the usual ``.dpomdp`` grammar (header lines followed by
``T:``, ``O:`` and ``R:`` entries, ``*`` wildcards, ``uniform`` and
``identity`` keywords, ``#`` comments) with one extension: an optional
``horizon:`` header.
"""
from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .model import DecPomdpModel, RowTable, all_row_keys, validate

FAMILIES = ("tiger", "recycling", "mabc", "grid3x3")


@dataclass(frozen=True)
class BenchmarkSpec:
    family: str
    n_players: int = 2
    horizon: int = 30
    discount: float = 1.0
    params: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unsupported family {self.family!r}; choose from {FAMILIES}")
        if self.n_players < 2:
            raise ValueError("benchmarks need at least two players")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")


def generate(spec: BenchmarkSpec) -> DecPomdpModel:
    builder = {"tiger": _tiger, "recycling": _recycling, "mabc": _mabc, "grid3x3": _grid}[spec.family]
    model = builder(spec.n_players, spec.horizon, spec.discount, **spec.params)
    return model


# ---------------------------------------------------------------------------
# factored construction helper

def _factored_model(name, n, states, actions, observations, step, obs_fn, reward_fn, b0,
                    horizon, discount):
    """Model from per-tuple callbacks.

    step(x_tuple, u_tuple) -> {y_tuple: p};  obs_fn(u_tuple, y_tuple) -> {z_tuple: p};
    reward_fn(x_tuple, u_tuple) -> float.  State tuples index ``states`` radices.
    """
    s_radix = [len(s) for s in states]
    n_states = math.prod(s_radix)
    a_radix = [len(a) for a in actions]
    z_radix = [len(z) for z in observations]
    n_ja = math.prod(a_radix)
    state_tuples = list(itertools.product(*[range(k) for k in s_radix]))
    s_index = {t: i for i, t in enumerate(state_tuples)}
    ja_tuples = list(itertools.product(*[range(k) for k in a_radix]))

    def z_index(z):
        ix = 0
        for k, zi in zip(z_radix, z):
            ix = ix * k + zi
        return ix

    def trow(x, ju):
        dist = step(state_tuples[x], ja_tuples[ju])
        items = sorted((s_index[y], p) for y, p in dist.items() if p > 0)
        return (np.array([i for i, _ in items], dtype=np.int64), np.array([p for _, p in items]))

    def orow(ju, y):
        dist = obs_fn(ja_tuples[ju], state_tuples[y])
        items = sorted((z_index(z), p) for z, p in dist.items() if p > 0)
        return (np.array([i for i, _ in items], dtype=np.int64), np.array([p for _, p in items]))

    reward = np.array([[reward_fn(xt, ut) for ut in ja_tuples] for xt in state_tuples])
    labels = ["-".join(states[i][v] for i, v in enumerate(t)) if len(states) > 1 else states[0][t[0]]
              for t in state_tuples]
    shape = (n_states, n_ja)
    init = np.array([b0(t) for t in state_tuples], dtype=float)
    return DecPomdpModel(labels, actions, observations, RowTable(trow, all_row_keys(shape, "T")),
                         RowTable(orow, all_row_keys(shape, "O")), reward, init, discount,
                         horizon, name)


def _product(dists):
    """Product distribution of independent per-component dicts."""
    out = {(): 1.0}
    for d in dists:
        out = {k + (v,): p * q for k, p in out.items() for v, q in d.items()}
    return out


# ---------------------------------------------------------------------------
# tiger

LISTEN, OPEN_LEFT, OPEN_RIGHT = 0, 1, 2
HEAR_ACCURACY = 0.85


def _tiger(n, horizon, discount, accuracy=HEAR_ACCURACY):
    states = [["tiger-left", "tiger-right"]]
    actions = [["listen", "open-left", "open-right"]] * n
    observations = [["hear-left", "hear-right"]] * n

    def step(x, u):
        if all(a == LISTEN for a in u):
            return {x: 1.0}
        return {(0,): 0.5, (1,): 0.5}

    def obs(u, y):
        if all(a == LISTEN for a in u):
            right = {y[0]: accuracy, 1 - y[0]: 1.0 - accuracy}
            return _product([right] * n)
        return _product([{0: 0.5, 1: 0.5}] * n)

    def reward(x, u):
        good = OPEN_RIGHT if x[0] == 0 else OPEN_LEFT
        n_listen = sum(a == LISTEN for a in u)
        n_good = sum(a == good for a in u)
        n_wrong = n - n_listen - n_good
        # the wrong-door penalty is a total of -100/n_w shared by the n_w wrong openers
        return -1.0 * n_listen + 10.0 * n_good - (100.0 / n_wrong if n_wrong else 0.0)

    return _factored_model(f"tiger({n})", n, states, actions, observations, step, obs, reward,
                           lambda t: 0.5, horizon, discount)


# ---------------------------------------------------------------------------
# recycling robots

BIG, SMALL, RECHARGE = 0, 1, 2
HIGH, LOW = 0, 1

# per-robot battery dynamics: probability the level is kept when searching
RECYCLING_DEFAULTS = dict(
    small_keep_high=0.8,   # high -> high after a small-can search
    big_keep_high=0.5,     # high -> high after a big-can search
    small_keep_low=0.8,    # low -> low (not exhausted) after a small-can search
    big_keep_low=0.3,      # low -> low after a big-can search
    rescue_penalty=-3.0,   # robot exhausted and carried to the charger
    obs_accuracy=1.0,      # robots read their own battery level
    small_reward=2.0,      # per robot searching small
    big_reward=5.0,        # per robot when all search big together
    mismatch_penalty=10.0, # total when some but not all search big
)


def _recycling(n, horizon, discount, **params):
    prm = dict(RECYCLING_DEFAULTS)
    unknown = set(params) - set(prm)
    if unknown:
        raise ValueError(f"unknown recycling parameters {sorted(unknown)}")
    prm.update(params)
    states = [["high", "low"]] * n
    actions = [["search-big", "search-small", "recharge"]] * n
    observations = [["high", "low"]] * n

    def robot(b, a):
        if a == RECHARGE:
            return {HIGH: 1.0}
        keep_high = prm["big_keep_high"] if a == BIG else prm["small_keep_high"]
        keep_low = prm["big_keep_low"] if a == BIG else prm["small_keep_low"]
        if b == HIGH:
            return {HIGH: keep_high, LOW: 1.0 - keep_high}
        # exhausted robots are rescued and come back charged
        return {LOW: keep_low, HIGH: 1.0 - keep_low}

    def step(x, u):
        return _product([robot(b, a) for b, a in zip(x, u)])

    acc = prm["obs_accuracy"]

    def obs(u, y):
        return _product([{b: acc, 1 - b: 1.0 - acc} if acc < 1.0 else {b: 1.0} for b in y])

    def reward(x, u):
        n_big = sum(a == BIG for a in u)
        r = prm["small_reward"] * sum(a == SMALL for a in u)
        if n_big == n:
            r += prm["big_reward"] * n
        elif n_big:
            r -= prm["mismatch_penalty"]
        for b, a in zip(x, u):
            if b == LOW and a != RECHARGE:
                keep_low = prm["big_keep_low"] if a == BIG else prm["small_keep_low"]
                r += (1.0 - keep_low) * prm["rescue_penalty"]
        return r

    return _factored_model(f"recycling({n})", n, states, actions, observations, step, obs, reward,
                           lambda t: 1.0 if all(b == HIGH for b in t) else 0.0, horizon, discount)


# ---------------------------------------------------------------------------
# multi-access broadcast channel

SEND, WAIT = 0, 1
EMPTY, FULL = 0, 1


def _mabc(n, horizon, discount, fill=None, obs="collision", accuracy=0.9):
    if fill is None:
        fill = tuple(0.9 if i % 2 == 0 else 0.1 for i in range(n))
    fill = tuple(fill)
    if len(fill) != n:
        raise ValueError("need one fill probability per player")
    if obs not in ("collision", "buffer"):
        raise ValueError("obs must be 'collision' or 'buffer'")
    states = [["empty", "full"]] * n
    actions = [["send", "wait"]] * n
    observations = ([["collision", "no-collision"]] if obs == "collision" else [["empty", "full"]]) * n

    def step(x, u):
        senders = [i for i, a in enumerate(u) if a == SEND]
        parts = []
        for i, (b, a) in enumerate(zip(x, u)):
            delivered = len(senders) == 1 and a == SEND and b == FULL
            if b == FULL and not delivered:
                parts.append({FULL: 1.0})
            else:
                parts.append({FULL: fill[i], EMPTY: 1.0 - fill[i]})
        return _product(parts)

    def obs_fn(u, y):
        if obs == "collision":
            truth = 0 if sum(a == SEND for a in u) > 1 else 1
            return _product([{truth: accuracy, 1 - truth: 1.0 - accuracy}] * n)
        return _product([{b: accuracy, 1 - b: 1.0 - accuracy} for b in y])

    def reward(x, u):
        senders = [i for i, a in enumerate(u) if a == SEND]
        return 1.0 if len(senders) == 1 and x[senders[0]] == FULL else 0.0

    return _factored_model(f"mabc({n})", n, states, actions, observations, step, obs_fn, reward,
                           lambda t: 1.0 if all(b == FULL for b in t) else 0.0, horizon, discount)


# ---------------------------------------------------------------------------
# meeting on a 3x3 grid

MOVES = {"north": (-1, 0), "south": (1, 0), "west": (0, -1), "east": (0, 1), "stay": (0, 0)}
MEETING_CELLS = (0, 8)  # top-left and bottom-right corners


def _grid(n, horizon, discount, success=0.6):
    cells = [f"c{r}{c}" for r in range(3) for c in range(3)]
    names = list(MOVES)
    states = [cells] * n
    actions = [names] * n
    observations = [cells] * n

    def move(cell, a):
        dr, dc = MOVES[names[a]]
        r, c = divmod(cell, 3)
        r2, c2 = min(max(r + dr, 0), 2), min(max(c + dc, 0), 2)
        target = 3 * r2 + c2
        if target == cell:
            return {cell: 1.0}
        return {target: success, cell: 1.0 - success}

    def step(x, u):
        return _product([move(c, a) for c, a in zip(x, u)])

    def obs(u, y):
        return {tuple(y): 1.0}

    def reward(x, u):
        best = max(sum(c == m for c in x) for m in MEETING_CELLS)
        return float(max(best - 1, 0))

    def start(t):
        # players start spread over the two non-meeting corners
        corners = (2, 6)
        return 1.0 if all(c == corners[i % 2] for i, c in enumerate(t)) else 0.0

    return _factored_model(f"grid3x3({n})", n, states, actions, observations, step, obs, reward,
                           start, horizon, discount)


# ---------------------------------------------------------------------------
# text format

class ModelSyntaxError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class ModelSemanticError(ValueError):
    pass


def dense_tables(model: DecPomdpModel):
    """Dense ``(T, O, R)`` arrays: T[x, ju, y], O[ju, y, jz], R[x, ju]."""
    X, JU, JZ = model.n_states, model.n_joint_actions, model.n_joint_obs
    T = np.zeros((X, JU, X))
    O = np.zeros((JU, X, JZ))
    for x in range(X):
        for ju in range(JU):
            ys, ps = model.trans[(x, ju)]
            T[x, ju, ys] = ps
    for ju in range(JU):
        for y in range(X):
            zs, ps = model.obs[(ju, y)]
            O[ju, y, zs] = ps
    return T, O, model.reward.copy()


def serialize_model(model: DecPomdpModel) -> str:
    out = io.StringIO()
    w = out.write
    w(f"# {model.name}\n")
    w(f"agents: {model.n_players}\n")
    w(f"discount: {model.discount!r}\n")
    w(f"horizon: {model.horizon}\n")
    w("values: reward\n")
    w("states: " + " ".join(model.states) + "\n")
    w("start:\n" + " ".join(repr(float(p)) for p in model.initial_belief) + "\n")
    w("actions:\n")
    for acts in model.actions:
        w(" ".join(acts) + "\n")
    w("observations:\n")
    for zs in model.observations:
        w(" ".join(zs) + "\n")
    ja = [" ".join(model.actions[i][a] for i, a in enumerate(model.joint_action(ju)))
          for ju in range(model.n_joint_actions)]
    jo = [" ".join(model.observations[i][z] for i, z in enumerate(model.joint_obs(jz)))
          for jz in range(model.n_joint_obs)]
    for x in range(model.n_states):
        for ju in range(model.n_joint_actions):
            ys, ps = model.trans[(x, ju)]
            for y, p in zip(ys, ps):
                if p != 0.0:
                    w(f"T: {ja[ju]} : {model.states[x]} : {model.states[y]} : {float(p)!r}\n")
    for ju in range(model.n_joint_actions):
        for y in range(model.n_states):
            zs, ps = model.obs[(ju, y)]
            for z, p in zip(zs, ps):
                if p != 0.0:
                    w(f"O: {ja[ju]} : {model.states[y]} : {jo[z]} : {float(p)!r}\n")
    for x in range(model.n_states):
        for ju in range(model.n_joint_actions):
            r = float(model.reward[x, ju])
            if r != 0.0:
                w(f"R: {ja[ju]} : {model.states[x]} : * : * : {r!r}\n")
    return out.getvalue()


_HEADERS = ("agents", "discount", "values", "states", "start", "actions", "observations", "horizon")


def parse_model(text) -> DecPomdpModel:
    """Parse the text format; ``text`` is a string or a readable stream."""
    if not isinstance(text, str):
        text = text.read()
    return _Parser(text).run()


class _Parser:
    def __init__(self, text):
        self.lines = []
        for no, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                self.lines.append((no, line))
        self.pos = 0

    # -- token helpers ----------------------------------------------------
    def _next_line(self, what):
        if self.pos >= len(self.lines):
            last = self.lines[-1][0] if self.lines else 0
            raise ModelSyntaxError(last, f"unexpected end of file while reading {what}")
        item = self.lines[self.pos]
        self.pos += 1
        return item

    def _peek_is_entry(self):
        if self.pos >= len(self.lines):
            return True
        line = self.lines[self.pos][1]
        head = line.split(":", 1)[0].strip()
        return ":" in line and (head in _HEADERS or head in ("T", "O", "R") or head.startswith("start"))

    @staticmethod
    def _names(tokens, no, what):
        if len(tokens) == 1 and tokens[0].isdigit():
            return [str(i) for i in range(int(tokens[0]))]
        if not tokens:
            raise ModelSyntaxError(no, f"empty {what} list")
        if len(set(tokens)) != len(tokens):
            raise ModelSyntaxError(no, f"duplicate {what} labels")
        return tokens

    @staticmethod
    def _resolve(token, names, no, what):
        if token == "*":
            return list(range(len(names)))
        if token in names:
            return [names.index(token)]
        if token.isdigit() and int(token) < len(names):
            return [int(token)]
        raise ModelSyntaxError(no, f"unknown {what} {token!r}")

    def _joint(self, spec, tables, no, what):
        toks = spec.split()
        if toks == ["*"]:
            return list(range(math.prod(len(t) for t in tables)))
        if len(toks) == 1 and len(tables) > 1 and toks[0].isdigit():
            ix = int(toks[0])
            if ix >= math.prod(len(t) for t in tables):
                raise ModelSyntaxError(no, f"joint {what} index {ix} out of range")
            return [ix]
        if len(toks) != len(tables):
            raise ModelSyntaxError(no, f"joint {what} {spec!r} needs {len(tables)} components")
        per = [self._resolve(t, names, no, what) for t, names in zip(toks, tables)]
        out = []
        for combo in itertools.product(*per):
            ix = 0
            for names, c in zip(tables, combo):
                ix = ix * len(names) + c
            out.append(ix)
        return out

    def _floats(self, toks, no):
        try:
            return [float(t) for t in toks]
        except ValueError:
            raise ModelSyntaxError(no, f"expected numbers, got {' '.join(toks)!r}") from None

    def _matrix_or_keyword(self, rest, rows, cols, no, what):
        """Rows x cols block given inline keyword or on following lines."""
        word = rest.strip()
        if not word:
            no, word = self._next_line(what)
            if word not in ("uniform", "identity"):
                self.pos -= 1
                word = ""
        if word == "uniform":
            return np.full((rows, cols), 1.0 / cols)
        if word == "identity":
            if rows != cols:
                raise ModelSyntaxError(no, "identity needs a square block")
            return np.eye(rows)
        if word:
            raise ModelSyntaxError(no, f"unexpected {word!r}")
        mat = []
        for _ in range(rows):
            no, line = self._next_line(what)
            vals = self._floats(line.split(), no)
            if len(vals) != cols:
                raise ModelSyntaxError(no, f"expected {cols} values, got {len(vals)}")
            mat.append(vals)
        return np.array(mat)

    def _row(self, rest, cols, no, what):
        word = rest.strip()
        if not word:
            no, word = self._next_line(what)
        if word == "uniform":
            return np.full(cols, 1.0 / cols)
        vals = self._floats(word.split(), no)
        if len(vals) != cols:
            raise ModelSyntaxError(no, f"expected {cols} values, got {len(vals)}")
        return np.array(vals)

    # -- main loop ----------------------------------------------------------
    def run(self) -> DecPomdpModel:
        hdr = {}
        n = None
        states = actions = observations = None
        start_spec = None
        cost = False
        entries = []
        while self.pos < len(self.lines):
            no, line = self._next_line("header")
            if ":" not in line:
                raise ModelSyntaxError(no, f"expected 'key: value', got {line!r}")
            key, rest = line.split(":", 1)
            key = key.strip()
            rest = rest.strip()
            if key in ("T", "O", "R"):
                entries.append((no, key, line))
                # block forms consume following lines later; remember their text
                self._collect_block(key, line, entries)
                continue
            if key == "agents":
                toks = rest.split()
                n = int(toks[0]) if len(toks) == 1 and toks[0].isdigit() else len(toks)
                if n < 1:
                    raise ModelSyntaxError(no, "need at least one agent")
            elif key == "discount":
                hdr["discount"] = self._floats([rest], no)[0]
            elif key == "horizon":
                hdr["horizon"] = int(self._floats([rest], no)[0])
            elif key == "values":
                if rest not in ("reward", "cost"):
                    raise ModelSyntaxError(no, "values must be 'reward' or 'cost'")
                cost = rest == "cost"
            elif key == "states":
                states = self._names(rest.split(), no, "state")
            elif key == "start":
                if not rest:
                    no2, rest = self._next_line("start")
                start_spec = (no, rest)
            elif key in ("actions", "observations"):
                if n is None:
                    raise ModelSyntaxError(no, f"'{key}' before 'agents'")
                rows = []
                if rest:
                    rows.append(self._names(rest.split(), no, key))
                while len(rows) < n:
                    no2, l2 = self._next_line(key)
                    rows.append(self._names(l2.split(), no2, key))
                if key == "actions":
                    actions = rows
                else:
                    observations = rows
            else:
                raise ModelSyntaxError(no, f"unknown header {key!r}")
        for need, val in (("agents", n), ("states", states), ("actions", actions),
                          ("observations", observations)):
            if val is None:
                raise ModelSyntaxError(self.lines[-1][0] if self.lines else 0, f"missing '{need}'")
        X = len(states)
        JU = math.prod(len(a) for a in actions)
        JZ = math.prod(len(z) for z in observations)
        b0 = self._start(start_spec, states)
        T = np.zeros((X, JU, X))
        O = np.zeros((JU, X, JZ))
        rwd = {}  # (x, ju) -> list of (y or None, jz or None, value)
        for no, kind, payload in entries:
            if kind == "T":
                self._apply_T(T, payload, no, states, actions)
            elif kind == "O":
                self._apply_O(O, payload, no, states, actions, observations)
            elif kind == "R":
                self._apply_R(rwd, payload, no, states, actions, observations)
        R = np.zeros((X, JU))
        for (x, ju), items in rwd.items():
            if len(items) == 1 and items[0][0] is None and items[0][1] is None:
                R[x, ju] = items[0][2]
                continue
            tot = 0.0
            for y in range(X):
                if T[x, ju, y] == 0.0:
                    continue
                for jz in range(JZ):
                    p = T[x, ju, y] * O[ju, y, jz]
                    if p == 0.0:
                        continue
                    val = 0.0
                    for yy, zz, v in items:  # later entries override earlier ones
                        if (yy is None or yy == y) and (zz is None or zz == jz):
                            val = v
                    tot += p * val
            R[x, ju] = tot
        if cost:
            R = -R
        for x in range(X):
            for ju in range(JU):
                s = T[x, ju].sum()
                if abs(s - 1.0) > 1e-9:
                    raise ModelSemanticError(f"T row (x={states[x]}, u#{ju}) sums to {s:.12g}")
        for ju in range(JU):
            for y in range(X):
                s = O[ju, y].sum()
                if abs(s - 1.0) > 1e-9:
                    raise ModelSemanticError(f"O row (u#{ju}, y={states[y]}) sums to {s:.12g}")
        model = _from_dense(states, actions, observations, T, O, R, b0,
                            hdr.get("discount", 1.0), hdr.get("horizon", 1))
        report = validate(model)
        if report:
            raise ModelSemanticError("; ".join(report))
        return model

    def _collect_block(self, kind, line, entries):
        """Attach continuation lines (matrices/rows) to the last entry."""
        extra = []
        while self.pos < len(self.lines) and not self._peek_is_entry():
            extra.append(self.lines[self.pos])
            self.pos += 1
        no, k, text = entries[-1]
        entries[-1] = (no, k, (text, extra))

    def _start(self, spec, states):
        X = len(states)
        if spec is None:
            return np.full(X, 1.0 / X)
        no, rest = spec
        toks = rest.split()
        if toks == ["uniform"]:
            return np.full(X, 1.0 / X)
        if len(toks) == 1 and toks[0] in states:
            b = np.zeros(X)
            b[states.index(toks[0])] = 1.0
            return b
        vals = self._floats(toks, no)
        if len(vals) != X:
            raise ModelSyntaxError(no, f"start needs {X} probabilities")
        return np.array(vals)

    def _split_entry(self, payload, no):
        text, extra = payload
        parts = [p.strip() for p in text.split(":")]
        return parts[1:], extra

    def _block_reader(self, extra):
        sub = _Parser("")
        sub.lines = list(extra)
        return sub

    def _apply_T(self, T, payload, no, states, actions):
        parts, extra = self._split_entry(payload, no)
        sub = self._block_reader(extra)
        X = len(states)
        jas = self._joint(parts[0], actions, no, "action")
        if len(parts) == 4:  # T: u : x : y : p
            xs = self._resolve(parts[1], states, no, "state")
            ys = self._resolve(parts[2], states, no, "state")
            p = self._floats([parts[3]], no)[0]
            for ju in jas:
                for x in xs:
                    T[x, ju, ys] = p
        elif len(parts) == 3 and parts[2] and parts[2] not in ("uniform",):
            # T: u : x : y   followed by a probability on the next line
            xs = self._resolve(parts[1], states, no, "state")
            ys = self._resolve(parts[2], states, no, "state")
            p = sub._floats(sub._next_line("probability")[1].split(), no)[0]
            for ju in jas:
                for x in xs:
                    T[x, ju, ys] = p
        elif len(parts) == 3:  # T: u : x :  row
            xs = self._resolve(parts[1], states, no, "state")
            row = sub._row(parts[2], X, no, "transition row")
            for ju in jas:
                for x in xs:
                    T[x, ju, :] = row
        elif len(parts) == 2:  # T: u :  matrix / keyword
            mat = sub._matrix_or_keyword(parts[1], X, X, no, "transition matrix")
            for ju in jas:
                T[:, ju, :] = mat
        else:
            raise ModelSyntaxError(no, "malformed T entry")

    def _apply_O(self, O, payload, no, states, actions, observations):
        parts, extra = self._split_entry(payload, no)
        sub = self._block_reader(extra)
        X = len(states)
        JZ = math.prod(len(z) for z in observations)
        jas = self._joint(parts[0], actions, no, "action")
        if len(parts) == 4:  # O: u : y : z : p
            ys = self._resolve(parts[1], states, no, "state")
            jzs = self._joint(parts[2], observations, no, "observation")
            p = self._floats([parts[3]], no)[0]
            for ju in jas:
                for y in ys:
                    O[ju, y, jzs] = p
        elif len(parts) == 3:  # O: u : y : row
            ys = self._resolve(parts[1], states, no, "state")
            row = sub._row(parts[2], JZ, no, "observation row")
            for ju in jas:
                for y in ys:
                    O[ju, y, :] = row
        elif len(parts) == 2:
            mat = sub._matrix_or_keyword(parts[1], X, JZ, no, "observation matrix")
            for ju in jas:
                O[ju, :, :] = mat
        else:
            raise ModelSyntaxError(no, "malformed O entry")

    def _apply_R(self, rwd, payload, no, states, actions, observations):
        parts, extra = self._split_entry(payload, no)
        if len(parts) != 5:
            raise ModelSyntaxError(no, "R entries must read 'R: u : x : y : z : value'")
        jas = self._joint(parts[0], actions, no, "action")
        xs = self._resolve(parts[1], states, no, "state")
        y = None if parts[2] == "*" else self._resolve(parts[2], states, no, "state")[0]
        zs = [None] if parts[3].split() == ["*"] else self._joint(parts[3], observations, no,
                                                                  "observation")
        v = self._floats([parts[4]], no)[0]
        for ju in jas:
            for x in xs:
                items = rwd.setdefault((x, ju), [])
                if y is None and zs == [None]:
                    items.clear()  # a full wildcard overrides everything before it
                for z in zs:
                    items.append((y, z, v))


def _from_dense(states, actions, observations, T, O, R, b0, discount, horizon):
    X, JU = R.shape
    t_rows = {}
    for x in range(X):
        for ju in range(JU):
            ys = np.nonzero(T[x, ju])[0]
            t_rows[(x, ju)] = (ys.astype(np.int64), T[x, ju, ys].copy())
    o_rows = {}
    for ju in range(JU):
        for y in range(X):
            zs = np.nonzero(O[ju, y])[0]
            o_rows[(ju, y)] = (zs.astype(np.int64), O[ju, y, zs].copy())
    shape = (X, JU)
    return DecPomdpModel(states, actions, observations,
                         RowTable(lambda x, ju: t_rows[(x, ju)], all_row_keys(shape, "T")),
                         RowTable(lambda ju, y: o_rows[(ju, y)], all_row_keys(shape, "O")),
                         R, b0, discount, horizon, "parsed")
