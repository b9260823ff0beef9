"""Time one hierarchical backup against one enumeration backup as players are added.

Enumeration gets a 20 s cap per backup and is reported OOT when it runs out.
"""
import math
import time

import numpy as np

from hispbvi import BenchmarkSpec, SolverConfig, cluster_histories, generate, initial_occupancy
from hispbvi.pbvi import BudgetExceeded, _sample_branch, backup, mdp_greedy_rule, random_rule
from hispbvi.valuefn import AlphaVector

CAP = 20.0


def point(model, steps, seed):
    rng = np.random.default_rng(seed)
    s = initial_occupancy(model)
    for _ in range(steps):
        s = cluster_histories(model, _sample_branch(model, s, random_rule(model, s, rng), rng))[0]
    return s


for n in range(2, 7):
    model = generate(BenchmarkSpec("recycling", n, horizon=10))
    s = point(model, 3, 0)
    succ = point(model, 4, 1)
    nxt = [AlphaVector.from_rule(model, succ, mdp_greedy_rule(model, succ), None)]
    row = [f"recycling({n}) {len(s):5d} joint histories"]
    for kind in ("hier", "enum"):
        t0 = time.perf_counter()
        try:
            backup(model, s, nxt, SolverConfig(backup=kind, enum_guard=math.inf),
                   deadline=t0 + CAP)
            row.append(f"{kind} {time.perf_counter() - t0:7.2f} s")
        except BudgetExceeded:
            row.append(f"{kind}     OOT")
    print("  ".join(row), flush=True)
