"""Solve two-agent tiger for a few horizons and print value, rollout check and time."""
import time

from hispbvi import BenchmarkSpec, SolverConfig, generate, solve

for horizon in (2, 4, 6, 10):
    model = generate(BenchmarkSpec("tiger", 2, horizon=horizon))
    t0 = time.perf_counter()
    res = solve(model, SolverConfig(points_cap=16))
    print(f"horizon {horizon:2d}: value {res.value:9.4f}  "
          f"rollout {res.stats['rollout_value']:9.4f}  "
          f"iterations {res.stats['iterations']:2d}  {time.perf_counter() - t0:5.1f} s")
