"""Command-line experiment runner.

Every subcommand writes CSV (or a model file for ``gen``) to ``--out`` or to
standard output.  Run ``hispbvi --help`` for the list of subcommands.
"""
from __future__ import annotations

import csv
import io
import itertools
import sys
import time

import click

from . import benchgen
from .baselines import IqlConfig, TableTooLarge, iql_train
from .pbvi import BudgetExceeded, SolverConfig, solve
from .subgame import TooManyCandidates

COLUMNS = ["game", "n", "horizon", "discount", "algo", "seed", "value", "iterations",
           "backup_time_mean_s", "wall_s", "converged"]
OOT = "OOT"


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def _load(game, n, horizon, discount, model_file):
    if model_file is not None:
        try:
            with open(model_file, encoding="utf-8") as fh:
                model = benchgen.parse_model(fh)
        except OSError as e:
            raise click.ClickException(f"cannot read model file: {e}") from None
        except (benchgen.ModelSyntaxError, benchgen.ModelSemanticError) as e:
            raise click.ClickException(f"invalid model file: {e}") from None
        return model.with_horizon(horizon, discount), (model.name or "file")
    try:
        spec = benchgen.BenchmarkSpec(game, n, horizon=horizon, discount=discount)
        return benchgen.generate(spec), game
    except ValueError as e:
        raise click.ClickException(str(e)) from None


def run_one(model, game, n, algo, seed, *, backup="hier", compress="b1b2", budget=1800.0,
            points_cap=64, max_iters=50, episodes=100_000, deterministic=False):
    """Solve one cell and return ``(record dict, anytime samples)``."""
    rec = dict(game=game, n=n, horizon=model.horizon, discount=model.discount, seed=seed)
    start = time.perf_counter()
    if algo == "pbvi":
        rec["algo"] = f"pbvi-{backup}-{compress}"
        cfg = SolverConfig(backup=backup, compress=compress, seed=seed, points_cap=points_cap,
                           budget_secs=float("inf") if deterministic else budget,
                           max_iters=max_iters)
        try:
            res = solve(model, cfg)
        except (BudgetExceeded, TooManyCandidates) as e:
            rec.update(value=OOT, iterations=0, backup_time_mean_s=OOT,
                       wall_s=time.perf_counter() - start, converged=OOT)
            rec["_reason"] = str(e)
            return rec, []
        st = res.stats
        rec.update(value=st["rollout_value"], iterations=st["iterations"],
                   backup_time_mean_s=st["backup_time_mean"], wall_s=st["wall"],
                   converged=OOT if st["budget_exhausted"] else st["converged"])
        samples = st["history"]
    elif algo == "iql":
        rec["algo"] = "iql"
        try:
            _, curve = iql_train(model, IqlConfig(episodes=episodes, seed=seed,
                                                  eval_every=max(1, episodes // 20)))
        except TableTooLarge as e:
            raise click.ClickException(str(e)) from None
        wall = time.perf_counter() - start
        rec.update(value=curve[-1][1], iterations=episodes, backup_time_mean_s=0.0,
                   wall_s=wall, converged=True)
        samples = [(ep, v) for ep, v in curve]
    else:
        raise click.ClickException(f"unknown algorithm {algo!r}")
    if deterministic:
        rec["backup_time_mean_s"] = "-"
        rec["wall_s"] = "-"
    return rec, samples


def _write_rows(out, rows, columns=COLUMNS):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    text = buf.getvalue()
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


common = [
    click.option("--game", type=click.Choice(benchgen.FAMILIES), default="tiger", show_default=True),
    click.option("--n", "n", type=int, default=2, show_default=True, help="number of players"),
    click.option("--horizon", type=int, default=30, show_default=True),
    click.option("--discount", type=float, default=1.0, show_default=True),
    click.option("--out", type=click.Path(dir_okay=False), default=None,
                 help="output file (default: standard output)"),
]

solver_opts = [
    click.option("--backup", type=click.Choice(["enum", "hier"]), default="hier", show_default=True),
    click.option("--compress", type=click.Choice(["none", "b1", "b1b2"]), default="b1b2",
                 show_default=True),
    click.option("--budget-secs", type=float, default=1800.0, show_default=True),
    click.option("--seed", type=int, default=0, show_default=True),
    click.option("--points-cap", type=int, default=64, show_default=True),
    click.option("--max-iters", type=int, default=50, show_default=True),
    click.option("--episodes", type=int, default=100_000, show_default=True,
                 help="training episodes for iql"),
    click.option("--deterministic", is_flag=True,
                 help="ignore the wall-clock budget and blank timing columns"),
]


def _apply(opts):
    def deco(f):
        for o in reversed(opts):
            f = o(f)
        return f
    return deco


@click.group()
def main():
    """Planning for Dec-POMDPs with hierarchical information sharing."""


@main.command()
@_apply(common)
def gen(game, n, horizon, discount, out):
    """Write a benchmark model file."""
    model, _ = _load(game, n, horizon, discount, None)
    text = benchgen.serialize_model(model)
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


@main.command("solve")
@_apply(common + solver_opts)
@click.option("--algo", type=click.Choice(["pbvi", "iql"]), default="pbvi", show_default=True)
@click.option("--model", "model_file", type=click.Path(), default=None,
              help="read the model from a file instead of generating it")
def solve_cmd(game, n, horizon, discount, out, backup, compress, budget_secs, seed, points_cap,
              max_iters, episodes, deterministic, algo, model_file):
    """Solve one instance and print a single CSV record."""
    model, name = _load(game, n, horizon, discount, model_file)
    rec, _ = run_one(model, name, model.n_players, algo, seed, backup=backup, compress=compress,
                     budget=budget_secs, points_cap=points_cap, max_iters=max_iters,
                     episodes=episodes, deterministic=deterministic)
    _write_rows(out, [rec])
    if "_reason" in rec:
        click.echo(f"out of time: {rec['_reason']}", err=True)


@main.command()
@click.option("--game", "games", multiple=True, type=click.Choice(benchgen.FAMILIES),
              help="repeatable; default: tiger, recycling, mabc")
@click.option("--n", "ns", multiple=True, type=int, help="repeatable; default 2")
@click.option("--algo", "algos", multiple=True, type=click.Choice(["pbvi", "iql"]),
              help="repeatable; default pbvi")
@click.option("--horizon", type=int, default=30, show_default=True)
@click.option("--discount", type=float, default=1.0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_apply(solver_opts)
def table(games, ns, algos, horizon, discount, out, backup, compress, budget_secs, seed,
          points_cap, max_iters, episodes, deterministic):
    """Sweep families x player counts x algorithms into one CSV table.

    A cell whose budget runs out is marked OOT in the converged column, and
    also in the value column when no complete sweep finished.
    """
    games = games or ("tiger", "recycling", "mabc")
    ns = ns or (2,)
    algos = algos or ("pbvi",)
    rows = []
    for game, n, algo in itertools.product(games, ns, algos):
        model, name = _load(game, n, horizon, discount, None)
        rec, _ = run_one(model, name, n, algo, seed, backup=backup, compress=compress,
                         budget=budget_secs, points_cap=points_cap, max_iters=max_iters,
                         episodes=episodes, deterministic=deterministic)
        rows.append(rec)
    _write_rows(out, rows)


@main.command()
@_apply(common + solver_opts)
@click.option("--algo", type=click.Choice(["pbvi", "iql"]), default="pbvi", show_default=True)
def curve(game, n, horizon, discount, out, backup, compress, budget_secs, seed, points_cap,
          max_iters, episodes, deterministic, algo):
    """Anytime samples: one row per iteration (pbvi) or evaluation point (iql).

    The ``x`` column is wall-clock seconds for pbvi and episodes for iql.
    """
    model, name = _load(game, n, horizon, discount, None)
    rec, samples = run_one(model, name, n, algo, seed, backup=backup, compress=compress,
                           budget=budget_secs, points_cap=points_cap, max_iters=max_iters,
                           episodes=episodes, deterministic=deterministic)
    cols = ["game", "n", "algo", "seed", "x", "value"]
    rows = [dict(game=name, n=n, algo=rec["algo"], seed=seed,
                 x="-" if deterministic and algo == "pbvi" else x, value=v)
            for x, v in samples]
    _write_rows(out, rows, cols)


def run(args=None) -> int:
    """Entry point returning an exit status instead of exiting."""
    try:
        main.main(args=args, prog_name="hispbvi", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.exceptions.Abort:
        return 1
    except SystemExit as e:
        return int(e.code or 0)
    return 0


if __name__ == "__main__":
    sys.exit(run())
