"""Command-line entry point: solve, run, sweep-beta, heatmap.

Every command writes a manifest next to its primary output recording the
argument vector, input hashes, and wall-clock timings, so any artifact
can be regenerated exactly.  Numeric reward configuration lives in files
referenced by --rewards; selector flags stay on the command line.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__, game, harness, table as table_io
from .grid import GridDim, GridSpec, default_grid_3d, default_grid_4d
from .rewards import RewardConfig

CACHE_ENV = "GTPLAN_CACHE"


class CliError(Exception):
    """Configuration error; printed and mapped to a nonzero exit code."""


def _load_rewards(path: str | None) -> RewardConfig:
    if path is None:
        return RewardConfig()
    try:
        return RewardConfig.load(path)
    except (OSError, ValueError) as err:
        raise CliError(f"invalid --rewards file {path}: {err}") from err


def _load_grid_file(path: str):
    """JSON grid/action description: dims, k, dk, and optional action lists."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            spec = json.load(fh)
        dims = tuple(GridDim(d["name"], float(d["min"]), float(d["max"]),
                             int(d["count"])) for d in spec["dims"])
        grid = GridSpec(dims=dims, K=int(spec["k"]), dk=float(spec["dk"]))
        actions = None
        if "leader_actions" in spec:
            actions = game.ActionGrid(
                leader=np.asarray(spec["leader_actions"], dtype=np.float64),
                follower=np.asarray(spec["follower_actions"], dtype=np.float64))
        return grid, actions
    except (OSError, KeyError, TypeError, ValueError) as err:
        raise CliError(f"invalid --grid file {path}: {err}") from err


def _write_manifest(out_path: str, command: str, started: float,
                    extra: dict) -> None:
    manifest = {
        "tool": "gtplan",
        "version": __version__,
        "command": command,
        "argv": sys.argv[1:],
        "wall_seconds": time.perf_counter() - started,
        **extra,
    }
    with open(out_path + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def cmd_solve(args) -> int:
    started = time.perf_counter()
    rewards = _load_rewards(args.rewards)
    if args.grid:
        grid, actions = _load_grid_file(args.grid)
        if (len(grid.dims) == 3) != (args.model == "3d"):
            raise CliError(f"--grid dimensionality does not match --model {args.model}")
    else:
        grid = default_grid_3d(K=args.k, dk=args.dk) if args.model == "3d" \
            else default_grid_4d(K=args.k, dk=args.dk)
        actions = None
    if actions is None:
        actions = game.default_actions(args.model)
    params = game.SolverParams(beta=args.beta, K=grid.K, alpha=args.alpha,
                               dk=grid.dk)
    t0 = time.perf_counter()
    solved = game.solve(args.model, grid, actions, rewards, params,
                        threads=args.threads)
    solve_seconds = time.perf_counter() - t0
    table_io.save(solved, args.out)
    print(f"solved {args.model} game: grid {'x'.join(map(str, grid.shape))} "
          f"({grid.ncells} cells), K={grid.K}, beta={args.beta}")
    print(f"leader actions: {actions.leader.shape[0]}, "
          f"follower actions: {actions.follower.shape[0]}")
    print(f"stage sweeps: {grid.K + 1}, avg {solve_seconds / (grid.K + 1):.2f} s/stage, "
          f"total {solve_seconds:.2f} s")
    print(f"V_A range at k=0: [{solved.values_A[0].min():.3f}, "
          f"{solved.values_A[0].max():.3f}]")
    print(f"wrote {args.out}")
    _write_manifest(args.out, "solve", started, {
        "model": args.model, "beta": args.beta, "alpha": args.alpha,
        "threads": args.threads, "solve_seconds": solve_seconds,
        "reward_hash": rewards.digest().hex(),
        "output_sha256": _file_sha256(args.out),
    })
    return 0


def cmd_run(args) -> int:
    started = time.perf_counter()
    rewards = _load_rewards(args.rewards)
    hierarchical = args.planner in ("hier3d", "hier4d")
    if hierarchical and not args.value:
        raise CliError(f"--planner {args.planner} requires --value TABLE")
    av_table = None
    if args.value:
        try:
            av_table = table_io.load(args.value)
        except (OSError, table_io.TableFormatError) as err:
            raise CliError(f"cannot load --value {args.value}: {err}") from err
        if hierarchical and av_table.model != args.planner[-2:]:
            raise CliError(
                f"--planner {args.planner} needs a {args.planner[-2:]} table, "
                f"got {av_table.model}")
    cfg = harness.make_scenario(
        args.scenario, planner_kind=args.planner, av_table=av_table,
        rewards=rewards, episode_length=args.episode_length,
        human_kind=args.human, constant_speed=args.constant_speed,
        human_preview=args.human_preview, influence=args.influence,
        value_path=args.value, seed=args.seed)
    log = harness.run_scenario(cfg)
    metrics = harness.evaluate(log)
    harness.save_episode(log, args.out_log)
    with open(args.out_metrics, "w", encoding="utf-8") as fh:
        fh.write(harness.metrics_to_csv([(f"{args.scenario}/{args.planner}", metrics)]))
    if args.out_csv:
        with open(args.out_csv, "w", encoding="utf-8") as fh:
            fh.write(harness.episode_to_csv(log))
    print(f"{args.scenario} with {args.planner}: success={metrics.success} "
          f"collision={metrics.collision} final_gap={metrics.final_gap:.2f} m "
          f"max_speed={metrics.max_av_speed:.2f} m/s")
    _write_manifest(args.out_log, "run", started, {
        "scenario": args.scenario, "planner": args.planner,
        "value_table": _file_sha256(args.value) if args.value else None,
        "reward_hash": rewards.digest().hex(),
        "metrics": {"success": metrics.success, "collision": metrics.collision},
    })
    return 0


def cmd_sweep_beta(args) -> int:
    started = time.perf_counter()
    rewards = _load_rewards(args.rewards)
    try:
        betas = [float(b) for b in args.betas.split(",") if b.strip()]
    except ValueError as err:
        raise CliError(f"invalid --betas list {args.betas!r}: {err}") from err
    if not betas:
        raise CliError("--betas must name at least one value")
    if any(b < 0 for b in betas):
        raise CliError("--betas values must be >= 0")
    cache_dir = args.cache or os.environ.get(CACHE_ENV) or ".gtplan_cache"
    grid, actions = _load_grid_file(args.grid) if args.grid else (None, None)
    rows = harness.sweep_beta(
        args.scenario, betas, rewards, cache_dir, model=args.model,
        grid=grid, actions=actions, threads=args.threads,
        episode_length=args.episode_length)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(harness.sweep_to_csv(rows))
    for row in rows:
        print(f"beta={row.beta}: success={row.metrics.success} "
              f"(solve {row.solve_seconds:.2f} s, cached={row.cached})")
    _write_manifest(args.out, "sweep-beta", started, {
        "scenario": args.scenario, "model": args.model, "betas": betas,
        "cache_dir": cache_dir, "reward_hash": rewards.digest().hex(),
    })
    return 0


def cmd_heatmap(args) -> int:
    started = time.perf_counter()
    try:
        table = table_io.load(args.table)
    except (OSError, table_io.TableFormatError) as err:
        raise CliError(f"cannot load --table {args.table}: {err}") from err
    free = tuple(n.strip() for n in args.free.split(",") if n.strip())
    if len(free) != 2:
        raise CliError(f"--free must name exactly two dimensions, got {args.free!r}")
    fixed = {}
    for item in (args.fixed.split(",") if args.fixed else []):
        if not item.strip():
            continue
        if "=" not in item:
            raise CliError(f"--fixed entries must look like name=value, got {item!r}")
        name, _, val = item.partition("=")
        try:
            fixed[name.strip()] = float(val)
        except ValueError as err:
            raise CliError(f"--fixed {item!r}: {err}") from err
    try:
        matrix = table_io.export_heatmap_slice(table, args.k, fixed, free,
                                               player=args.player)
    except (KeyError, ValueError) as err:
        raise CliError(str(err)) from err
    table_io.write_heatmap_csv(args.out_csv, table, matrix, free)
    if args.out_ppm:
        table_io.write_heatmap_ppm(args.out_ppm, matrix)
    print(f"heatmap {matrix.shape[0]}x{matrix.shape[1]} over {free} at k={args.k}")
    _write_manifest(args.out_csv, "heatmap", started, {
        "table": _file_sha256(args.table), "k": args.k,
        "free": list(free), "fixed": fixed, "player": args.player,
    })
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gtplan",
        description="Hierarchical game-theoretic highway planning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the strategic game, write a value table")
    p.add_argument("--model", choices=("3d", "4d"), required=True)
    p.add_argument("--beta", type=float, default=1.0,
                   help="inverse temperature of the human model")
    p.add_argument("--alpha", type=float, default=game.SolverParams().alpha,
                   help="friction on the relative speed")
    p.add_argument("--k", type=int, default=10, help="horizon stages")
    p.add_argument("--dk", type=float, default=0.5, help="stage duration (s)")
    p.add_argument("--rewards", help="reward config file (key = value)")
    p.add_argument("--grid", help="JSON grid/action file overriding the defaults")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True, help="output value-table path")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("run", help="run one closed-loop scenario episode")
    p.add_argument("--scenario", choices=harness.SCENARIOS, required=True)
    p.add_argument("--planner", choices=harness.PLANNER_KINDS, required=True)
    p.add_argument("--value", help="value-table file for hierarchical planners")
    p.add_argument("--rewards", help="reward config file")
    p.add_argument("--episode-length", type=float, default=15.0)
    p.add_argument("--human", choices=("optimizer", "constant_speed"),
                   default="optimizer")
    p.add_argument("--constant-speed", type=float, default=24.0)
    p.add_argument("--human-preview", type=float, default=0.5)
    p.add_argument("--influence", action="store_true",
                   help="include the human-response influence term")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-log", required=True, help="episode JSONL output")
    p.add_argument("--out-metrics", required=True, help="metrics CSV output")
    p.add_argument("--out-csv", help="optional per-step CSV export")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-beta", help="solve and evaluate across beta values")
    p.add_argument("--scenario", choices=harness.SCENARIOS, required=True)
    p.add_argument("--betas", required=True, help="comma-separated list")
    p.add_argument("--model", choices=("3d", "4d"), default="3d")
    p.add_argument("--rewards", help="reward config file")
    p.add_argument("--grid", help="JSON grid/action file")
    p.add_argument("--episode-length", type=float, default=15.0)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--cache", help=f"value-table cache dir (default ${CACHE_ENV})")
    p.add_argument("--out", required=True, help="report CSV path")
    p.set_defaults(func=cmd_sweep_beta)

    p = sub.add_parser("heatmap", help="export a 2-D slice of a value table")
    p.add_argument("--table", required=True)
    p.add_argument("--k", type=int, default=0, help="stage to slice")
    p.add_argument("--free", required=True, help="two dimension names, comma-separated")
    p.add_argument("--fixed", default="", help="name=value pairs, comma-separated")
    p.add_argument("--player", choices=("A", "H"), default="A")
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-ppm", help="optional PPM rendering (red=min, blue=max)")
    p.set_defaults(func=cmd_heatmap)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
