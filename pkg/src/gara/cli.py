"""Command-line harness: configure, train, evaluate, verify, and plot.

Subcommands: train, eval, plot-partition, plot-curves, verify-net,
print-default-config. The output root defaults to ./runs and can be
overridden with the GARA_OUT environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import glob as globlib
import json
import multiprocessing
import os
import sys
from pathlib import Path

import numpy as np

from . import mlp, svgplot
from .agents import HighLevelAgent, LowLevelAgent
from .intervals import IntervalBox, reach_box
from .maze import ACTIONS, MazeConfig, state_domain
from .partition import GoalSpace, ReachVerdict, classify
from .training import (
    AGENT_KINDS,
    TrainerConfig,
    audit_run_dir,
    evaluate_flat,
    evaluate_hierarchical,
    run_training,
    write_run_info,
)


class ConfigError(ValueError):
    pass


def default_out_root() -> str:
    return os.environ.get("GARA_OUT", "runs")


def default_config_doc() -> dict:
    return {
        "agent": "gara",
        "seeds": [0],
        "out_dir": default_out_root(),
        "maze": MazeConfig().to_dict(),
        "trainer": dataclasses.asdict(TrainerConfig()),
    }


def _check_keys(doc: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key {unknown[0]!r} "
                          f"(allowed: {', '.join(sorted(allowed))})")


def parse_run_config(doc: dict) -> dict:
    """Validate a run-config document; returns the resolved config dict."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(doc, {"agent", "seeds", "out_dir", "maze", "trainer"}, "config")
    agent = doc.get("agent", "gara")
    if agent not in AGENT_KINDS:
        raise ConfigError(f"config.agent: unknown agent {agent!r} "
                          f"(expected one of {', '.join(AGENT_KINDS)})")
    seeds = doc.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("config.seeds must be a non-empty list of integers")

    maze_doc = doc.get("maze", {})
    maze_fields = {f.name for f in dataclasses.fields(MazeConfig)}
    _check_keys(maze_doc, maze_fields, "config.maze")
    try:
        maze = MazeConfig.from_dict(maze_doc)
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"config.maze: {exc}") from exc

    trainer_doc = doc.get("trainer", {})
    trainer_fields = {f.name for f in dataclasses.fields(TrainerConfig)}
    _check_keys(trainer_doc, trainer_fields, "config.trainer")
    try:
        trainer = TrainerConfig(**trainer_doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config.trainer: {exc}") from exc

    return {
        "agent": agent,
        "seeds": seeds,
        "out_dir": doc.get("out_dir", default_out_root()),
        "maze": maze,
        "trainer": trainer,
    }


def load_run_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return parse_run_config(doc)


def _resolved_doc(cfg: dict, seed: int) -> dict:
    return {
        "agent": cfg["agent"],
        "seed": seed,
        "out_dir": str(cfg["out_dir"]),
        "maze": cfg["maze"].to_dict(),
        "trainer": dataclasses.asdict(cfg["trainer"]),
    }


def _train_one(args: tuple) -> str:
    cfg, seed, verbose = args
    trainer = dataclasses.replace(cfg["trainer"], seed=seed)
    run_dir = Path(cfg["out_dir"]) / cfg["agent"] / str(seed)
    run_dir.mkdir(parents=True, exist_ok=True)
    doc = _resolved_doc(cfg, seed)
    (run_dir / "config.json").write_text(json.dumps(doc, indent=1))
    write_run_info(run_dir, doc, seed)
    run_training(cfg["agent"], cfg["maze"], trainer, run_dir, quiet=not verbose)
    missing = audit_run_dir(run_dir, cfg["agent"])
    if missing:
        raise RuntimeError(f"run {run_dir} incomplete, missing: {', '.join(missing)}")
    return str(run_dir)


def cmd_train(args) -> int:
    try:
        cfg = load_run_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg["seeds"] = [int(s) for s in args.seed.split(",")]
    if args.out is not None:
        cfg["out_dir"] = args.out
    jobs = [(cfg, seed, args.verbose) for seed in cfg["seeds"]]
    if args.jobs > 1 and len(jobs) > 1:
        with multiprocessing.Pool(args.jobs) as pool:
            for run_dir in pool.imap(_train_one, jobs):
                print(f"completed: {run_dir}")
    else:
        for job in jobs:
            print(f"completed: {_train_one(job)}")
    return 0


def _load_goal_space(run_dir: Path) -> GoalSpace:
    doc = json.loads((run_dir / "partition.json").read_text())
    domain = IntervalBox(doc["state_domain"]["lo"], doc["state_domain"]["hi"])
    return GoalSpace.from_snapshot(doc["regions"], domain, doc.get("generation", 0))


def cmd_eval(args) -> int:
    if args.episodes <= 0:
        print("error: --episodes must be a positive integer", file=sys.stderr)
        return 2
    run_dir = Path(args.run_dir)
    config_path = run_dir / "config.json"
    if not config_path.exists():
        print(f"error: missing checkpoint file {config_path}", file=sys.stderr)
        return 2
    doc = json.loads(config_path.read_text())
    maze = MazeConfig.from_dict(doc["maze"])
    agent_kind = doc["agent"]
    net_path = run_dir / "low_q_net.json"
    if not net_path.exists():
        print(f"error: missing checkpoint file {net_path}", file=sys.stderr)
        return 2
    q_net = mlp.load_checkpoint(net_path)
    state_dim = state_domain(maze).dim
    goal_dim = q_net.input_dim - state_dim
    low = LowLevelAgent(state_dim, goal_dim, len(ACTIONS))
    low.q_net = q_net
    rng = np.random.default_rng(args.eval_seed)
    if agent_kind == "flat-dqn":
        rate, steps = evaluate_flat(maze, low, args.episodes, rng)
    else:
        gs = _load_goal_space(run_dir)
        high = HighLevelAgent()
        for entry in json.loads((run_dir / "high_q.json").read_text()):
            high.q[(int(entry["source"]), int(entry["target"]))] = float(entry["q"])
        k = int(doc["trainer"]["k"])
        rate, steps = evaluate_hierarchical(maze, gs, high, low, k, args.episodes, rng)
    print(f"success_rate={rate} mean_steps_to_exit={steps}")
    return 0


def cmd_plot_partition(args) -> int:
    path = Path(args.snapshot)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read snapshot {path}: {exc}", file=sys.stderr)
        return 2
    if "regions" not in doc:
        print(f"error: malformed snapshot {path}: missing 'regions'", file=sys.stderr)
        return 2
    if args.maze_config is not None:
        doc["maze"] = MazeConfig.from_dict(
            json.loads(Path(args.maze_config).read_text())).to_dict()
    svg = svgplot.render_partition(doc)
    out = Path(args.output) if args.output else path.with_suffix(".svg")
    out.write_text(svg)
    print(f"wrote {out}")
    return 0


def _expand_metrics_args(patterns: list[str]) -> list[Path]:
    paths: list[Path] = []
    for pat in patterns:
        matches = sorted(globlib.glob(pat, recursive=True))
        if matches:
            paths.extend(Path(m) for m in matches)
        else:
            paths.append(Path(pat))
    return paths


def _read_metrics_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    steps, rates = [], []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        s_idx, r_idx = header.index("step"), header.index("success_rate")
        for line in fh:
            cells = line.strip().split(",")
            steps.append(float(cells[s_idx]))
            rates.append(float(cells[r_idx]))
    return np.array(steps), np.array(rates)


def cmd_plot_curves(args) -> int:
    paths = _expand_metrics_args(args.metrics)
    series: dict[str, list] = {}
    for p in paths:
        if not p.exists():
            print(f"error: no such metrics file {p}", file=sys.stderr)
            return 2
        # runs live under <out>/<agent>/<seed>/metrics.csv
        agent = p.parent.parent.name if p.parent.parent.name else p.parent.name
        series.setdefault(agent, []).append(_read_metrics_csv(p))
    if not series:
        print("error: no metrics files matched", file=sys.stderr)
        return 2
    svg = svgplot.render_curves(series)
    out = Path(args.output)
    out.write_text(svg)
    print(f"wrote {out}")
    return 0


def _parse_box(text: str, name: str, dim: int | None) -> IntervalBox:
    try:
        doc = json.loads(text)
        box = IntervalBox(doc[0], doc[1])
    except (json.JSONDecodeError, ValueError, KeyError, IndexError, TypeError) as exc:
        raise ConfigError(f"{name}: expected JSON [[lo...],[hi...]]: {exc}") from exc
    if dim is not None and box.dim != dim:
        raise ConfigError(f"{name}: dimension {box.dim} does not match expected {dim}")
    return box


def cmd_verify_net(args) -> int:
    try:
        net = mlp.load_checkpoint(args.model)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: cannot load model {args.model}: {exc}", file=sys.stderr)
        return 3
    try:
        input_box = _parse_box(args.input_box, "--input-box", net.input_dim)
        target_box = _parse_box(args.target_box, "--target-box", net.output_dim)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    out = reach_box(net, input_box, args.depth)
    verdict = classify(out, target_box)
    print(verdict.value)
    print(json.dumps({"lo": out.lo.tolist(), "hi": out.hi.tolist()}))
    return {ReachVerdict.REACHED: 0, ReachVerdict.NOT_REACHED: 1,
            ReachVerdict.AMBIGUOUS: 2}[verdict]


def cmd_print_default_config(_args) -> int:
    print(json.dumps(default_config_doc(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gara",
        description="Train, evaluate, and inspect goal-abstraction HRL experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run training for each configured seed")
    p.add_argument("config", help="path to a run-config JSON document")
    p.add_argument("--seed", help="comma-separated seed list overriding the config")
    p.add_argument("--out", help="output root overriding the config")
    p.add_argument("--jobs", type=int, default=1, help="parallel seed runs")
    p.add_argument("--verbose", action="store_true", help="print eval progress")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="greedy evaluation of a trained run directory")
    p.add_argument("run_dir")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--eval-seed", type=int, default=12345)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot-partition", help="render a partition snapshot to SVG")
    p.add_argument("snapshot")
    p.add_argument("--maze-config", help="maze geometry JSON overriding the embedded one")
    p.add_argument("-o", "--output", help="output file (default: snapshot with .svg)")
    p.set_defaults(func=cmd_plot_partition)

    p = sub.add_parser("plot-curves", help="render success-rate curves to SVG")
    p.add_argument("metrics", nargs="+", help="metrics.csv paths or glob patterns")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_plot_curves)

    p = sub.add_parser("verify-net", help="box reachability verdict for a checkpoint")
    p.add_argument("model", help="network checkpoint JSON")
    p.add_argument("--input-box", required=True, help='JSON [[lo...],[hi...]]')
    p.add_argument("--target-box", required=True, help='JSON [[lo...],[hi...]]')
    p.add_argument("--depth", type=int, default=0, help="input bisection depth")
    p.set_defaults(func=cmd_verify_net)

    p = sub.add_parser("print-default-config", help="dump the default run config JSON")
    p.set_defaults(func=cmd_print_default_config)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
