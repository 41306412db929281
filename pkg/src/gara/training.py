"""Training loops for the three agents and the per-run artifact emission.

One run is strictly sequential: explore an episode, fine-tune the forward
model, periodically sweep region pairs through the reachability analysis and
refine the partition, and at a fixed step cadence run frozen-epsilon
evaluation episodes. All stochastic choices derive from a single seed, so a
run's metrics stream is byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import __version__
from .agents import (
    HighLevelAgent,
    LowLevelAgent,
    high_update,
    intrinsic_reward,
    linear_schedule,
    on_partition_refined,
    select_goal,
)
from .forward_model import ForwardModel, TransitionRecord, encode_goal
from .intervals import IntervalBox
from .maze import ACTIONS, MazeConfig, MazeEnv, state_domain
from .mlp import save_checkpoint
from .partition import GoalSpace, GoalRegion, refine

AGENT_KINDS = ("gara", "handcrafted", "flat-dqn")

METRIC_FIELDS = ("step", "episode", "eval_success_rate", "n_regions",
                 "fm_loss", "refinements_committed")
CSV_HEADER = "step,episode,success_rate,n_regions,fm_loss,refinements"


@dataclass
class TrainerConfig:
    total_steps: int = 200_000
    k: int = 20
    refinement_period: int = 10          # episodes between refinement sweeps
    refinement_warmup_fraction: float = 0.15  # of total steps before the first sweep
    min_records: int = 100               # records per pair before analysis
    fm_gate_mse: float = 5e-3            # held-out MSE gate before refining on a pair
    min_width_fraction: float = 1.0 / 16.0  # of the domain width, position dimensions
    velocity_min_width_fraction: float = 1.0 / 4.0  # velocity splits stay near sign granularity
    max_depth: int = 4
    split_depth: int = 2
    eval_period: int = 5_000             # low-level steps between evaluations
    eval_episodes: int = 20
    snapshot_steps: list[int] = field(default_factory=lambda: [0, 1_000, 30_000])
    seed: int = 0
    initial_partition: str = "auto"      # auto | single | halves | handcrafted
    hidden: list[int] = field(default_factory=lambda: [64, 64])
    learning_rate: float = 5e-4          # low-level DQN; 1e-3 destabilises late training
    alpha_high: float = 0.4
    gamma_high: float = 0.99
    gamma_low: float = 0.99
    eps_high_start: float = 1.0
    eps_high_end: float = 0.1
    eps_high_fraction: float = 0.3
    eps_low_start: float = 1.0
    eps_low_end: float = 0.05
    eps_low_fraction: float = 0.2
    batch_size: int = 64
    replay_capacity: int = 50_000
    sync_period: int = 500
    fm_epochs: int = 1
    fm_batch_size: int = 64
    fm_max_batches: int = 150
    fm_learning_rate: float = 1e-3
    # small buffer keeps analysis data recent as the policy drifts
    fm_capacity: int = 4_000
    # width regularisation keeps the forward model analysable by box propagation
    fm_tightness_weight: float = 0.3

    def __post_init__(self):
        positive = ("total_steps", "k", "refinement_period", "min_records",
                    "fm_gate_mse", "min_width_fraction", "velocity_min_width_fraction",
                    "max_depth", "eval_period", "eval_episodes", "learning_rate",
                    "alpha_high", "batch_size", "replay_capacity", "sync_period",
                    "fm_epochs", "fm_batch_size", "fm_learning_rate", "fm_capacity")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"trainer.{name} must be positive")
        if self.split_depth < 0 or self.fm_tightness_weight < 0 \
                or self.refinement_warmup_fraction < 0:
            raise ValueError("trainer.split_depth, fm_tightness_weight and "
                             "refinement_warmup_fraction must be >= 0")
        if self.initial_partition not in ("auto", "single", "halves", "handcrafted"):
            raise ValueError(f"unknown initial_partition {self.initial_partition!r}")


@dataclass
class RunResult:
    agent_kind: str
    rows: list[dict]
    final_step: int
    episodes: int
    refinements: int
    goal_space: GoalSpace | None
    high: HighLevelAgent | None
    low: LowLevelAgent
    forward_model: ForwardModel | None


def handcrafted_boxes(maze_cfg: MazeConfig) -> list[IntervalBox]:
    """Fixed 4-region layout: the exit band is its own region, three slabs cover the rest."""
    e = maze_cfg.exit
    v = maze_cfg.v_max

    def box(x0, x1, y0, y1):
        return IntervalBox([x0, y0, -v, -v], [x1, y1, v, v])

    return [
        box(0.0, e.x0, 0.5, 1.0),   # upper-left slab (contains the start)
        box(0.0, e.x0, 0.0, 0.5),   # lower corridor
        box(e.x0, 1.0, 0.0, e.y0),  # right column below the exit
        box(e.x0, 1.0, e.y0, 1.0),  # exit band
    ]


def initial_goal_space(agent_kind: str, maze_cfg: MazeConfig,
                       trainer_cfg: TrainerConfig) -> GoalSpace | None:
    if agent_kind == "flat-dqn":
        return None
    domain = state_domain(maze_cfg)
    kind = trainer_cfg.initial_partition
    if kind == "auto":
        kind = "handcrafted" if agent_kind == "handcrafted" else "halves"
    if kind == "single":
        return GoalSpace.single_region(domain)
    if kind == "halves":
        return GoalSpace.split_halves(domain, dim=0)
    return GoalSpace.from_boxes(handcrafted_boxes(maze_cfg), domain)


def evaluate_hierarchical(maze_cfg: MazeConfig, gs: GoalSpace, high: HighLevelAgent,
                          low: LowLevelAgent, k: int, episodes: int,
                          rng: np.random.Generator) -> tuple[float, float]:
    """Greedy (epsilon = 0) evaluation; returns (success rate, mean steps to exit)."""
    env = MazeEnv(maze_cfg, rng)
    successes = 0
    exit_steps = []
    for _ in range(episodes):
        s = env.reset()
        done = False
        reached = False
        while not done:
            src = gs.locate(s.as_array())
            tgt_id = high.best_target(src, gs.ids())
            target = gs.region(tgt_id)
            g_enc = encode_goal(target)
            for _ in range(k):
                a = int(np.argmax(low.q_values(s.as_array(), g_enc)))
                s, _, done, reached = env.step(ACTIONS[a])
                if done or intrinsic_reward(s.as_array(), target) > 0:
                    break
        if reached:
            successes += 1
            exit_steps.append(env.t)
    rate = successes / episodes
    mean_steps = float(np.mean(exit_steps)) if exit_steps else math.nan
    return rate, mean_steps


def evaluate_flat(maze_cfg: MazeConfig, low: LowLevelAgent, episodes: int,
                  rng: np.random.Generator) -> tuple[float, float]:
    env = MazeEnv(maze_cfg, rng)
    empty = np.zeros(0)
    successes = 0
    exit_steps = []
    for _ in range(episodes):
        s = env.reset()
        done = False
        reached = False
        while not done:
            a = int(np.argmax(low.q_values(s.as_array(), empty)))
            s, _, done, reached = env.step(ACTIONS[a])
        if reached:
            successes += 1
            exit_steps.append(env.t)
    rate = successes / episodes
    mean_steps = float(np.mean(exit_steps)) if exit_steps else math.nan
    return rate, mean_steps


def refinement_sweep(gs: GoalSpace, fm: ForwardModel, high: HighLevelAgent,
                     cfg: TrainerConfig, min_width: np.ndarray) -> int:
    """Analyze every sufficiently-sampled live pair; commit splits that decide reachability."""
    committed = 0
    for src, tgt in fm.pairs():
        live = set(gs.ids())
        if src == tgt or src not in live or tgt not in live:
            continue
        if fm.pair_count(src, tgt) < cfg.min_records:
            continue
        mse = fm.validation_mse(src, tgt)
        if not (mse < cfg.fm_gate_mse):
            continue
        report = refine(gs, src, tgt, fm.reach_fn(gs.region(tgt), cfg.split_depth),
                        min_width, cfg.max_depth)
        if report.committed:
            on_partition_refined(high, report)
            committed += 1
    return committed


class _ArtifactWriter:
    """Writes snapshots, metrics and checkpoints under one run directory."""

    def __init__(self, out_dir: Path | None, agent_kind: str, maze_cfg: MazeConfig):
        self.out_dir = out_dir
        self.agent_kind = agent_kind
        self.maze_cfg = maze_cfg
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)

    def snapshot(self, label_step: int, step: int, gs: GoalSpace) -> None:
        if self.out_dir is None or gs is None:
            return
        doc = {
            "step": label_step,
            "actual_step": step,
            "agent": self.agent_kind,
            "generation": gs.generation,
            "state_domain": {"lo": gs.state_domain.lo.tolist(),
                             "hi": gs.state_domain.hi.tolist()},
            "regions": gs.snapshot(),
            "maze": self.maze_cfg.to_dict(),
        }
        path = self.out_dir / f"snapshot_{label_step}.json"
        path.write_text(json.dumps(doc, indent=1))

    def metrics(self, rows: list[dict]) -> None:
        if self.out_dir is None:
            return
        with open(self.out_dir / "metrics.jsonl", "w") as fh:
            for row in rows:
                fh.write(json.dumps({k: row[k] for k in METRIC_FIELDS}) + "\n")
        with open(self.out_dir / "metrics.csv", "w") as fh:
            fh.write(CSV_HEADER + "\n")
            for row in rows:
                fh.write(f"{row['step']},{row['episode']},{row['eval_success_rate']},"
                         f"{row['n_regions']},{row['fm_loss']},"
                         f"{row['refinements_committed']}\n")

    def final(self, result: RunResult) -> None:
        if self.out_dir is None:
            return
        save_checkpoint(result.low.q_net, self.out_dir / "low_q_net.json")
        if result.forward_model is not None:
            result.forward_model.save(self.out_dir / "fm_net.json",
                                      self.out_dir / "fm_meta.json")
        if result.high is not None:
            table = [{"source": s, "target": t, "q": v}
                     for (s, t), v in sorted(result.high.q.items())]
            (self.out_dir / "high_q.json").write_text(json.dumps(table))
        if result.goal_space is not None:
            gs = result.goal_space
            doc = {
                "generation": gs.generation,
                "state_domain": {"lo": gs.state_domain.lo.tolist(),
                                 "hi": gs.state_domain.hi.tolist()},
                "regions": gs.snapshot(),
                "maze": self.maze_cfg.to_dict(),
            }
            (self.out_dir / "partition.json").write_text(json.dumps(doc, indent=1))


def run_training(agent_kind: str, maze_cfg: MazeConfig, trainer_cfg: TrainerConfig,
                 out_dir: str | Path | None = None, quiet: bool = True) -> RunResult:
    """Train one agent for trainer_cfg.total_steps low-level steps."""
    if agent_kind not in AGENT_KINDS:
        raise ValueError(f"unknown agent kind {agent_kind!r}; expected one of {AGENT_KINDS}")
    if trainer_cfg.k > maze_cfg.max_steps:
        raise ValueError(f"k={trainer_cfg.k} exceeds max episode steps {maze_cfg.max_steps}")
    out = Path(out_dir) if out_dir is not None else None
    writer = _ArtifactWriter(out, agent_kind, maze_cfg)

    if agent_kind == "flat-dqn":
        result = _run_flat(maze_cfg, trainer_cfg, writer, quiet)
    else:
        result = _run_hierarchical(agent_kind, maze_cfg, trainer_cfg, writer, quiet)
    writer.metrics(result.rows)
    writer.final(result)
    return result


def _rngs(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(6)
    names = ("env", "net", "explore", "replay", "fm", "eval")
    return {n: np.random.default_rng(ss) for n, ss in zip(names, children)}


def _run_hierarchical(agent_kind: str, maze_cfg: MazeConfig, cfg: TrainerConfig,
                      writer: _ArtifactWriter, quiet: bool) -> RunResult:
    rngs = _rngs(cfg.seed)
    domain = state_domain(maze_cfg)
    gs = initial_goal_space(agent_kind, maze_cfg, cfg)
    state_dim = domain.dim
    refinement_on = agent_kind == "gara"
    # positions split down to fine cells; velocity splits stay coarse
    min_width = domain.widths * cfg.min_width_fraction
    min_width[2:] = domain.widths[2:] * cfg.velocity_min_width_fraction

    high = HighLevelAgent(alpha=cfg.alpha_high, gamma=cfg.gamma_high)
    net_seed = int(rngs["net"].integers(2 ** 63))
    low = LowLevelAgent(state_dim, 2 * state_dim, len(ACTIONS), tuple(cfg.hidden),
                        cfg.learning_rate, cfg.gamma_low, cfg.replay_capacity,
                        cfg.batch_size, cfg.sync_period, seed=net_seed)
    fm = ForwardModel(state_dim, domain, cfg.k, cfg.fm_capacity, tuple(cfg.hidden),
                      cfg.fm_learning_rate, seed=int(rngs["net"].integers(2 ** 63)),
                      tightness_weight=cfg.fm_tightness_weight)
    env = MazeEnv(maze_cfg, rngs["env"])

    rows: list[dict] = []
    snapshots_due = sorted(set(s for s in cfg.snapshot_steps if s <= cfg.total_steps))
    step = 0
    episode = 0
    refinements = 0
    fm_loss = math.nan
    next_eval = 0

    def maybe_emit(current_step: int) -> None:
        nonlocal next_eval
        while snapshots_due and current_step >= snapshots_due[0]:
            writer.snapshot(snapshots_due.pop(0), current_step, gs)
        if current_step >= next_eval:
            rate, _ = evaluate_hierarchical(maze_cfg, gs, high, low, cfg.k,
                                            cfg.eval_episodes, rngs["eval"])
            rows.append({
                "step": current_step, "episode": episode, "eval_success_rate": rate,
                "n_regions": len(gs), "fm_loss": fm_loss,
                "refinements_committed": refinements,
            })
            if not quiet:
                print(f"[{agent_kind} seed={cfg.seed}] step={current_step} "
                      f"success={rate:.2f} regions={len(gs)} refinements={refinements}")
            next_eval = (current_step // cfg.eval_period + 1) * cfg.eval_period

    maybe_emit(0)
    while step < cfg.total_steps:
        episode += 1
        s = env.reset()
        done = False
        while not done and step < cfg.total_steps:
            src_id = gs.locate(s.as_array())
            high.epsilon = linear_schedule(cfg.eps_high_start, cfg.eps_high_end,
                                           cfg.eps_high_fraction, step, cfg.total_steps)
            tgt_id = select_goal(high, src_id, gs.ids(), rngs["explore"])
            target = gs.region(tgt_id)
            g_enc = encode_goal(target)
            start_state = s.as_array()
            window_reward = 0.0
            elapsed = 0
            terminal = False
            for i in range(cfg.k):
                low.epsilon = linear_schedule(cfg.eps_low_start, cfg.eps_low_end,
                                              cfg.eps_low_fraction, step, cfg.total_steps)
                cur_state = s.as_array()
                a = low.select_action(cur_state, g_enc, rngs["explore"])
                s, r_env, done, reached = env.step(ACTIONS[a])
                nxt_state = s.as_array()
                r_int = intrinsic_reward(nxt_state, target)
                done_sub = r_int > 0 or done
                low.remember(cur_state, g_enc, a, r_int, nxt_state, done_sub)
                low.update(rngs["replay"])
                window_reward += cfg.gamma_high ** i * r_env
                elapsed += 1
                step += 1
                terminal = reached
                maybe_emit(step)
                if done_sub or step >= cfg.total_steps:
                    break
            end_state = s.as_array()
            fm.record(TransitionRecord(start_state, g_enc, end_state), src_id, tgt_id)
            next_id = gs.locate(end_state)
            high_update(high, src_id, tgt_id, window_reward, next_id, gs.ids(),
                        elapsed, terminal)
        if refinement_on:
            fm_loss = fm.train(cfg.fm_epochs, cfg.fm_batch_size, rngs["fm"],
                               cfg.fm_max_batches)
            warmed_up = step >= cfg.refinement_warmup_fraction * cfg.total_steps
            if warmed_up and episode % cfg.refinement_period == 0:
                refinements += refinement_sweep(gs, fm, high, cfg, min_width)

    if not rows or rows[-1]["step"] < step:
        next_eval = step
        maybe_emit(step)
    # final-state snapshot unless one already landed exactly on the last step
    if writer.out_dir is not None and not (writer.out_dir / f"snapshot_{step}.json").exists():
        writer.snapshot(step, step, gs)
    return RunResult(agent_kind, rows, step, episode, refinements, gs, high, low,
                     fm if refinement_on else None)


def _run_flat(maze_cfg: MazeConfig, cfg: TrainerConfig, writer: _ArtifactWriter,
              quiet: bool) -> RunResult:
    rngs = _rngs(cfg.seed)
    state_dim = state_domain(maze_cfg).dim
    net_seed = int(rngs["net"].integers(2 ** 63))
    low = LowLevelAgent(state_dim, 0, len(ACTIONS), tuple(cfg.hidden),
                        cfg.learning_rate, cfg.gamma_low, cfg.replay_capacity,
                        cfg.batch_size, cfg.sync_period, seed=net_seed)
    env = MazeEnv(maze_cfg, rngs["env"])
    empty = np.zeros(0)

    rows: list[dict] = []
    step = 0
    episode = 0
    next_eval = 0

    def maybe_emit(current_step: int) -> None:
        nonlocal next_eval
        if current_step >= next_eval:
            rate, _ = evaluate_flat(maze_cfg, low, cfg.eval_episodes, rngs["eval"])
            rows.append({
                "step": current_step, "episode": episode, "eval_success_rate": rate,
                "n_regions": 0, "fm_loss": math.nan, "refinements_committed": 0,
            })
            if not quiet:
                print(f"[flat-dqn seed={cfg.seed}] step={current_step} success={rate:.2f}")
            next_eval = (current_step // cfg.eval_period + 1) * cfg.eval_period

    maybe_emit(0)
    while step < cfg.total_steps:
        episode += 1
        s = env.reset()
        done = False
        while not done and step < cfg.total_steps:
            low.epsilon = linear_schedule(cfg.eps_low_start, cfg.eps_low_end,
                                          cfg.eps_low_fraction, step, cfg.total_steps)
            a = low.select_action(s.as_array(), empty, rngs["explore"])
            prev = s.as_array()
            s, r_env, done, reached = env.step(ACTIONS[a])
            low.remember(prev, empty, a, r_env, s.as_array(), done)
            low.update(rngs["replay"])
            step += 1
            maybe_emit(step)

    if not rows or rows[-1]["step"] < step:
        next_eval = step
        maybe_emit(step)
    return RunResult("flat-dqn", rows, step, episode, 0, None, None, low, None)


def config_hash(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def write_run_info(out_dir: Path, run_config_doc: dict, seed: int) -> None:
    (out_dir / "run_info.json").write_text(json.dumps({
        "config_hash": config_hash(run_config_doc),
        "seed": seed,
        "version": __version__,
    }, indent=1))


def audit_run_dir(out_dir: Path, agent_kind: str) -> list[str]:
    """Post-run artifact completeness check; returns missing artifact names."""
    missing = []
    required = ["config.json", "run_info.json", "metrics.jsonl", "metrics.csv",
                "low_q_net.json"]
    if agent_kind != "flat-dqn":
        required += ["high_q.json", "partition.json"]
    if agent_kind == "gara":
        required += ["fm_net.json", "fm_meta.json"]
    for name in required:
        if not (out_dir / name).exists():
            missing.append(name)
    if agent_kind != "flat-dqn" and not list(out_dir.glob("snapshot_*.json")):
        missing.append("snapshot_*.json")
    return missing
