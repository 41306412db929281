"""The two feudal policy levels: tabular goal selection and a goal-conditioned DQN.

Reward separation is structural: the high level only ever sees discounted
environment reward, the low level only the binary goal-membership reward.
Value estimates survive partition refinement by copying the split parent's
table row and column onto every child region.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mlp
from .intervals import IntervalBox
from .partition import GoalRegion, RefinementReport


@dataclass
class HighLevelAgent:
    """Tabular SMDP Q-learner over ordered (source region, target region) pairs."""

    alpha: float = 0.2
    gamma: float = 0.99
    epsilon: float = 1.0
    q: dict[tuple[int, int], float] = field(default_factory=dict)

    def q_value(self, source_id: int, target_id: int) -> float:
        return self.q.get((source_id, target_id), 0.0)

    def best_target(self, source_id: int, region_ids: list[int]) -> int:
        """Greedy target among all regions except the source; ties to the lowest id.

        With a single region, self-targeting is the only (degenerate) option.
        """
        candidates = [r for r in sorted(region_ids) if r != source_id] or [source_id]
        return max(candidates, key=lambda t: (self.q_value(source_id, t), -t))


def select_goal(agent: HighLevelAgent, current_region: int, region_ids: list[int],
                rng: np.random.Generator) -> int:
    """Epsilon-greedy goal choice over the current partition."""
    candidates = [r for r in sorted(region_ids) if r != current_region] or [current_region]
    if rng.random() < agent.epsilon:
        return int(candidates[rng.integers(len(candidates))])
    return agent.best_target(current_region, region_ids)


def high_update(agent: HighLevelAgent, src_region: int, tgt_region: int,
                cumulative_env_reward: float, next_region: int,
                region_ids: list[int], elapsed_steps: int, terminal: bool) -> None:
    """SMDP Q-learning update, discounting the bootstrap by the elapsed primitive steps."""
    if not np.isfinite(cumulative_env_reward):
        raise ValueError(f"non-finite reward {cumulative_env_reward}")
    bootstrap = 0.0
    if not terminal:
        nxt = agent.best_target(next_region, region_ids)
        bootstrap = agent.gamma ** elapsed_steps * agent.q_value(next_region, nxt)
    old = agent.q_value(src_region, tgt_region)
    agent.q[(src_region, tgt_region)] = old + agent.alpha * (
        cumulative_env_reward + bootstrap - old)


def intrinsic_reward(s_next: np.ndarray, target: GoalRegion) -> float:
    """1 when the reached state is inside the commanded goal box (closed), else 0."""
    return 1.0 if target.box.contains_point(np.asarray(s_next, dtype=float)) else 0.0


def on_partition_refined(agent: HighLevelAgent, report: RefinementReport) -> None:
    """Children inherit the split parent's Q row and column; parent entries drop out."""
    if not report.committed:
        return
    parent = report.source_id
    children = report.new_region_ids
    if not children:
        raise ValueError(f"committed report for region {parent} has no children")
    new_q: dict[tuple[int, int], float] = {}
    for (s, t), v in agent.q.items():
        sources = children if s == parent else [s]
        targets = children if t == parent else [t]
        for s2 in sources:
            for t2 in targets:
                new_q[(s2, t2)] = v
    agent.q = new_q


class LowLevelAgent:
    """Goal-conditioned DQN with a target network and bounded replay buffer.

    goal_dim == 0 degrades to a flat DQN on raw states; the conditioning
    vector is then empty and the same machinery applies unchanged.
    """

    def __init__(self, state_dim: int, goal_dim: int, n_actions: int,
                 hidden: tuple[int, ...] = (64, 64), learning_rate: float = 1e-3,
                 gamma: float = 0.99, buffer_capacity: int = 50_000,
                 batch_size: int = 64, sync_period: int = 250, seed: int = 0):
        self.state_dim = state_dim
        self.goal_dim = goal_dim
        self.n_actions = n_actions
        self.gamma = gamma
        self.batch_size = batch_size
        self.sync_period = sync_period
        self.epsilon = 1.0
        self.q_net = mlp.init_random([state_dim + goal_dim, *hidden, n_actions], seed)
        self.target_net = self.q_net.copy()
        self.adam = mlp.AdamState.for_net(self.q_net, learning_rate=learning_rate)
        # ring buffer: O(1) insert-with-eviction and O(1) random indexing
        self.buffer: list = []
        self.buffer_capacity = buffer_capacity
        self._write_pos = 0
        self.updates = 0

    def q_values(self, s: np.ndarray, g_enc: np.ndarray) -> np.ndarray:
        return mlp.forward(self.q_net, np.concatenate([np.asarray(s, dtype=float), g_enc]))

    def select_action(self, s: np.ndarray, g_enc: np.ndarray,
                      rng: np.random.Generator) -> int:
        """Epsilon-greedy; greedy ties break to the lowest action index."""
        if rng.random() < self.epsilon:
            return int(rng.integers(self.n_actions))
        return int(np.argmax(self.q_values(s, g_enc)))

    def remember(self, s: np.ndarray, g_enc: np.ndarray, action: int,
                 reward: float, s_next: np.ndarray, done: bool) -> None:
        entry = (
            np.concatenate([np.asarray(s, dtype=float), g_enc]),
            int(action), float(reward),
            np.concatenate([np.asarray(s_next, dtype=float), g_enc]),
            bool(done),
        )
        if len(self.buffer) < self.buffer_capacity:
            self.buffer.append(entry)
        else:
            self.buffer[self._write_pos] = entry
            self._write_pos = (self._write_pos + 1) % self.buffer_capacity

    def update(self, rng: np.random.Generator) -> float | None:
        """One double-network TD step on a sampled minibatch; None if the buffer is too small."""
        if len(self.buffer) < self.batch_size:
            return None
        idx = rng.integers(len(self.buffer), size=self.batch_size)
        batch = [self.buffer[i] for i in idx]
        x = np.stack([b[0] for b in batch])
        actions = np.array([b[1] for b in batch])
        rewards = np.array([b[2] for b in batch])
        x_next = np.stack([b[3] for b in batch])
        done = np.array([b[4] for b in batch], dtype=float)

        next_q = mlp.forward_batch(self.target_net, x_next)
        targets = rewards + self.gamma * next_q.max(axis=1) * (1.0 - done)

        q = mlp.forward_batch(self.q_net, x)
        rows = np.arange(len(batch))
        td = q[rows, actions] - targets
        loss = float(np.mean(td ** 2))
        grad_out = np.zeros_like(q)
        grad_out[rows, actions] = 2.0 * td / len(batch)
        grads = mlp.backward_batch(self.q_net, x, grad_out)
        mlp.adam_step(self.q_net, self.adam, grads)

        self.updates += 1
        if self.updates % self.sync_period == 0:
            self.target_net.copy_parameters_from(self.q_net)
        return loss


def linear_schedule(start: float, end: float, decay_fraction: float,
                    step: int, total_steps: int) -> float:
    """Linear anneal from start to end over the first decay_fraction of training."""
    horizon = max(1.0, decay_fraction * total_steps)
    frac = min(1.0, step / horizon)
    return start + (end - start) * frac
