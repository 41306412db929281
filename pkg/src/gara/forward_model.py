"""Learned k-step outcome model conditioned on the commanded goal region.

The network maps (state, goal encoding) to the state reached after at most k
low-level steps. Goals are encoded as box center plus half-widths, so the
encoding survives partition refinement unchanged and stored transitions stay
valid. The same network doubles as the reachability map: propagating a source
box (with the goal encoding pinned to a point) through it yields the
over-approximated reached set used by the refinement analysis.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import mlp
from .intervals import IntervalBox, reach_box
from .partition import GoalRegion

VALIDATION_STRIDE = 5  # every 5th record per pair is held out from training


def encode_goal(region: GoalRegion) -> np.ndarray:
    """Box center concatenated with half-widths; independent of the region id."""
    return np.concatenate([region.box.center, region.box.half_widths])


@dataclass
class TransitionRecord:
    start_state: np.ndarray
    target_encoding: np.ndarray
    end_state: np.ndarray

    def __post_init__(self):
        self.start_state = np.asarray(self.start_state, dtype=float)
        self.target_encoding = np.asarray(self.target_encoding, dtype=float)
        self.end_state = np.asarray(self.end_state, dtype=float)
        for name, arr in (("start_state", self.start_state),
                          ("target_encoding", self.target_encoding),
                          ("end_state", self.end_state)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite {name}: {arr}")


class ForwardModel:
    """k-step outcome predictor with a bounded, pair-grouped transition buffer."""

    def __init__(self, state_dim: int, state_domain: IntervalBox, k: int,
                 capacity: int = 20_000, hidden: tuple[int, ...] = (64, 64),
                 learning_rate: float = 1e-3, seed: int = 0,
                 tightness_weight: float = 0.0, tightness_radius_fraction: float = 1.0 / 32.0):
        if k <= 0:
            raise ValueError("horizon k must be positive")
        self.state_dim = state_dim
        self.state_domain = state_domain
        self.k = k
        self.capacity = capacity
        self.goal_encoding_dim = 2 * state_dim
        self.net = mlp.init_random(
            [state_dim + self.goal_encoding_dim, *hidden, state_dim], seed)
        self.adam = mlp.AdamState.for_net(self.net, learning_rate=learning_rate)
        # analysis-tightness regularisation: penalise the propagated width of
        # small boxes around training inputs so the net stays analysable
        self.tightness_weight = tightness_weight
        self.tightness_radius = np.concatenate([
            state_domain.widths * tightness_radius_fraction,
            np.zeros(self.goal_encoding_dim),
        ])
        self._buffers: dict[tuple[int, int], deque] = {}
        self._seq = 0
        self._size = 0

    # -- buffer ---------------------------------------------------------

    def record(self, rec: TransitionRecord, source_region: int, target_region: int) -> None:
        """Append under the (source, target) pair; evicts the globally oldest at capacity."""
        pair = (source_region, target_region)
        self._buffers.setdefault(pair, deque()).append((self._seq, rec))
        self._seq += 1
        self._size += 1
        if self._size > self.capacity:
            oldest_pair = min(self._buffers, key=lambda p: self._buffers[p][0][0])
            self._buffers[oldest_pair].popleft()
            if not self._buffers[oldest_pair]:
                del self._buffers[oldest_pair]
            self._size -= 1

    def __len__(self) -> int:
        return self._size

    def pairs(self) -> list[tuple[int, int]]:
        return sorted(self._buffers)

    def pair_count(self, source_region: int, target_region: int) -> int:
        return len(self._buffers.get((source_region, target_region), ()))

    def records_for(self, source_region: int, target_region: int) -> list[TransitionRecord]:
        return [rec for _, rec in self._buffers.get((source_region, target_region), ())]

    def _split_records(self) -> tuple[list[TransitionRecord], list[TransitionRecord]]:
        train, held_out = [], []
        for pair in sorted(self._buffers):
            for seq, rec in self._buffers[pair]:
                (held_out if seq % VALIDATION_STRIDE == 0 else train).append(rec)
        return train, held_out

    @staticmethod
    def _to_arrays(records: list[TransitionRecord]) -> tuple[np.ndarray, np.ndarray]:
        x = np.stack([np.concatenate([r.start_state, r.target_encoding]) for r in records])
        y = np.stack([r.end_state for r in records])
        return x, y

    # -- training -------------------------------------------------------

    def train(self, epochs: int, batch_size: int, rng: np.random.Generator,
              max_batches: int | None = None) -> float:
        """Minibatch Adam on MSE over the training split; returns last-epoch mean loss.

        Empty buffer is a no-op returning NaN. max_batches caps the minibatches
        per epoch so per-episode fine-tuning stays cheap as the buffer grows.
        """
        train_records, _ = self._split_records()
        if not train_records:
            return math.nan
        x, y = self._to_arrays(train_records)
        n = x.shape[0]
        last_epoch_loss = math.nan
        for _ in range(epochs):
            order = rng.permutation(n)
            losses = []
            batches = 0
            for lo in range(0, n, batch_size):
                idx = order[lo:lo + batch_size]
                xb, yb = x[idx], y[idx]
                pred = mlp.forward_batch(self.net, xb)
                diff = pred - yb
                losses.append(float(np.mean(diff ** 2)))
                grad_out = 2.0 * diff / diff.size
                grads = mlp.backward_batch(self.net, xb, grad_out)
                if self.tightness_weight > 0.0:
                    _, width_grads = mlp.interval_width_loss(
                        self.net, xb - self.tightness_radius, xb + self.tightness_radius)
                    mlp.accumulate(grads, width_grads, self.tightness_weight)
                mlp.adam_step(self.net, self.adam, grads)
                batches += 1
                if max_batches is not None and batches >= max_batches:
                    break
            last_epoch_loss = float(np.mean(losses))
        return last_epoch_loss

    def validation_mse(self, source_region: int, target_region: int) -> float:
        """Held-out MSE on the pair's reserved records (NaN if none reserved)."""
        pair = (source_region, target_region)
        held = [rec for seq, rec in self._buffers.get(pair, ())
                if seq % VALIDATION_STRIDE == 0]
        if not held:
            return math.nan
        x, y = self._to_arrays(held)
        pred = mlp.forward_batch(self.net, x)
        return float(np.mean((pred - y) ** 2))

    def predict(self, state: np.ndarray, goal_encoding: np.ndarray) -> np.ndarray:
        return mlp.forward(self.net, np.concatenate([state, goal_encoding]))

    # -- set-based reachability ------------------------------------------

    def reach_region(self, source: GoalRegion, target: GoalRegion,
                     split_depth: int = 2) -> IntervalBox:
        """Over-approximated k-step reach set of source targeting target, clamped to the domain."""
        enc = encode_goal(target)
        lo = np.concatenate([source.box.lo, enc])
        hi = np.concatenate([source.box.hi, enc])
        norm_widths = np.concatenate(
            [self.state_domain.widths, np.zeros(self.goal_encoding_dim)])
        out = reach_box(self.net, IntervalBox(lo, hi), split_depth, norm_widths)
        return out.clip_to(self.state_domain)

    def reach_fn(self, target: GoalRegion, split_depth: int = 2):
        """Box-to-box map over state space for the refinement procedure."""
        def fn(box: IntervalBox) -> IntervalBox:
            return self.reach_region(GoalRegion(-1, box), target, split_depth)
        return fn

    # -- persistence ------------------------------------------------------

    def save(self, net_path: str | Path, sidecar_path: str | Path) -> None:
        mlp.save_checkpoint(self.net, net_path)
        Path(sidecar_path).write_text(json.dumps({
            "k": self.k,
            "goal_encoding_dim": self.goal_encoding_dim,
            "capacity": self.capacity,
        }))

    def load_net(self, net_path: str | Path) -> None:
        net = mlp.load_checkpoint(net_path)
        if net.layer_sizes != self.net.layer_sizes:
            raise ValueError(
                f"checkpoint layer sizes {net.layer_sizes} != expected {self.net.layer_sizes}")
        self.net = net
        self.adam = mlp.AdamState.for_net(self.net, learning_rate=self.adam.learning_rate)
