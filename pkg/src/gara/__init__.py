"""GARA: goal abstraction via reachability analysis for feudal hierarchical RL.

A two-level agent learns a discrete goal space concurrently with its policies:
goal regions are axis-aligned boxes partitioning the state space, and a region
is split whenever set-based reachability analysis of a learned forward model
cannot decide whether the region's states reach a target region.
"""

__version__ = "0.1.0"

from .intervals import IntervalBox, propagate_affine, propagate_relu, reach_box
from .maze import Action, MazeConfig, MazeEnv, MazeState
from .mlp import AdamState, Mlp, adam_step, backward, forward, init_random, loss_mse
from .partition import GoalRegion, GoalSpace, ReachVerdict, classify, refine
from .forward_model import ForwardModel, TransitionRecord, encode_goal
from .agents import HighLevelAgent, LowLevelAgent, intrinsic_reward, select_goal
from .training import TrainerConfig, run_training

__all__ = [
    "IntervalBox", "propagate_affine", "propagate_relu", "reach_box",
    "Action", "MazeConfig", "MazeEnv", "MazeState",
    "AdamState", "Mlp", "adam_step", "backward", "forward", "init_random", "loss_mse",
    "GoalRegion", "GoalSpace", "ReachVerdict", "classify", "refine",
    "ForwardModel", "TransitionRecord", "encode_goal",
    "HighLevelAgent", "LowLevelAgent", "intrinsic_reward", "select_goal",
    "TrainerConfig", "run_training",
    "__version__",
]
