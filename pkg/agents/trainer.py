"""
Policy Trainer - Offline Q-learning for the waypoint agent
Episodic one-step Q-learning with a linear value function, epsilon-greedy over
the SDP-feasible candidates so training and deployment share the filter
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from agents.orchestrator import PlannerParams, RawNavigator
from agents.waypoint_agent import (
    HAND_SET_WEIGHTS, PolicyWeights, RewardParams, q_values, reward, td_update,
)
from modules.errors import (
    ContainmentError, NoFeasibleWaypointError, SafetyViolationError, SolverFailureError,
    StartInfeasibleError,
)
from modules.sensing import Environment

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ["episode", "steps", "total_reward", "reached_goal", "epsilon", "alpha"]

_TERMINAL_ERRORS = (NoFeasibleWaypointError, SolverFailureError, SafetyViolationError,
                    StartInfeasibleError, ContainmentError)


@dataclass(frozen=True)
class TrainingConfig:
    episodes: int = 2000
    max_episode_steps: int = 200
    gamma: float = 0.95
    alpha: float = 1e-3
    epsilon_start: float = 0.2
    epsilon_end: float = 0.01
    seed: int = 0
    init: str = "hand-set"   # or "zeros"

    def __post_init__(self):
        if self.episodes < 1 or self.max_episode_steps < 1:
            raise ValueError("episodes and max_episode_steps must be at least 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.init not in ("hand-set", "zeros"):
            raise ValueError(f"unknown init {self.init!r}")

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "TrainingConfig":
        known = cls.__dataclass_fields__.keys()
        kwargs = {k: v for k, v in config.items() if k in known}
        for k in ("episodes", "max_episode_steps", "seed"):
            if k in kwargs:
                kwargs[k] = int(kwargs[k])
        return cls(**kwargs)

    def epsilon(self, episode: int) -> float:
        """Linear decay from epsilon_start (episode 1) to epsilon_end (last episode)."""
        if self.episodes == 1:
            return self.epsilon_start
        frac = (episode - 1) / (self.episodes - 1)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def learning_rate(self, episode: int) -> float:
        return self.alpha / math.sqrt(episode)


def _initial_weights(config: TrainingConfig) -> np.ndarray:
    if config.init == "zeros":
        return np.zeros(len(HAND_SET_WEIGHTS))
    return np.array(HAND_SET_WEIGHTS, dtype=float)


def run_episode(env: Environment, w: np.ndarray, params: PlannerParams, config: TrainingConfig,
                reward_params: RewardParams, episode: int, rng: np.random.Generator,
                reward_fn=reward) -> Tuple[np.ndarray, Dict[str, Any]]:
    """One episode of epsilon-greedy interaction with TD updates after every step."""
    epsilon = config.epsilon(episode)
    alpha = config.learning_rate(episode)
    navigator = RawNavigator(env, PolicyWeights(w=w), params, filtered=True)
    goal = np.asarray(env.goal, dtype=float)

    pose, prev = env.start, None
    total, steps, reached = 0.0, 0, False
    try:
        obs = navigator.observe(pose)
    except _TERMINAL_ERRORS as e:
        logger.debug(f"Episode {episode}: no usable start observation ({e})")
        obs = None

    while obs is not None and steps < config.max_episode_steps:
        navigator.weights = PolicyWeights(w=w)
        try:
            index = navigator.choose(obs, explore_rate=epsilon, rng=rng)
            record, pose, _ = navigator.execute(pose, obs, index, prev)
        except _TERMINAL_ERRORS as e:
            logger.debug(f"Episode {episode} ended at step {steps}: {e}")
            break
        steps += 1
        at_goal = obs.goal_index is not None and index == obs.goal_index
        r = reward_fn(obs.blocked[index], obs.potential.values[index], at_goal, reward_params)
        total += r
        phi = obs.phi.row(index)

        reached = pose.distance_to(goal) <= params.epsilon_goal
        next_obs, next_max_q, terminal = None, 0.0, reached
        if not terminal:
            try:
                next_obs = navigator.observe(pose)
                feasible = next_obs.feasible
                if feasible.any():
                    next_max_q = float(q_values(navigator.weights, next_obs.phi)[feasible].max())
                else:
                    terminal = True
            except _TERMINAL_ERRORS:
                terminal = True

        w = td_update(w, phi, r, next_max_q, alpha, config.gamma, terminal)
        if not np.all(np.isfinite(w)):
            raise FloatingPointError(f"weights diverged in episode {episode}: {w}")
        obs = None if terminal else next_obs
        prev = record.ellipsoid

    row = {"episode": episode, "steps": steps, "total_reward": total, "reached_goal": reached,
           "epsilon": epsilon, "alpha": alpha}
    return w, row


def train(envs: Sequence[Environment], config: Optional[TrainingConfig] = None,
          params: Optional[PlannerParams] = None, reward_params: Optional[RewardParams] = None,
          suite_id: str = "custom", show_progress: bool = True,
          reward_fn=reward) -> Tuple[PolicyWeights, pd.DataFrame]:
    """
    Learn linear Q weights on a suite of environments.

    Each episode draws one environment from the suite with the seeded
    generator. The result is deterministic for a fixed seed and suite.

    Returns:
        (weights, training curve) where the curve has one row per episode
    """
    if not envs:
        raise ValueError("training suite is empty")
    config = config or TrainingConfig()
    params = params or PlannerParams()
    reward_params = reward_params or RewardParams()
    rng = np.random.default_rng(config.seed)
    w = _initial_weights(config)

    rows: List[Dict[str, Any]] = []
    logger.info(f"Training on {len(envs)} environments for {config.episodes} episodes (seed {config.seed})")
    for episode in tqdm(range(1, config.episodes + 1), desc="train", disable=not show_progress):
        env = envs[int(rng.integers(len(envs)))]
        w, row = run_episode(env, w, params, config, reward_params, episode, rng, reward_fn)
        rows.append(row)

    curve = pd.DataFrame(rows, columns=CURVE_COLUMNS)
    success = float(curve["reached_goal"].mean()) if len(curve) else 0.0
    logger.info(f"Training done: success rate {success:.1%}, final weights {np.round(w, 4).tolist()}")
    weights = PolicyWeights(w=w, seed=config.seed, episodes=config.episodes, suite=suite_id)
    return weights, curve


def save_training(weights: PolicyWeights, curve: pd.DataFrame, path: Path) -> Tuple[Path, Path]:
    """Write the weights file and its training curve CSV side by side."""
    path = Path(path)
    weights.save(path)
    curve_path = path.with_name(f"{path.stem}_curve.csv")
    curve.to_csv(curve_path, index=False, float_format="%.10g")
    return path, curve_path
