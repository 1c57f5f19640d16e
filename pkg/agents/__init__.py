"""
Agents Package - RAW waypoint navigation
Contains the waypoint agent, its offline trainer and the online planning loop
"""

from agents.waypoint_agent import PolicyWeights, RewardParams, features, q_values, select_waypoint
from agents.orchestrator import PlannerParams, RawNavigator, raw_run, raw_run_unfiltered, raw_step
from agents.trainer import TrainingConfig, train

__all__ = [
    'PolicyWeights',
    'RewardParams',
    'features',
    'q_values',
    'select_waypoint',
    'PlannerParams',
    'RawNavigator',
    'raw_run',
    'raw_run_unfiltered',
    'raw_step',
    'TrainingConfig',
    'train'
]
