"""
Configuration File for the RAW Planner Workbench
Centralizes every default used by sensing, the SDP filter, steering,
the waypoint agent, the planners and the experiment harness
"""

import os
from pathlib import Path

# Base Paths
BASE_DIR = Path(__file__).parent.parent
DATA_DIR = BASE_DIR / "data"
ENV_DIR = DATA_DIR / "environments"
WEIGHTS_DIR = DATA_DIR / "weights"
RESULTS_DIR = BASE_DIR / "results"
LOGS_DIR = BASE_DIR / "logs"

DEFAULT_WEIGHTS_PATH = WEIGHTS_DIR / "default.weights"
HAND_SET_WEIGHTS_PATH = WEIGHTS_DIR / "hand_set.weights"

# Field of view and waypoint grid
FOV_CONFIG = {
    "r_max": 5.0,            # R_FOV, meters
    "dr": 0.2,               # range step, meters
    "theta_max": 60.0,       # half-angle, degrees
    "dtheta": 1.0,           # bearing step, degrees
    "proximity_radius": 1.8  # all-around sensing ring, meters
}

# Robot / Reeds-Shepp car
CAR_CONFIG = {
    "axle_length": 1.0,
    "min_turn_radius": 1.0,
    "speed": 1.0
}

# Obstacle sampling and potential map
SENSING_CONFIG = {
    "sample_step": 0.1,      # boundary sample spacing, meters
    "potential_sigma": 0.5,  # Gaussian kernel width, meters
    "wall_thickness": 0.5    # arena walls are polygons this thick
}

# Separating-ellipsoid solver
SOLVER_CONFIG = {
    "tolerance": 1e-6,
    "max_iterations": 200,   # Newton steps per centering
    "barrier_t0": 1.0,
    "barrier_mu": 10.0,
    "newton_tol": 1e-10,
    "line_search_alpha": 0.25,
    "line_search_beta": 0.5,
    "grid_stride": 1,
    "scale_floor": 1000.0,
    "curvature_cap": 200.0
}

# Trajectory execution
STEERING_CONFIG = {
    "dt": 0.01,
    "dt_cap": 1.0,
    "safety_factor": 0.9
}

# Reward terms
REWARD_CONFIG = {
    "alpha1": 200.0,
    "goal_bonus": 500.0,
    "step_penalty": -5.0,
    "block_penalty": -1000.0
}

# Offline Q-learning
TRAINING_CONFIG = {
    "episodes": 2000,
    "max_episode_steps": 200,
    "gamma": 0.95,
    "alpha": 1e-3,
    "epsilon_start": 0.2,
    "epsilon_end": 0.01,
    "seed": 0
}

# RAW main loop
PLANNER_CONFIG = {
    "epsilon_goal": 0.5,
    "max_steps": 5000,
    "seed": 0
}

# RRT baseline
RRT_CONFIG = {
    "iterations": 10000,
    "goal_bias": 0.05,
    "max_extend": 2.0,
    "sweep_step": 0.05,
    "seeds": list(range(10))
}

# Near-optimal lattice reference
REFERENCE_CONFIG = {
    "xy_resolution": 0.25,
    "yaw_resolution_deg": 10.0,
    "primitive_length": 0.5,
    "analytic_shot_every": 5,
    "sweep_step": 0.05,
    "max_expansions": 400000
}

# Experiment harness
HARNESS_CONFIG = {
    "suites": {
        "convex": {"file": "convex.json", "count": 15},
        "arbitrary": {"file": "arbitrary.json", "count": 15},
        "corridors": {"file": "corridors.json", "count": 50},
        "circles": {"file": "circles.json", "count": 50}
    },
    "scenario_seed": 7,
    "render_every": 5,
    "parallelism": os.cpu_count() or 1,
    "ratio_slack": 0.02,     # RAW below (1 - slack) x reference flags a coarse lattice
    "placement": {
        "min_start_goal_distance": 5.0,
        "min_clearance": 0.5,
        "max_attempts": 10000
    }
}

# Logging Configuration
LOGGING_CONFIG = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "standard": {
            "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
        }
    },
    "handlers": {
        "file": {
            "class": "logging.FileHandler",
            "filename": str(LOGS_DIR / "raw_planner.log"),
            "formatter": "standard"
        },
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "standard"
        }
    },
    "root": {
        "level": os.getenv("RAW_LOG_LEVEL", "INFO"),
        "handlers": ["file", "console"]
    }
}
