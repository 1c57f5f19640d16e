"""
Environment Loader Module
Loads, validates and serialises environment files, and assembles the
experiment suites from them with seeded start/goal placements
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from modules.collision import ObstacleSet, point_in_obstacles
from modules.errors import EnvironmentFileError
from modules.geometry import CircleObstacle, Obstacle, PolygonObstacle, Pose
from modules.sensing import Environment

logger = logging.getLogger(__name__)

SUITE_TAGS = ("convex", "arbitrary", "corridors", "circles", "custom")
DEFAULT_WALL_THICKNESS = 0.5


# ── File schema ──────────────────────────────────────────────────────────────

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CircleModel(_Strict):
    type: Literal["circle"]
    center: Tuple[float, float]
    radius: float = Field(gt=0.0)


class PolygonModel(_Strict):
    type: Literal["polygon"]
    vertices: List[Tuple[float, float]] = Field(min_length=3)


ObstacleModel = Annotated[Union[CircleModel, PolygonModel], Field(discriminator="type")]


class StartModel(_Strict):
    x: float
    y: float
    theta_deg: float = 0.0


class GoalModel(_Strict):
    x: float
    y: float


class RegionsModel(_Strict):
    start: Tuple[float, float, float, float]
    goal: Tuple[float, float, float, float]


class EnvironmentModel(_Strict):
    name: str = "custom"
    description: str = ""
    bounds: Tuple[float, float, float, float]
    obstacles: List[ObstacleModel] = Field(default_factory=list)
    start: StartModel
    goal: GoalModel
    scenario_regions: Optional[RegionsModel] = None
    wall_thickness: Optional[float] = Field(default=None, gt=0.0)


def _location(loc: Tuple[Any, ...]) -> str:
    # pydantic puts the union tag into the location; it is not a field
    parts = [str(p) for p in loc if p not in ("circle", "polygon")]
    return ".".join(parts) or "<root>"


def _to_obstacle(model: Union[CircleModel, PolygonModel]) -> Obstacle:
    if isinstance(model, CircleModel):
        return CircleObstacle(tuple(model.center), model.radius)
    return PolygonObstacle(tuple(tuple(v) for v in model.vertices))


def environment_from_dict(data: Dict[str, Any], source: str = "<inline>",
                          wall_thickness: float = DEFAULT_WALL_THICKNESS) -> Environment:
    """Validate a parsed environment document and build the Environment.

    `wall_thickness` applies when the document does not set its own.
    """
    try:
        model = EnvironmentModel.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise EnvironmentFileError(source, first["msg"], _location(first["loc"])) from e

    try:
        obstacles = tuple(_to_obstacle(o) for o in model.obstacles)
        regions = None
        if model.scenario_regions is not None:
            regions = {"start": tuple(model.scenario_regions.start), "goal": tuple(model.scenario_regions.goal)}
        env = Environment(
            bounds=tuple(model.bounds),
            obstacles=obstacles,
            start=Pose(model.start.x, model.start.y, math.radians(model.start.theta_deg)),
            goal=(model.goal.x, model.goal.y),
            name=model.name,
            scenario_regions=regions,
            wall_thickness=model.wall_thickness if model.wall_thickness is not None else wall_thickness,
        )
    except ValueError as e:
        raise EnvironmentFileError(source, str(e)) from e

    problems = env.validation_errors()
    if problems:
        field = "start" if problems[0].startswith("start") else "goal"
        raise EnvironmentFileError(source, problems[0], field)
    return env


def environment_to_dict(env: Environment) -> Dict[str, Any]:
    """Inverse of environment_from_dict (polygon vertices come back counter-clockwise)."""
    obstacles = []
    for o in env.obstacles:
        if isinstance(o, CircleObstacle):
            obstacles.append({"type": "circle", "center": list(o.center), "radius": o.radius})
        else:
            obstacles.append({"type": "polygon", "vertices": [list(v) for v in o.vertices]})
    data = {
        "name": env.name,
        "bounds": list(env.bounds),
        "obstacles": obstacles,
        "start": {"x": env.start.x, "y": env.start.y, "theta_deg": math.degrees(env.start.theta)},
        "goal": {"x": env.goal[0], "y": env.goal[1]},
        "wall_thickness": env.wall_thickness,
    }
    if env.scenario_regions:
        data["scenario_regions"] = {k: list(v) for k, v in env.scenario_regions.items()}
    return data


def load_environment(path: Path, wall_thickness: float = DEFAULT_WALL_THICKNESS) -> Environment:
    """
    Load an environment file.

    Raises:
        EnvironmentFileError: unreadable file, JSON syntax error (with line and
            column), schema violation (with the field path) or an infeasible
            start or goal
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise EnvironmentFileError(str(path), f"cannot read file: {e.strerror or e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise EnvironmentFileError(str(path), e.msg, f"line {e.lineno} column {e.colno}") from e
    if not isinstance(data, dict):
        raise EnvironmentFileError(str(path), "top level must be an object")

    env = environment_from_dict(data, str(path), wall_thickness)
    logger.debug(f"Loaded environment '{env.name}' from {path}: {len(env.obstacles)} obstacles")
    return env


def load_environments(directory: Path, wall_thickness: float = DEFAULT_WALL_THICKNESS) -> List[Environment]:
    """Every *.json environment in a directory, in file-name order."""
    directory = Path(directory)
    files = sorted(directory.glob("*.json"))
    if not files:
        raise EnvironmentFileError(str(directory), "no environment files found")
    return [load_environment(f, wall_thickness) for f in files]


# ── Scenarios and suites ─────────────────────────────────────────────────────

@dataclass(frozen=True)
class Scenario:
    id: str
    env_path: Optional[Path]
    start: Pose
    goal: Tuple[float, float]
    suite: str
    environment: Environment

    def __post_init__(self):
        if self.suite not in SUITE_TAGS:
            raise ValueError(f"unknown suite tag {self.suite!r}")


@dataclass(frozen=True)
class PlacementRules:
    min_start_goal_distance: float = 5.0
    min_clearance: float = 0.5
    max_attempts: int = 10000

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "PlacementRules":
        return cls(min_start_goal_distance=float(config.get("min_start_goal_distance", 5.0)),
                   min_clearance=float(config.get("min_clearance", 0.5)),
                   max_attempts=int(config.get("max_attempts", 10000)))


def _uniform_in(rng: np.random.Generator, region: Tuple[float, float, float, float]) -> Tuple[float, float]:
    x0, y0, x1, y1 = region
    return float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1))


def generate_scenarios(env: Environment, count: int, seed: int, suite: str = "custom",
                       rules: Optional[PlacementRules] = None, env_path: Optional[Path] = None) -> List[Scenario]:
    """
    Draw `count` start/goal pairs from the environment's scenario regions.

    Candidates are rejected when the start footprint or a footprint centred on
    the goal comes within `min_clearance` of an obstacle (walls included), when
    the goal lies inside an obstacle, or when the pair is closer than
    `min_start_goal_distance`. The start heading points at the goal.
    """
    rules = rules or PlacementRules()
    regions = env.scenario_regions or {"start": env.bounds, "goal": env.bounds}
    rng = np.random.default_rng(seed)
    obstacles = ObstacleSet(env.all_obstacles)

    scenarios: List[Scenario] = []
    attempts = 0
    while len(scenarios) < count:
        attempts += 1
        if attempts > rules.max_attempts:
            raise EnvironmentFileError(str(env_path or env.name),
                                       f"only {len(scenarios)} of {count} scenarios placed "
                                       f"after {rules.max_attempts} attempts", "scenario_regions")
        sx, sy = _uniform_in(rng, regions["start"])
        gx, gy = _uniform_in(rng, regions["goal"])
        if math.hypot(gx - sx, gy - sy) < rules.min_start_goal_distance:
            continue
        start = Pose(sx, sy, math.atan2(gy - sy, gx - sx))
        probe = np.array([start.as_tuple(), (gx, gy, 0.0)])
        if (obstacles.clearance(probe) < rules.min_clearance).any():
            continue
        if point_in_obstacles(np.array([gx, gy]), env.obstacles):
            continue
        k = len(scenarios)
        scenarios.append(Scenario(id=f"{suite}-{k:03d}", env_path=env_path, start=start, goal=(gx, gy),
                                  suite=suite, environment=env.with_start_goal(start, (gx, gy))))

    logger.info(f"Placed {count} '{suite}' scenarios in {attempts} attempts (seed {seed})")
    return scenarios


def scenario_from_environment(env: Environment, env_path: Optional[Path] = None, suite: str = "custom") -> Scenario:
    return Scenario(id=env.name, env_path=env_path, start=env.start, goal=env.goal, suite=suite, environment=env)


def build_suite(name: str, harness_config: Dict[str, Any], env_dir: Path,
                wall_thickness: float = DEFAULT_WALL_THICKNESS) -> List[Scenario]:
    """The named experiment suite: its environment file plus the configured number of placements."""
    suites = harness_config["suites"]
    if name not in suites:
        raise ValueError(f"unknown suite {name!r}; expected one of {sorted(suites)}")
    entry = suites[name]
    path = Path(env_dir) / entry["file"]
    env = load_environment(path, wall_thickness)
    rules = PlacementRules.from_config(harness_config.get("placement", {}))
    return generate_scenarios(env, int(entry["count"]), int(harness_config.get("scenario_seed", 0)),
                              suite=name, rules=rules, env_path=path)
