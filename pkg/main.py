"""
Main Application File - RAW planner workbench CLI
Subcommands: train, run, suite, baseline, verify
"""

import argparse
import logging
import logging.config
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent))

# Load environment variables from .env file before the config reads RAW_LOG_LEVEL
try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    pass

from config.config import (
    CAR_CONFIG, DEFAULT_WEIGHTS_PATH, ENV_DIR, FOV_CONFIG, HARNESS_CONFIG, LOGGING_CONFIG, LOGS_DIR,
    PLANNER_CONFIG, REFERENCE_CONFIG, REWARD_CONFIG, RRT_CONFIG, SENSING_CONFIG, SOLVER_CONFIG,
    STEERING_CONFIG, TRAINING_CONFIG,
)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_VERIFY_FAILED, EXIT_PLANNER_ERROR = 0, 1, 2


def setup_logging():
    LOGS_DIR.mkdir(parents=True, exist_ok=True)
    logging.config.dictConfig(LOGGING_CONFIG)


class RawPlannerApp:
    """Builds parameter objects from the config dicts plus CLI overrides and runs one subcommand"""

    def __init__(self, args: argparse.Namespace):
        from agents.orchestrator import PlannerParams

        self.args = args
        params = PlannerParams.from_config(FOV_CONFIG, SOLVER_CONFIG, CAR_CONFIG, STEERING_CONFIG,
                                           SENSING_CONFIG, PLANNER_CONFIG)
        solver = params.solver
        if getattr(args, "solver_tolerance", None) is not None:
            solver = replace(solver, tolerance=args.solver_tolerance)
        if getattr(args, "solver_max_iterations", None) is not None:
            solver = replace(solver, max_iterations=args.solver_max_iterations)
        overrides = {"solver": solver}
        if getattr(args, "seed", None) is not None:
            overrides["seed"] = args.seed
        if getattr(args, "max_steps", None) is not None:
            overrides["max_steps"] = args.max_steps
        self.params = replace(params, **overrides)

    def _weights(self, acceptance: bool = False):
        """Policy weights from --weights; acceptance runs refuse anything untrained."""
        from agents.waypoint_agent import PolicyWeights
        from modules.errors import UntrainedWeightsError

        path = Path(self.args.weights)
        weights = PolicyWeights.load(path) if path.exists() else None
        if acceptance and not getattr(self.args, "allow_hand_set", False):
            if weights is None:
                raise UntrainedWeightsError(f"{path} not found; produce it with `main.py train`")
            if not weights.trained:
                raise UntrainedWeightsError(f"{path} holds untrained weights (suite {weights.suite!r}); "
                                            f"suite runs need learned weights")
        if weights is None:
            logger.warning(f"Weights file {path} not found; using the hand-set weights")
            weights = PolicyWeights.hand_set()
        return weights

    # ── subcommands ──────────────────────────────────────────────────────────

    def train(self) -> int:
        from agents.trainer import TrainingConfig, save_training, train
        from agents.waypoint_agent import RewardParams
        from data.data_loader import PlacementRules, generate_scenarios, load_environments
        from report_formatter import ReportFormatter

        args = self.args
        config = TrainingConfig.from_config(TRAINING_CONFIG)
        config = replace(config, seed=args.seed if args.seed is not None else config.seed,
                         episodes=args.episodes or config.episodes, init=args.init)
        envs = []
        rules = PlacementRules.from_config(HARNESS_CONFIG["placement"])
        for env in load_environments(Path(args.envs), SENSING_CONFIG["wall_thickness"]):
            envs.append(env)
            if args.placements > 0 and env.scenario_regions:
                envs += [s.environment for s in generate_scenarios(env, args.placements, config.seed, rules=rules)]
        weights, curve = train(envs, config, self.params, RewardParams.from_config(REWARD_CONFIG),
                               suite_id=Path(args.envs).name)
        out, _ = save_training(weights, curve, Path(args.out))
        print(ReportFormatter.format_training(curve, str(out)))
        return EXIT_OK

    def run(self) -> int:
        from agents.orchestrator import RawNavigator
        from data.data_loader import environment_to_dict, load_environment
        from modules.trace_store import TraceStore
        from report_formatter import ReportFormatter
        from tools.trace_renderer import render_svg

        args = self.args
        env = load_environment(Path(args.env), SENSING_CONFIG["wall_thickness"])
        weights = self._weights()
        trace = RawNavigator(env, weights, self.params, filtered=not args.unfiltered).run()
        print(ReportFormatter.format_run(trace, env.name))
        if args.trace:
            TraceStore(Path(args.trace)).write(trace, environment_to_dict(env), self.params.to_dict(),
                                               weights.to_dict())
        if args.svg:
            render_svg(trace, env, Path(args.svg), fov=self.params.fov, every=HARNESS_CONFIG["render_every"])
        return EXIT_OK

    def suite(self) -> int:
        from data.data_loader import build_suite
        from report_formatter import ReportFormatter
        from tools.reference_planner import ReferenceParams
        from tools.rrt_planner import RrtParams
        from tools.suite_runner import SuiteSettings, run_suite
        from tools.trace_renderer import render_svg

        args = self.args
        weights = self._weights(acceptance=True)
        scenarios = build_suite(args.suite, HARNESS_CONFIG, Path(args.env_dir), SENSING_CONFIG["wall_thickness"])
        eps = self.params.epsilon_goal
        settings = SuiteSettings(
            rrt=RrtParams.from_config(RRT_CONFIG, eps), rrt_seeds=tuple(RRT_CONFIG["seeds"]),
            reference=ReferenceParams.from_config(REFERENCE_CONFIG, eps), unfiltered=args.unfiltered,
            run_baselines=not args.no_baselines, keep_traces=bool(args.svg),
            ratio_slack=HARNESS_CONFIG["ratio_slack"],
        )
        result = run_suite(scenarios, weights, self.params, args.parallelism, settings)
        result.write_csv(Path(args.out_csv))
        print(ReportFormatter.format_suite_summary(result.summary()))
        if args.svg and result.traces:
            ids = sorted(result.traces)
            render_svg([result.traces[i] for i in ids], scenarios[0].environment, Path(args.svg),
                       labels=ids, every=HARNESS_CONFIG["render_every"], title=f"{args.suite} suite")
        return EXIT_OK

    def baseline(self) -> int:
        from data.data_loader import load_environment
        from report_formatter import ReportFormatter
        from tools.reference_planner import ReferenceParams, reference_optimal
        from tools.rrt_planner import RrtParams, rrt_plan_seeds

        args = self.args
        env = load_environment(Path(args.env), SENSING_CONFIG["wall_thickness"])
        eps = self.params.epsilon_goal
        if args.planner == "rrt":
            params = RrtParams.from_config(RRT_CONFIG, eps)
            if args.iters:
                params = replace(params, iterations=args.iters)
            results = rrt_plan_seeds(env, env.start, env.goal, args.seeds, params, self.params.car)
        else:
            params = ReferenceParams.from_config(REFERENCE_CONFIG, eps)
            if args.iters:
                params = replace(params, max_expansions=args.iters)
            results = [reference_optimal(env, env.start, env.goal, params, self.params.car)]
        print(ReportFormatter.format_baseline(results, env.name))
        return EXIT_OK

    def verify(self) -> int:
        from report_formatter import ReportFormatter
        from tools.suite_runner import verify

        report = verify(Path(self.args.trace))
        print(ReportFormatter.format_verify(report))
        return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


def _seed_list(text: str) -> List[int]:
    return [int(tok) for tok in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(description="RAW planner workbench: SDP-filtered RL waypoint navigation",
                                     formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    def solver_flags(p):
        p.add_argument("--solver-tolerance", type=float, default=None,
                       help=f"SDP duality-gap tolerance (config: {SOLVER_CONFIG['tolerance']})")
        p.add_argument("--solver-max-iterations", type=int, default=None,
                       help=f"Newton steps per centering (config: {SOLVER_CONFIG['max_iterations']})")

    p = sub.add_parser("train", help="learn policy weights offline", formatter_class=fmt)
    p.add_argument("--envs", default=str(ENV_DIR), help="directory of environment files")
    p.add_argument("--seed", type=int, default=TRAINING_CONFIG["seed"])
    p.add_argument("--episodes", type=int, default=TRAINING_CONFIG["episodes"])
    p.add_argument("--placements", type=int, default=5, help="extra start/goal placements per environment")
    p.add_argument("--init", choices=["hand-set", "zeros"], default="hand-set", help="initial weights")
    p.add_argument("--out", default=str(DEFAULT_WEIGHTS_PATH), help="weights file to write")
    solver_flags(p)

    p = sub.add_parser("run", help="one RAW run on an environment file", formatter_class=fmt)
    p.add_argument("--env", required=True)
    p.add_argument("--weights", default=str(DEFAULT_WEIGHTS_PATH))
    p.add_argument("--seed", type=int, default=PLANNER_CONFIG["seed"])
    p.add_argument("--max-steps", type=int, default=PLANNER_CONFIG["max_steps"])
    p.add_argument("--trace", default=None, help="JSON Lines trace to write")
    p.add_argument("--svg", default=None, help="SVG figure to write")
    p.add_argument("--unfiltered", action="store_true", help="run the ablation without the SDP filter")
    solver_flags(p)

    p = sub.add_parser("suite", help="run an experiment suite against the baselines", formatter_class=fmt)
    p.add_argument("--suite", required=True, choices=sorted(HARNESS_CONFIG["suites"]))
    p.add_argument("--weights", default=str(DEFAULT_WEIGHTS_PATH))
    p.add_argument("--out-csv", required=True)
    p.add_argument("--unfiltered", action="store_true")
    p.add_argument("--no-baselines", action="store_true", help="skip RRT and the lattice reference")
    p.add_argument("--env-dir", default=str(ENV_DIR))
    p.add_argument("--parallelism", type=int, default=HARNESS_CONFIG["parallelism"])
    p.add_argument("--max-steps", type=int, default=PLANNER_CONFIG["max_steps"])
    p.add_argument("--svg", default=None, help="overlay of every RAW run on the suite map")
    p.add_argument("--allow-hand-set", action="store_true",
                   help="smoke runs only: accept untrained weights or the hand-set fallback")
    solver_flags(p)

    p = sub.add_parser("baseline", help="run RRT or the lattice reference on an environment", formatter_class=fmt)
    p.add_argument("--env", required=True)
    p.add_argument("--planner", choices=["rrt", "reference"], default="rrt")
    p.add_argument("--iters", type=int, default=None,
                   help=f"RRT iterations (config: {RRT_CONFIG['iterations']}) or reference expansion cap "
                        f"(config: {REFERENCE_CONFIG['max_expansions']})")
    p.add_argument("--seeds", type=_seed_list, default=list(RRT_CONFIG["seeds"]), help="e.g. 0,1,2")

    p = sub.add_parser("verify", help="re-check a saved trace", formatter_class=fmt)
    p.add_argument("--trace", required=True)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    args = build_parser().parse_args(argv)
    setup_logging()

    from modules.errors import RawPlannerError

    try:
        app = RawPlannerApp(args)
        return getattr(app, args.command)()
    except RawPlannerError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PLANNER_ERROR


if __name__ == "__main__":
    sys.exit(main())
