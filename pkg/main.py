#!/usr/bin/env python3
"""
Patient-aware HetNet uplink allocator
Command line entry point: classifier, scenarios, exact solves, LP export and experiments
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional, Sequence

from allocator import Objective, build_problem, solve, solve_bruteforce, write_result_json
from bayes import builtin_current_states, evaluate, posterior, priorities_for, state_from_index, train
from errors import (
    ConfigError, DegenerateTrainingDataError, DomainError, ExperimentError, InfeasibleProblemError,
    RecordFormatError, SearchSpaceTooLargeError, SolverError,
)
from experiment_config import ExperimentConfigManager, RecordSource, default_records
from medical_records import load_record, write_classifier_json
from scenario import Scenario, generate, load_scenario, save_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID_INPUT = 2
EXIT_SOLVER = 3

INVALID_INPUT_ERRORS = (DomainError, ConfigError, RecordFormatError, FileNotFoundError)
SOLVER_ERRORS = (InfeasibleProblemError, SolverError, SearchSpaceTooLargeError,
                 DegenerateTrainingDataError, ExperimentError)


def configure_logging(level: Optional[str] = None):
    """Root logging; the level comes from the flag, then HETNET_LOG_LEVEL, then INFO"""
    level = (level or os.getenv("HETNET_LOG_LEVEL") or "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        force=True,
    )


def print_states():
    """Print the built-in current states"""
    print("\nBuilt-in current states:")
    print("=" * 72)
    print(f"  {'#':<3}{'Cholesterol':<14}{'Systolic':<20}{'Diastolic':<20}{'Smoking':<10}")
    for i, state in enumerate(builtin_current_states(), start=1):
        chol, sys_bp, dia_bp, smoking = state.to_names()
        print(f"  {i:<3}{chol:<14}{sys_bp:<20}{dia_bp:<20}{smoking:<10}")


def outpatient_weights(scenario: Scenario, alpha: Optional[float], record_paths: Sequence[str],
                       state_index: int, smoothing: float) -> List[float]:
    """UP vector for a scenario; all ones when no alpha is given"""
    config = scenario.config
    if alpha is None:
        return [1.0] * config.num_users
    if record_paths:
        if len(record_paths) != config.num_outpatients:
            raise ConfigError(
                f"{config.num_outpatients} outpatients need as many --record files, got {len(record_paths)}")
        sources = [RecordSource(path=p) for p in record_paths]
    else:
        sources = default_records(config.num_outpatients)
    state = state_from_index(state_index)
    likelihoods = [posterior(train(source.load(), smoothing), state) for source in sources]
    return [w.up for w in priorities_for(likelihoods, alpha, config.num_users, config.num_normal)]


def cmd_classify(args) -> int:
    """Train on one record and classify a built-in state"""
    record = load_record(args.record)
    clf = train(record, args.smoothing)
    state = state_from_index(args.state)
    delta = posterior(clf, state).delta
    print(f"State {args.state}: {', '.join(state.to_names())}")
    print(f"Stroke likelihood: {delta:.6f}")
    print(f"Class: {'yes' if delta >= 0.5 else 'no'}")
    if args.evaluate:
        print(json.dumps(evaluate(clf, record).to_dict(), indent=2))
    if args.export:
        write_classifier_json(clf, args.export)
    return EXIT_OK


def cmd_generate(args) -> int:
    """Draw one scenario and save it"""
    config = ExperimentConfigManager(args.config).build().scenario
    save_scenario(generate(config, args.seed), args.out)
    return EXIT_OK


def _problem_from_args(args):
    scenario = load_scenario(args.scenario)
    weights = outpatient_weights(scenario, args.alpha, args.record or [], args.state, args.smoothing)
    return build_problem(scenario, weights, Objective(args.objective))


def cmd_solve(args) -> int:
    """Solve one scenario and print the result JSON"""
    problem = _problem_from_args(args)
    result = solve_bruteforce(problem) if args.oracle else solve(problem)
    print(json.dumps(result.to_dict(problem), indent=2))
    if args.out:
        write_result_json(problem, result, args.out)
    return EXIT_OK


def cmd_export_lp(args) -> int:
    """Export the allocation MILP in LP format, optionally solving it with CBC"""
    # pulp is only needed from here on
    from milpgen import PiecewiseLnSpec, build_milp, cbc_available, solve_with_pulp, write_lp

    problem = _problem_from_args(args)
    pw = None
    if problem.objective is not Objective.WSRMAX:
        pw = PiecewiseLnSpec.for_problem(problem, args.breakpoints)
    model = build_milp(problem, pw, name=f"rb_allocation_{problem.objective.value.replace('-', '_')}")
    write_lp(model, args.out)
    print(f"Wrote {args.out}: {len(model.binaries)} binaries, {len(model.continuous)} continuous, "
          f"{len(model.constraints)} constraints")

    if args.check:
        if not cbc_available():
            logger.warning("CBC is not available; skipping the external cross-check")
            return EXIT_OK
        exact = solve(problem).objective_value
        milp = solve_with_pulp(model).objective_value
        print(f"Branch-and-bound objective: {exact:.9g}")
        print(f"CBC objective:              {milp:.9g}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    """Run the Monte Carlo experiment and write its outputs"""
    from harness import run_experiment
    from report_generator import write_outputs

    config = ExperimentConfigManager(args.config).build()
    report = run_experiment(config, jobs=args.jobs)
    written = write_outputs(report, args.out)
    print(f"Wrote {len(written)} files to {args.out}")
    return EXIT_OK


def cmd_init_config(args) -> int:
    """Write the default experiment config"""
    ExperimentConfigManager.write_default(args.out, overwrite=args.force)
    print(f"Wrote default configuration to {args.out}")
    return EXIT_OK


def _add_problem_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--scenario", required=True, help="Scenario JSON from 'generate'")
    parser.add_argument("--objective", required=True, choices=[o.value for o in Objective])
    parser.add_argument("--alpha", type=float, help="Priority weight; omit for equal priorities")
    parser.add_argument("--record", action="append", metavar="CSV",
                        help="Outpatient medical record, once per outpatient (default: synthetic records)")
    parser.add_argument("--state", type=int, default=1, help="Built-in current state number (1-7)")
    parser.add_argument("--smoothing", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    """The hetnet-sim argument parser"""
    parser = argparse.ArgumentParser(
        prog="hetnet-sim",
        description="Patient-aware uplink RB allocation in a HetNet Pico tier",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  hetnet-sim states
  hetnet-sim classify --record fixtures/records/r1.csv --state 1 --evaluate
  hetnet-sim generate --seed 7 --out scenario.json
  hetnet-sim solve --scenario scenario.json --objective wsrmax --alpha 500
  hetnet-sim export-lp --scenario scenario.json --objective pf-after --alpha 50 --out model.lp
  hetnet-sim experiment --config experiment.json --out results --jobs 4
        """
    )
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR (env: HETNET_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("states", help="List the built-in current states")

    p = sub.add_parser("classify", help="Train on a record and classify a current state")
    p.add_argument("--record", required=True)
    p.add_argument("--state", type=int, required=True)
    p.add_argument("--smoothing", type=float, default=1.0)
    p.add_argument("--evaluate", action="store_true", help="Print metrics on the training record")
    p.add_argument("--export", metavar="JSON", help="Write the trained classifier")

    p = sub.add_parser("generate", help="Draw one scenario")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="Experiment config whose scenario section is used")

    p = sub.add_parser("solve", help="Solve one scenario exactly")
    _add_problem_arguments(p)
    p.add_argument("--oracle", action="store_true", help="Use exhaustive enumeration")
    p.add_argument("--out", help="Also write the result JSON here")

    p = sub.add_parser("export-lp", help="Write the MILP in LP format")
    _add_problem_arguments(p)
    p.add_argument("--out", required=True)
    p.add_argument("--breakpoints", type=int, default=33)
    p.add_argument("--check", action="store_true", help="Cross-check with CBC when available")

    p = sub.add_parser("experiment", help="Run the Monte Carlo experiment")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("init-config", help="Write the default experiment config")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    return parser


COMMANDS = {
    "states": lambda args: print_states() or EXIT_OK,
    "classify": cmd_classify,
    "generate": cmd_generate,
    "solve": cmd_solve,
    "export-lp": cmd_export_lp,
    "experiment": cmd_experiment,
    "init-config": cmd_init_config,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI entry point"""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except INVALID_INPUT_ERRORS as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_INVALID_INPUT
    except SOLVER_ERRORS as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
