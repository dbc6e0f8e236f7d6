"""
Monte Carlo experiment over randomized Pico-tier placements
Runs every model family before and after outpatient prioritization and
collects per-user SINR rows plus the aggregate statistics
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from allocator import AllocationResult, Objective, build_problem, solve
from bayes import posterior, priorities_for, train
from errors import ExperimentError, HetNetError
from experiment_config import ExperimentConfig
from scenario import derive_seeds, generate, max_rbs_per_user

logger = logging.getLogger(__name__)

RAW_COLUMNS = ["objective", "phase", "state", "alpha", "instance", "user", "is_op", "up",
               "sinr_linear", "sinr_db", "pbs", "rbs"]
CELL_KEYS = ["objective", "phase", "state", "alpha"]

WeightTable = Dict[Tuple[int, float], Tuple[float, ...]]


@dataclass(frozen=True)
class InstanceOutcome:
    instance: int
    seed: int
    rows: List[Dict[str, Any]]
    cells: int
    solver_calls: int
    nodes: int


def priority_table(config: ExperimentConfig) -> Tuple[WeightTable, np.ndarray]:
    """UP vectors per (state number, alpha) and the delta matrix [state, outpatient]"""
    scenario = config.scenario
    classifiers = []
    for op, source in enumerate(config.records):
        record = source.load(config.base_dir)
        classifiers.append(train(record, config.smoothing))
        logger.info(f"Trained classifier for outpatient {op} on {len(record)} rows")

    per_state = [[posterior(clf, state) for clf in classifiers] for state in config.states]
    deltas = np.array([[likelihood.delta for likelihood in row] for row in per_state])
    table: WeightTable = {}
    for s, likelihoods in enumerate(per_state, start=1):
        for alpha in config.alphas:
            weights = priorities_for(likelihoods, alpha, scenario.num_users, scenario.num_normal)
            table[(s, alpha)] = tuple(w.up for w in weights)
    return table, deltas


def _user_rows(cell: Dict[str, Any], instance: int, ups: Tuple[float, ...], op_flags: Tuple[bool, ...],
               result: AllocationResult) -> List[Dict[str, Any]]:
    rows = []
    for k, is_op in enumerate(op_flags):
        held = result.assignment.user_slots(k)
        linear = result.user_sinr(k)
        rows.append({
            **cell,
            "instance": instance,
            "user": k,
            "is_op": is_op,
            "up": ups[k],
            "sinr_linear": linear,
            "sinr_db": 10.0 * math.log10(linear) if linear and linear > 0 else None,
            "pbs": held[0][0] if held else None,
            "rbs": ";".join(str(n) for _, n in held),
        })
    return rows


def run_instance(config: ExperimentConfig, instance: int, seed: int, table: WeightTable) -> InstanceOutcome:
    """All cells of one placement; solves with identical (objective, UP) are shared"""
    scenario = generate(config.scenario, seed)
    max_rbs = max_rbs_per_user(config.scenario)
    ones = (1.0,) * config.scenario.num_users
    cache: Dict[Tuple[Objective, Tuple[float, ...]], AllocationResult] = {}
    rows: List[Dict[str, Any]] = []
    cells = 0
    nodes = 0

    def solve_cell(cell: Dict[str, Any], objective: Objective, ups: Tuple[float, ...]) -> AllocationResult:
        nonlocal nodes
        key = (objective, ups)
        if key not in cache:
            try:
                result = solve(build_problem(scenario, ups, objective, max_rbs))
            except (HetNetError, OSError) as e:
                identity = {**cell, "instance": instance, "seed": seed}
                raise ExperimentError(f"solve failed: {e}", identity) from e
            cache[key] = result
            nodes += result.nodes_explored
        return cache[key]

    for family in config.families:
        before, after = family.objectives
        cell = {"objective": family.value, "phase": "before", "state": None, "alpha": None}
        rows.extend(_user_rows(cell, instance, ones, scenario.op_flags, solve_cell(cell, before, ones)))
        cells += 1
        for s in range(1, len(config.states) + 1):
            for alpha in config.alphas:
                ups = table[(s, alpha)]
                cell = {"objective": family.value, "phase": "after", "state": s, "alpha": alpha}
                rows.extend(_user_rows(cell, instance, ups, scenario.op_flags, solve_cell(cell, after, ups)))
                cells += 1

    return InstanceOutcome(instance, seed, rows, cells, len(cache), nodes)


def _run_instance_job(args) -> InstanceOutcome:
    return run_instance(*args)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    raw: pd.DataFrame
    cells: int
    solver_calls: int
    deltas: np.ndarray
    elapsed_s: float = field(default=0.0, compare=False)

    def _frame(self, phase: Optional[str] = None) -> pd.DataFrame:
        frame = self.raw
        return frame if phase is None else frame[frame["phase"] == phase]

    def per_user_means(self) -> pd.DataFrame:
        """Mean SINR of every user in every cell, across instances"""
        grouped = self.raw.groupby(CELL_KEYS + ["user", "is_op"], dropna=False, sort=False)
        means = grouped["sinr_linear"].mean().reset_index(name="mean_sinr_linear")
        means["mean_sinr_db"] = 10.0 * np.log10(means["mean_sinr_linear"])
        means["instances"] = grouped.size().to_numpy()
        return means

    def population_means(self) -> pd.DataFrame:
        """Mean SINR over all users and instances of each cell"""
        grouped = self.raw.groupby(CELL_KEYS, dropna=False, sort=False)["sinr_linear"]
        means = grouped.mean().reset_index(name="mean_sinr_linear")
        means["mean_sinr_db"] = 10.0 * np.log10(means["mean_sinr_linear"])
        return means

    def _before_means(self, by: List[str]) -> pd.DataFrame:
        before = self._frame("before")
        return before.groupby(["objective"] + by, sort=False)["sinr_linear"].mean()

    def op_above_average_rates(self) -> pd.DataFrame:
        """Share of instances in which each outpatient beats its instance's population mean"""
        after = self._frame("after").copy()
        instance_mean = after.groupby(CELL_KEYS + ["instance"], sort=False)["sinr_linear"].transform("mean")
        after["above"] = after["sinr_linear"] >= instance_mean
        ops = after[after["is_op"]]
        return (ops.groupby(CELL_KEYS + ["user"], sort=False)["above"].mean()
                .reset_index(name="above_average_rate"))

    def max_normal_decrease(self) -> pd.DataFrame:
        """Largest relative drop of a normal user's mean SINR against the before phase"""
        before = self._before_means(["user"])
        after = self._frame("after")
        normal = after[~after["is_op"]]
        means = normal.groupby(["objective", "state", "alpha", "user"], sort=False)["sinr_linear"].mean()
        frame = means.reset_index(name="after_mean")
        frame["before_mean"] = [before[(o, u)] for o, u in zip(frame["objective"], frame["user"])]
        frame["decrease"] = (frame["before_mean"] - frame["after_mean"]) / frame["before_mean"]
        return (frame.groupby(["objective", "state", "alpha"], sort=False)["decrease"].max()
                .reset_index(name="max_normal_decrease"))

    def population_drop(self) -> pd.DataFrame:
        """Relative change of the population mean against the before phase"""
        before = self._before_means([])
        after = self._frame("after")
        frame = (after.groupby(["objective", "state", "alpha"], sort=False)["sinr_linear"].mean()
                 .reset_index(name="after_mean"))
        frame["before_mean"] = [before[o] for o in frame["objective"]]
        frame["relative_drop"] = (frame["before_mean"] - frame["after_mean"]) / frame["before_mean"]
        return frame

    def op_alpha_spread(self) -> pd.DataFrame:
        """(max - min) / mean of each outpatient's mean SINR across the alphas"""
        after = self._frame("after")
        ops = after[after["is_op"]]
        means = ops.groupby(["objective", "state", "user", "alpha"], sort=False)["sinr_linear"].mean()
        spread = means.groupby(level=["objective", "state", "user"], sort=False).agg(
            lambda s: (s.max() - s.min()) / s.mean())
        return spread.reset_index(name="relative_spread")

    def summary(self) -> Dict[str, Any]:
        """Every aggregate statistic in JSON-safe form"""
        return {
            "instances": self.config.instances,
            "cells": self.cells,
            "solver_calls": self.solver_calls,
            "stroke_likelihoods": self.deltas.tolist(),
            "population_means": _records(self.population_means()),
            "op_above_average_rates": _records(self.op_above_average_rates()),
            "max_normal_decrease": _records(self.max_normal_decrease()),
            "population_drop": _records(self.population_drop()),
            "op_alpha_spread": _records(self.op_alpha_spread()),
        }


def _records(frame: pd.DataFrame) -> List[Dict[str, Any]]:
    """JSON-safe rows: NaN becomes None, numpy scalars become Python values"""
    cleaned = frame.astype(object).where(frame.notna(), None)
    return [{key: (value.item() if isinstance(value, np.generic) else value) for key, value in row.items()}
            for row in cleaned.to_dict(orient="records")]


class ExperimentRunner:
    def __init__(self, config: ExperimentConfig, jobs: int = 1):
        """Runs instances sequentially or in a process pool"""
        self.config = config
        self.jobs = max(1, jobs)
        self.run_state = {
            "stage": "initialization",
            "status": "pending",
            "errors": [],
            "start_time": None,
            "end_time": None,
        }

    def run(self) -> ExperimentReport:
        """Run every instance; failures mark run_state and re-raise"""
        config = self.config
        self.run_state.update(stage="priorities", status="running", start_time=time.time())
        logger.info(f"Starting experiment: {config.instances} instances, {len(config.states)} states, "
                    f"alphas {list(config.alphas)}, families {[f.value for f in config.families]}")
        try:
            table, deltas = priority_table(config)
            seeds = derive_seeds(config.master_seed, config.instances)

            self.run_state["stage"] = "instances"
            jobs = [(config, i, seed, table) for i, seed in enumerate(seeds)]
            if self.jobs > 1 and len(jobs) > 1:
                with ProcessPoolExecutor(max_workers=self.jobs) as executor:
                    outcomes = list(executor.map(_run_instance_job, jobs))
            else:
                outcomes = [_run_instance_job(job) for job in jobs]
        except (HetNetError, OSError) as e:
            self.run_state.update(status="failed", end_time=time.time())
            self.run_state["errors"].append({"cell": getattr(e, "cell", None), "stage": self.run_state["stage"],
                                             "error": str(e)})
            logger.error(f"Experiment failed: {e}")
            raise

        outcomes.sort(key=lambda o: o.instance)
        rows = [row for outcome in outcomes for row in outcome.rows]
        raw = pd.DataFrame(rows, columns=RAW_COLUMNS)
        raw["state"] = raw["state"].astype("Int64")
        raw["alpha"] = raw["alpha"].astype(float)
        raw["pbs"] = raw["pbs"].astype("Int64")

        self.run_state.update(stage="complete", status="success", end_time=time.time())
        elapsed = self.run_state["end_time"] - self.run_state["start_time"]
        report = ExperimentReport(
            config=config,
            raw=raw,
            cells=sum(o.cells for o in outcomes),
            solver_calls=sum(o.solver_calls for o in outcomes),
            deltas=deltas,
            elapsed_s=elapsed,
        )
        logger.info(f"Experiment finished: {report.cells} cells, {report.solver_calls} solves, "
                    f"{sum(o.nodes for o in outcomes)} nodes in {elapsed:.1f}s")
        return report


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    """Run the configured experiment with an ExperimentRunner"""
    return ExperimentRunner(config, jobs).run()
