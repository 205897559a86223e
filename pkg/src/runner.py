"""Runs every initial condition of a scenario and writes the per-run files."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from src.errors import BudgetExceeded, SimulationError
from src.integrator import integrate
from src.models.scenario import Scenario
from src.models.summary import RunSummary, summarize
from src.models.trajectory import Trajectory
from src.output import write_embedding_csv, write_json, write_trajectory_csv
from src.systems import ClosedLoop, build_closed_loop

logger = logging.getLogger(__name__)


@dataclass
class RunResult:
    index: int
    trajectory: Trajectory
    summary: RunSummary
    error: Optional[str] = None
    exit_code: int = 0


@dataclass
class ScenarioResult:
    scenario: Scenario
    runs: List[RunResult] = field(default_factory=list)
    files: List[Path] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return max((r.exit_code for r in self.runs), default=0)

    def summary(self) -> dict:
        return {
            'scenario': self.scenario.to_dict(),
            'seed': self.scenario.seed,
            'runs': [dict(r.summary.to_dict(), error=r.error) for r in self.runs],
        }


def closed_loop_for(scenario: Scenario) -> ClosedLoop:
    return build_closed_loop(scenario.controller, scenario.disturbance, scenario.tolerances)


def run_one(args: Tuple[Scenario, int, np.ndarray]) -> RunResult:
    """One integration; module level so worker processes can pickle it"""
    scenario, index, x0 = args
    closed = closed_loop_for(scenario)
    error, code = None, 0
    try:
        traj = integrate(closed.system, x0, scenario.t_span, scenario.integrator)
    except BudgetExceeded as exc:
        logger.warning(f"{scenario.name} run {index}: {exc}")
        traj, error, code = exc.trajectory, str(exc), exc.exit_code
    if traj.halted and code == 0:
        error, code = f"integration halted ({traj.halted})", SimulationError.exit_code
    summary = summarize(closed, traj, index, scenario.integrator.tol_surface)
    return RunResult(index, traj, summary, error, code)


def simulate(scenario: Scenario, jobs: int = 1) -> List[RunResult]:
    points = scenario.initial_points()
    tasks = [(scenario, i, x0) for i, x0 in enumerate(points)]
    logger.info(f"Running scenario '{scenario.name}': {len(tasks)} run(s), jobs={jobs}")
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            # map keeps submission order, so merged output matches the sequential run
            return list(pool.map(run_one, tasks))
    return [run_one(task) for task in tasks]


def run_scenario(scenario: Scenario, out_dir, jobs: int = 1) -> ScenarioResult:
    """Simulate and write trajectory CSVs, embedding CSVs and the summary JSON"""
    out_dir = Path(out_dir)
    result = ScenarioResult(scenario, simulate(scenario, jobs))
    closed = closed_loop_for(scenario)
    single = len(result.runs) == 1
    for run in result.runs:
        stem = scenario.name if single else f"{scenario.name}_run{run.index:03d}"
        if scenario.outputs.get('trajectory_csv', True):
            result.files.append(write_trajectory_csv(run.trajectory, out_dir / f"{stem}.csv"))
        if scenario.outputs.get('embedding_csv') and closed.quotient is not None:
            result.files.append(write_embedding_csv(
                run.trajectory.times, run.trajectory.states, closed.quotient, closed.embed,
                out_dir / f"{stem}_embed.csv"))
    if scenario.outputs.get('summary_json', True):
        result.files.append(write_json(result.summary(), out_dir / f"{scenario.name}_summary.json"))
    failed = sum(1 for r in result.runs if r.exit_code)
    logger.info(f"Scenario '{scenario.name}' finished: {len(result.runs) - failed} ok, {failed} failed")
    return result
