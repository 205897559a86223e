"""Descent checks of a scenario's maps under its group action."""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np

from src.controllers import ControllerFamily, mobius_lie_residuals
from src.errors import Unsupported
from src.geometry import DescentReport, check_field_descends, check_function_descends, check_set_saturated
from src.models.scenario import Scenario
from src.prng import uniform_samples
from src.runner import closed_loop_for
from src.systems import DescentTarget

logger = logging.getLogger(__name__)

TARGETS = ('sliding-variable', 'closed-loop-field', 'embedding')


@dataclass
class DescentResult:
    target: str
    check: DescentTarget
    report: DescentReport

    @property
    def as_expected(self) -> bool:
        return self.report.passed == self.check.expect_pass

    @property
    def status(self) -> str:
        if self.check.expect_pass:
            return 'pass' if self.report.passed else 'fail'
        return 'expected-failure' if not self.report.passed else 'unexpected-pass'

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.report.to_dict(), name=self.check.name, kind=self.check.kind, target=self.target,
                    action=self.check.action.name, expect_pass=self.check.expect_pass, status=self.status)


def run_check(check: DescentTarget, samples: np.ndarray, z_range: int, tol: float) -> DescentReport:
    pts = samples[:, :check.action.dim]
    if check.kind == 'function':
        return check_function_descends(check.action, check.fn, pts, z_range, tol)
    if check.kind == 'field':
        return check_field_descends(check.action, check.fn, pts, z_range, tol)
    if check.kind == 'set':
        return check_set_saturated(check.action, check.fn, pts, z_range)
    raise ValueError(f"unknown descent kind '{check.kind}'")


def check_descent(scenario: Scenario, targets: Optional[List[str]] = None) -> Dict[str, Any]:
    """Report for every requested target; the tolerance is the scenario's descent tolerance"""
    closed = closed_loop_for(scenario)
    if closed.quotient is None:
        raise Unsupported(f"descent checks need a quotient manifold, not '{scenario.manifold}'")
    settings = scenario.descent
    samples = uniform_samples(settings.bounds, settings.samples, settings.seed)
    tol = scenario.tolerances.descent
    results: List[DescentResult] = []
    for target in targets or TARGETS:
        for check in closed.descent_targets.get(target, []):
            result = DescentResult(target, check, run_check(check, samples, settings.z_range, tol))
            level = logging.INFO if result.as_expected else logging.WARNING
            logger.log(level, f"{closed.name}/{target}/{check.name}: {result.status} "
                              f"(max violation {result.report.max_violation:.3e})")
            results.append(result)
    report = {
        'scenario': scenario.to_dict(),
        'checks': [r.to_dict() for r in results],
        'all_as_expected': all(r.as_expected for r in results),
    }
    if closed.family == ControllerFamily.MOBIUS:
        theta_star = scenario.controller.parameters['theta_star']
        report['lie_derivative_residuals'] = mobius_lie_residuals(samples, theta_star)
    return report
