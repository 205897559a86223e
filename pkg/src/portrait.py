"""Phase portraits of the quotient examples: grid runs, switching-set overlays
and equilibria labelled by simulation probes."""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional

import numpy as np

from src.errors import BudgetExceeded, ConfigError, Unsupported
from src.integrator import IntegratorOptions, integrate
from src.models.scenario import PortraitSettings, Scenario
from src.runner import RunResult, closed_loop_for, simulate
from src.systems import ClosedLoop

logger = logging.getLogger(__name__)

JACOBIAN_LIMIT = 1e3


@dataclass(frozen=True)
class ProbeOutcome:
    start: List[float]
    final: List[float]
    distance: float
    verdict: str  # 'conv', 'div' or 'open'


@dataclass
class EquilibriumReport:
    point: List[float]
    expected: str
    label: str
    probes: List[ProbeOutcome] = field(default_factory=list)
    eigenvalues: Optional[List[List[float]]] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'point': self.point,
            'expected': self.expected,
            'label': self.label,
            'probes': [p.__dict__ for p in self.probes],
            'eigenvalues': self.eigenvalues,
        }


def finite_difference_jacobian(system, x, t: float = 0.0, h: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.size
    jac = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        jac[:, j] = (system.evaluate(x + e, t) - system.evaluate(x - e, t)) / (2.0 * h)
    return jac


def _probe(closed: ClosedLoop, point, start, opts: IntegratorOptions, settings: PortraitSettings) -> ProbeOutcome:
    r = settings.probe_radius
    quotient = closed.quotient
    escaped = lambda x: quotient.distance(x, point) > 4.0 * r
    try:
        traj = integrate(closed.system, start, (0.0, settings.probe_time), opts, stop=escaped)
    except BudgetExceeded as exc:
        traj = exc.trajectory
    final = traj.final.x
    dist = quotient.distance(final, point)
    verdict = 'conv' if dist < r / 2.0 else 'div' if dist > 2.0 * r else 'open'
    return ProbeOutcome([float(v) for v in start], [float(v) for v in final], dist, verdict)


def classify_equilibrium(closed: ClosedLoop, point, expected: str, opts: IntegratorOptions,
                         settings: PortraitSettings) -> EquilibriumReport:
    """stable: every probe converges; saddle: probes both converge and diverge, or a
    smooth linearisation with eigenvalues of both signs; unstable: otherwise with a divergent probe"""
    point = np.asarray(point, dtype=float)
    r = settings.probe_radius
    probes = []
    for k in range(settings.probe_count):
        phi = 2.0 * math.pi * k / settings.probe_count
        start = point + r * np.array([math.cos(phi), math.sin(phi)])
        probes.append(_probe(closed, point, start, opts, settings))
    verdicts = {p.verdict for p in probes}
    report = EquilibriumReport([float(v) for v in point], expected, 'indeterminate', probes)
    if verdicts == {'conv'}:
        report.label = 'stable'
    elif {'conv', 'div'} <= verdicts:
        report.label = 'saddle'
    else:
        jac = finite_difference_jacobian(closed.system, point)
        if np.all(np.isfinite(jac)) and np.max(np.abs(jac)) <= JACOBIAN_LIMIT:
            eig = np.linalg.eigvals(jac)
            report.eigenvalues = [[float(e.real), float(e.imag)] for e in eig]
            real = eig.real
            if real.max() > 0.0 > real.min():
                report.label = 'saddle'
        if report.label == 'indeterminate' and 'div' in verdicts:
            report.label = 'unstable'
    logger.info(f"{closed.name}: equilibrium {report.point} classified {report.label} (expected {expected})")
    return report


def switching_polylines(closed: ClosedLoop, count: int) -> Dict[str, Dict[str, Any]]:
    """Each switching set sampled over one period and embedded in R^3"""
    period = closed.quotient.period
    param = np.linspace(-period / 2.0, period / 2.0, count)
    out = {}
    for name, sample in closed.switching_sets.items():
        pts = sample(param)
        canon = np.array([closed.quotient.canonicalize(p) for p in pts])
        out[name] = {
            'points': pts.tolist(),
            'embedded': [closed.embed(p[0], p[1]).tolist() for p in canon],
        }
    return out


@dataclass
class PortraitResult:
    closed_loop: ClosedLoop
    runs: List[RunResult]
    equilibria: List[EquilibriumReport]
    overlays: Dict[str, Any]

    def metadata(self, scenario: Scenario) -> Dict[str, Any]:
        return {
            'scenario': scenario.to_dict(),
            'quotient': self.closed_loop.quotient.to_dict(),
            'switching_sets': self.overlays,
            'equilibria': [e.to_dict() for e in self.equilibria],
            'runs': [r.summary.to_dict() for r in self.runs],
        }


def phase_portrait(scenario: Scenario, jobs: int = 1) -> PortraitResult:
    closed = closed_loop_for(scenario)
    if closed.quotient is None:
        raise Unsupported(f"phase portraits need a 2-D quotient manifold, not '{scenario.manifold}'")
    if not scenario.initial_points():
        raise ConfigError("phase portrait needs a non-empty initial grid", scenario.source)
    runs = simulate(scenario, jobs)
    settings = scenario.portrait
    opts = replace(scenario.integrator, step=min(scenario.integrator.step, 1e-3))
    equilibria = [classify_equilibrium(closed, closed.quotient.canonicalize(point), expected, opts, settings)
                  for point, expected in closed.equilibria]
    return PortraitResult(closed, runs, equilibria, switching_polylines(closed, settings.polyline_points))
