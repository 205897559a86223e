"""Event-driven hybrid integration of piecewise-smooth closed loops on manifolds.

Free phases take fixed RK4 steps with the active region field. A sign change
of a switching function inside a step is localised by bisection on the
substep length; the contact point is then classified and the run either
crosses into the next region or enters a sliding phase. Sliding phases
integrate the sliding field, project back onto the surface with one Newton
step and retract onto the manifold.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from src.errors import BudgetExceeded, DegenerateClassification
from src.fields import SlidingKind
from src.geometry import QuotientManifold
from src.models.trajectory import Event, EventKind, Mode, ModeKind, Sample, Trajectory

logger = logging.getLogger(__name__)

ZENO_LIMIT = 1000


@dataclass(frozen=True)
class IntegratorOptions:
    step: float = 1e-3
    tol_event: float = 1e-10
    tol_surface: float = 1e-7
    tol_corner: float = 1e-5
    lambda_margin: float = 0.02
    max_steps: int = 50_000_000
    regularized: bool = False
    equilibrium_tol: float = 1e-9
    equilibrium_steps: int = 3
    projection_cadence: int = 1

    def __post_init__(self):
        if not self.step > 0.0:
            raise ValueError(f"step must be positive, got {self.step}")
        for name in ('tol_event', 'tol_surface', 'tol_corner', 'equilibrium_tol'):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.lambda_margin < 0.5:
            raise ValueError(f"lambda_margin must lie in (0, 0.5), got {self.lambda_margin}")
        if self.max_steps < 1 or self.equilibrium_steps < 1 or self.projection_cadence < 1:
            raise ValueError("step counts must be positive")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def rk4(f: Callable[[np.ndarray, float], np.ndarray], x: np.ndarray, t: float, h: float) -> np.ndarray:
    k1 = f(x, t)
    k2 = f(x + 0.5 * h * k1, t + 0.5 * h)
    k3 = f(x + 0.5 * h * k2, t + 0.5 * h)
    k4 = f(x + h * k3, t + h)
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _bisect(past: Callable[[float], bool], hi: float, tol: float) -> float:
    """Smallest substep (to tol) at which `past` holds, given past(hi)"""
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if past(mid):
            hi = mid
        else:
            lo = mid
    return hi


class _HybridRun:
    def __init__(self, system, x0, t_span, opts: IntegratorOptions, stop=None):
        self.stop = stop
        self.system = system
        self.manifold = system.manifold
        self.opts = opts
        self.t0, self.t1 = float(t_span[0]), float(t_span[1])
        if not (math.isfinite(self.t0) and math.isfinite(self.t1)) or self.t1 < self.t0:
            raise ValueError(f"invalid time span {t_span}")
        x0 = np.asarray(x0, dtype=float)
        self.manifold.require_on_manifold(x0)
        self.x0 = x0
        self.traj = Trajectory(self.manifold.coordinate_names, opts.to_dict())
        self.steps = 0
        self.small_field_steps = 0
        self.zero_length_events = 0
        self.hold_control: Optional[np.ndarray] = None

    # bookkeeping

    def _tick(self):
        self.steps += 1
        if self.steps > self.opts.max_steps:
            self.traj.halted = 'budget'
            raise BudgetExceeded(f"step budget of {self.opts.max_steps} exhausted", trajectory=self.traj)

    def _control(self, x, t, mode: Mode) -> np.ndarray:
        if mode.kind == ModeKind.EQUILIBRIUM:
            return self.hold_control if self.hold_control is not None else np.zeros(0)
        surface = mode.surface if mode.kind == ModeKind.SLIDING else None
        return self.system.control(x, t, mode.region, surface)

    def _record(self, t, x, mode: Mode, on_grid: bool = False):
        self.traj.record(Sample(
            t=t, x=np.array(x), mode=mode,
            s=self.system.surface_values(x, t),
            u=self._control(x, t, mode),
            drift=self.manifold.drift(x),
            on_grid=on_grid,
        ))

    def _event(self, t, kind: EventKind, surface=None, detail: str = ''):
        logger.debug(f"{self.system.name}: {kind.value} at t={t:.12g} surface={surface} {detail}")
        self.traj.log_event(Event(t, kind, surface, detail))

    def _enter_equilibrium(self, t, x, mode: Mode, detail: str) -> Mode:
        surface = mode.surface if mode.kind == ModeKind.SLIDING else None
        self.hold_control = self.system.control(x, t, mode.region, surface)
        self._event(t, EventKind.EQUILIBRIUM_REACHED, surface, detail)
        return Mode.equilibrium(mode.region)

    # contact handling

    def _past(self, index: int, region, y, t) -> bool:
        return self.system.event_value(index, y, t) * region[index] < 0.0

    def _handle_contact(self, t, x, index: int, region) -> Tuple[np.ndarray, Optional[Mode]]:
        """Classify a contact point; returns the new state and mode (None halts)"""
        system = self.system
        self._event(t, EventKind.SURFACE_HIT, index)
        others = system.near_surfaces(x, t, self.opts.tol_corner, exclude=index)
        if others:
            try:
                corner_index, cls = system.classify_corner([index] + others, x, t)
            except DegenerateClassification as exc:
                logger.warning(f"{system.name}: degenerate corner at t={t:.12g}: {exc}")
                cls = None
            if cls is not None and cls.kind == SlidingKind.ATTRACTIVE:
                mode = Mode.sliding(corner_index, region)
                return x, self._enter_equilibrium(t, x, mode, f"attractive corner of order {cls.order}")
        try:
            cls = system.classify(index, x, t, region, tol=self.opts.tol_surface)
        except DegenerateClassification as exc:
            self._event(t, EventKind.DEGENERATE, index, str(exc))
            self.traj.halted = 'degenerate'
            logger.warning(f"{system.name}: halting at t={t:.12g}: {exc}")
            return x, None
        if cls.kind == SlidingKind.ATTRACTIVE:
            x = system.project_to_surface(index, x, t)
            self._event(t, EventKind.SLIDING_ENTRY, index, f"load={cls.effective_load:.6g}")
            self.small_field_steps = 0
            return x, Mode.sliding(index, region)
        if cls.kind in (SlidingKind.TANGENTIAL, SlidingKind.REPULSIVE):
            logger.warning(f"{system.name}: {cls.kind.value} contact at t={t:.12g}; "
                           "crossing and sliding continuations may both exist, following the crossing")
        return x, Mode.free(system.cross(region, index) if region is not None else None)

    def _initial_mode(self, t, x) -> Tuple[np.ndarray, Optional[Mode]]:
        system = self.system
        region = system.initial_region(x, t)
        on = [i for i in range(system.surface_count)
              if system.surface_residual(i, x, t) <= self.opts.tol_surface]
        if not on:
            return x, Mode.free(region)
        index = on[0]
        others = system.near_surfaces(x, t, self.opts.tol_corner, exclude=index)
        if others:
            try:
                corner_index, cls = system.classify_corner([index] + others, x, t)
                if cls.kind == SlidingKind.ATTRACTIVE:
                    self._event(t, EventKind.SURFACE_HIT, corner_index)
                    return x, self._enter_equilibrium(t, x, Mode.sliding(corner_index, region),
                                                      'starts at an attractive corner')
            except DegenerateClassification:
                pass
        try:
            cls = system.classify(index, x, t, region, tol=self.opts.tol_surface)
        except DegenerateClassification as exc:
            # an invariant part of the switching set: follow the region the signs select
            logger.warning(f"{system.name}: starting point on a degenerate switching set: {exc}")
            return x, Mode.free(region)
        if cls.kind == SlidingKind.ATTRACTIVE:
            self._event(t, EventKind.SURFACE_HIT, index)
            self._event(t, EventKind.SLIDING_ENTRY, index, 'starts on the sliding set')
            return system.project_to_surface(index, x, t), Mode.sliding(index, region)
        if region is not None:
            region = system.side_after_contact(index, region, cls)
        return x, Mode.free(region)

    # phases

    def _free_step(self, t, x, mode: Mode, dt: float):
        system = self.system
        region = mode.region
        field = lambda y, s: system.field(y, s, region)
        retract = self._retract_now()
        advance = lambda tau: retract(rk4(field, x, t, tau))
        x_end = advance(dt)

        hits = []
        for i in range(system.surface_count):
            if region is not None:
                past = lambda tau, i=i: self._past(i, region, advance(tau), t + tau)
            else:
                ref = system.event_value(i, x, t, x)
                if ref <= 0.0:
                    continue
                past = lambda tau, i=i: system.event_value(i, advance(tau), t + tau, x) < 0.0
            if past(dt):
                hits.append((i, past))
        if not hits and region is None and system.surface_residual(0, x_end, t + dt) <= self.opts.tol_surface:
            # unit-vector loops can land on s = 0 without a sign change
            x_hit, new_mode = self._handle_contact(t + dt, x_end, 0, region)
            if new_mode is not None:
                self._record(t + dt, x_hit, new_mode)
            return t + dt, x_hit, new_mode
        if not hits:
            self.zero_length_events = 0
            return t + dt, x_end, mode

        best = None
        for i, past in hits:
            tau = _bisect(past, dt, self.opts.tol_event)
            if best is None or tau < best[1]:
                best = (i, tau)
        index, tau = best
        self.zero_length_events = self.zero_length_events + 1 if tau <= 2.0 * self.opts.tol_event else 0
        if self.zero_length_events > ZENO_LIMIT:
            self._event(t, EventKind.DEGENERATE, index, 'accumulating zero-length events')
            self.traj.halted = 'zeno'
            return t, x, None
        t_hit = t + tau
        x_hit, new_mode = self._handle_contact(t_hit, advance(tau), index, region)
        if new_mode is not None:
            self._record(t_hit, x_hit, new_mode)
        return t_hit, x_hit, new_mode

    def _sliding_step(self, t, x, mode: Mode, dt: float):
        system = self.system
        index, region = mode.surface, mode.region
        field = lambda y, s: system.sliding_vector(index, y, s, region)
        advance = lambda tau: system.project_to_surface(index, rk4(field, x, t, tau), t + tau)
        v_start = field(x, t)
        x_end = advance(dt)
        t_end = t + dt
        v_end = field(x_end, t_end)

        if float(v_start @ v_end) < 0.0:
            # sliding flow reverses inside the step: finite-time arrival at a rest point
            tau = _bisect(lambda s: float(field(advance(s), t + s) @ v_start) < 0.0, dt, self.opts.tol_event)
            x_eq = advance(tau)
            new_mode = self._enter_equilibrium(t + tau, x_eq, mode, 'sliding flow reverses')
            self._record(t + tau, x_eq, new_mode)
            return t + tau, x_eq, new_mode

        try:
            cls = system.classify(index, x_end, t_end, region, tol=self.opts.tol_surface)
        except DegenerateClassification as exc:
            self._event(t_end, EventKind.DEGENERATE, index, str(exc))
            self.traj.halted = 'degenerate'
            return t_end, x_end, None
        if not cls.is_sliding or cls.effective_load > 1.0 - 2.0 * self.opts.lambda_margin:
            new_mode = Mode.free(system.exit_region(index, region, cls))
            self._event(t_end, EventKind.SLIDING_EXIT, index, f"load={cls.effective_load:.6g}")
            self._record(t_end, x_end, new_mode)
            return t_end, x_end, new_mode

        if float(np.linalg.norm(v_end)) < self.opts.equilibrium_tol:
            self.small_field_steps += 1
            if self.small_field_steps >= self.opts.equilibrium_steps:
                new_mode = self._enter_equilibrium(t_end, x_end, mode, 'sliding field vanishes')
                self._record(t_end, x_end, new_mode)
                return t_end, x_end, new_mode
        else:
            self.small_field_steps = 0
        return t_end, x_end, mode

    def _retract_now(self):
        if self.steps % self.opts.projection_cadence == 0:
            return self.manifold.retract
        return lambda y: y

    def run(self) -> Trajectory:
        h = self.opts.step
        t, x = self.t0, self.x0
        x, mode = self._initial_mode(t, x)
        self._record(t, x, mode if mode is not None else Mode.free(), on_grid=True)
        if mode is None:
            return self.traj
        n_steps = int(math.ceil((self.t1 - self.t0) / h - 1e-9))
        for k in range(1, n_steps + 1):
            t_grid = min(self.t0 + k * h, self.t1)
            while t_grid - t > 1e-15 * max(1.0, abs(t_grid)):
                self._tick()
                dt = t_grid - t
                if mode.kind == ModeKind.FREE:
                    t, x, mode = self._free_step(t, x, mode, dt)
                elif mode.kind == ModeKind.SLIDING:
                    t, x, mode = self._sliding_step(t, x, mode, dt)
                else:
                    t = t_grid
                if mode is None:
                    logger.warning(f"{self.system.name}: run halted at t={t:.12g} ({self.traj.halted})")
                    return self.traj
            t = t_grid
            self._record(t_grid, x, mode, on_grid=True)
            if self.stop is not None and self.stop(x):
                self.traj.halted = 'stopped'
                return self.traj
        return self.traj


def integrate(system, x0, t_span, opts: Optional[IntegratorOptions] = None, stop=None) -> Trajectory:
    """Filippov solution of a switched closed loop from x0 over t_span

    `stop(x)` is checked on the step grid; returning True ends the run early.
    """
    opts = opts or IntegratorOptions()
    if getattr(system, 'regularized', False) or opts.regularized:
        return integrate_regularized(system, x0, t_span, opts, stop)
    traj = _HybridRun(system, x0, t_span, opts, stop).run()
    logger.info(f"{system.name}: {len(traj)} samples, events {traj.event_counts()}")
    return traj


def integrate_regularized(system, x0, t_span, opts: Optional[IntegratorOptions] = None,
                          stop=None) -> Trajectory:
    """Single-mode RK4 for boundary-layer closed loops"""
    opts = opts or IntegratorOptions()
    if not getattr(system, 'regularized', False):
        raise ValueError(f"system '{system.name}' has no boundary-layer regularization")
    manifold = system.manifold
    t0, t1 = float(t_span[0]), float(t_span[1])
    x = np.asarray(x0, dtype=float)
    manifold.require_on_manifold(x)
    traj = Trajectory(manifold.coordinate_names, opts.to_dict())
    mode = Mode.free()

    def record(t, y):
        traj.record(Sample(t, np.array(y), mode, system.surface_values(y, t), system.control(y, t),
                           manifold.drift(y), on_grid=True))

    record(t0, x)
    n_steps = int(math.ceil((t1 - t0) / opts.step - 1e-9))
    field = lambda y, s: system.field(y, s)
    t = t0
    for k in range(1, n_steps + 1):
        if k > opts.max_steps:
            traj.halted = 'budget'
            raise BudgetExceeded(f"step budget of {opts.max_steps} exhausted", trajectory=traj)
        t_next = min(t0 + k * opts.step, t1)
        x = rk4(field, x, t, t_next - t)
        if k % opts.projection_cadence == 0:
            x = manifold.retract(x)
        t = t_next
        record(t, x)
        if stop is not None and stop(x):
            traj.halted = 'stopped'
            break
    logger.info(f"{system.name}: {len(traj)} samples (regularized, epsilon={system.epsilon:g})")
    return traj


def orbit_equivalence_check(system, quotient: QuotientManifold, d0, z: int, t_span,
                            opts: Optional[IntegratorOptions] = None) -> float:
    """Max orbit distance between the runs from d0 and from z.d0 on the step grid"""
    d0 = np.asarray(d0, dtype=float)
    first = integrate(system, d0, t_span, opts)
    second = integrate(system, quotient.action.act(z, d0), t_span, opts)
    pairs = zip(first.grid_samples(), second.grid_samples())
    return max((quotient.distance(a.x, b.x) for a, b in pairs), default=0.0)
