from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from src.models.trajectory import EventKind, Trajectory


@dataclass
class RunSummary:
    """Figures of merit of one trajectory"""

    index: int
    initial_state: List[float]
    final_state: List[float]
    final_mode: str
    reaching_time: Optional[float]
    terminal_error: float
    max_drift: float
    max_abs_s_after_reaching: Optional[float]
    terminal_s_norm: float
    event_counts: Dict[str, int]
    lyapunov_decreasing: Optional[bool]
    halted: Optional[str] = None
    gain_margin_violations: int = 0
    events: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'index': self.index,
            'initial_state': self.initial_state,
            'final_state': self.final_state,
            'final_mode': self.final_mode,
            'reaching_time': self.reaching_time,
            'terminal_error': self.terminal_error,
            'max_drift': self.max_drift,
            'max_abs_s_after_reaching': self.max_abs_s_after_reaching,
            'terminal_s_norm': self.terminal_s_norm,
            'event_counts': self.event_counts,
            'lyapunov_decreasing': self.lyapunov_decreasing,
            'halted': self.halted,
            'gain_margin_violations': self.gain_margin_violations,
            'events': self.events,
        }


def lyapunov_decreasing(traj: Trajectory, lyapunov, until: Optional[float], floor: float) -> Optional[bool]:
    """Whether V falls strictly between samples before `until` while ||s|| > floor"""
    if lyapunov is None:
        return None
    stop = len(traj)
    for i, sample in enumerate(traj.samples):
        if (until is not None and sample.t >= until) or float(np.linalg.norm(sample.s)) <= floor:
            stop = i
            break
    values = traj.lyapunov(lyapunov)[:stop]
    return bool(np.all(np.diff(values) < 0.0))


def summarize(closed_loop, traj: Trajectory, index: int, tol_surface: float) -> RunSummary:
    entry = traj.first_event(EventKind.SLIDING_ENTRY)
    reaching = entry.t if entry is not None else None
    s_norms = np.array([float(np.linalg.norm(s.s)) for s in traj.samples])
    after = None
    if reaching is not None:
        mask = traj.times >= reaching
        after = float(s_norms[mask].max()) if mask.any() else None
    floor = tol_surface
    epsilon = getattr(closed_loop.system, 'epsilon', None)
    if getattr(closed_loop.system, 'regularized', False) and epsilon is not None:
        floor = max(floor, 10.0 * epsilon)
    final = traj.final.state
    monitor = getattr(closed_loop, 'gain_monitor', None)
    return RunSummary(
        index=index,
        initial_state=[float(v) for v in traj.samples[0].x],
        final_state=[float(v) for v in final.x],
        final_mode=final.mode.label,
        reaching_time=reaching,
        terminal_error=closed_loop.target_error(final.x),
        max_drift=float(traj.drifts.max()),
        max_abs_s_after_reaching=after,
        terminal_s_norm=float(s_norms[-1]),
        event_counts=traj.event_counts(),
        lyapunov_decreasing=lyapunov_decreasing(traj, closed_loop.lyapunov, reaching, floor),
        halted=traj.halted,
        gain_margin_violations=monitor.violations if monitor is not None else 0,
        events=[e.to_dict() for e in traj.events],
    )
