from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np


class ModeKind(str, Enum):
    FREE = 'free'
    SLIDING = 'sliding'
    EQUILIBRIUM = 'equilibrium'


@dataclass(frozen=True)
class Mode:
    kind: ModeKind
    region: Optional[Tuple[int, ...]] = None
    surface: Optional[int] = None

    @classmethod
    def free(cls, region=None) -> 'Mode':
        return cls(ModeKind.FREE, None if region is None else tuple(region))

    @classmethod
    def sliding(cls, surface: int, region=None) -> 'Mode':
        return cls(ModeKind.SLIDING, None if region is None else tuple(region), surface)

    @classmethod
    def equilibrium(cls, region=None) -> 'Mode':
        return cls(ModeKind.EQUILIBRIUM, None if region is None else tuple(region))

    @property
    def label(self) -> str:
        if self.kind == ModeKind.SLIDING:
            return f"sliding:{self.surface}"
        if self.kind == ModeKind.FREE and self.region is not None:
            return 'free:' + ''.join('+' if s > 0 else '-' for s in self.region)
        return self.kind.value


@dataclass(frozen=True)
class HybridState:
    t: float
    x: np.ndarray
    mode: Mode


class EventKind(str, Enum):
    SURFACE_HIT = 'SurfaceHit'
    SLIDING_ENTRY = 'SlidingEntry'
    SLIDING_EXIT = 'SlidingExit'
    EQUILIBRIUM_REACHED = 'EquilibriumReached'
    DEGENERATE = 'Degenerate'


@dataclass(frozen=True)
class Event:
    t: float
    kind: EventKind
    surface: Optional[int] = None
    detail: str = ''

    def to_dict(self) -> Dict[str, Any]:
        return {'t': self.t, 'kind': self.kind.value, 'surface': self.surface, 'detail': self.detail}


@dataclass(frozen=True)
class Sample:
    t: float
    x: np.ndarray
    mode: Mode
    s: np.ndarray
    u: np.ndarray
    drift: float
    on_grid: bool = False

    @property
    def state(self) -> HybridState:
        return HybridState(self.t, self.x, self.mode)


class Trajectory:
    """Samples with strictly increasing times plus the event log of one run"""

    def __init__(self, coordinate_names: Sequence[str], options: Optional[Dict[str, Any]] = None):
        self.coordinate_names = list(coordinate_names)
        self.options = options or {}
        self.samples: List[Sample] = []
        self.events: List[Event] = []
        self.halted: Optional[str] = None

    def record(self, sample: Sample):
        if self.samples and sample.t <= self.samples[-1].t:
            # an event landing on a grid time replaces the earlier sample
            prev = self.samples.pop()
            sample = Sample(prev.t, sample.x, sample.mode, sample.s, sample.u, sample.drift,
                            sample.on_grid or prev.on_grid)
        self.samples.append(sample)

    def log_event(self, event: Event):
        self.events.append(event)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def states(self) -> np.ndarray:
        return np.array([s.x for s in self.samples])

    @property
    def s_values(self) -> np.ndarray:
        return np.array([s.s for s in self.samples])

    @property
    def drifts(self) -> np.ndarray:
        return np.array([s.drift for s in self.samples])

    @property
    def final(self) -> Sample:
        return self.samples[-1]

    def lyapunov(self, fn) -> np.ndarray:
        return np.array([fn(s.x) for s in self.samples])

    def grid_samples(self) -> List[Sample]:
        return [s for s in self.samples if s.on_grid]

    def first_event(self, kind: EventKind) -> Optional[Event]:
        return next((e for e in self.events if e.kind == kind), None)

    def event_counts(self) -> Dict[str, int]:
        counts = {kind.value: 0 for kind in EventKind}
        for e in self.events:
            counts[e.kind.value] += 1
        return counts

