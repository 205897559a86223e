"""Piecewise-smooth vector fields and their Filippov regularization."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config import DEFAULT_TOLERANCES, Tolerances
from src.errors import (
    DegenerateClassification,
    NotSliding,
    NotWellDefinedOrder,
    OffSurface,
    OnSwitchingManifold,
    UnsupportedCorner,
)
from src.geometry import EmbeddedManifold

logger = logging.getLogger(__name__)

FieldFn = Callable[[np.ndarray, float], np.ndarray]
Pattern = Tuple[int, ...]


class SlidingKind(str, Enum):
    CROSSING = 'crossing'
    ATTRACTIVE = 'attractive_sliding'
    REPULSIVE = 'repulsive_sliding'
    TANGENTIAL = 'tangential'


def _fd_step(x: np.ndarray, rel: float) -> float:
    return rel * (1.0 + float(np.linalg.norm(x)))


@dataclass(frozen=True)
class SwitchingFunction:
    """Scalar switching function s(x, t); its zero set is the switching surface

    `gradient_fn` is the analytic spatial gradient when the controller supplies
    one. `relative_degree` allows second-order classification when the
    first-order Lie derivatives vanish on both sides.
    """

    name: str
    value_fn: Callable[[np.ndarray, float], float]
    gradient_fn: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    relative_degree: int = 1
    time_dependent: bool = False
    fd_step: float = DEFAULT_TOLERANCES.fd_step

    def value(self, x: np.ndarray, t: float) -> float:
        return float(self.value_fn(x, t))

    def gradient(self, x: np.ndarray, t: float) -> np.ndarray:
        if self.gradient_fn is not None:
            return np.asarray(self.gradient_fn(x, t), dtype=float)
        x = np.asarray(x, dtype=float)
        h = _fd_step(x, self.fd_step)
        grad = np.empty_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = h
            grad[i] = (self.value_fn(x + e, t) - self.value_fn(x - e, t)) / (2.0 * h)
        return grad

    def _time_rate(self, x: np.ndarray, t: float) -> float:
        if not self.time_dependent:
            return 0.0
        h = self.fd_step * (1.0 + abs(t))
        return (self.value_fn(x, t + h) - self.value_fn(x, t - h)) / (2.0 * h)

    def lie_derivative(self, field: FieldFn, x: np.ndarray, t: float, order: int = 1) -> float:
        x = np.asarray(x, dtype=float)
        if order == 1:
            return float(self.gradient(x, t) @ field(x, t)) + self._time_rate(x, t)
        if order != 2:
            raise ValueError(f"Lie derivatives of order {order} are not supported")

        def first(y):
            return self.lie_derivative(field, y, t, 1)

        h = _fd_step(x, self.fd_step)
        grad = np.empty_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = h
            grad[i] = (first(x + e) - first(x - e)) / (2.0 * h)
        return float(grad @ field(x, t))


@dataclass(frozen=True)
class FilippovSet:
    """Singleton {f_plus} or the segment between two one-sided limits"""

    f_plus: np.ndarray
    f_minus: Optional[np.ndarray] = None

    @property
    def is_singleton(self) -> bool:
        return self.f_minus is None

    def element(self, lam: float) -> np.ndarray:
        if self.is_singleton:
            return np.array(self.f_plus)
        return lam * self.f_plus + (1.0 - lam) * self.f_minus

    def endpoints(self) -> List[np.ndarray]:
        if self.is_singleton:
            return [np.array(self.f_plus)]
        return [np.array(self.f_minus), np.array(self.f_plus)]

    def contains(self, v, tol: float = DEFAULT_TOLERANCES.tan) -> bool:
        v = np.asarray(v, dtype=float)
        if self.is_singleton:
            return float(np.linalg.norm(v - self.f_plus)) <= tol
        d = self.f_plus - self.f_minus
        denom = float(d @ d)
        lam = 0.0 if denom == 0.0 else float(np.clip((v - self.f_minus) @ d / denom, 0.0, 1.0))
        return float(np.linalg.norm(v - self.element(lam))) <= tol


@dataclass(frozen=True)
class SlidingClassification:
    kind: SlidingKind
    lambda_star: Optional[float] = None
    lie_plus: Optional[float] = None
    lie_minus: Optional[float] = None
    order: int = 1
    load: Optional[float] = None

    @property
    def is_sliding(self) -> bool:
        return self.kind in (SlidingKind.ATTRACTIVE, SlidingKind.REPULSIVE)

    @property
    def effective_load(self) -> float:
        """0 at the centre of the Filippov segment, 1 at its ends"""
        if self.load is not None:
            return self.load
        if self.lambda_star is not None:
            return abs(2.0 * self.lambda_star - 1.0)
        return 1.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind.value,
            'lambda_star': self.lambda_star,
            'lie_plus': self.lie_plus,
            'lie_minus': self.lie_minus,
            'order': self.order,
            'load': self.effective_load,
        }


def sliding_order(n: int, m: int, dim_s: int) -> int:
    """Order r with n - dim S = r m"""
    if not (n > dim_s >= 0) or m < 1:
        raise ValueError(f"invalid dimensions n={n}, m={m}, dim_S={dim_s}")
    r, rem = divmod(n - dim_s, m)
    if rem:
        raise NotWellDefinedOrder(f"(n - dim S)/m = {(n - dim_s) / m} is not an integer")
    return r


def _kind_from_lie(lp: float, lm: float, tol: float) -> SlidingKind:
    if abs(lp) <= tol or abs(lm) <= tol:
        return SlidingKind.TANGENTIAL
    if lp < 0.0 < lm:
        return SlidingKind.ATTRACTIVE
    if lp > 0.0 > lm:
        return SlidingKind.REPULSIVE
    return SlidingKind.CROSSING


class PiecewiseField:
    """Closed loop with scalar switching functions and one smooth field per sign pattern

    `region_field(x, t, pattern)` evaluates the smooth field of the region
    with the given sign pattern; it must be smooth up to the region boundary.
    """

    regularized = False

    def __init__(self, manifold: EmbeddedManifold, switching_functions: Sequence[SwitchingFunction],
                 region_field: Callable[[np.ndarray, float, Pattern], np.ndarray],
                 control: Optional[Callable[[np.ndarray, float, Pattern], np.ndarray]] = None,
                 name: str = 'piecewise', tolerances: Tolerances = DEFAULT_TOLERANCES):
        self.manifold = manifold
        self.switching_functions = list(switching_functions)
        self.region_field = region_field
        self.control_fn = control
        self.name = name
        self.tol = tolerances

    @property
    def surface_count(self) -> int:
        return len(self.switching_functions)

    @property
    def regions(self) -> Dict[Pattern, FieldFn]:
        out = {}
        for pattern in itertools.product((1, -1), repeat=self.surface_count):
            out[pattern] = (lambda p: (lambda x, t: self.region_field(x, t, p)))(pattern)
        return out

    def surface_values(self, x, t) -> np.ndarray:
        return np.array([sw.value(x, t) for sw in self.switching_functions])

    def surface_residual(self, index: int, x, t) -> float:
        return abs(self.switching_functions[index].value(x, t))

    def pattern_at(self, x, t) -> Pattern:
        return tuple(1 if v >= 0.0 else -1 for v in self.surface_values(x, t))

    def initial_region(self, x, t) -> Pattern:
        return self.pattern_at(x, t)

    def evaluate(self, x, t) -> np.ndarray:
        """Closed-loop field with the region read off the signs at x"""
        return np.asarray(self.region_field(x, t, self.pattern_at(x, t)), dtype=float)

    def field(self, x, t, region: Pattern) -> np.ndarray:
        return np.asarray(self.region_field(x, t, region), dtype=float)

    def event_value(self, index: int, x, t, ref_x=None) -> float:
        return self.switching_functions[index].value(x, t)

    def near_surfaces(self, x, t, tol: float, exclude: Optional[int] = None) -> List[int]:
        return [j for j, v in enumerate(self.surface_values(x, t))
                if j != exclude and abs(v) <= tol]

    def side_fields(self, index: int, x, t, region: Optional[Pattern] = None,
                    ambiguous: Optional[Sequence[int]] = None) -> Tuple[FieldFn, FieldFn]:
        """One-sided fields across surface `index`

        Other surfaces take their sign from `region` (or from x); surfaces in
        `ambiguous` are averaged over both signs.
        """
        base = list(region) if region is not None else list(self.pattern_at(x, t))
        if ambiguous is None:
            ambiguous = self.near_surfaces(x, t, self.tol.surface, exclude=index)
        ambiguous = [j for j in ambiguous if j != index]

        def make(side: int) -> FieldFn:
            patterns = []
            for signs in itertools.product((1, -1), repeat=len(ambiguous)):
                p = list(base)
                p[index] = side
                for j, s in zip(ambiguous, signs):
                    p[j] = s
                patterns.append(tuple(p))

            def f(y, tt):
                return sum(np.asarray(self.region_field(y, tt, p), dtype=float) for p in patterns) / len(patterns)
            return f

        return make(1), make(-1)

    def filippov_set(self, x, t) -> FilippovSet:
        active = self.near_surfaces(x, t, self.tol.surface)
        if not active:
            return FilippovSet(self.evaluate(x, t))
        if len(active) > 1:
            raise UnsupportedCorner(
                f"{len(active)} switching functions active at once: "
                + ', '.join(self.switching_functions[j].name for j in active))
        fp, fm = self.side_fields(active[0], x, t, ambiguous=[])
        return FilippovSet(fp(x, t), fm(x, t))

    def classify(self, index: int, x, t, region: Optional[Pattern] = None,
                 ambiguous: Optional[Sequence[int]] = None,
                 tol: Optional[float] = None) -> SlidingClassification:
        """Sign of the one-sided Lie derivatives at a point with |s| <= tol (surface tolerance by default)"""
        sw = self.switching_functions[index]
        residual = abs(sw.value(x, t))
        if residual > (self.tol.surface if tol is None else tol):
            raise OffSurface(f"point is not on switching set '{sw.name}' (|s| = {residual:.3e})")
        fp, fm = self.side_fields(index, x, t, region, ambiguous)
        order = 1
        while True:
            lp = sw.lie_derivative(fp, x, t, order)
            lm = sw.lie_derivative(fm, x, t, order)
            if abs(lp) <= self.tol.lie and abs(lm) <= self.tol.lie:
                if order < sw.relative_degree and order < 2:
                    order += 1
                    continue
                raise DegenerateClassification(
                    f"both Lie derivatives of '{sw.name}' vanish at order {order} "
                    f"(L+ = {lp:.3e}, L- = {lm:.3e})")
            break
        kind = _kind_from_lie(lp, lm, self.tol.lie)
        lam = lm / (lm - lp) if kind in (SlidingKind.ATTRACTIVE, SlidingKind.REPULSIVE) else None
        return SlidingClassification(kind, lam, lp, lm, order)

    def classify_corner(self, active: Sequence[int], x, t) -> Tuple[int, SlidingClassification]:
        """Classify a corner on the surface of highest relative degree, averaging the others"""
        index = max(active, key=lambda j: (self.switching_functions[j].relative_degree, -j))
        others = [j for j in active if j != index]
        return index, self.classify(index, x, t, ambiguous=others, tol=self.tol.corner)

    def sliding_field(self, index: int, x, t, region: Optional[Pattern] = None) -> np.ndarray:
        cls = self.classify(index, x, t, region)
        if not cls.is_sliding or not (0.0 < cls.lambda_star < 1.0):
            raise NotSliding(f"no sliding on '{self.switching_functions[index].name}' ({cls.kind.value})")
        fp, fm = self.side_fields(index, x, t, region)
        return cls.lambda_star * fp(x, t) + (1.0 - cls.lambda_star) * fm(x, t)

    def sliding_vector(self, index: int, x, t, region: Optional[Pattern] = None) -> np.ndarray:
        """Sliding combination evaluated off the surface too (integration stages)"""
        sw = self.switching_functions[index]
        fp, fm = self.side_fields(index, x, t, region, ambiguous=[])
        vp, vm = fp(x, t), fm(x, t)
        grad = sw.gradient(x, t)
        lp, lm = float(grad @ vp), float(grad @ vm)
        denom = lm - lp
        lam = 0.5 if abs(denom) <= self.tol.lie else float(np.clip(lm / denom, 0.0, 1.0))
        return lam * vp + (1.0 - lam) * vm

    def project_to_surface(self, index: int, x, t) -> np.ndarray:
        """One Newton step onto s = 0 along the gradient, then back onto the manifold"""
        sw = self.switching_functions[index]
        grad = self.manifold.project_tangent(x, sw.gradient(x, t))
        g2 = float(grad @ grad)
        y = np.asarray(x, dtype=float)
        if g2 > 0.0:
            y = y - sw.value(x, t) * grad / g2
        return self.manifold.retract(y)

    def cross(self, region: Pattern, index: int) -> Pattern:
        p = list(region)
        p[index] = -p[index]
        return tuple(p)

    def exit_region(self, index: int, region: Pattern, cls: SlidingClassification) -> Pattern:
        p = list(region)
        lam = cls.lambda_star if cls.lambda_star is not None else 0.5
        p[index] = 1 if lam >= 0.5 else -1
        return tuple(p)

    def side_after_contact(self, index: int, region: Pattern, cls: SlidingClassification) -> Pattern:
        """Region entered when starting on a surface the flow crosses"""
        p = list(region)
        lie = cls.lie_plus if cls.lie_plus is not None and abs(cls.lie_plus) > self.tol.lie else cls.lie_minus
        p[index] = 1 if (lie or 0.0) >= 0.0 else -1
        return tuple(p)

    def control(self, x, t, region: Pattern, surface: Optional[int] = None) -> np.ndarray:
        if self.control_fn is None:
            return np.zeros(0)
        if surface is None:
            return np.atleast_1d(np.asarray(self.control_fn(x, t, region), dtype=float))
        sw = self.switching_functions[surface]
        grad = sw.gradient(x, t)
        p_plus, p_minus = list(region), list(region)
        p_plus[surface], p_minus[surface] = 1, -1
        lp = float(grad @ self.field(x, t, tuple(p_plus)))
        lm = float(grad @ self.field(x, t, tuple(p_minus)))
        lam = 0.5 if abs(lm - lp) <= self.tol.lie else float(np.clip(lm / (lm - lp), 0.0, 1.0))
        up = np.atleast_1d(self.control_fn(x, t, tuple(p_plus)))
        um = np.atleast_1d(self.control_fn(x, t, tuple(p_minus)))
        return lam * up + (1.0 - lam) * um


class UnitVectorField:
    """Regular-form closed loop x = (x1, x2), s = x2 - alpha(x1) in R^m,
    with discontinuous control v = -K s/||s|| entering through B(x)

    `drift(x, t)` is the closed-loop field with v = 0 (smooth control and
    disturbance included). Sliding on s = 0 is decided by the equivalent
    control v_eq = -(Ds B)^{-1} L_drift s; its load ||v_eq||/K < 1 places the
    field in the relative interior of the Filippov set.

    `switching_law(x, t, epsilon)` is the controller's discontinuous part; the
    default is -K s/||s|| with K from `gain`.
    """

    regularized = False
    surface_count = 1

    def __init__(self, manifold: EmbeddedManifold, sliding_variable: Callable[[np.ndarray], np.ndarray],
                 drift: FieldFn, input_map: Callable[[np.ndarray], np.ndarray],
                 gain: Callable[[np.ndarray, float], float], velocity_slice: slice,
                 smooth_control: Callable[[np.ndarray, float], np.ndarray],
                 s_rate: Optional[FieldFn] = None,
                 decoupling: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 switching_law: Optional[Callable[[np.ndarray, float, Optional[float]], np.ndarray]] = None,
                 name: str = 'unit-vector', tolerances: Tolerances = DEFAULT_TOLERANCES):
        self.manifold = manifold
        self.sliding_variable = sliding_variable
        self.drift = drift
        self.input_map = input_map
        self.gain = gain
        self.velocity_slice = velocity_slice
        self.smooth_control = smooth_control
        self._s_rate = s_rate
        self._decoupling = decoupling
        self._switching_law = switching_law
        self.name = name
        self.tol = tolerances

    def _directional(self, x, v) -> np.ndarray:
        h = _fd_step(x, self.tol.fd_step)
        return (self.sliding_variable(x + h * v) - self.sliding_variable(x - h * v)) / (2.0 * h)

    def s_rate(self, x, t) -> np.ndarray:
        """Lie derivative of s along the drift"""
        if self._s_rate is not None:
            return np.asarray(self._s_rate(x, t), dtype=float)
        return self._directional(x, self.drift(x, t))

    def decoupling(self, x) -> np.ndarray:
        """Ds B, the m x m matrix through which v acts on s"""
        if self._decoupling is not None:
            return np.asarray(self._decoupling(x), dtype=float)
        b = self.input_map(x)
        return np.column_stack([self._directional(x, b[:, k]) for k in range(b.shape[1])])

    def surface_values(self, x, t) -> np.ndarray:
        return np.asarray(self.sliding_variable(x), dtype=float)

    def surface_residual(self, index: int, x, t) -> float:
        return float(np.linalg.norm(self.sliding_variable(x)))

    def initial_region(self, x, t):
        return None

    def _switching(self, x, t, epsilon: Optional[float] = None) -> np.ndarray:
        if self._switching_law is not None:
            return np.asarray(self._switching_law(x, t, epsilon), dtype=float)
        s = self.sliding_variable(x)
        norm = float(np.linalg.norm(s))
        return -self.gain(x, t) * s / (norm if epsilon is None else norm + epsilon)

    def _switching_or_zero(self, x, t) -> np.ndarray:
        s = self.sliding_variable(x)
        return np.zeros_like(s) if float(np.linalg.norm(s)) == 0.0 else self._switching(x, t)

    def switching_control(self, x, t) -> np.ndarray:
        if float(np.linalg.norm(self.sliding_variable(x))) == 0.0:
            raise OnSwitchingManifold("unit-vector control is undefined on s = 0")
        return self._switching(x, t)

    def field(self, x, t, region=None) -> np.ndarray:
        v = self._switching_or_zero(x, t)
        return self.drift(x, t) + self.input_map(x) @ v

    def event_value(self, index: int, x, t, ref_x=None) -> float:
        s = self.sliding_variable(x)
        ref = s if ref_x is None else self.sliding_variable(ref_x)
        return float(s @ ref)

    def near_surfaces(self, x, t, tol: float, exclude: Optional[int] = None) -> List[int]:
        return []

    def equivalent_control(self, x, t) -> np.ndarray:
        return -np.linalg.solve(self.decoupling(x), self.s_rate(x, t))

    def classify(self, index: int, x, t, region=None, ambiguous=None, tol=None) -> SlidingClassification:
        v_eq = self.equivalent_control(x, t)
        load = float(np.linalg.norm(v_eq)) / self.gain(x, t)
        kind = SlidingKind.ATTRACTIVE if load < 1.0 else SlidingKind.CROSSING
        return SlidingClassification(kind, None, None, None, 1, load)

    def sliding_field(self, index: int, x, t, region=None) -> np.ndarray:
        cls = self.classify(index, x, t)
        if not cls.is_sliding:
            raise NotSliding(f"equivalent control exceeds the gain (load {cls.load:.3f})")
        return self.sliding_vector(index, x, t)

    def sliding_vector(self, index: int, x, t, region=None) -> np.ndarray:
        return self.drift(x, t) + self.input_map(x) @ self.equivalent_control(x, t)

    def project_to_surface(self, index: int, x, t) -> np.ndarray:
        """Newton step along the velocity block, where Ds is the identity"""
        y = np.array(x, dtype=float)
        y[self.velocity_slice] -= self.sliding_variable(y)
        return self.manifold.retract(y)

    def cross(self, region, index: int):
        return region

    def exit_region(self, index: int, region, cls: SlidingClassification):
        return None

    def side_after_contact(self, index: int, region, cls: SlidingClassification):
        return None

    def control(self, x, t, region, surface: Optional[int] = None) -> np.ndarray:
        if surface is None:
            v = self._switching_or_zero(x, t)
        else:
            v = self.equivalent_control(x, t)
        return self.smooth_control(x, t) + v

    def regularize(self, epsilon: float) -> 'RegularizedField':
        """Boundary layer s/||s|| -> s/(||s|| + epsilon)"""

        def sat(x, t):
            return self._switching(x, t, epsilon)

        return RegularizedField(
            self.manifold,
            field=lambda x, t: self.drift(x, t) + self.input_map(x) @ sat(x, t),
            values=lambda x, t: self.surface_values(x, t),
            control=lambda x, t: self.smooth_control(x, t) + sat(x, t),
            epsilon=epsilon,
            name=f"{self.name}-regularized",
        )


class RegularizedField:
    """Smooth closed loop obtained from a boundary-layer control; no events"""

    regularized = True
    surface_count = 0

    def __init__(self, manifold: EmbeddedManifold, field: FieldFn,
                 values: Callable[[np.ndarray, float], np.ndarray],
                 control: Optional[FieldFn] = None, epsilon: float = 1e-3, name: str = 'regularized'):
        self.manifold = manifold
        self._field = field
        self._values = values
        self._control = control
        self.epsilon = epsilon
        self.name = name

    def field(self, x, t, region=None) -> np.ndarray:
        return np.asarray(self._field(x, t), dtype=float)

    def evaluate(self, x, t) -> np.ndarray:
        return self.field(x, t)

    def surface_values(self, x, t) -> np.ndarray:
        return np.atleast_1d(np.asarray(self._values(x, t), dtype=float))

    def control(self, x, t, region=None, surface=None) -> np.ndarray:
        if self._control is None:
            return np.zeros(0)
        return np.atleast_1d(np.asarray(self._control(x, t), dtype=float))


def filippov_set(pf: PiecewiseField, x, t) -> FilippovSet:
    return pf.filippov_set(x, t)


def classify(pf: PiecewiseField, sw: SwitchingFunction, x, t) -> SlidingClassification:
    return pf.classify(pf.switching_functions.index(sw), x, t)


def sliding_field(pf: PiecewiseField, sw: SwitchingFunction, x, t) -> np.ndarray:
    return pf.sliding_field(pf.switching_functions.index(sw), x, t)


def tangency_audit(system, points: Sequence[np.ndarray], times: Sequence[float]) -> float:
    """Largest normal component of any region field over the given samples"""
    worst = 0.0
    m = system.manifold
    for x, t in zip(points, times):
        if isinstance(system, PiecewiseField):
            values = [f(x, t) for f in system.regions.values()]
        else:
            values = [system.field(x, t, None)]
        for v in values:
            normal = v - m.project_tangent(x, v)
            worst = max(worst, float(np.linalg.norm(normal)))
    return worst
