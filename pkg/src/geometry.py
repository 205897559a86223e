"""State spaces: embedded submanifolds of R^p and quotients R^n / Z by affine actions.

Points are flat float arrays. SO(3) points are stored row-major (9 entries);
product manifolds concatenate their factors.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.config import DEFAULT_TOLERANCES
from src.errors import DegenerateRetraction, NotOnManifold, RangeExceeded

logger = logging.getLogger(__name__)

ORTHO_TOL = 1e-12
ORTHO_MAX_ITER = 50


class EmbeddedManifold(ABC):
    """A manifold given as the zero set of a constraint map in R^p"""

    name: str = 'manifold'
    ambient_dim: int = 0
    intrinsic_dim: int = 0

    @abstractmethod
    def constraint(self, x: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def tangent_projector(self, x: np.ndarray) -> np.ndarray:
        """Orthogonal projector onto T_x M as a p x p matrix"""

    @abstractmethod
    def retract(self, y: np.ndarray) -> np.ndarray:
        ...

    @property
    def coordinate_names(self) -> List[str]:
        return [f"x{i + 1}" for i in range(self.ambient_dim)]

    def project_tangent(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return self.tangent_projector(x) @ np.asarray(v, dtype=float)

    def drift(self, x: np.ndarray) -> float:
        c = self.constraint(x)
        return float(np.linalg.norm(c)) if c.size else 0.0

    def require_on_manifold(self, x: np.ndarray, tol: float = DEFAULT_TOLERANCES.mfd):
        drift = self.drift(x)
        if drift > tol:
            raise NotOnManifold(f"point is {drift:.3e} away from {self.name} (tolerance {tol:.1e})")


class EuclideanSpace(EmbeddedManifold):
    def __init__(self, dim: int, names: Optional[Sequence[str]] = None, name: Optional[str] = None):
        self.ambient_dim = dim
        self.intrinsic_dim = dim
        self.name = name or f"r{dim}"
        self._names = list(names) if names else [f"x{i + 1}" for i in range(dim)]

    @property
    def coordinate_names(self) -> List[str]:
        return list(self._names)

    def constraint(self, x):
        return np.zeros(0)

    def tangent_projector(self, x):
        return np.eye(self.ambient_dim)

    def project_tangent(self, x, v):
        return np.array(v, dtype=float)

    def retract(self, y):
        y = np.array(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise DegenerateRetraction("non-finite point")
        return y


class Sphere(EmbeddedManifold):
    """Unit sphere in R^p (S^2 by default)"""

    def __init__(self, ambient_dim: int = 3, prefix: str = 'L'):
        self.ambient_dim = ambient_dim
        self.intrinsic_dim = ambient_dim - 1
        self.name = f"s{ambient_dim - 1}"
        self.prefix = prefix

    @property
    def coordinate_names(self):
        return [f"{self.prefix}{i + 1}" for i in range(self.ambient_dim)]

    def constraint(self, x):
        x = np.asarray(x, dtype=float)
        return np.array([x @ x - 1.0])

    def drift(self, x):
        return abs(float(np.linalg.norm(x)) - 1.0)

    def tangent_projector(self, x):
        x = np.asarray(x, dtype=float)
        return np.eye(self.ambient_dim) - np.outer(x, x)

    def project_tangent(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return v - (x @ v) * x

    def retract(self, y):
        y = np.asarray(y, dtype=float)
        norm = float(np.linalg.norm(y))
        if not np.isfinite(norm) or norm == 0.0:
            raise DegenerateRetraction("cannot retract the zero vector onto the sphere")
        return y / norm


def orthogonalize(y: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix to a 3x3 matrix

    Newton-Schulz iteration R <- R(3I - R^T R)/2 run to a fixed point, with a
    determinant correction for reflections.
    """
    y = np.asarray(y, dtype=float).reshape(3, 3)
    if not np.all(np.isfinite(y)):
        raise DegenerateRetraction("non-finite matrix")
    eye = np.eye(3)
    r = y
    if np.linalg.norm(r.T @ r - eye) >= 0.5:
        sv = np.linalg.svd(r, compute_uv=False)
        if sv[0] == 0.0 or sv[-1] <= 1e-12 * sv[0]:
            raise DegenerateRetraction(f"rank-deficient matrix (singular values {sv})")
        r = r / sv[0]
    for _ in range(ORTHO_MAX_ITER):
        err = np.linalg.norm(r.T @ r - eye)
        if err <= ORTHO_TOL:
            break
        r = r @ (3.0 * eye - r.T @ r) / 2.0
    else:
        if np.linalg.norm(r.T @ r - eye) > 1e-10:
            raise DegenerateRetraction("orthogonalization did not converge")
    if np.linalg.det(r) < 0.0:
        u, _, vt = np.linalg.svd(y)
        d = np.diag([1.0, 1.0, np.linalg.det(u @ vt)])
        r = u @ d @ vt
    return r


class SpecialOrthogonalGroup(EmbeddedManifold):
    """SO(3) in R^{3x3}, points stored row-major"""

    name = 'so3'
    ambient_dim = 9
    intrinsic_dim = 3
    _upper = np.triu_indices(3)

    @property
    def coordinate_names(self):
        return [f"R{i + 1}{j + 1}" for i in range(3) for j in range(3)]

    def constraint(self, x):
        r = np.asarray(x, dtype=float).reshape(3, 3)
        return (r.T @ r - np.eye(3))[self._upper]

    def drift(self, x):
        r = np.asarray(x, dtype=float).reshape(3, 3)
        return float(np.linalg.norm(r.T @ r - np.eye(3)))

    def project_tangent(self, x, v):
        r = np.asarray(x, dtype=float).reshape(3, 3)
        v = np.asarray(v, dtype=float)
        a = r.T @ v.reshape(3, 3)
        return (r @ (a - a.T) / 2.0).reshape(v.shape)

    def tangent_projector(self, x):
        basis = np.eye(9)
        return np.column_stack([self.project_tangent(x, basis[k]) for k in range(9)])

    def retract(self, y):
        y = np.asarray(y, dtype=float)
        return orthogonalize(y).reshape(y.shape)


class ProductManifold(EmbeddedManifold):
    def __init__(self, factors: Sequence[EmbeddedManifold], name: Optional[str] = None):
        self.factors = list(factors)
        self.ambient_dim = sum(f.ambient_dim for f in self.factors)
        self.intrinsic_dim = sum(f.intrinsic_dim for f in self.factors)
        self.name = name or 'x'.join(f.name for f in self.factors)
        self.slices: List[slice] = []
        start = 0
        for f in self.factors:
            self.slices.append(slice(start, start + f.ambient_dim))
            start += f.ambient_dim

    @property
    def coordinate_names(self):
        names = []
        for f in self.factors:
            names.extend(f.coordinate_names)
        return names

    def _split(self, x) -> Iterable[Tuple[EmbeddedManifold, np.ndarray]]:
        x = np.asarray(x, dtype=float)
        return [(f, x[s]) for f, s in zip(self.factors, self.slices)]

    def constraint(self, x):
        return np.concatenate([f.constraint(xi) for f, xi in self._split(x)])

    def drift(self, x):
        return max(f.drift(xi) for f, xi in self._split(x))

    def tangent_projector(self, x):
        p = np.zeros((self.ambient_dim, self.ambient_dim))
        for (f, xi), s in zip(self._split(x), self.slices):
            p[s, s] = f.tangent_projector(xi)
        return p

    def project_tangent(self, x, v):
        v = np.asarray(v, dtype=float)
        out = np.empty_like(v)
        for (f, xi), s in zip(self._split(x), self.slices):
            out[s] = f.project_tangent(xi, v[s])
        return out

    def retract(self, y):
        y = np.asarray(y, dtype=float)
        out = np.empty_like(y)
        for (f, yi), s in zip(self._split(y), self.slices):
            out[s] = f.retract(yi)
        return out


def sphere_bundle() -> ProductManifold:
    """S^2 x R^3, states (L, omega)"""
    return ProductManifold([Sphere(3), EuclideanSpace(3, names=['w1', 'w2', 'w3'])], name='s2')


def rotation_bundle() -> ProductManifold:
    """SO(3) x R^3, states (R row-major, omega)"""
    return ProductManifold([SpecialOrthogonalGroup(), EuclideanSpace(3, names=['w1', 'w2', 'w3'])], name='so3')


def retract(m: EmbeddedManifold, y) -> np.ndarray:
    return m.retract(y)


def tangent_project(m: EmbeddedManifold, x, v) -> np.ndarray:
    return m.project_tangent(x, v)


@dataclass(frozen=True, eq=False)
class AffineGroupAction:
    """Z acting on R^n by powers of d -> A d + b"""

    generator_matrix: np.ndarray
    generator_offset: np.ndarray
    name: str = 'affine'
    z_max: int = DEFAULT_TOLERANCES.z_max
    _inverse: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a = np.array(self.generator_matrix, dtype=float)
        b = np.array(self.generator_offset, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or b.shape != (a.shape[0],):
            raise ValueError(f"generator shapes do not match: A {a.shape}, b {b.shape}")
        if abs(np.linalg.det(a)) < 1e-14:
            raise ValueError("generator matrix must be invertible")
        object.__setattr__(self, 'generator_matrix', a)
        object.__setattr__(self, 'generator_offset', b)
        object.__setattr__(self, '_inverse', np.linalg.inv(a))

    @property
    def dim(self) -> int:
        return self.generator_offset.size

    def apply(self, z: int, d) -> np.ndarray:
        """Act by any integer z through repeated application of the generator"""
        out = np.array(d, dtype=float)
        if z >= 0:
            for _ in range(z):
                out = self.generator_matrix @ out + self.generator_offset
        else:
            for _ in range(-z):
                out = self._inverse @ (out - self.generator_offset)
        return out

    def act(self, z: int, d) -> np.ndarray:
        if abs(z) > self.z_max:
            raise RangeExceeded(f"|z| = {abs(z)} exceeds the configured maximum {self.z_max}")
        return self.apply(z, d)

    def linear_part(self, z: int) -> np.ndarray:
        """Pushforward A^z of acting by z"""
        return np.linalg.matrix_power(self.generator_matrix, z)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'generator_matrix': self.generator_matrix.tolist(),
            'generator_offset': self.generator_offset.tolist(),
            'z_max': self.z_max,
        }


def act(a: AffineGroupAction, z: int, d) -> np.ndarray:
    return a.act(z, d)


def cylinder_action(z_max: int = DEFAULT_TOLERANCES.z_max) -> AffineGroupAction:
    return AffineGroupAction(np.eye(2), np.array([2.0 * np.pi, 0.0]), name='cylinder', z_max=z_max)


def mobius_action(z_max: int = DEFAULT_TOLERANCES.z_max) -> AffineGroupAction:
    return AffineGroupAction(np.diag([1.0, -1.0]), np.array([2.0 * np.pi, 0.0]), name='mobius', z_max=z_max)


def circle_action(z_max: int = DEFAULT_TOLERANCES.z_max) -> AffineGroupAction:
    return AffineGroupAction(np.eye(1), np.array([2.0 * np.pi]), name='circle', z_max=z_max)


@dataclass(frozen=True, eq=False)
class QuotientManifold:
    """R^n / Z where the generator shifts one angle coordinate by a full period"""

    name: str
    action: AffineGroupAction
    angle_index: int = 0
    coordinate_names: Tuple[str, ...] = ('theta', 'omega')

    def __post_init__(self):
        a = self.action.generator_matrix
        row = np.zeros(self.action.dim)
        row[self.angle_index] = 1.0
        if not np.array_equal(a[self.angle_index], row) or self.period <= 0:
            raise ValueError("generator must translate the angle coordinate by a positive period")

    @property
    def ambient_dim(self) -> int:
        return self.action.dim

    @property
    def period(self) -> float:
        return float(self.action.generator_offset[self.angle_index])

    def orbit_step(self, d) -> int:
        """The z taking d into the fundamental domain"""
        theta = float(np.asarray(d, dtype=float)[self.angle_index])
        return -int(np.floor((theta + self.period / 2.0) / self.period))

    def canonicalize(self, d) -> np.ndarray:
        half = self.period / 2.0
        z = self.orbit_step(d)
        out = self.action.apply(z, d)
        # rounding in the shift can land just outside [-half, half)
        while out[self.angle_index] >= half:
            out = self.action.apply(-1, out)
        while out[self.angle_index] < -half:
            out = self.action.apply(1, out)
        return out

    def distance(self, a, b) -> float:
        ca = self.canonicalize(a)
        cb = self.canonicalize(b)
        return min(float(np.linalg.norm(ca - self.action.apply(z, cb))) for z in (-1, 0, 1))

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'action': self.action.to_dict(), 'angle_index': self.angle_index}


def canonicalize(q: QuotientManifold, d) -> np.ndarray:
    return q.canonicalize(d)


def cylinder() -> QuotientManifold:
    return QuotientManifold('cylinder', cylinder_action())


def mobius_bundle() -> QuotientManifold:
    return QuotientManifold('mobius', mobius_action())


@dataclass(frozen=True)
class DescentReport:
    passed: bool
    max_violation: float
    witness_point: Optional[Tuple[float, ...]]
    witness_z: Optional[int]
    sample_count: int
    z_range: int
    tolerance: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            'passed': self.passed,
            'max_violation': self.max_violation,
            'witness': None if self.witness_point is None else {
                'point': list(self.witness_point), 'z': self.witness_z},
            'sample_count': self.sample_count,
            'z_range': self.z_range,
            'tolerance': self.tolerance,
        }


def _descent_scan(a: AffineGroupAction, samples, z_range: int, tol: float,
                  violation: Callable[[np.ndarray, int], float]) -> DescentReport:
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 0:
        raise ValueError("descent check needs at least one sample")
    worst, witness, witness_z = 0.0, None, None
    for d in samples:
        for z in range(-z_range, z_range + 1):
            if z == 0:
                continue
            v = violation(d, z)
            if v > worst or witness is None:
                worst, witness, witness_z = v, tuple(float(c) for c in d), z
    return DescentReport(
        passed=worst <= tol,
        max_violation=worst,
        witness_point=witness,
        witness_z=witness_z,
        sample_count=samples.shape[0],
        z_range=z_range,
        tolerance=tol,
    )


def check_function_descends(a: AffineGroupAction, f: Callable, samples, z_range: int,
                            tol: float = DEFAULT_TOLERANCES.descent) -> DescentReport:
    """max ||f(d) - f(z.d)|| over samples and 0 < |z| <= z_range"""

    def violation(d, z):
        lhs = np.atleast_1d(np.asarray(f(d), dtype=float))
        rhs = np.atleast_1d(np.asarray(f(a.act(z, d)), dtype=float))
        return float(np.linalg.norm(lhs - rhs))

    return _descent_scan(a, samples, z_range, tol, violation)


def check_field_descends(a: AffineGroupAction, f: Callable, samples, z_range: int,
                         tol: float = DEFAULT_TOLERANCES.descent) -> DescentReport:
    """max ||A_z f(d) - f(z.d)||, the pushforward condition for affine actions"""

    def violation(d, z):
        lhs = a.linear_part(z) @ np.asarray(f(d), dtype=float)
        rhs = np.asarray(f(a.act(z, d)), dtype=float)
        return float(np.linalg.norm(lhs - rhs))

    return _descent_scan(a, samples, z_range, tol, violation)


def check_set_saturated(a: AffineGroupAction, indicator: Callable[[np.ndarray], bool], samples,
                        z_range: int) -> DescentReport:
    """A set is saturated when membership is constant along orbits"""

    def violation(d, z):
        return float(bool(indicator(d)) != bool(indicator(a.act(z, d))))

    return _descent_scan(a, samples, z_range, 0.0, violation)
