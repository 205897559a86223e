"""Sliding-mode control laws, sliding variables and disturbance models."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from src.config import DEFAULT_TOLERANCES
from src.errors import InvalidGains, NotOnManifold, NotSkew, OnSwitchingManifold

logger = logging.getLogger(__name__)

SKEW_TOL = 1e-9


class ControllerFamily(str, Enum):
    SO3_FIRST_ORDER = 'so3_first_order'
    S2_FIRST_ORDER = 's2_first_order'
    S2_TERMINAL = 's2_terminal'
    MOBIUS = 'mobius'
    CYLINDER_TWISTING = 'cylinder_twisting'
    FILIPPOV_LINE = 'filippov_line'


# Rigid body

@dataclass(frozen=True, eq=False)
class RigidBodyParams:
    J: np.ndarray
    d_bar: float = 0.0
    eta: float = 0.1

    def __post_init__(self):
        j = np.array(self.J, dtype=float)
        if j.shape != (3, 3):
            raise InvalidGains(f"inertia matrix must be 3x3, got {j.shape}")
        if np.linalg.norm(j - j.T) > 1e-12:
            raise InvalidGains("inertia matrix must be symmetric")
        if np.min(np.linalg.eigvalsh(j)) <= 0.0:
            raise InvalidGains("inertia matrix must be positive definite")
        if self.d_bar < 0.0:
            raise InvalidGains(f"disturbance bound d_bar must be nonnegative, got {self.d_bar}")
        if self.eta <= 0.0:
            raise InvalidGains(f"gain margin eta must be positive, got {self.eta}")
        object.__setattr__(self, 'J', j)

    @property
    def J_norm(self) -> float:
        return float(np.linalg.norm(self.J, 2))

    @property
    def J_inv(self) -> np.ndarray:
        return np.linalg.inv(self.J)

    def to_dict(self) -> Dict[str, Any]:
        return {'J': self.J.tolist(), 'd_bar': self.d_bar, 'eta': self.eta}


@dataclass
class GainMarginMonitor:
    """Counts gain evaluations that fall short of bound + eta

    Warns on the first shortfall only; the count goes into the run summary.
    """

    label: str
    violations: int = 0
    worst_shortfall: float = 0.0

    def record(self, gain: float, bound: float, eta: float):
        shortfall = bound + eta - gain
        if self.violations == 0:
            logger.warning(f"{self.label}: switching gain {gain:.6g} is below bound + eta = {bound + eta:.6g}; "
                           "the reaching condition is not guaranteed")
        self.violations += 1
        self.worst_shortfall = max(self.worst_shortfall, shortfall)


def _check_gain(gain: float, bound: float, eta: float, label: str, monitor: Optional[GainMarginMonitor] = None):
    if gain - bound >= eta - 1e-12:
        return
    if monitor is not None:
        monitor.record(gain, bound, eta)
    else:
        logger.warning(f"{label}: gain {gain:.6g} exceeds its bound {bound:.6g} by less than eta {eta:.3g}")


def saturate(v, epsilon: float):
    """v/(|v| + epsilon), the boundary-layer replacement of sign(v)"""
    return v / (np.abs(v) + epsilon)


def _unit(s: np.ndarray, epsilon: Optional[float]) -> np.ndarray:
    norm = float(np.linalg.norm(s))
    if epsilon is not None:
        return s / (norm + epsilon)
    if norm == 0.0:
        raise OnSwitchingManifold("sliding variable is zero; unit-vector control is undefined")
    return s / norm


def hat(w) -> np.ndarray:
    w1, w2, w3 = np.asarray(w, dtype=float)
    return np.array([[0.0, -w3, w2],
                     [w3, 0.0, -w1],
                     [-w2, w1, 0.0]])


def vex(W, tol: float = SKEW_TOL) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if np.linalg.norm(W + W.T) > tol:
        raise NotSkew(f"matrix is not skew-symmetric (||W + W^T|| = {np.linalg.norm(W + W.T):.3e})")
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def _skew_vex(A: np.ndarray) -> np.ndarray:
    """vex of A - A^T"""
    return np.array([A[2, 1] - A[1, 2], A[0, 2] - A[2, 0], A[1, 0] - A[0, 1]])


def _require_rotation(R: np.ndarray, name: str):
    drift = float(np.linalg.norm(R.T @ R - np.eye(3)))
    if drift > DEFAULT_TOLERANCES.mfd or np.linalg.det(R) <= 0.0:
        raise NotOnManifold(f"{name} is not a rotation matrix (||R^T R - I|| = {drift:.3e})")


def so3_alpha(R, R_d, check: bool = True) -> np.ndarray:
    R = np.asarray(R, dtype=float).reshape(3, 3)
    R_d = np.asarray(R_d, dtype=float).reshape(3, 3)
    if check:
        _require_rotation(R, 'R')
        _require_rotation(R_d, 'R_d')
    return -0.5 * _skew_vex(R_d.T @ R)


def so3_lie_alpha(R, w, R_d) -> np.ndarray:
    """Derivative of so3_alpha along R' = R hat(w)"""
    R = np.asarray(R, dtype=float).reshape(3, 3)
    R_d = np.asarray(R_d, dtype=float).reshape(3, 3)
    return -0.5 * _skew_vex(R_d.T @ R @ hat(w))


def so3_gain(w, params: RigidBodyParams) -> float:
    bound = params.J_norm * float(np.dot(w, w)) + params.d_bar
    gain = bound + params.eta
    _check_gain(gain, bound, params.eta, 'so3')
    return gain


def so3_control(R, w, params: RigidBodyParams, R_d=None, epsilon: Optional[float] = None) -> np.ndarray:
    """-K s/||s|| with s = w - alpha(R); epsilon gives the boundary layer s/(||s|| + epsilon)"""
    R_d = np.eye(3) if R_d is None else R_d
    s = np.asarray(w, dtype=float) - so3_alpha(R, R_d, check=False)
    return -so3_gain(w, params) * _unit(s, epsilon)


# Reduced attitude on S^2

def s2_alpha(L, L_d) -> np.ndarray:
    return -np.cross(L, L_d)


def s2_lie_alpha(L, w, L_d) -> np.ndarray:
    return -np.cross(np.cross(L, w), L_d)


def terminal_angle(L, L_d) -> float:
    """Angle between L and L_d, accurate near 0 and pi"""
    return float(math.atan2(np.linalg.norm(np.cross(L, L_d)), float(np.dot(L, L_d))))


@lru_cache(maxsize=1)
def terminal_theta_star() -> float:
    """Root of tan(theta) = 2 theta in (1.0, 1.3)"""
    return float(brentq(lambda th: math.tan(th) - 2.0 * th, 1.0, 1.3, xtol=1e-15, rtol=1e-15))


def terminal_gamma(theta: float) -> float:
    ts = terminal_theta_star()
    if theta >= ts:
        return 1.0
    if theta <= 0.0:
        return math.inf
    return math.sin(ts) / math.sin(theta) * math.sqrt(theta / ts)


def terminal_gamma_prime(theta: float) -> float:
    ts = terminal_theta_star()
    if theta >= ts or theta <= 0.0:
        return 0.0
    return terminal_gamma(theta) * (0.5 / theta - 1.0 / math.tan(theta))


def terminal_delta(theta: float) -> float:
    """Speed of the terminal sliding dynamics, gamma(theta) sin(theta)"""
    ts = terminal_theta_star()
    if theta >= ts:
        return math.sin(theta)
    return math.sin(ts) * math.sqrt(max(theta, 0.0) / ts)


def terminal_lie_bound(theta: float) -> float:
    """Bound on ||L_f alpha|| over the terminal sliding manifold"""
    ts = terminal_theta_star()
    if theta >= ts:
        return math.sin(theta)
    if theta <= 0.0:
        return math.sin(ts) ** 2 / ts * 1.5
    return math.sin(ts) ** 2 / ts * (2.0 * theta / math.tan(theta) - 0.5)


def s2_terminal_alpha(L, L_d) -> np.ndarray:
    c = np.cross(L, L_d)
    if np.linalg.norm(c) == 0.0:
        return np.zeros(3)
    return -terminal_gamma(terminal_angle(L, L_d)) * c


def s2_terminal_lie_alpha(L, w, L_d) -> np.ndarray:
    c = np.cross(L, L_d)
    sin_theta = float(np.linalg.norm(c))
    if sin_theta <= 1e-14:
        return np.zeros(3)
    theta = terminal_angle(L, L_d)
    l_dot = np.cross(L, w)
    theta_dot = -float(np.dot(l_dot, L_d)) / sin_theta
    return -terminal_gamma_prime(theta) * theta_dot * c - terminal_gamma(theta) * np.cross(l_dot, L_d)


LIE_OF_ALPHA = {
    s2_alpha: s2_lie_alpha,
    s2_terminal_alpha: s2_terminal_lie_alpha,
}


def s2_gain(L, w, params: RigidBodyParams, L_d, lie_alpha_fn=s2_lie_alpha,
            k_max: Optional[float] = None, monitor: Optional[GainMarginMonitor] = None) -> float:
    """||J L_f alpha|| + d_bar + eta, with the feedforward clamped at k_max"""
    feedforward = float(np.linalg.norm(params.J @ lie_alpha_fn(L, w, L_d)))
    bound = feedforward + params.d_bar
    if k_max is not None and feedforward > k_max:
        feedforward = k_max
    gain = feedforward + params.d_bar + params.eta
    _check_gain(gain, bound, params.eta, 's2', monitor)
    return gain


def s2_smooth_control(w, params: RigidBodyParams) -> np.ndarray:
    """Cancels the gyroscopic term"""
    w = np.asarray(w, dtype=float)
    return -np.cross(params.J @ w, w)


def s2_switching_control(L, w, params: RigidBodyParams, alpha_fn=s2_alpha, L_d=(0.0, 0.0, 1.0),
                         epsilon: Optional[float] = None, k_max: Optional[float] = None,
                         monitor: Optional[GainMarginMonitor] = None) -> np.ndarray:
    L = np.asarray(L, dtype=float)
    w = np.asarray(w, dtype=float)
    L_d = np.asarray(L_d, dtype=float)
    s = w - alpha_fn(L, L_d)
    lie_fn = LIE_OF_ALPHA.get(alpha_fn, s2_lie_alpha)
    gain = s2_gain(L, w, params, L_d, lie_fn, k_max, monitor)
    return -gain * _unit(s, epsilon)


def s2_control(L, w, params: RigidBodyParams, alpha_fn=s2_alpha, L_d=(0.0, 0.0, 1.0),
               epsilon: Optional[float] = None, k_max: Optional[float] = None,
               monitor: Optional[GainMarginMonitor] = None) -> np.ndarray:
    return (s2_smooth_control(w, params)
            + s2_switching_control(L, w, params, alpha_fn, L_d, epsilon, k_max, monitor))


def s2_sliding_theta(theta0: float, t) -> np.ndarray:
    """Closed-form angle under theta' = -sin(theta)"""
    return 2.0 * np.arctan(np.exp(-np.asarray(t, dtype=float)) * math.tan(theta0 / 2.0))


def terminal_sliding_theta(theta0: float, t) -> np.ndarray:
    """Closed-form angle under theta' = -delta(theta), valid for theta0 <= theta*"""
    ts = terminal_theta_star()
    c = math.sin(ts) / math.sqrt(ts)
    root = np.maximum(math.sqrt(theta0) - 0.5 * c * np.asarray(t, dtype=float), 0.0)
    return root ** 2


def terminal_arrival_time(theta0: float) -> float:
    ts = terminal_theta_star()
    return 2.0 * math.sqrt(theta0 * ts) / math.sin(ts)


# Mobius bundle

def mobius_g(theta, omega, theta_star):
    return omega + np.sin((theta - theta_star) / 2.0)


def mobius_s(theta, omega, theta_star):
    return np.cos(theta / 2.0) * mobius_g(theta, omega, theta_star)


def mobius_s_gradient(theta, omega, theta_star) -> np.ndarray:
    c = math.cos(theta / 2.0)
    g = mobius_g(theta, omega, theta_star)
    return np.array([-0.5 * math.sin(theta / 2.0) * g + 0.5 * c * math.cos((theta - theta_star) / 2.0), c])


def mobius_naive_s(theta, omega, theta_star):
    """omega - alpha(theta) without the cos(theta/2) factor; does not descend"""
    return mobius_g(theta, omega, theta_star)


def mobius_smooth_u(theta, omega, theta_star):
    return omega ** 2 / 2.0 * np.sin(theta / 2.0) - omega / 2.0 * np.cos(theta - theta_star / 2.0)


def mobius_u(theta, omega, theta_star, gain: float = 1.0, side: Optional[int] = None,
             epsilon: Optional[float] = None):
    """Smooth part minus gain sign(cos(theta/2)) sign(s)

    `side` fixes sign(s) to one Filippov region; on cos(theta/2) = 0 the
    switching term then takes its limit sign(omega + sin((theta - theta*)/2)).
    `epsilon` replaces the switching term by its boundary-layer saturation.
    """
    c = np.cos(theta / 2.0)
    if epsilon is not None:
        switching = saturate(mobius_g(theta, omega, theta_star), epsilon)
    elif side is None:
        switching = np.sign(c) * np.sign(mobius_s(theta, omega, theta_star))
    elif c == 0.0:
        switching = np.sign(mobius_g(theta, omega, theta_star))
    else:
        switching = side * np.sign(c)
    return mobius_smooth_u(theta, omega, theta_star) - gain * switching


def mobius_lie(theta, omega, u, theta_star, reading: str = 'displayed'):
    """Lie derivative of mobius_s along (omega cos(theta/2), u)

    reading 'displayed' uses cos(theta - theta*/2), 'alternative' uses
    cos((theta - theta*)/2).
    """
    if reading == 'displayed':
        cross_term = np.cos(theta - theta_star / 2.0)
    elif reading == 'alternative':
        cross_term = np.cos((theta - theta_star) / 2.0)
    else:
        raise ValueError(f"unknown reading '{reading}'")
    return (omega / 2.0 * cross_term - omega ** 2 / 2.0 * np.sin(theta / 2.0) + u) * np.cos(theta / 2.0)


def mobius_lie_residuals(samples, theta_star: float) -> Dict[str, float]:
    """Max deviation of each reading from -|cos(theta/2)| sign(s) with mobius_u substituted"""
    out = {}
    for reading in ('displayed', 'alternative'):
        worst = 0.0
        for theta, omega in np.atleast_2d(samples):
            u = mobius_u(theta, omega, theta_star)
            expected = -abs(math.cos(theta / 2.0)) * np.sign(mobius_s(theta, omega, theta_star))
            worst = max(worst, abs(float(mobius_lie(theta, omega, u, theta_star, reading)) - expected))
        out[reading] = worst
    return out


def mobius_sliding_rhs(theta, theta_star):
    return -np.cos(theta / 2.0) * np.sin((theta - theta_star) / 2.0)


def mobius_equilibria(theta_star: float) -> List[Tuple[np.ndarray, str]]:
    """Analytic equilibrium candidates with expected labels (not canonicalized)"""
    c = math.cos(theta_star / 2.0)
    omega_plus = (-c + math.sqrt(c * c + 8.0)) / 2.0
    return [
        (np.array([theta_star, 0.0]), 'stable'),
        (np.array([math.pi, -c]), 'saddle'),
        (np.array([math.pi, omega_plus]), 'saddle'),
    ]


# Cylinder twisting

def check_twisting_gains(k1: float, k2: float, d_bar: float = 0.0):
    if not (k1 > k2 > 0.0):
        raise InvalidGains(f"twisting gains must satisfy K1 > K2 > 0 (got K1={k1}, K2={k2})")
    if d_bar > 0.0 and not (k2 > d_bar and k1 - k2 > d_bar):
        raise InvalidGains(
            f"twisting gains K1={k1}, K2={k2} do not dominate the disturbance bound {d_bar} "
            "(need K2 > d_bar and K1 - K2 > d_bar)")


def twisting_u(theta, omega, k1: float, k2: float, sides: Optional[Tuple[int, int]] = None,
               epsilon: Optional[float] = None):
    """-K1 sign(sin theta) - K2 sign(omega); `sides` fixes both signs to one region"""
    check_twisting_gains(k1, k2)
    if epsilon is not None:
        return -k1 * saturate(np.sin(theta), epsilon) - k2 * saturate(omega, epsilon)
    if sides is None:
        sides = (np.sign(np.sin(theta)), np.sign(omega))
    return -k1 * sides[0] - k2 * sides[1]


# Disturbances

DISTURBANCE_KINDS = ('constant', 'sin', 'sin_of_cos')


@dataclass(frozen=True)
class DisturbanceTerm:
    """constant: amplitude; sin: amplitude sin(frequency t + phase);
    sin_of_cos: amplitude sin(cos(frequency t + phase))"""

    kind: str
    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in DISTURBANCE_KINDS:
            raise ValueError(f"unknown disturbance term '{self.kind}' (expected one of {', '.join(DISTURBANCE_KINDS)})")

    def evaluate(self, t: float) -> float:
        if self.kind == 'constant':
            return self.amplitude
        arg = self.frequency * t + self.phase
        if self.kind == 'sin':
            return self.amplitude * math.sin(arg)
        return self.amplitude * math.sin(math.cos(arg))

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'amplitude': self.amplitude, 'frequency': self.frequency, 'phase': self.phase}


@dataclass(frozen=True)
class DisturbanceSpec:
    channels: Tuple[Tuple[DisturbanceTerm, ...], ...]

    @classmethod
    def zero(cls, dim: int) -> 'DisturbanceSpec':
        return cls(tuple(() for _ in range(dim)))

    @property
    def dim(self) -> int:
        return len(self.channels)

    @property
    def is_zero(self) -> bool:
        return all(len(ch) == 0 for ch in self.channels)

    def evaluate(self, t: float) -> np.ndarray:
        return np.array([sum(term.evaluate(t) for term in ch) for ch in self.channels], dtype=float)

    def sup_norm(self, t_span: Sequence[float], samples: int = 20001) -> float:
        if self.is_zero:
            return 0.0
        return max(float(np.linalg.norm(self.evaluate(t))) for t in np.linspace(t_span[0], t_span[1], samples))

    def to_dict(self) -> Dict[str, Any]:
        return {'channels': [[term.to_dict() for term in ch] for ch in self.channels]}


@dataclass(frozen=True)
class ControllerInstance:
    family: ControllerFamily
    parameters: Dict[str, Any] = field(default_factory=dict)
    regularization: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'family': self.family.value,
            'parameters': self.parameters,
            'regularization': None if self.regularization is None else {'boundary_layer': self.regularization},
        }
