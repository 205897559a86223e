"""Closed-loop systems assembled from a controller family and its state space."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from src.config import DEFAULT_TOLERANCES, Tolerances
from src.controllers import (
    ControllerFamily,
    ControllerInstance,
    DisturbanceSpec,
    GainMarginMonitor,
    RigidBodyParams,
    check_twisting_gains,
    hat,
    mobius_equilibria,
    mobius_g,
    mobius_naive_s,
    mobius_s,
    mobius_s_gradient,
    mobius_sliding_rhs,
    mobius_u,
    s2_alpha,
    s2_gain,
    s2_lie_alpha,
    s2_smooth_control,
    s2_switching_control,
    s2_terminal_alpha,
    s2_terminal_lie_alpha,
    saturate,
    so3_alpha,
    so3_control,
    so3_gain,
    so3_lie_alpha,
    terminal_angle,
    twisting_u,
)
from src.embedding import cylinder_embed, mobius_embed
from src.errors import InvalidGains
from src.fields import PiecewiseField, RegularizedField, SwitchingFunction, UnitVectorField
from src.geometry import (
    AffineGroupAction,
    EmbeddedManifold,
    EuclideanSpace,
    QuotientManifold,
    circle_action,
    cylinder,
    mobius_bundle,
    rotation_bundle,
    sphere_bundle,
)

logger = logging.getLogger(__name__)

System = Union[PiecewiseField, UnitVectorField, RegularizedField]


@dataclass
class DescentTarget:
    """A map checked for descent: kind is 'function', 'field' or 'set'"""

    name: str
    kind: str
    fn: Callable
    action: AffineGroupAction
    expect_pass: bool = True


@dataclass
class ClosedLoop:
    name: str
    family: ControllerFamily
    system: System
    target: np.ndarray
    quotient: Optional[QuotientManifold] = None
    embed: Optional[Callable[[float, float], np.ndarray]] = None
    lyapunov: Optional[Callable[[np.ndarray], float]] = None
    equilibria: List[Tuple[np.ndarray, str]] = field(default_factory=list)
    switching_sets: Dict[str, Callable[[np.ndarray], np.ndarray]] = field(default_factory=dict)
    descent_targets: Dict[str, List[DescentTarget]] = field(default_factory=dict)
    gain_monitor: Optional[GainMarginMonitor] = None

    @property
    def manifold(self) -> EmbeddedManifold:
        return self.system.manifold

    def target_error(self, x) -> float:
        """Geodesic error for attitudes, orbit distance on quotients, Euclidean otherwise"""
        x = np.asarray(x, dtype=float)
        if self.family == ControllerFamily.SO3_FIRST_ORDER:
            R = x[:9].reshape(3, 3)
            Rd = self.target[:9].reshape(3, 3)
            cos_angle = np.clip((np.trace(Rd.T @ R) - 1.0) / 2.0, -1.0, 1.0)
            return float(math.acos(cos_angle))
        if self.family in (ControllerFamily.S2_FIRST_ORDER, ControllerFamily.S2_TERMINAL):
            return terminal_angle(x[:3], self.target[:3])
        if self.quotient is not None:
            return self.quotient.distance(x, self.target)
        return float(np.linalg.norm(x - self.target))


def line_system(bias: float = 0.5, epsilon: Optional[float] = None,
                tolerances: Tolerances = DEFAULT_TOLERANCES) -> ClosedLoop:
    """x' = -sign(x) + bias on the real line"""
    if abs(bias) >= 1.0:
        raise InvalidGains(f"|bias| must be below 1 for a sliding mode at 0 (got {bias})")
    manifold = EuclideanSpace(1, names=['x'], name='line')
    sw = SwitchingFunction('x', lambda x, t: x[0], lambda x, t: np.array([1.0]))
    if epsilon is not None:
        system = RegularizedField(
            manifold,
            field=lambda x, t: np.array([-saturate(x[0], epsilon) + bias]),
            values=lambda x, t: np.array([x[0]]),
            control=lambda x, t: np.array([-saturate(x[0], epsilon)]),
            epsilon=epsilon,
            name='line-regularized',
        )
    else:
        system = PiecewiseField(manifold, [sw], lambda x, t, p: np.array([-p[0] + bias]),
                                control=lambda x, t, p: np.array([-float(p[0])]),
                                name='line', tolerances=tolerances)
    return ClosedLoop('line', ControllerFamily.FILIPPOV_LINE, system, target=np.zeros(1),
                      equilibria=[(np.zeros(1), 'stable')])


def so3_system(params: RigidBodyParams, R_d=None, disturbance: Optional[DisturbanceSpec] = None,
               epsilon: Optional[float] = None, tolerances: Tolerances = DEFAULT_TOLERANCES) -> ClosedLoop:
    """Rigid body on SO(3) x R^3 with the first-order unit-vector law"""
    R_d = np.eye(3) if R_d is None else np.asarray(R_d, dtype=float).reshape(3, 3)
    disturbance = disturbance or DisturbanceSpec.zero(3)
    J, J_inv = params.J, params.J_inv
    b = np.vstack([np.zeros((9, 3)), J_inv])

    def split(x):
        return x[:9].reshape(3, 3), x[9:]

    def sliding_variable(x):
        R, w = split(x)
        return w - so3_alpha(R, R_d, check=False)

    def omega_dot_free(x, t):
        _, w = split(x)
        return J_inv @ (np.cross(J @ w, w) + disturbance.evaluate(t))

    def drift(x, t):
        R, w = split(x)
        return np.concatenate([(R @ hat(w)).ravel(), omega_dot_free(x, t)])

    def s_rate(x, t):
        R, w = split(x)
        return omega_dot_free(x, t) - so3_lie_alpha(R, w, R_d)

    uv = UnitVectorField(
        rotation_bundle(), sliding_variable, drift,
        input_map=lambda x: b,
        gain=lambda x, t: so3_gain(x[9:], params),
        velocity_slice=slice(9, 12),
        smooth_control=lambda x, t: np.zeros(3),
        s_rate=s_rate,
        decoupling=lambda x: J_inv,
        switching_law=lambda x, t, eps: so3_control(x[:9], x[9:], params, R_d, eps),
        name='so3', tolerances=tolerances)
    system = uv.regularize(epsilon) if epsilon is not None else uv
    return ClosedLoop('so3', ControllerFamily.SO3_FIRST_ORDER, system,
                      target=np.concatenate([R_d.ravel(), np.zeros(3)]),
                      lyapunov=lambda x: float(sliding_variable(x) @ J @ sliding_variable(x)))


def s2_system(params: RigidBodyParams, L_d=(0.0, 0.0, 1.0), disturbance: Optional[DisturbanceSpec] = None,
              terminal: bool = False, k_max: float = 1e3, epsilon: Optional[float] = None,
              tolerances: Tolerances = DEFAULT_TOLERANCES) -> ClosedLoop:
    """Reduced attitude on S^2 x R^3; first-order or terminal virtual control"""
    L_d = np.asarray(L_d, dtype=float)
    if abs(np.linalg.norm(L_d) - 1.0) > tolerances.mfd:
        raise InvalidGains("desired reduced attitude must be a unit vector")
    disturbance = disturbance or DisturbanceSpec.zero(3)
    alpha = s2_terminal_alpha if terminal else s2_alpha
    lie_alpha = s2_terminal_lie_alpha if terminal else s2_lie_alpha
    clamp = k_max if terminal else None
    J, J_inv = params.J, params.J_inv
    b = np.vstack([np.zeros((3, 3)), J_inv])

    def sliding_variable(x):
        return x[3:] - alpha(x[:3], L_d)

    def drift(x, t):
        # smooth part of the control cancels the gyroscopic term
        return np.concatenate([np.cross(x[:3], x[3:]), J_inv @ disturbance.evaluate(t)])

    def s_rate(x, t):
        return J_inv @ disturbance.evaluate(t) - lie_alpha(x[:3], x[3:], L_d)

    family = ControllerFamily.S2_TERMINAL if terminal else ControllerFamily.S2_FIRST_ORDER
    monitor = GainMarginMonitor(family.value)
    uv = UnitVectorField(
        sphere_bundle(), sliding_variable, drift,
        input_map=lambda x: b,
        gain=lambda x, t: s2_gain(x[:3], x[3:], params, L_d, lie_alpha, clamp, monitor),
        velocity_slice=slice(3, 6),
        smooth_control=lambda x, t: s2_smooth_control(x[3:], params),
        s_rate=s_rate,
        decoupling=lambda x: J_inv,
        switching_law=lambda x, t, eps: s2_switching_control(x[:3], x[3:], params, alpha, L_d, eps, clamp, monitor),
        name=family.value, tolerances=tolerances)
    system = uv.regularize(epsilon) if epsilon is not None else uv
    return ClosedLoop(family.value, family, system,
                      target=np.concatenate([L_d, np.zeros(3)]),
                      lyapunov=lambda x: float(sliding_variable(x) @ J @ sliding_variable(x)),
                      gain_monitor=monitor)


def mobius_system(theta_star: float = 1.0, gain: float = 1.0, disturbance: Optional[DisturbanceSpec] = None,
                  d_bar: float = 0.0,
                  epsilon: Optional[float] = None, tolerances: Tolerances = DEFAULT_TOLERANCES) -> ClosedLoop:
    """theta' = omega cos(theta/2), omega' = u + d on the Mobius bundle"""
    if math.isclose(math.cos(theta_star / 2.0), 0.0, abs_tol=1e-12):
        raise InvalidGains(f"reference theta* = {theta_star} lies on the invariant set cos(theta/2) = 0")
    disturbance = disturbance or DisturbanceSpec.zero(1)
    if gain <= d_bar:
        raise InvalidGains(f"Mobius switching gain {gain} must exceed the disturbance bound {d_bar:.4g}")
    quotient = mobius_bundle()
    manifold = EuclideanSpace(2, names=['theta', 'omega'], name='mobius')

    def region_u(x, t, p):
        return mobius_u(x[0], x[1], theta_star, gain, side=p[0]) + disturbance.evaluate(t)[0]

    def region_field(x, t, p):
        return np.array([x[1] * math.cos(x[0] / 2.0), region_u(x, t, p)])

    sw = SwitchingFunction(
        's', lambda x, t: float(mobius_s(x[0], x[1], theta_star)),
        lambda x, t: mobius_s_gradient(x[0], x[1], theta_star))
    if epsilon is not None:
        def reg_u(x, t):
            return mobius_u(x[0], x[1], theta_star, gain, epsilon=epsilon) + disturbance.evaluate(t)[0]

        system = RegularizedField(
            manifold,
            field=lambda x, t: np.array([x[1] * math.cos(x[0] / 2.0), reg_u(x, t)]),
            values=lambda x, t: np.array([sw.value(x, t)]),
            control=lambda x, t: np.array([reg_u(x, t)]),
            epsilon=epsilon, name='mobius-regularized')
    else:
        system = PiecewiseField(manifold, [sw], region_field,
                                control=lambda x, t, p: np.array([region_u(x, t, p)]),
                                name='mobius', tolerances=tolerances)

    action = quotient.action
    closed = lambda d: system.evaluate(d, 0.0)
    descent = {
        'sliding-variable': [
            DescentTarget('mobius_s', 'function', lambda d: mobius_s(d[0], d[1], theta_star), action),
            DescentTarget('naive_s', 'function', lambda d: mobius_naive_s(d[0], d[1], theta_star), action,
                          expect_pass=False),
            DescentTarget('near_S1', 'set', lambda d: abs(math.cos(d[0] / 2.0)) <= 0.1, action),
            DescentTarget('near_S2', 'set', lambda d: abs(mobius_g(d[0], d[1], theta_star)) <= 0.1, action),
            DescentTarget('positive_s', 'set', lambda d: mobius_s(d[0], d[1], theta_star) > 0.0, action),
            DescentTarget('sliding_dynamics', 'field',
                          lambda d: np.array([mobius_sliding_rhs(d[0], theta_star)]), circle_action()),
        ],
        'closed-loop-field': [DescentTarget('closed_loop', 'field', closed, action)],
        'embedding': [DescentTarget('mobius_embed', 'function', lambda d: mobius_embed(d[0], d[1]), action)],
    }
    sets = {
        'S1': lambda theta: np.column_stack([np.full_like(theta, math.pi), theta]),
        'S2': lambda theta: np.column_stack([theta, -np.sin((theta - theta_star) / 2.0)]),
    }
    return ClosedLoop('mobius', ControllerFamily.MOBIUS, system,
                      target=np.array([theta_star, 0.0]),
                      quotient=quotient, embed=mobius_embed,
                      lyapunov=lambda x: 0.5 * float(mobius_s(x[0], x[1], theta_star)) ** 2,
                      equilibria=mobius_equilibria(theta_star),
                      switching_sets=sets, descent_targets=descent)


def cylinder_system(k1: float = 5.0, k2: float = 2.0, disturbance: Optional[DisturbanceSpec] = None,
                    d_bar: float = 0.0,
                    epsilon: Optional[float] = None, tolerances: Tolerances = DEFAULT_TOLERANCES) -> ClosedLoop:
    """Double integrator on the cylinder with the twisting law"""
    disturbance = disturbance or DisturbanceSpec.zero(1)
    check_twisting_gains(k1, k2, d_bar)
    quotient = cylinder()
    manifold = EuclideanSpace(2, names=['theta', 'omega'], name='cylinder')

    def region_u(x, t, p):
        return twisting_u(x[0], x[1], k1, k2, sides=p) + disturbance.evaluate(t)[0]

    sw_angle = SwitchingFunction('sin_theta', lambda x, t: math.sin(x[0]),
                                 lambda x, t: np.array([math.cos(x[0]), 0.0]), relative_degree=2)
    sw_rate = SwitchingFunction('omega', lambda x, t: x[1], lambda x, t: np.array([0.0, 1.0]))
    if epsilon is not None:
        def reg_u(x, t):
            return twisting_u(x[0], x[1], k1, k2, epsilon=epsilon) + disturbance.evaluate(t)[0]

        system = RegularizedField(
            manifold,
            field=lambda x, t: np.array([x[1], reg_u(x, t)]),
            values=lambda x, t: np.array([math.sin(x[0]), x[1]]),
            control=lambda x, t: np.array([reg_u(x, t)]),
            epsilon=epsilon, name='cylinder-regularized')
    else:
        system = PiecewiseField(manifold, [sw_angle, sw_rate],
                                lambda x, t, p: np.array([x[1], region_u(x, t, p)]),
                                control=lambda x, t, p: np.array([region_u(x, t, p)]),
                                name='cylinder', tolerances=tolerances)

    action = quotient.action
    descent = {
        'sliding-variable': [
            DescentTarget('sin_theta', 'function', lambda d: math.sin(d[0]), action),
            DescentTarget('omega', 'function', lambda d: d[1], action),
        ],
        'closed-loop-field': [DescentTarget('closed_loop', 'field', lambda d: system.evaluate(d, 0.0), action)],
        'embedding': [DescentTarget('cylinder_embed', 'function', lambda d: cylinder_embed(d[0], d[1]), action)],
    }
    sets = {
        'theta_0': lambda s: np.column_stack([np.zeros_like(s), s]),
        'theta_pi': lambda s: np.column_stack([np.full_like(s, -math.pi), s]),
        'omega_0': lambda s: np.column_stack([s, np.zeros_like(s)]),
    }
    return ClosedLoop('cylinder', ControllerFamily.CYLINDER_TWISTING, system,
                      target=np.zeros(2), quotient=quotient, embed=cylinder_embed,
                      equilibria=[(np.zeros(2), 'stable'), (np.array([math.pi, 0.0]), 'unstable')],
                      switching_sets=sets, descent_targets=descent)


def build_closed_loop(instance: ControllerInstance, disturbance: Optional[DisturbanceSpec] = None,
                      tolerances: Tolerances = DEFAULT_TOLERANCES) -> ClosedLoop:
    """Closed loop for a controller instance; parameters are already validated"""
    p = instance.parameters
    eps = instance.regularization
    family = instance.family
    if family == ControllerFamily.FILIPPOV_LINE:
        return line_system(p.get('bias', 0.5), eps, tolerances)
    if family == ControllerFamily.CYLINDER_TWISTING:
        return cylinder_system(p['k1'], p['k2'], disturbance, p.get('d_bar', 0.0), eps, tolerances)
    if family == ControllerFamily.MOBIUS:
        return mobius_system(p['theta_star'], p.get('gain', 1.0), disturbance, p.get('d_bar', 0.0), eps, tolerances)
    params = RigidBodyParams(np.asarray(p['J'], dtype=float), p['d_bar'], p['eta'])
    if family == ControllerFamily.SO3_FIRST_ORDER:
        return so3_system(params, p.get('R_d'), disturbance, eps, tolerances)
    return s2_system(params, p['L_d'], disturbance, terminal=family == ControllerFamily.S2_TERMINAL,
                     k_max=p.get('k_max', 1e3), epsilon=eps, tolerances=tolerances)
