#!/usr/bin/env python3
"""
Switched field tests: Filippov sets, sliding classification, corners,
unit-vector loads and tangency
"""

import math
import unittest

import numpy as np
from scipy.spatial.transform import Rotation

from src.controllers import (
    ControllerFamily,
    RigidBodyParams,
    mobius_s,
    mobius_s_gradient,
    mobius_sliding_rhs,
    s2_alpha,
)
from src.errors import (
    DegenerateClassification,
    NotSliding,
    NotWellDefinedOrder,
    OffSurface,
    OnSwitchingManifold,
    SimulationError,
    UnsupportedCorner,
)
from src.fields import PiecewiseField, SlidingKind, SwitchingFunction, sliding_order, tangency_audit
from src.geometry import EuclideanSpace
from src.models.scenario import load_scenario
from src.prng import uniform_samples
from src.runner import closed_loop_for
from src.systems import cylinder_system, line_system, mobius_system, s2_system
from src.testing import SCENARIO_DIR, ManifoldTestCase


def scalar_field(rule):
    """1-D piecewise field with x' = rule(sign) on either side of x = 0"""
    sw = SwitchingFunction('x', lambda x, t: x[0], lambda x, t: np.array([1.0]))
    return PiecewiseField(EuclideanSpace(1), [sw], lambda x, t, p: np.array([rule(p[0])]))


def random_states(closed, count: int, seed: int):
    """Random points of the closed loop's state manifold"""
    if closed.family == ControllerFamily.SO3_FIRST_ORDER:
        rotations = Rotation.random(count, seed).as_matrix()
        rates = uniform_samples([(-2.0, 2.0)] * 3, count, seed)
        return [np.concatenate([R.ravel(), w]) for R, w in zip(rotations, rates)]
    if closed.family in (ControllerFamily.S2_FIRST_ORDER, ControllerFamily.S2_TERMINAL):
        raw = uniform_samples([(0.0, math.pi), (-math.pi, math.pi)] + [(-2.0, 2.0)] * 3, count, seed)
        return [np.concatenate([[math.sin(a) * math.cos(b), math.sin(a) * math.sin(b), math.cos(a)], w])
                for a, b, *w in raw]
    return list(uniform_samples([(-4.0, 4.0)] * closed.target.size, count, seed))


class ClassificationTestCase(ManifoldTestCase):
    def test_line_is_attractive(self):
        system = line_system(0.5).system
        cls = system.classify(0, np.zeros(1), 0.0)
        self.assertEqual(cls.kind, SlidingKind.ATTRACTIVE)
        self.assertAlmostEqual(cls.lie_plus, -0.5)
        self.assertAlmostEqual(cls.lie_minus, 1.5)
        self.assertAlmostEqual(cls.lambda_star, 0.75)
        self.assertAllClose(system.sliding_field(0, np.zeros(1), 0.0), [0.0])

    def test_line_filippov_set(self):
        fs = line_system(0.5).system.filippov_set(np.zeros(1), 0.0)
        self.assertFalse(fs.is_singleton)
        self.assertAllClose(np.concatenate(fs.endpoints()), [1.5, -0.5])
        self.assertTrue(fs.contains([0.0]))
        self.assertTrue(fs.contains([1.5]))
        self.assertFalse(fs.contains([2.0]))
        off = line_system(0.5).system.filippov_set(np.array([1.0]), 0.0)
        self.assertTrue(off.is_singleton)
        self.assertAllClose(off.f_plus, [-0.5])

    def test_crossing(self):
        system = scalar_field(lambda side: 1.0)
        self.assertEqual(system.classify(0, np.zeros(1), 0.0).kind, SlidingKind.CROSSING)
        with self.assertRaises(NotSliding):
            system.sliding_field(0, np.zeros(1), 0.0)

    def test_repulsive(self):
        cls = scalar_field(lambda side: float(side)).classify(0, np.zeros(1), 0.0)
        self.assertEqual(cls.kind, SlidingKind.REPULSIVE)
        self.assertAlmostEqual(cls.lambda_star, 0.5)

    def test_tangential(self):
        cls = scalar_field(lambda side: 0.0 if side > 0 else 1.0).classify(0, np.zeros(1), 0.0)
        self.assertEqual(cls.kind, SlidingKind.TANGENTIAL)

    def test_degenerate(self):
        with self.assertRaises(DegenerateClassification):
            scalar_field(lambda side: 0.0).classify(0, np.zeros(1), 0.0)

    def test_classify_off_surface(self):
        system = line_system(0.5).system
        with self.assertRaises(OffSurface) as ctx:
            system.classify(0, np.array([0.5]), 0.0)
        self.assertIsInstance(ctx.exception, SimulationError)
        # between the surface and corner tolerances
        with self.assertRaises(OffSurface):
            system.classify(0, np.array([1e-6]), 0.0)
        self.assertEqual(system.classify(0, np.array([5e-8]), 0.0).kind, SlidingKind.ATTRACTIVE)

    def test_mobius_sliding_field_matches_reduced_dynamics(self):
        theta_star = 1.0
        system = mobius_system(theta_star).system
        for theta in np.linspace(-3.0, 3.0, 20):
            omega = -math.sin((theta - theta_star) / 2.0)
            v = system.sliding_field(0, np.array([theta, omega]), 0.0)
            self.assertAlmostEqual(v[0], float(mobius_sliding_rhs(theta, theta_star)), delta=1e-12)
            # stays on omega = -sin((theta - theta*)/2)
            self.assertAlmostEqual(v[1], -0.5 * math.cos((theta - theta_star) / 2.0) * v[0], delta=1e-9)


class CornerTestCase(ManifoldTestCase):
    def setUp(self):
        super().setUp()
        self.system = cylinder_system(5.0, 2.0).system

    def test_origin_is_attractive_second_order(self):
        index, cls = self.system.classify_corner([0, 1], np.zeros(2), 0.0)
        self.assertEqual(index, 0)
        self.assertEqual(cls.order, 2)
        self.assertEqual(cls.kind, SlidingKind.ATTRACTIVE)

    def test_upper_equilibrium_is_repulsive(self):
        _, cls = self.system.classify_corner([0, 1], np.array([math.pi, 0.0]), 0.0)
        self.assertEqual(cls.order, 2)
        self.assertEqual(cls.kind, SlidingKind.REPULSIVE)

    def test_filippov_set_at_corner_unsupported(self):
        with self.assertRaises(UnsupportedCorner):
            self.system.filippov_set(np.zeros(2), 0.0)

    def test_crossing_the_rate_surface(self):
        # above theta = 0 both sides of omega = 0 accelerate downwards
        cls = self.system.classify(1, np.array([1.0, 0.0]), 0.0)
        self.assertEqual(cls.kind, SlidingKind.CROSSING)


class SlidingOrderTestCase(ManifoldTestCase):
    def test_orders(self):
        self.assertEqual(sliding_order(2, 1, 1), 1)
        self.assertEqual(sliding_order(2, 1, 0), 2)
        self.assertEqual(sliding_order(6, 3, 3), 1)

    def test_non_integer_order(self):
        with self.assertRaises(NotWellDefinedOrder):
            sliding_order(3, 2, 0)

    def test_invalid_dimensions(self):
        with self.assertRaises(ValueError):
            sliding_order(2, 1, 2)


class UnitVectorTestCase(ManifoldTestCase):
    def setUp(self):
        super().setUp()
        self.closed = s2_system(RigidBodyParams(np.diag([1.0, 2.0, 3.0]), d_bar=0.3, eta=0.1))
        L = np.array([math.sin(1.0), 0.0, math.cos(1.0)])
        self.on_surface = np.concatenate([L, s2_alpha(L, np.array([0.0, 0.0, 1.0]))])

    def test_load_below_one_on_surface(self):
        cls = self.closed.system.classify(0, self.on_surface, 0.0)
        self.assertEqual(cls.kind, SlidingKind.ATTRACTIVE)
        self.assertLess(cls.effective_load, 1.0)

    def test_switching_control_undefined_on_surface(self):
        with self.assertRaises(OnSwitchingManifold):
            self.closed.system.switching_control(self.on_surface, 0.0)

    def test_sliding_vector_keeps_s_zero(self):
        system = self.closed.system
        v = system.sliding_vector(0, self.on_surface, 0.0)
        h = 1e-6
        rate = (system.sliding_variable(self.on_surface + h * v)
                - system.sliding_variable(self.on_surface - h * v)) / (2.0 * h)
        self.assertLessEqual(float(np.linalg.norm(rate)), 1e-6)

    def test_fields_are_tangent(self):
        pts, times = [], []
        for i, (a, b) in enumerate(uniform_samples([(0.0, math.pi), (-math.pi, math.pi)], 20, 3)):
            L = np.array([math.sin(a) * math.cos(b), math.sin(a) * math.sin(b), math.cos(a)])
            pts.append(np.concatenate([L, [0.3, -0.2, 0.5 + 0.01 * i]]))
            times.append(0.1 * i)
        self.assertLessEqual(tangency_audit(self.closed.system, pts, times), 1e-12)


class ScenarioTangencyTestCase(ManifoldTestCase):
    def test_every_bundled_scenario_is_tangent(self):
        names = sorted(p.stem for p in SCENARIO_DIR.glob('*.toml'))
        self.assertEqual(len(names), 6)
        for seed, name in enumerate(names, start=100):
            scenario = load_scenario(self.scenario_path(name))
            closed = closed_loop_for(scenario)
            points = random_states(closed, 1000, seed)
            times = uniform_samples([tuple(scenario.t_span)], 1000, seed + 1)[:, 0]
            self.assertLessEqual(tangency_audit(closed.system, points, times), 1e-12, name)


class SwitchingFunctionTestCase(ManifoldTestCase):
    def test_mobius_gradient_matches_finite_differences(self):
        sw = SwitchingFunction('s', lambda x, t: float(mobius_s(x[0], x[1], 1.0)))
        for theta, omega in uniform_samples([(-3.0, 3.0), (-2.0, 2.0)], 25, 11):
            x = np.array([theta, omega])
            self.assertAllClose(sw.gradient(x, 0.0), mobius_s_gradient(theta, omega, 1.0), atol=1e-7)

    def test_time_dependent_rate(self):
        sw = SwitchingFunction('x-t', lambda x, t: x[0] - t, lambda x, t: np.array([1.0]), time_dependent=True)
        rate = sw.lie_derivative(lambda x, t: np.array([3.0]), np.array([0.0]), 0.0)
        self.assertAlmostEqual(rate, 2.0, places=6)


if __name__ == '__main__':
    unittest.main()
