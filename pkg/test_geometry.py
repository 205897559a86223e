#!/usr/bin/env python3
"""
State-space tests: retractions, tangent projection, group actions,
canonical representatives and the descent checkers
"""

import math
import unittest

import numpy as np
from scipy.spatial.transform import Rotation

from src.controllers import mobius_naive_s, mobius_s
from src.embedding import cylinder_embed, mobius_embed
from src.errors import DegenerateRetraction, NotOnManifold, RangeExceeded
from src.geometry import (
    EuclideanSpace,
    Sphere,
    SpecialOrthogonalGroup,
    act,
    canonicalize,
    check_field_descends,
    check_function_descends,
    check_set_saturated,
    cylinder,
    cylinder_action,
    mobius_action,
    mobius_bundle,
    orthogonalize,
    retract,
    rotation_bundle,
    sphere_bundle,
    tangent_project,
)
from src.prng import uniform_samples
from src.testing import ManifoldTestCase

THETA_STAR = 1.0


def standard_samples(count=200, seed=42):
    return uniform_samples([(-math.pi, math.pi), (-2.0, 2.0)], count, seed)


class RetractionTestCase(ManifoldTestCase):
    def test_sphere_retract_normalizes(self):
        self.assertAllClose(Sphere().retract([3.0, 0.0, 4.0]), [0.6, 0.0, 0.8])

    def test_sphere_retract_rejects_zero(self):
        with self.assertRaises(DegenerateRetraction):
            Sphere().retract(np.zeros(3))

    def test_orthogonalize_recovers_rotation(self):
        R = Rotation.from_rotvec([0.3, -1.2, 0.7]).as_matrix()
        noisy = R + 1e-3 * np.arange(9.0).reshape(3, 3) / 9.0
        out = orthogonalize(noisy)
        self.assertLessEqual(np.linalg.norm(out.T @ out - np.eye(3)), 1e-12)
        self.assertAlmostEqual(np.linalg.det(out), 1.0, places=12)
        self.assertLess(np.linalg.norm(out - R), 1e-2)

    def test_orthogonalize_fixes_reflection(self):
        out = orthogonalize(np.diag([1.0, 1.0, -1.0]))
        self.assertAlmostEqual(np.linalg.det(out), 1.0, places=12)

    def test_orthogonalize_rejects_rank_deficient(self):
        with self.assertRaises(DegenerateRetraction):
            orthogonalize(np.zeros((3, 3)))

    def test_euclidean_retract_rejects_nan(self):
        with self.assertRaises(DegenerateRetraction):
            EuclideanSpace(2).retract([np.nan, 0.0])

    def test_product_retract_acts_per_factor(self):
        m = sphere_bundle()
        out = m.retract([0.0, 0.0, 2.0, 1.0, -2.0, 3.0])
        self.assertAllClose(out, [0.0, 0.0, 1.0, 1.0, -2.0, 3.0])
        self.assertEqual(m.coordinate_names, ['L1', 'L2', 'L3', 'w1', 'w2', 'w3'])

    def test_require_on_manifold(self):
        m = rotation_bundle()
        x = np.concatenate([np.eye(3).ravel(), np.zeros(3)])
        m.require_on_manifold(x)
        x[0] = 1.1
        with self.assertRaises(NotOnManifold):
            m.require_on_manifold(x)


class TangentTestCase(ManifoldTestCase):
    def test_sphere_projection_is_orthogonal(self):
        L = np.array([0.0, 0.6, 0.8])
        v = Sphere().project_tangent(L, [1.0, 2.0, 3.0])
        self.assertAlmostEqual(float(v @ L), 0.0, places=14)

    def test_so3_projection_gives_skew_body_velocity(self):
        R = Rotation.from_rotvec([0.1, 0.2, 0.3]).as_matrix().ravel()
        v = SpecialOrthogonalGroup().project_tangent(R, np.arange(9.0))
        a = R.reshape(3, 3).T @ v.reshape(3, 3)
        self.assertLessEqual(np.linalg.norm(a + a.T), 1e-12)

    def test_so3_projection_drops_symmetric_part(self):
        sym = np.array([[2.0, 1.0, 0.0], [1.0, 3.0, -1.0], [0.0, -1.0, 1.0]])
        v = SpecialOrthogonalGroup().project_tangent(np.eye(3).ravel(), sym.ravel())
        self.assertAllClose(v, np.zeros(9), atol=1e-15)

    def test_module_level_operations(self):
        L = np.array([0.0, 0.6, 0.8])
        self.assertAllClose(tangent_project(Sphere(), L, [0.0, 0.0, 1.0]), [0.0, -0.48, 0.36], atol=1e-14)
        self.assertAllClose(retract(Sphere(), [0.0, 3.0, 4.0]), L)
        self.assertAllClose(canonicalize(mobius_bundle(), act(mobius_action(), 3, [0.2, 0.5])), [0.2, 0.5],
                            atol=1e-13)

    def test_projector_is_idempotent(self):
        m = rotation_bundle()
        x = np.concatenate([Rotation.from_rotvec([0.4, 0.0, -0.2]).as_matrix().ravel(), [1.0, 2.0, 3.0]])
        p = m.tangent_projector(x)
        self.assertAllClose(p @ p, p, atol=1e-12)


class GroupActionTestCase(ManifoldTestCase):
    def test_mobius_generator(self):
        d = mobius_action().act(1, [0.5, 0.3])
        self.assertAllClose(d, [0.5 + 2.0 * math.pi, -0.3])
        self.assertAllClose(mobius_action().act(-1, d), [0.5, 0.3], atol=1e-15)

    def test_cylinder_generator_is_translation(self):
        self.assertAllClose(cylinder_action().act(3, [1.0, -0.5]), [1.0 + 6.0 * math.pi, -0.5], atol=1e-14)

    def test_group_law(self):
        d = np.array([0.4, -1.3])
        for a in (mobius_action(), cylinder_action()):
            for z1, z2 in ((1, 2), (-3, 1), (2, -2)):
                self.assertAllClose(a.act(z1, a.act(z2, d)), a.act(z1 + z2, d), atol=1e-13)

    def test_range_exceeded(self):
        with self.assertRaises(RangeExceeded):
            mobius_action().act(9, [0.0, 0.0])

    def test_linear_part(self):
        self.assertAllClose(mobius_action().linear_part(3), np.diag([1.0, -1.0]))
        self.assertAllClose(mobius_action().linear_part(2), np.eye(2))

    def test_canonicalize_flips_omega_on_mobius(self):
        q = mobius_bundle()
        self.assertAllClose(q.canonicalize([0.5 + 2.0 * math.pi, -0.3]), [0.5, 0.3], atol=1e-14)
        self.assertAllClose(q.canonicalize([math.pi, 0.2]), [-math.pi, -0.2])

    def test_canonicalize_removes_full_turns(self):
        for q in (cylinder(), mobius_bundle()):
            self.assertAllClose(q.canonicalize([4.0 * math.pi + 0.3, 1.0]), [0.3, 1.0], atol=1e-13)

    def test_canonical_angle_in_fundamental_domain(self):
        q = cylinder()
        for theta in np.linspace(-30.0, 30.0, 61):
            c = q.canonicalize([theta, 1.0])
            self.assertGreaterEqual(c[0], -math.pi)
            self.assertLess(c[0], math.pi)

    def test_distance_is_orbit_invariant(self):
        q = mobius_bundle()
        d = np.array([2.0, 0.7])
        for z in (-3, -1, 1, 3):
            self.assertLessEqual(q.distance(d, q.action.act(z, d)), 1e-12)
        self.assertAlmostEqual(q.distance([math.pi - 1e-3, 0.0], [-math.pi + 1e-3, 0.0]), 2e-3, places=9)


class DescentTestCase(ManifoldTestCase):
    def setUp(self):
        super().setUp()
        self.samples = standard_samples()

    def test_mobius_sliding_variable_descends(self):
        report = check_function_descends(mobius_action(), lambda d: mobius_s(d[0], d[1], THETA_STAR),
                                         self.samples, 3)
        self.assertTrue(report.passed)
        self.assertLessEqual(report.max_violation, 1e-9)

    def test_naive_sliding_variable_fails(self):
        report = check_function_descends(mobius_action(), lambda d: mobius_naive_s(d[0], d[1], THETA_STAR),
                                         self.samples, 3)
        self.assertFalse(report.passed)
        self.assertGreaterEqual(report.max_violation, 0.1)
        self.assertIsNotNone(report.witness_point)
        self.assertNotEqual(report.witness_z, 0)

    def test_embeddings_descend(self):
        for action, embed in ((mobius_action(), mobius_embed), (cylinder_action(), cylinder_embed)):
            report = check_function_descends(action, lambda d: embed(d[0], d[1]), self.samples, 3)
            self.assertLessEqual(report.max_violation, 1e-9)

    def test_field_descent_uses_pushforward(self):
        # (omega cos(theta/2), 0) is equivariant under the Mobius generator
        f = lambda d: np.array([d[1] * math.cos(d[0] / 2.0), 0.0])
        self.assertTrue(check_field_descends(mobius_action(), f, self.samples, 2).passed)
        g = lambda d: np.array([d[1], 0.0])
        self.assertFalse(check_field_descends(mobius_action(), g, self.samples, 2).passed)
        swap = lambda d: np.array([d[1], d[0]])
        self.assertFalse(check_field_descends(cylinder_action(), swap, self.samples, 1).passed)

    def test_saturated_sets(self):
        near_s1 = lambda d: abs(math.cos(d[0] / 2.0)) <= 0.1
        self.assertEqual(check_set_saturated(mobius_action(), near_s1, self.samples, 3).max_violation, 0.0)
        upper = lambda d: d[1] > 0.0
        self.assertFalse(check_set_saturated(mobius_action(), upper, self.samples, 1).passed)

    def test_z_range_beyond_limit(self):
        with self.assertRaises(RangeExceeded):
            check_function_descends(cylinder_action(), lambda d: d[1], self.samples[:2], 9)

    def test_embedding_of_canonical_representative(self):
        q = mobius_bundle()
        for d in standard_samples(50, 7) * np.array([4.0, 1.0]):
            c = q.canonicalize(d)
            self.assertAllClose(mobius_embed(c[0], c[1]), mobius_embed(d[0], d[1]), atol=1e-12)


if __name__ == '__main__':
    unittest.main()
