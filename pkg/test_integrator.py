#!/usr/bin/env python3
"""
Integrator tests against closed-form solutions and structural invariants
"""

import math
import unittest

import numpy as np

from src.controllers import (
    RigidBodyParams,
    mobius_s,
    s2_alpha,
    s2_sliding_theta,
    s2_terminal_alpha,
    terminal_angle,
    terminal_arrival_time,
    terminal_sliding_theta,
)
from src.errors import BudgetExceeded
from src.integrator import IntegratorOptions, integrate, integrate_regularized, orbit_equivalence_check
from src.models.scenario import load_scenario
from src.models.trajectory import EventKind, ModeKind
from src.runner import closed_loop_for, simulate
from src.systems import cylinder_system, line_system, mobius_system, s2_system
from src.testing import ManifoldTestCase

L_D = np.array([0.0, 0.0, 1.0])


def line_solution(x0, t):
    """x' = -sign(x) + 1/2: slope -1/2 above zero, +3/2 below, then rest"""
    if x0 >= 0.0:
        return max(x0 - 0.5 * t, 0.0)
    return min(x0 + 1.5 * t, 0.0)


def sliding_start(theta0, alpha):
    L = np.array([math.sin(theta0), 0.0, math.cos(theta0)])
    return np.concatenate([L, alpha(L, L_D)])


def sphere_error(system, theta0, step, t_end=5.0):
    traj = integrate(system, sliding_start(theta0, s2_alpha), (0.0, t_end), IntegratorOptions(step=step))
    return max(abs(terminal_angle(s.x[:3], L_D) - float(s2_sliding_theta(theta0, s.t)))
               for s in traj.grid_samples())


class LineOracleTestCase(ManifoldTestCase):
    def test_matches_closed_form(self):
        system = line_system(0.5).system
        for x0 in (1.0, 0.3, -2.0):
            traj = integrate(system, [x0], (0.0, 4.0))
            err = max(abs(s.x[0] - line_solution(x0, s.t)) for s in traj.samples)
            self.assertLessEqual(err, 1e-6, f"x0={x0}")
            entry = traj.first_event(EventKind.SLIDING_ENTRY)
            expected = 2.0 * x0 if x0 > 0 else abs(x0) / 1.5
            self.assertAlmostEqual(entry.t, expected, delta=1e-5)
            self.assertTrue(np.all(np.diff(traj.times) > 0.0))
            self.assertEqual(traj.final.mode.kind, ModeKind.EQUILIBRIUM)

    def test_arrival_at_two_step_sizes(self):
        # both one-sided fields are constant, so only event location limits the error
        for x0 in (-2.0, 0.37):
            expected = abs(x0) / 1.5 if x0 < 0.0 else 2.0 * x0
            for step in (0.1, 0.05):
                traj = integrate(line_system(0.5).system, [x0], (0.0, 4.0), IntegratorOptions(step=step))
                entry = traj.first_event(EventKind.SLIDING_ENTRY)
                self.assertLessEqual(abs(entry.t - expected), 1e-8, f"x0={x0} step={step}")
                self.assertLessEqual(abs(traj.final.x[0]), 1e-8)

    def test_start_on_sliding_set(self):
        traj = integrate(line_system(0.5).system, [0.0], (0.0, 1.0))
        self.assertEqual(traj.samples[0].mode.kind, ModeKind.SLIDING)
        self.assertEqual(float(np.max(np.abs(traj.states))), 0.0)

    def test_regularized_line_settles_in_boundary_layer(self):
        traj = integrate(line_system(0.5, epsilon=1e-2).system, [1.0], (0.0, 4.0), IntegratorOptions(step=1e-3))
        # x/(|x| + eps) = 1/2 at rest
        self.assertAlmostEqual(traj.final.x[0], 1e-2, places=6)
        self.assertEqual(traj.event_counts()['SlidingEntry'], 0)

    def test_regularized_path_needs_boundary_layer(self):
        with self.assertRaises(ValueError):
            integrate_regularized(line_system(0.5).system, [1.0], (0.0, 1.0))

    def test_budget_exceeded_keeps_partial_trajectory(self):
        with self.assertRaises(BudgetExceeded) as ctx:
            integrate(line_system(0.5).system, [1.0], (0.0, 4.0), IntegratorOptions(max_steps=10))
        self.assertGreater(len(ctx.exception.trajectory), 1)
        self.assertEqual(ctx.exception.trajectory.halted, 'budget')

    def test_invalid_options(self):
        with self.assertRaises(ValueError):
            IntegratorOptions(step=0.0)
        with self.assertRaises(ValueError):
            IntegratorOptions(lambda_margin=0.5)


class SphereOracleTestCase(ManifoldTestCase):
    def setUp(self):
        super().setUp()
        self.params = RigidBodyParams(np.eye(3), d_bar=0.0, eta=0.1)

    def test_sliding_dynamics(self):
        system = s2_system(self.params).system
        for theta0 in (0.5, math.pi / 2.0, 3.0):
            self.assertLessEqual(sphere_error(system, theta0, 1e-2), 1e-5, f"theta0={theta0}")

    def test_step_halving(self):
        system = s2_system(self.params).system
        coarse = sphere_error(system, math.pi / 2.0, 0.1)
        fine = sphere_error(system, math.pi / 2.0, 0.05)
        self.assertGreaterEqual(coarse / fine, 8.0)

    def test_terminal_arrival(self):
        system = s2_system(self.params, terminal=True).system
        for theta0 in (0.25, 1.0):
            t_star = terminal_arrival_time(theta0)
            traj = integrate(system, sliding_start(theta0, s2_terminal_alpha), (0.0, t_star + 0.5),
                             IntegratorOptions(step=5e-4))
            arrival = traj.first_event(EventKind.EQUILIBRIUM_REACHED)
            self.assertIsNotNone(arrival, f"theta0={theta0}")
            self.assertAlmostEqual(arrival.t, t_star, delta=1e-3)
            for s in traj.samples:
                theta = terminal_angle(s.x[:3], L_D)
                if s.t >= arrival.t:
                    self.assertLessEqual(theta, 1e-6)
                elif s.t <= t_star - 0.1:
                    self.assertAlmostEqual(theta, float(terminal_sliding_theta(theta0, s.t)), delta=1e-5)

    def test_terminal_step_halving(self):
        system = s2_system(self.params, terminal=True).system
        errors = []
        for step in (0.1, 0.05):
            traj = integrate(system, sliding_start(1.0, s2_terminal_alpha), (0.0, 1.0), IntegratorOptions(step=step))
            errors.append(max(abs(terminal_angle(s.x[:3], L_D) - float(terminal_sliding_theta(1.0, s.t)))
                              for s in traj.grid_samples()))
        self.assertGreaterEqual(errors[0] / errors[1], 8.0)

    def test_terminal_arrival_error_within_step(self):
        system = s2_system(self.params, terminal=True).system
        t_star = terminal_arrival_time(0.25)
        for step in (4e-3, 2e-3, 1e-3):
            traj = integrate(system, sliding_start(0.25, s2_terminal_alpha), (0.0, t_star + 0.5),
                             IntegratorOptions(step=step))
            arrival = traj.first_event(EventKind.EQUILIBRIUM_REACHED)
            self.assertIsNotNone(arrival, f"step={step}")
            self.assertLessEqual(abs(arrival.t - t_star), step, f"step={step}")

    def test_terminal_sliding_residency(self):
        system = s2_system(self.params, terminal=True).system
        traj = integrate(system, sliding_start(1.0, s2_terminal_alpha), (0.0, 3.0))
        self.assertResident(traj, IntegratorOptions().tol_surface)

    def test_boundary_layer_width_scales_residual(self):
        scenario = load_scenario(self.scenario_path('sphere_first_order'))
        peaks = []
        for eps in (2e-3, 1e-3):
            run = scenario.with_overrides(epsilon=eps)
            closed = closed_loop_for(run)
            traj = integrate(closed.system, run.initial_points()[0], run.t_span, run.integrator)
            late = traj.times >= 5.0
            peaks.append(float(np.max(np.linalg.norm(traj.s_values[late], axis=1))))
        self.assertGreaterEqual(peaks[0] / peaks[1], 1.5)
        self.assertLessEqual(peaks[0] / peaks[1], 2.5)


class InvariantTestCase(ManifoldTestCase):
    def test_drift_stays_small(self):
        for name in ('so3_first_order', 'sphere_first_order', 'sphere_terminal'):
            for run in simulate(load_scenario(self.scenario_path(name))):
                self.assertLessEqual(run.summary.max_drift, 1e-8, name)

    def test_sliding_residency(self):
        scenario = load_scenario(self.scenario_path('sphere_first_order'))
        self.assertResident(simulate(scenario)[0].trajectory, scenario.integrator.tol_surface)

    def test_mobius_sliding_residency(self):
        scenario = load_scenario(self.scenario_path('mobius'))
        sliding_runs = 0
        for run in simulate(scenario):
            if any(s.mode.kind == ModeKind.SLIDING for s in run.trajectory.samples):
                self.assertResident(run.trajectory, scenario.integrator.tol_surface)
                sliding_runs += 1
        self.assertGreater(sliding_runs, 0)

    def test_sphere_terminal_reaches_target(self):
        summary = simulate(load_scenario(self.scenario_path('sphere_terminal')))[0].summary
        self.assertLessEqual(summary.terminal_error, 1e-2)


class TwistingTestCase(ManifoldTestCase):
    def test_grid_converges(self):
        scenario = load_scenario(self.scenario_path('cylinder_twisting'))
        closed = closed_loop_for(scenario)
        for run in simulate(scenario):
            c = closed.quotient.canonicalize(run.trajectory.final.x)
            self.assertLessEqual(abs(c[0]) + abs(c[1]), 1e-2, f"run {run.index}")

    def test_upper_equilibrium_repels(self):
        closed = cylinder_system(5.0, 2.0)
        top = np.array([math.pi, 0.0])
        traj = integrate(closed.system, [math.pi + 1e-3, 0.0], (0.0, 0.5))
        dist = [closed.quotient.distance(s.x, top) for s in traj.grid_samples()]
        self.assertTrue(all(b > a for a, b in zip(dist, dist[1:])))

    def test_orbit_equivalence(self):
        closed = cylinder_system(5.0, 2.0)
        for z in (1, 3):
            gap = orbit_equivalence_check(closed.system, closed.quotient, [2.0, 0.0], z, (0.0, 5.0))
            self.assertLessEqual(gap, 1e-6, f"z={z}")


class MobiusTestCase(ManifoldTestCase):
    def test_orbit_equivalence(self):
        closed = mobius_system(1.0)
        for z in (1, 3):
            gap = orbit_equivalence_check(closed.system, closed.quotient, [1.0, 0.5], z, (0.0, 10.0))
            self.assertLessEqual(gap, 1e-6, f"z={z}")

    def test_reaching_law(self):
        scenario = load_scenario(self.scenario_path('mobius'))
        theta_star = scenario.controller.parameters['theta_star']
        checked = 0
        for run in simulate(scenario):
            self.assertTrue(run.summary.lyapunov_decreasing, f"run {run.index}")
            grid = run.trajectory.grid_samples()
            entry = run.trajectory.first_event(EventKind.SLIDING_ENTRY)
            until = entry.t if entry is not None else math.inf
            for prev, cur, nxt in zip(grid, grid[1:], grid[2:]):
                if nxt.t >= until or not all(s.mode.kind == ModeKind.FREE for s in (prev, cur, nxt)):
                    continue
                s = float(mobius_s(cur.x[0], cur.x[1], theta_star))
                c = abs(math.cos(cur.x[0] / 2.0))
                if abs(s) <= 0.05 or c <= 0.2:
                    continue
                v = lambda x: 0.5 * float(mobius_s(x[0], x[1], theta_star)) ** 2
                measured = (v(nxt.x) - v(prev.x)) / (nxt.t - prev.t)
                expected = -c * abs(s)
                self.assertLessEqual(abs(measured - expected), 1e-3 * abs(expected))
                checked += 1
        self.assertGreater(checked, 0)


if __name__ == '__main__':
    unittest.main()
