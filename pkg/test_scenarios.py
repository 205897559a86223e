#!/usr/bin/env python3
"""
Scenario files, the CLI verbs and reproducibility of their outputs
"""

import csv
import json
import math
import unittest
from pathlib import Path

import numpy as np

from src.embedding import mobius_embed
from src.errors import ConfigError
from src.geometry import mobius_bundle
from src.main import cli
from src.models.scenario import load_scenario, parse_scenario
from src.portrait import phase_portrait
from src.prng import SplitMix64
from src.testing import SCENARIO_DIR, ManifoldTestCase

BAD_TWISTING = """\
[scenario]
name = "bad_twisting"
manifold = "cylinder"
t_span = [0.0, 1.0]

[controller]
k1 = 2.0
k2 = 5.0

[initial]
points = [[0.5, 0.0]]
"""

RANDOM_SPHERE = """\
[scenario]
name = "random_sphere"
manifold = "s2"
seed = 3
t_span = [0.0, 0.2]

[controller]
family = "s2_first_order"
eta = 0.5

[initial.random]
count = 3
low = [-1.0, -1.0, -1.0]
high = [1.0, 1.0, 1.0]
"""


def read_rows(path):
    with open(path, newline='', encoding='utf-8') as fh:
        return list(csv.DictReader(fh))


class ScenarioFileTestCase(ManifoldTestCase):
    def test_bundled_scenarios_load(self):
        names = sorted(p.stem for p in SCENARIO_DIR.glob('*.toml'))
        self.assertEqual(names, ['cylinder_twisting', 'line_filippov', 'mobius', 'so3_first_order',
                                 'sphere_first_order', 'sphere_terminal'])
        for name in names:
            scenario = load_scenario(self.scenario_path(name))
            self.assertEqual(scenario.name, name)
            self.assertTrue(scenario.initial_points())

    def test_gain_ordering_error_names_line(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_scenario(BAD_TWISTING, 'bad.toml')
        self.assertIn('K1 > K2', str(ctx.exception))
        self.assertEqual(ctx.exception.line, 7)

    def test_disturbance_above_bound(self):
        text = BAD_TWISTING.replace('k1 = 2.0', 'k1 = 5.0').replace('k2 = 5.0', 'k2 = 2.0') + """
[[disturbance.terms]]
kind = "constant"
amplitude = 0.5
"""
        with self.assertRaises(ConfigError) as ctx:
            parse_scenario(text, 'bad.toml')
        self.assertIn('d_bar', str(ctx.exception))

    def test_invalid_toml(self):
        with self.assertRaises(ConfigError):
            parse_scenario('[scenario\nname = 1\n', 'broken.toml')

    def test_point_off_manifold(self):
        text = RANDOM_SPHERE.replace("""[initial.random]
count = 3
low = [-1.0, -1.0, -1.0]
high = [1.0, 1.0, 1.0]
""", "[initial]\npoints = [[2.0, 0.0, 0.0, 0.0, 0.0, 0.0]]\n")
        with self.assertRaises(ConfigError):
            parse_scenario(text)

    def test_config_echo_has_defaults(self):
        echo = load_scenario(self.scenario_path('line_filippov')).to_dict()
        self.assertEqual(echo['tolerances']['surface'], 1e-7)
        self.assertEqual(echo['integrator']['step'], 1e-3)
        self.assertEqual(echo['controller']['parameters']['bias'], 0.5)

    def test_seed_override_redraws_random_points(self):
        scenario = parse_scenario(RANDOM_SPHERE)
        first = scenario.initial_points()
        self.assertAllClose(np.stack(first), np.stack(scenario.initial_points()))
        other = scenario.with_overrides(seed=4).initial_points()
        self.assertGreater(float(np.max(np.abs(np.stack(first) - np.stack(other)))), 1e-3)
        for x in first:
            self.assertAlmostEqual(float(np.linalg.norm(x[:3])), 1.0, places=14)


class SplitMixTestCase(ManifoldTestCase):
    def test_reference_outputs(self):
        rng = SplitMix64(0)
        self.assertEqual(rng.next_u64(), 0xE220A8397B1DCDAF)
        self.assertEqual(rng.next_u64(), 0x6E789E6AA1B965F4)
        self.assertEqual(rng.next_u64(), 0x06C45D188009454F)

    def test_uniform_range(self):
        rng = SplitMix64(123)
        values = [rng.uniform() for _ in range(1000)]
        self.assertGreaterEqual(min(values), 0.0)
        self.assertLess(max(values), 1.0)


class SimCommandTestCase(ManifoldTestCase):
    def test_line_scenario(self):
        result = self.runner.invoke(cli, ['sim', self.scenario_path('line_filippov'), '--out', str(self.out_dir),
                                          '--quiet'])
        self.assertEqual(result.exit_code, 0, result.output)
        summary = json.loads((self.out_dir / 'line_filippov_summary.json').read_text())
        self.assertEqual(summary['scenario']['name'], 'line_filippov')
        reaching = [run['reaching_time'] for run in summary['runs']]
        for got, expected in zip(reaching, (2.0, 0.6, 2.0 / 1.5)):
            self.assertAlmostEqual(got, expected, delta=1e-5)
        rows = read_rows(self.out_dir / 'line_filippov_run000.csv')
        self.assertEqual(list(rows[0]), ['t', 'x', 'mode', 's0', 'u0', 'drift'])
        self.assertEqual(rows[-1]['mode'], 'equilibrium')

    def test_outputs_are_deterministic(self):
        first, second = self.out_dir / 'a', self.out_dir / 'b'
        for out, jobs in ((first, '1'), (second, '2')):
            result = self.runner.invoke(cli, ['sim', self.scenario_path('cylinder_twisting'), '--out', str(out),
                                              '--jobs', jobs, '--quiet'])
            self.assertEqual(result.exit_code, 0, result.output)
        names = sorted(p.name for p in first.iterdir())
        self.assertEqual(names, sorted(p.name for p in second.iterdir()))
        self.assertIn('cylinder_twisting_run011_embed.csv', names)
        for name in names:
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes(), name)

    def test_bad_gains_exit_code(self):
        path = self.write_scenario(BAD_TWISTING, 'bad_twisting')
        result = self.runner.invoke(cli, ['sim', path, '--out', str(self.out_dir / 'run'), '--quiet'])
        self.assertEqual(result.exit_code, 2)
        self.assertIn('K1 > K2', result.output)
        self.assertFalse((self.out_dir / 'run').exists())

    def test_step_and_seed_overrides(self):
        path = self.write_scenario(RANDOM_SPHERE, 'random_sphere')
        result = self.runner.invoke(cli, ['sim', path, '--out', str(self.out_dir), '--seed', '5',
                                          '--step', '0.01', '--quiet'])
        self.assertEqual(result.exit_code, 0, result.output)
        summary = json.loads((self.out_dir / 'random_sphere_summary.json').read_text())
        self.assertEqual(summary['seed'], 5)
        self.assertEqual(summary['scenario']['integrator']['step'], 0.01)
        self.assertEqual(len(summary['runs']), 3)

    def test_regularize_flag(self):
        result = self.runner.invoke(cli, ['sim', self.scenario_path('line_filippov'), '--out', str(self.out_dir),
                                          '--regularize', '0.01', '--quiet'])
        self.assertEqual(result.exit_code, 0, result.output)
        summary = json.loads((self.out_dir / 'line_filippov_summary.json').read_text())
        self.assertEqual(summary['scenario']['controller']['regularization'], {'boundary_layer': 0.01})
        self.assertTrue(all(run['reaching_time'] is None for run in summary['runs']))


class PortraitCommandTestCase(ManifoldTestCase):
    def test_mobius_portrait(self):
        result = self.runner.invoke(cli, ['portrait', self.scenario_path('mobius'), '--out', str(self.out_dir),
                                          '--quiet'])
        self.assertEqual(result.exit_code, 0, result.output)
        meta = json.loads((self.out_dir / 'mobius_portrait.json').read_text())
        labels = [eq['label'] for eq in meta['equilibria']]
        self.assertEqual(labels, ['stable', 'saddle', 'saddle'])
        self.assertAlmostEqual(meta['equilibria'][0]['point'][0], 1.0)
        self.assertEqual(sorted(meta['switching_sets']), ['S1', 'S2'])
        rows = read_rows(self.out_dir / 'mobius_portrait.csv')
        self.assertEqual({row['run'] for row in rows}, {str(i) for i in range(18)})

    def test_cylinder_portrait_labels(self):
        result = phase_portrait(load_scenario(self.scenario_path('cylinder_twisting')))
        self.assertEqual([eq.label for eq in result.equilibria], ['stable', 'unstable'])
        self.assertAlmostEqual(abs(result.equilibria[1].point[0]), math.pi)

    def test_portrait_needs_quotient(self):
        result = self.runner.invoke(cli, ['portrait', self.scenario_path('so3_first_order'),
                                          '--out', str(self.out_dir), '--quiet'])
        self.assertEqual(result.exit_code, 2)
        self.assertFalse(list(self.out_dir.iterdir()))

    def test_empty_grid(self):
        text = BAD_TWISTING.replace('k1 = 2.0', 'k1 = 5.0').replace('k2 = 5.0', 'k2 = 2.0').replace(
            'points = [[0.5, 0.0]]', 'grid = { theta = [], omega = [0.0] }')
        path = self.write_scenario(text, 'empty_grid')
        out = self.out_dir / 'portrait'
        result = self.runner.invoke(cli, ['portrait', path, '--out', str(out), '--quiet'])
        self.assertEqual(result.exit_code, 2)
        self.assertFalse(out.exists())


class DescentCommandTestCase(ManifoldTestCase):
    def test_mobius_descent(self):
        result = self.runner.invoke(cli, ['check-descent', self.scenario_path('mobius'), '--out', str(self.out_dir),
                                          '--quiet'])
        self.assertEqual(result.exit_code, 0, result.output)
        report = json.loads((self.out_dir / 'mobius_descent.json').read_text())
        self.assertTrue(report['all_as_expected'])
        checks = {c['name']: c for c in report['checks']}
        for name in ('mobius_s', 'closed_loop', 'mobius_embed'):
            self.assertLessEqual(checks[name]['max_violation'], 1e-9, name)
        self.assertEqual(checks['naive_s']['status'], 'expected-failure')
        self.assertGreaterEqual(checks['naive_s']['max_violation'], 0.1)
        self.assertLessEqual(report['lie_derivative_residuals']['displayed'], 1e-9)

    def test_twisting_field_descends(self):
        result = self.runner.invoke(cli, ['check-descent', self.scenario_path('cylinder_twisting'),
                                          '--target', 'closed-loop-field', '--out', str(self.out_dir), '--quiet'])
        self.assertEqual(result.exit_code, 0, result.output)
        report = json.loads((self.out_dir / 'cylinder_twisting_descent.json').read_text())
        self.assertEqual([c['name'] for c in report['checks']], ['closed_loop'])
        self.assertLessEqual(report['checks'][0]['max_violation'], 1e-9)

    def test_descent_needs_quotient(self):
        result = self.runner.invoke(cli, ['check-descent', self.scenario_path('line_filippov'),
                                          '--out', str(self.out_dir), '--quiet'])
        self.assertEqual(result.exit_code, 2)


class EmbedCommandTestCase(ManifoldTestCase):
    def test_embedding_is_orbit_constant(self):
        src = self.out_dir / 'in.csv'
        src.write_text('t,theta,omega\n0,0.5,0.3\n1,{},-0.3\n2,-3.0,1.5\n'.format(repr(0.5 + 2.0 * math.pi)))
        dst = self.out_dir / 'out.csv'
        result = self.runner.invoke(cli, ['embed', 'mobius', str(src), str(dst), '--quiet'])
        self.assertEqual(result.exit_code, 0, result.output)
        rows = read_rows(dst)
        self.assertEqual(list(rows[0]), ['t', 'theta', 'omega', 'k1', 'k2', 'k3'])
        k = [np.array([float(r['k1']), float(r['k2']), float(r['k3'])]) for r in rows]
        self.assertAllClose(k[0], k[1], atol=1e-12)
        c = mobius_bundle().canonicalize([-3.0, 1.5])
        self.assertAllClose(k[2], mobius_embed(c[0], c[1]), atol=1e-12)

    def test_missing_columns(self):
        src = self.out_dir / 'in.csv'
        src.write_text('t,x\n0,1\n')
        result = self.runner.invoke(cli, ['embed', 'cylinder', str(src), str(self.out_dir / 'out.csv'), '--quiet'])
        self.assertEqual(result.exit_code, 2)
        self.assertFalse(Path(self.out_dir / 'out.csv').exists())


if __name__ == '__main__':
    unittest.main()
