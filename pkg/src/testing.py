import os
import shutil
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np
from click.testing import CliRunner

from src.models.trajectory import ModeKind

ROOT = Path(__file__).resolve().parent.parent
SCENARIO_DIR = ROOT / 'scenarios'

TEST_MODULES = [
    'test_geometry',
    'test_fields',
    'test_controllers',
    'test_integrator',
    'test_scenarios',
]


class ManifoldTestCase(unittest.TestCase):
    """Base test case: a scratch output directory and array assertions"""

    def setUp(self):
        """Set up test environment"""
        self.out_dir = Path(tempfile.mkdtemp(prefix='smc-test-'))
        self.runner = CliRunner()

    def tearDown(self):
        """Clean up test environment"""
        shutil.rmtree(self.out_dir, ignore_errors=True)

    def scenario_path(self, name: str) -> str:
        return str(SCENARIO_DIR / f"{name}.toml")

    def write_scenario(self, text: str, name: str = 'scenario') -> str:
        path = self.out_dir / f"{name}.toml"
        path.write_text(text, encoding='utf-8')
        return str(path)

    def assertAllClose(self, actual, expected, atol: float = 1e-12, msg=None):
        actual = np.asarray(actual, dtype=float)
        expected = np.asarray(expected, dtype=float)
        self.assertEqual(actual.shape, expected.shape, msg)
        err = float(np.max(np.abs(actual - expected))) if actual.size else 0.0
        self.assertLessEqual(err, atol, msg or f"max deviation {err:.3e} exceeds {atol:.1e}")

    def assertResident(self, traj, tol: float):
        """Every sliding-mode sample of `traj` lies within tol of the switching set"""
        sliding = [s for s in traj.samples if s.mode.kind == ModeKind.SLIDING]
        self.assertTrue(sliding, "trajectory never slides")
        for s in sliding:
            self.assertLessEqual(float(np.linalg.norm(s.s)), tol, f"t={s.t}")


def run_tests():
    """Run all tests"""
    sys.path.insert(0, str(ROOT))
    os.chdir(ROOT)

    # Create test suite
    test_suite = unittest.TestSuite()
    loader = unittest.TestLoader()
    for name in TEST_MODULES:
        test_suite.addTests(loader.loadTestsFromName(name))

    # Run tests
    runner = unittest.TextTestRunner(verbosity=2)
    result = runner.run(test_suite)

    return result.wasSuccessful()


if __name__ == '__main__':
    success = run_tests()
    exit(0 if success else 1)
