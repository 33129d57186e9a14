"""
Test suite for traffic.py module

Tests Markov activity parameters and trace sampling.
"""

import os
import sys
import unittest

import numpy as np

test_dir = os.path.dirname(os.path.abspath(__file__))
project_root = os.path.dirname(test_dir)
sys.path.insert(0, project_root)

from coop_access.traffic import (
    ActivityTrace,
    MarkovActivityParams,
    lag_one_statistics,
    sample_trace,
    solve_steady_state,
)


class TestSteadyState(unittest.TestCase):
    """Test solve_steady_state"""

    def test_reference_values(self):
        self.assertAlmostEqual(solve_steady_state(0.1, 0.9), 1.0 / 90.0, places=15)

    def test_uncorrelated_fixed_point(self):
        for p in (0.05, 0.3, 0.5, 0.8):
            self.assertAlmostEqual(solve_steady_state(p, p), p, places=15)
        self.assertEqual(solve_steady_state(0.5, 0.5), 0.5)

    def test_relation_holds(self):
        for p_a, beta in ((0.1, 0.9), (0.2, 0.5), (0.05, 0.99)):
            alpha = solve_steady_state(p_a, beta)
            self.assertAlmostEqual(alpha / (1 + alpha - beta), p_a, places=12)

    def test_infeasible(self):
        with self.assertRaises(ValueError):
            solve_steady_state(0.0, 0.5)
        with self.assertRaises(ValueError):
            solve_steady_state(0.1, 1.5)
        with self.assertRaises(ValueError):
            # alpha = 0.9 * 0.9 / 0.1 > 1
            solve_steady_state(0.9, 0.1)


class TestMarkovActivityParams(unittest.TestCase):
    """Test parameter construction and validation"""

    def test_from_steady_state(self):
        params = MarkovActivityParams.from_steady_state(0.1, 0.9)
        self.assertAlmostEqual(params.alpha, 1.0 / 90.0)
        self.assertTrue(params.correlated)

    def test_memoryless(self):
        params = MarkovActivityParams.memoryless(0.2)
        self.assertEqual((params.alpha, params.beta, params.p_a), (0.2, 0.2, 0.2))
        self.assertFalse(params.correlated)

    def test_inconsistent_relation_rejected(self):
        with self.assertRaises(ValueError):
            MarkovActivityParams(alpha=0.1, beta=0.9, p_a=0.1)

    def test_out_of_range_rejected(self):
        with self.assertRaises(ValueError):
            MarkovActivityParams(alpha=-0.1, beta=0.9, p_a=0.1)

    def test_frozen_chain_accepts_any_p(self):
        params = MarkovActivityParams(alpha=0.0, beta=1.0, p_a=0.3)
        self.assertEqual(params.p_a, 0.3)

    def test_arrays(self):
        alpha_n, beta_n, p_n = MarkovActivityParams.from_steady_state(0.1, 0.9).arrays(4)
        self.assertEqual(alpha_n.shape, (4,))
        np.testing.assert_allclose(beta_n, 0.9)
        np.testing.assert_allclose(p_n, 0.1)

    def test_per_user(self):
        params = MarkovActivityParams.per_user([0.1, 0.2], [0.9, 0.5])
        alpha_n, beta_n, p_n = params.arrays(2)
        np.testing.assert_allclose(alpha_n, [solve_steady_state(0.1, 0.9), solve_steady_state(0.2, 0.5)])
        self.assertAlmostEqual(params.p_a, 0.15)
        with self.assertRaises(ValueError):
            params.arrays(3)

    def test_without_correlation(self):
        plain = MarkovActivityParams.from_steady_state(0.1, 0.9).without_correlation()
        self.assertEqual((plain.alpha, plain.beta), (0.1, 0.1))
        per_user = MarkovActivityParams.per_user([0.1, 0.2], 0.9).without_correlation()
        alpha_n, beta_n, p_n = per_user.arrays(2)
        np.testing.assert_allclose(alpha_n, [0.1, 0.2])
        np.testing.assert_allclose(beta_n, [0.1, 0.2])


class TestSampleTrace(unittest.TestCase):
    """Test Markov trace sampling"""

    def test_shape_and_type(self):
        trace = sample_trace(MarkovActivityParams.from_steady_state(0.1, 0.9), 30, 8, seed=1)
        self.assertEqual(trace.lam.shape, (30, 8))
        self.assertEqual(trace.lam.dtype, bool)
        self.assertEqual(trace.frame_count, 8)
        self.assertEqual(trace.n_users, 30)

    def test_absorbing_active_state(self):
        params = MarkovActivityParams(alpha=0.0, beta=1.0, p_a=0.5)
        trace = sample_trace(params, 5, 20, seed=2, initial=np.ones(5, dtype=bool))
        self.assertTrue(trace.lam.all())

    def test_alternating_chain(self):
        params = MarkovActivityParams(alpha=1.0, beta=0.0, p_a=0.5)
        trace = sample_trace(params, 6, 10, seed=3)
        for row in trace.lam:
            np.testing.assert_array_equal(row[1:], ~row[:-1])

    def test_deterministic_per_user(self):
        """A user's sequence does not depend on the number of users"""
        params = MarkovActivityParams.from_steady_state(0.1, 0.9)
        small = sample_trace(params, 5, 12, seed=4)
        large = sample_trace(params, 50, 12, seed=4)
        np.testing.assert_array_equal(small.lam, large.lam[:5])
        np.testing.assert_array_equal(small.lam, sample_trace(params, 5, 12, seed=4).lam)

    def test_statistics(self):
        """Stationary fraction and persistence match the chain"""
        params = MarkovActivityParams.from_steady_state(0.1, 0.9)
        trace = sample_trace(params, 20000, 50, seed=5)
        fractions = trace.active_fraction()
        self.assertTrue(np.all(np.abs(fractions - 0.1) < 0.015))
        stats = lag_one_statistics(trace)
        self.assertAlmostEqual(stats['active_fraction'], 0.1, delta=0.005)
        self.assertAlmostEqual(stats['beta_hat'], 0.9, delta=0.01)
        self.assertAlmostEqual(stats['alpha_hat'], 1.0 / 90.0, delta=0.002)

    def test_invalid_arguments(self):
        params = MarkovActivityParams.memoryless(0.1)
        with self.assertRaises(ValueError):
            sample_trace(params, 3, 0, seed=0)
        with self.assertRaises(ValueError):
            ActivityTrace(lam=np.zeros(3, dtype=bool))


if __name__ == '__main__':
    unittest.main(verbosity=2)
