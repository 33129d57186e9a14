"""
Test suite for se.py module

Tests the variance recursion of the channel estimator.
"""

import os
import sys
import unittest

import numpy as np

test_dir = os.path.dirname(os.path.abspath(__file__))
project_root = os.path.dirname(test_dir)
sys.path.insert(0, project_root)

from coop_access.inference import IterationSnapshot
from coop_access.netgen import build_custom_layout
from coop_access.se import SeRecord, se_init, se_run, se_step
from coop_access.traffic import MarkovActivityParams


def _snapshot(iteration, phi_right, sigma, nmse_db=-3.0, error_energy=0.5):
    T_w, _, V = phi_right.shape
    return IterationSnapshot(
        iteration=iteration,
        nmse_db=nmse_db,
        relative_change=0.1,
        sigma_eff_sq=np.asarray(sigma, dtype=float),
        mean_pi_left=0.5,
        mean_pi_right=0.5,
        mean_phi_left=0.5,
        phi_right=phi_right,
        nu_z_mean=np.zeros((T_w, V)),
        error_energy=error_energy,
        true_energy=1.0,
    )


class TestSeInit(unittest.TestCase):
    """Test the prior variances"""

    def test_uniform_gains(self):
        layout = build_custom_layout(np.full((6, 2), 2.0))
        state = se_init(layout, MarkovActivityParams.memoryless(0.1), 20.0, window_size=3)
        self.assertEqual(state.nu_x_bar.shape, (3, 2))
        np.testing.assert_allclose(state.nu_x_bar, 0.1 * 20.0 * 2.0)
        np.testing.assert_array_equal(state.set_sizes, [6, 6])
        self.assertAlmostEqual(state.initial_energy, 3 * 2 * 6 * 4.0)
        self.assertAlmostEqual(state.predicted_nmse_db(), 0.0)

    def test_antennas_replicate_columns(self):
        layout = build_custom_layout(np.array([[1.0, 3.0], [1.0, 5.0]]))
        state = se_init(layout, MarkovActivityParams.memoryless(0.5), 1.0, window_size=1, antennas=2)
        np.testing.assert_allclose(state.nu_x_bar[0], [0.5, 0.5, 2.0, 2.0])

    def test_empty_cooperation_set(self):
        mask = np.array([[True, False], [True, False]])
        layout = build_custom_layout(np.ones((2, 2)), mask)
        with self.assertLogs('coop_access.se', level='WARNING'):
            state = se_init(layout, MarkovActivityParams.memoryless(0.2), 1.0, window_size=2)
        self.assertTrue(np.all(np.isnan(state.nu_x_bar[:, 1])))
        self.assertTrue(np.isfinite(state.total_mse()))
        self.assertAlmostEqual(state.total_mse(), state.initial_energy)


class TestSeStep(unittest.TestCase):
    """Test one step of the recursion"""

    def setUp(self):
        self.layout = build_custom_layout(np.ones((8, 1)))
        self.params = MarkovActivityParams.memoryless(0.5)

    def test_certain_activity_reduces_to_gaussian(self):
        state = se_init(self.layout, self.params, 1.0, window_size=2)
        phi_right = np.ones((2, 8, 1))
        new = se_step(state, self.layout, phi_right, 1.0, pilot_length=4, tx_power=1.0,
                      params=self.params, samples=200)
        np.testing.assert_allclose(new.nu_p, 1.0)
        np.testing.assert_allclose(new.nu_r_bar, 2.0)
        np.testing.assert_allclose(new.nu_z, 0.5)
        np.testing.assert_allclose(new.nu_x_bar, 2.0 / 3.0)
        self.assertEqual(new.iteration, 1)

    def test_infinite_noise_keeps_prior(self):
        state = se_init(self.layout, self.params, 1.0, window_size=1)
        phi_right = np.full((1, 8, 1), 0.5)
        new = se_step(state, self.layout, phi_right, 1e12, pilot_length=4, tx_power=1.0,
                      params=self.params, samples=4000)
        np.testing.assert_allclose(new.nu_x_bar, state.nu_x_bar, rtol=1e-6)

    def test_deterministic_per_seed(self):
        state = se_init(self.layout, self.params, 1.0, window_size=1)
        phi_right = np.full((1, 8, 1), 0.4)
        first = se_step(state, self.layout, phi_right, 0.3, 4, 1.0, self.params, samples=800, seed=5)
        second = se_step(state, self.layout, phi_right, 0.3, 4, 1.0, self.params, samples=800, seed=5)
        np.testing.assert_array_equal(first.nu_x_bar, second.nu_x_bar)

    def test_more_pilots_lower_variance(self):
        state = se_init(self.layout, self.params, 1.0, window_size=1)
        phi_right = np.full((1, 8, 1), 0.5)
        short = se_step(state, self.layout, phi_right, 0.1, 2, 1.0, self.params, samples=4000, seed=1)
        long = se_step(state, self.layout, phi_right, 0.1, 32, 1.0, self.params, samples=4000, seed=1)
        self.assertLess(float(long.nu_x_bar[0, 0]), float(short.nu_x_bar[0, 0]))


class TestSeRun(unittest.TestCase):
    """Test se_run driven by snapshots"""

    def setUp(self):
        self.layout = build_custom_layout(np.ones((8, 1)))
        self.params = MarkovActivityParams.memoryless(0.5)

    def test_records(self):
        snapshots = [_snapshot(1, np.ones((2, 8, 1)), [1.0]),
                     _snapshot(2, np.ones((2, 8, 1)), [1.0], nmse_db=-6.0)]
        records = se_run(self.layout, self.params, snapshots, pilot_length=4, tx_power=1.0, samples=100)
        self.assertEqual(len(records), 3)
        self.assertEqual((records[0].iteration, records[0].predicted_nmse_db), (0, 0.0))
        self.assertEqual(records[0].measured_nmse_db, 0.0)
        self.assertEqual(records[2].measured_nmse_db, -6.0)
        initial_energy = 2 * 8 * 0.5
        self.assertAlmostEqual(records[1].measured_mse_db, 10 * np.log10(0.5 / initial_energy))
        self.assertAlmostEqual(records[1].predicted_nmse_db, 10 * np.log10((2.0 / 3.0) / 0.5))

    def test_empty_snapshots(self):
        with self.assertRaises(ValueError):
            se_run(self.layout, self.params, [], pilot_length=4, tx_power=1.0)

    def test_record_row(self):
        row = SeRecord(3, -4.5, -4.25, -10.0).as_row()
        self.assertEqual(row['iteration'], 3)
        self.assertEqual(row['predicted_nmse_db'], '-4.5')
        self.assertEqual(set(row), {'iteration', 'predicted_nmse_db', 'measured_nmse_db', 'measured_mse_db'})


if __name__ == '__main__':
    unittest.main(verbosity=2)
