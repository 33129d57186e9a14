"""
Test suite for phy.py module

Tests pilots, channel synthesis and noise bookkeeping.
"""

import os
import sys
import unittest

import numpy as np

test_dir = os.path.dirname(os.path.abspath(__file__))
project_root = os.path.dirname(test_dir)
sys.path.insert(0, project_root)

from coop_access.netgen import build_custom_layout
from coop_access.phy import (
    SystemParams,
    dbm_to_mw,
    effective_noise_power,
    gen_pilots,
    mw_to_dbm,
    orthonormal_pilots,
    quantizer_input_std,
    synthesize_frames,
)
from coop_access.traffic import ActivityTrace, MarkovActivityParams, sample_trace


class TestSystemParams(unittest.TestCase):
    """Test unit conversions and defaults"""

    def test_defaults(self):
        sys_params = SystemParams()
        self.assertAlmostEqual(sys_params.noise_dbm, -104.0)
        self.assertAlmostEqual(sys_params.noise_var_mw, 10 ** -10.4, delta=1e-20)
        self.assertAlmostEqual(sys_params.rho0_mw, 10 ** 1.3)

    def test_override(self):
        self.assertEqual(SystemParams(noise_var_override_mw=0.0).noise_var_mw, 0.0)

    def test_conversions(self):
        self.assertAlmostEqual(float(dbm_to_mw(0.0)), 1.0)
        self.assertAlmostEqual(float(mw_to_dbm(100.0)), 20.0)

    def test_validate(self):
        self.assertEqual(SystemParams().validate(), [])
        self.assertEqual(len(SystemParams(antennas_per_ap=0).validate()), 1)
        self.assertEqual(len(SystemParams(noise_var_override_mw=-1.0).validate()), 1)


class TestPilots(unittest.TestCase):
    """Test pilot generation"""

    def test_unit_scalar_variance(self):
        draws = gen_pilots(1, 20000, seed=1).a
        self.assertEqual(draws.shape, (1, 20000))
        self.assertAlmostEqual(float(np.mean(np.abs(draws) ** 2)), 1.0, delta=0.05)

    def test_column_norms(self):
        a = gen_pilots(300, 2000, seed=2).a
        norms = np.sum(np.abs(a) ** 2, axis=0)
        self.assertAlmostEqual(float(norms.mean()), 1.0, delta=0.1)

    def test_deterministic(self):
        np.testing.assert_array_equal(gen_pilots(10, 20, seed=3).a, gen_pilots(10, 20, seed=3).a)
        self.assertFalse(np.array_equal(gen_pilots(10, 20, seed=3).a, gen_pilots(10, 20, seed=4).a))

    def test_invalid_dimensions(self):
        with self.assertRaises(ValueError):
            gen_pilots(0, 5, seed=0)

    def test_orthonormal(self):
        a = orthonormal_pilots(16, 16).a
        np.testing.assert_allclose(a.conj().T @ a, np.eye(16), atol=1e-12)
        np.testing.assert_allclose(np.abs(a) ** 2, 1.0 / 16)
        with self.assertRaises(ValueError):
            orthonormal_pilots(4, 8)


class TestSynthesizeFrames(unittest.TestCase):
    """Test synthesize_frames"""

    def setUp(self):
        self.layout = build_custom_layout(np.array([[1.0, 0.5], [0.2, 2.0], [0.7, 0.7]]))
        self.pilots = gen_pilots(4, 3, seed=5)
        self.noiseless = SystemParams(rho0_dbm=0.0, noise_var_override_mw=0.0)

    def test_silent_network(self):
        trace = ActivityTrace(lam=np.zeros((3, 2), dtype=bool))
        signals = synthesize_frames(self.layout, trace, self.pilots, self.noiseless, seed=1)
        self.assertTrue(np.all(signals.y == 0))
        self.assertTrue(np.all(signals.x_true == 0))

    def test_single_active_user(self):
        lam = np.zeros((3, 1), dtype=bool)
        lam[1, 0] = True
        signals = synthesize_frames(self.layout, ActivityTrace(lam=lam), self.pilots,
                                    self.noiseless, seed=2)
        for v in range(2):
            np.testing.assert_allclose(signals.y[0, :, v], self.pilots.a[:, 1] * signals.x_true[0, 1, v])
        self.assertTrue(np.all(signals.x_true[0, [0, 2]] == 0))
        self.assertTrue(np.all(signals.x_true[0, 1] != 0))

    def test_shapes_with_antennas(self):
        sys_params = SystemParams(rho0_dbm=0.0, noise_var_override_mw=0.1, antennas_per_ap=3)
        trace = ActivityTrace(lam=np.ones((3, 2), dtype=bool))
        signals = synthesize_frames(self.layout, trace, self.pilots, sys_params, seed=3)
        self.assertEqual(signals.x_true.shape, (2, 3, 6))
        self.assertEqual(signals.y.shape, (2, 4, 6))
        np.testing.assert_array_equal(signals.ap_of_virtual(), [0, 0, 0, 1, 1, 1])
        np.testing.assert_array_equal(signals.virtual_columns(1), [3, 4, 5])
        local = signals.restrict_to_ap(1)
        np.testing.assert_array_equal(local.y, signals.y[:, :, 3:6])
        np.testing.assert_allclose(signals.y - signals.z, signals.y - signals.pilots.a @ signals.x_true)

    def test_deterministic(self):
        trace = ActivityTrace(lam=np.ones((3, 2), dtype=bool))
        sys_params = SystemParams(rho0_dbm=0.0, noise_var_override_mw=0.1)
        first = synthesize_frames(self.layout, trace, self.pilots, sys_params, seed=9)
        second = synthesize_frames(self.layout, trace, self.pilots, sys_params, seed=9)
        np.testing.assert_array_equal(first.y, second.y)

    def test_dimension_mismatch(self):
        trace = ActivityTrace(lam=np.ones((4, 2), dtype=bool))
        with self.assertRaises(ValueError):
            synthesize_frames(self.layout, trace, self.pilots, self.noiseless, seed=0)

    def test_channel_second_moment(self):
        """Mean |x|^2 matches p_a * rho0 * g"""
        n_users = 5000
        layout = build_custom_layout(np.full((n_users, 1), 2.0))
        trace = sample_trace(MarkovActivityParams.memoryless(0.1), n_users, 20, seed=4)
        sys_params = SystemParams(rho0_dbm=3.0, noise_var_override_mw=0.0)
        signals = synthesize_frames(layout, trace, gen_pilots(2, n_users, seed=6), sys_params, seed=5)
        measured = float(np.mean(np.abs(signals.x_true) ** 2))
        expected = 0.1 * sys_params.rho0_mw * 2.0
        self.assertLess(abs(measured - expected) / expected, 0.05)

    def test_noise_variance(self):
        layout = build_custom_layout(np.ones((2, 1)))
        trace = ActivityTrace(lam=np.zeros((2, 50), dtype=bool))
        sys_params = SystemParams(noise_var_override_mw=0.5)
        signals = synthesize_frames(layout, trace, gen_pilots(200, 2, seed=1), sys_params, seed=2)
        self.assertAlmostEqual(float(np.mean(np.abs(signals.y) ** 2)), 0.5, delta=0.02)


class TestNoiseBookkeeping(unittest.TestCase):
    """Test effective noise and quantizer input power"""

    def test_all_users_in_set(self):
        layout = build_custom_layout(np.ones((4, 1)))
        sys_params = SystemParams(noise_var_override_mw=0.3)
        self.assertAlmostEqual(effective_noise_power(layout, sys_params, 0, 0.1, 10), 0.3)

    def test_single_interferer(self):
        mask = np.array([[True], [True], [False]])
        layout = build_custom_layout(np.array([[1.0], [1.0], [0.4]]), mask)
        sys_params = SystemParams(rho0_dbm=10.0, noise_var_override_mw=0.0)
        value = effective_noise_power(layout, sys_params, 0, 0.1, 8)
        self.assertAlmostEqual(value, 0.1 * 10.0 * 0.4 / 8)
        with self.assertRaises(ValueError):
            effective_noise_power(layout, sys_params, 1, 0.1, 8)

    def test_quantizer_input_std(self):
        layout = build_custom_layout(np.array([[1.0], [3.0]]))
        sys_params = SystemParams(rho0_dbm=0.0, noise_var_override_mw=0.2)
        power = (0.1 * 1.0 + 0.1 * 3.0) / 4 + 0.2
        self.assertAlmostEqual(quantizer_input_std(layout, sys_params, 0, 0.1, 4), np.sqrt(power / 2))


if __name__ == '__main__':
    unittest.main(verbosity=2)
