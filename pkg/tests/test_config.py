"""
Test suite for config.py module

Tests presets, the KEY=value file format, environment handling and the
precedence of every settings source.
"""

import os
import sys
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

test_dir = os.path.dirname(os.path.abspath(__file__))
project_root = os.path.dirname(test_dir)
sys.path.insert(0, project_root)

from coop_access.config import (
    CONFIG_KEYS,
    apply_settings,
    config_to_text,
    load_config,
    read_config_file,
    write_config,
)
from coop_access.core.models import DetectionMode, ExperimentConfig, FronthaulMode


class TestPresets(unittest.TestCase):
    """Test defaults and named presets"""

    def test_defaults(self):
        config = load_config(use_env=False)
        self.assertEqual(config.network.tiers, 3)
        self.assertEqual(config.network.users_per_cell, 1000)
        self.assertEqual(config.pilot_length, 300)
        self.assertEqual(config.inference.mode, DetectionMode.DCS)
        self.assertEqual(config.fronthaul.mode, FronthaulMode.IDEAL)

    def test_desk_preset(self):
        config = load_config(preset='desk', use_env=False)
        self.assertEqual(config.network.tiers, 2)
        self.assertEqual(config.network.users_per_cell, 200)
        self.assertEqual(config.pilot_length, 40)
        self.assertEqual(config.trials, 100)

    def test_unknown_preset(self):
        with self.assertRaises(ValueError):
            load_config(preset='huge', use_env=False)


class TestSettings(unittest.TestCase):
    """Test parsing and precedence of settings"""

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.path = Path(self.temp_dir.name) / "experiment.env"

    def tearDown(self):
        self.temp_dir.cleanup()

    def test_precedence(self):
        self.path.write_text("TRAFFIC_BETA=0.8\nNETWORK_TIERS=2\nEXPERIMENT_TRIALS=7\n", encoding='utf-8')
        with patch.dict(os.environ, {'TRAFFIC_BETA': '0.7', 'EXPERIMENT_TRIALS': '9'}):
            config = load_config(path=self.path, overrides={'TRAFFIC_BETA': '0.6'})
        self.assertEqual(config.network.tiers, 2)
        self.assertEqual(config.trials, 9)
        self.assertAlmostEqual(config.traffic.beta, 0.6)

    def test_environment_ignored_when_disabled(self):
        with patch.dict(os.environ, {'TRAFFIC_BETA': '0.7'}):
            config = load_config(use_env=False)
        self.assertAlmostEqual(config.traffic.beta, 0.9)

    def test_unknown_key_warns(self):
        self.path.write_text("NETWORK_TIERS=1\nNOT_A_KEY=3\n", encoding='utf-8')
        with self.assertLogs('coop_access.config', level='WARNING') as logs:
            values = read_config_file(self.path)
        self.assertIn('NOT_A_KEY', logs.output[0])
        self.assertEqual(values['NETWORK_TIERS'], '1')

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            load_config(path=self.path, use_env=False)

    def test_invalid_value(self):
        with self.assertRaises(ValueError):
            load_config(overrides={'NETWORK_TIERS': 'three'}, use_env=False)

    def test_validation_failure(self):
        with self.assertRaises(ValueError) as ctx:
            load_config(overrides={'NETWORK_TIERS': '0', 'EXPERIMENT_TRIALS': '0'}, use_env=False)
        self.assertIn('tiers', str(ctx.exception))
        self.assertIn('trials', str(ctx.exception))

    def test_typed_values_pass_through(self):
        config = apply_settings(ExperimentConfig(), {'EXPERIMENT_TRIALS': 5, 'INFERENCE_MODE': DetectionMode.CS})
        self.assertEqual(config.trials, 5)
        self.assertEqual(config.inference.mode, DetectionMode.CS)

    def test_apply_settings_copies(self):
        base = ExperimentConfig()
        apply_settings(base, {'NETWORK_TIERS': '1'})
        self.assertEqual(base.network.tiers, 3)

    def test_boolean_and_optional_values(self):
        config = apply_settings(ExperimentConfig(), {
            'INFERENCE_EM_ENABLED': 'off',
            'FRONTHAUL_EM_IN_QF': 'Yes',
            'FRONTHAUL_BUDGET_BITS': 'none',
            'FRONTHAUL_MODE': 'QF',
        })
        self.assertFalse(config.inference.em_enabled)
        self.assertTrue(config.fronthaul.em_in_qf)
        self.assertIsNone(config.fronthaul.budget_bits)
        self.assertEqual(config.fronthaul.mode, FronthaulMode.QF)
        with self.assertRaises(ValueError):
            apply_settings(ExperimentConfig(), {'INFERENCE_EM_ENABLED': 'maybe'})


class TestConfigFile(unittest.TestCase):
    """Test writing configuration files"""

    def test_every_key_written(self):
        text = config_to_text(ExperimentConfig())
        for key in CONFIG_KEYS:
            self.assertIn(f"{key}=", text)
        self.assertIn("# [network]", text)

    def test_written_file_reloads(self):
        config = load_config(preset='desk', overrides={
            'FRONTHAUL_MODE': 'df',
            'FRONTHAUL_BUDGET_BITS': '4000',
            'INFERENCE_MODE': 'cs',
            'TRAFFIC_BETA': '0.85',
        }, use_env=False)
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "nested" / "desk.env"
            self.assertTrue(write_config(config, path))
            reloaded = load_config(path=path, use_env=False)
        self.assertEqual(reloaded.to_dict(), config.to_dict())

    def test_write_failure(self):
        with tempfile.TemporaryDirectory() as temp_dir:
            blocker = Path(temp_dir) / "file"
            blocker.write_text("x", encoding='utf-8')
            with self.assertLogs('coop_access.config', level='ERROR'):
                self.assertFalse(write_config(ExperimentConfig(), blocker / "config.env"))


if __name__ == '__main__':
    unittest.main(verbosity=2)
