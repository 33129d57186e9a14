"""
Test suite for the simulation pipeline

Tests metrics, seeding, trial aggregation, sweeps and the cross-check
drivers on tiny single-cell scenarios.
"""

import os
import sys
import tempfile
import unittest
from dataclasses import replace
from pathlib import Path
from unittest.mock import Mock, patch

import numpy as np

test_dir = os.path.dirname(os.path.abspath(__file__))
project_root = os.path.dirname(test_dir)
sys.path.insert(0, project_root)

from coop_access.core.models import (
    DetectionMode, ExperimentConfig, FronthaulConfig, FronthaulMode, InferenceConfig, NetworkConfig,
    ProcessingStage, TrafficConfig, WindowConfig,
)
from coop_access.core.pipeline import (
    SimulationPipeline,
    TrialOutcome,
    aggregate_outcomes,
    apply_axis,
    chain_fusion_gap,
    compute_edr,
    compute_nmse,
    oracle_check,
    qf_df_compare,
    run_trials,
    se_check,
    sweep,
    trial_seeds,
)
from coop_access.data_export import ResultExporter
from coop_access.netgen import build_custom_layout


def tiny_config(**kwargs) -> ExperimentConfig:
    """One cell, eight users, four frames"""
    config = ExperimentConfig(
        network=NetworkConfig(tiers=1, users_per_cell=8),
        window=WindowConfig(n_frames=4, window_size=2, step=2, target_offset=0),
        inference=InferenceConfig(i_max=20),
        pilot_length=6,
        trials=2,
        seed=7,
        se_samples=200,
    )
    return replace(config, **kwargs)


class TestMetrics(unittest.TestCase):
    """Test EDR and NMSE"""

    def test_compute_edr(self):
        truth = np.array([True, False, False, True])
        self.assertEqual(compute_edr(truth, truth), 0.0)
        self.assertEqual(compute_edr(~truth, truth), 1.0)
        decisions = np.zeros(100, dtype=bool)
        decisions[:3] = True
        self.assertAlmostEqual(compute_edr(decisions, np.zeros(100, dtype=bool)), 0.03)
        with self.assertRaises(ValueError):
            compute_edr(truth, truth[:2])

    def test_compute_nmse(self):
        x = np.array([[1.0 + 1.0j, 2.0], [0.5j, -1.0]])
        mask = np.ones(x.shape, dtype=bool)
        self.assertEqual(compute_nmse(x, x, mask), -200.0)
        self.assertAlmostEqual(compute_nmse(np.zeros_like(x), x, mask), 0.0)
        self.assertAlmostEqual(compute_nmse(x / 2, x, mask), 10 * np.log10(0.25))

    def test_nmse_ignores_pairs_outside_mask(self):
        x = np.array([[1.0, 5.0]])
        x_hat = np.array([[1.0, 0.0]])
        self.assertEqual(compute_nmse(x_hat, x, np.array([[True, False]])), -200.0)

    def test_nmse_zero_energy(self):
        x = np.zeros((2, 2), dtype=complex)
        with self.assertLogs('coop_access.core.pipeline', level='WARNING'):
            self.assertTrue(np.isnan(compute_nmse(x, x, np.ones((2, 2), dtype=bool))))


class TestSeeds(unittest.TestCase):
    """Test trial_seeds"""

    def test_deterministic_and_distinct(self):
        first = trial_seeds(2024, 3)
        self.assertEqual(first, trial_seeds(2024, 3))
        self.assertEqual(set(first), {'layout', 'trace', 'pilots', 'frames'})
        self.assertEqual(len(set(first.values())), 4)
        self.assertNotEqual(first, trial_seeds(2024, 4))
        self.assertNotEqual(first, trial_seeds(2025, 3))


class TestAggregation(unittest.TestCase):
    """Test aggregate_outcomes"""

    def setUp(self):
        self.outcomes = [
            TrialOutcome(0, np.array([0.0, 0.5]), np.array([1.0, 1.0]), np.array([10.0, 10.0]), 1),
            TrialOutcome(1, np.array([1.0, 0.5]), np.array([0.0, 3.0]), np.array([10.0, 30.0]), 2),
        ]

    def test_means(self):
        report = aggregate_outcomes(self.outcomes)
        self.assertEqual(report.edr_per_frame, [0.5, 0.5])
        self.assertAlmostEqual(report.nmse_db_per_frame[0], 10 * np.log10(1.0 / 20.0))
        self.assertAlmostEqual(report.nmse_db_per_frame[1], -10.0)
        self.assertAlmostEqual(report.mean_nmse_db, 10 * np.log10(5.0 / 60.0))
        self.assertEqual(report.mean_edr, 0.5)
        self.assertEqual(report.trials, 2)
        self.assertEqual(report.non_converged_windows, 3)
        self.assertAlmostEqual(report.edr_half_width, 1.96 * 0.5 / np.sqrt(2))

    def test_failed_trials_excluded(self):
        with self.assertLogs('coop_access.core.pipeline', level='WARNING'):
            report = aggregate_outcomes(self.outcomes + [None])
        self.assertEqual(report.trials, 2)
        self.assertEqual(report.failed_trials, 1)

    def test_all_failed(self):
        with self.assertRaises(RuntimeError):
            aggregate_outcomes([None, None])


class TestSimulationPipeline(unittest.TestCase):
    """Test trials end to end"""

    def test_generate_trial(self):
        pipeline = SimulationPipeline(tiny_config())
        data = pipeline.generate_trial(1)
        again = pipeline.generate_trial(1)
        self.assertEqual(data.seeds, trial_seeds(7, 1))
        self.assertEqual(data.layout.n_users, 8)
        self.assertEqual(data.trace.lam.shape, (8, 4))
        self.assertEqual(data.signals.y.shape[0], 4)
        np.testing.assert_array_equal(data.signals.y, again.signals.y)

    def test_fixed_layout(self):
        layout = build_custom_layout(np.full((8, 1), 1e-9))
        pipeline = SimulationPipeline(tiny_config(), layout=layout)
        self.assertIs(pipeline.generate_trial(0).layout, layout)

    def test_run_is_deterministic(self):
        first = run_trials(tiny_config())
        second = run_trials(tiny_config(workers=2))
        self.assertEqual(first.trials, 2)
        np.testing.assert_array_equal(first.edr_per_frame, second.edr_per_frame)
        np.testing.assert_array_equal(first.nmse_db_per_frame, second.nmse_db_per_frame)
        for edr in first.edr_per_frame:
            self.assertGreaterEqual(edr, 0.0)
            self.assertLessEqual(edr, 1.0)

    def test_cs_mode_decides_frame_by_frame(self):
        config = tiny_config(inference=InferenceConfig(i_max=20, mode=DetectionMode.CS))
        schedule = SimulationPipeline(config).schedule()
        self.assertEqual(len(schedule.windows), 4)
        self.assertTrue(all(w.T_w == 1 and w.delta_w == 1 for w in schedule.windows))
        self.assertEqual(len(SimulationPipeline(tiny_config()).schedule().windows), 2)

    def test_cs_mode_equals_single_frame_windows(self):
        base = tiny_config(network=NetworkConfig(tiers=1, users_per_cell=20), pilot_length=10,
                           window=WindowConfig(n_frames=6, window_size=3, step=2, target_offset=1))
        cs = run_trials(replace(base, inference=replace(base.inference, mode=DetectionMode.CS)))
        single = run_trials(apply_axis(base, 'T_w', 1))
        np.testing.assert_array_equal(cs.edr_per_frame, single.edr_per_frame)
        np.testing.assert_array_equal(cs.nmse_db_per_frame, single.nmse_db_per_frame)

    def test_progress_callback(self):
        callback = Mock()
        result = SimulationPipeline(tiny_config(trials=1), callback).run()
        self.assertTrue(result.success)
        self.assertEqual(result.stage, ProcessingStage.COMPLETED)
        callback.assert_any_call("Aggregating metrics", 100.0)

    def test_iteration_log(self):
        pipeline = SimulationPipeline(tiny_config(trials=1), record_iterations=True)
        self.assertTrue(pipeline.run().success)
        self.assertEqual(sorted(pipeline.iteration_log), [0, 1])
        self.assertEqual(pipeline.iteration_log[0][0].iteration, 1)

    def test_quantize_and_forward(self):
        config = tiny_config(fronthaul=FronthaulConfig(mode=FronthaulMode.QF, bits_per_sample=6))
        pipeline = SimulationPipeline(config)
        quantizers = pipeline.observation_quantizers(pipeline.generate_trial(0).layout,
                                                     config.activity_params())
        self.assertEqual([q.bits for q in quantizers], [3])
        result = pipeline.run()
        self.assertTrue(result.success)
        self.assertEqual(result.data.trials, 2)

    def test_detect_and_forward(self):
        config = tiny_config(fronthaul=FronthaulConfig(mode=FronthaulMode.DF, bits_per_llr=3))
        report = run_trials(config)
        self.assertEqual(report.failed_trials, 0)

    def test_infeasible_budget_fails_run(self):
        config = tiny_config(fronthaul=FronthaulConfig(mode=FronthaulMode.QF, budget_bits=0))
        with self.assertLogs('coop_access.core.pipeline', level='ERROR'):
            result = SimulationPipeline(config).run()
        self.assertFalse(result.success)


class TestSweep(unittest.TestCase):
    """Test sweep axes and resumption"""

    def test_apply_axis(self):
        config = ExperimentConfig()
        self.assertEqual(apply_axis(config, 'L', 20).pilot_length, 20)
        self.assertAlmostEqual(apply_axis(config, 'alpha', 0.01).traffic.alpha, 0.01)
        fronthaul = apply_axis(replace(config, fronthaul=FronthaulConfig(bits_per_sample=4)), 'B', 900).fronthaul
        self.assertEqual((fronthaul.budget_bits, fronthaul.bits_per_sample), (900, None))
        window = apply_axis(config, 'T_w', 1).window
        self.assertEqual((window.window_size, window.step, window.target_offset), (1, 1, 0))
        self.assertEqual(apply_axis(config, 'M', 4).system.antennas_per_ap, 4)
        self.assertEqual(apply_axis(config, 'iota', 0.5).inference.threshold, 0.5)
        with self.assertRaises(ValueError):
            apply_axis(config, 'gamma', 1)

    def test_unknown_axis(self):
        with self.assertRaises(ValueError):
            sweep(tiny_config(), 'gamma', [1])

    def test_invalid_point_skipped(self):
        with self.assertLogs('coop_access.core.pipeline', level='WARNING'):
            rows = sweep(tiny_config(), 'T_w', [0])
        self.assertEqual(rows, [])

    def test_resume(self):
        existing = {'axis': 'L', 'value': '6', 'trials': '2', 'failed_trials': '0',
                    'non_converged_windows': '0', 'mean_edr': '0.25', 'edr_half_width': '0',
                    'mean_nmse_db': '-3'}
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "sweep.csv"
            ResultExporter().export_sweep([existing], path)
            with patch('coop_access.core.pipeline.run_trials') as mock_run:
                rows = sweep(tiny_config(), 'L', [6], output_path=str(path))
            mock_run.assert_not_called()
        self.assertEqual(rows[0]['mean_edr'], '0.25')

    def test_sweep_rows(self):
        rows = sweep(tiny_config(trials=1), 'L', [4, 8])
        self.assertEqual([(r['axis'], r['value']) for r in rows], [('L', '4'), ('L', '8')])


class TestCrossChecks(unittest.TestCase):
    """Test the state-evolution, oracle and QF/DF drivers"""

    def test_chain_fusion_gap(self):
        self.assertLess(chain_fusion_gap(), 1e-9)

    def test_oracle_check(self):
        summary = oracle_check(trials=2)
        self.assertEqual(set(summary), {'chain_fusion_gap', 'ranking_agreement', 'compared'})
        self.assertLess(summary['chain_fusion_gap'], 1e-9)

    def test_se_check(self):
        records = se_check(tiny_config(), iterations=3, trials=1)
        self.assertEqual([r.iteration for r in records], [0, 1, 2, 3])
        self.assertAlmostEqual(records[0].predicted_nmse_db, 0.0)

    def test_qf_df_compare(self):
        rows = qf_df_compare(tiny_config(trials=1), budget_bits=120, antennas=(1,))
        self.assertEqual([r['axis'] for r in rows], ['qf_M', 'df_M'])
        self.assertEqual(rows[0]['value'], '1')


if __name__ == '__main__':
    unittest.main(verbosity=2)
