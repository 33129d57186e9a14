"""
Test suite for window.py module

Tests window placement, schedules and latency.
"""

import os
import sys
import unittest

test_dir = os.path.dirname(os.path.abspath(__file__))
project_root = os.path.dirname(test_dir)
sys.path.insert(0, project_root)

from coop_access.window import WindowSpec, make_schedule, mean_latency


class TestWindowSpec(unittest.TestCase):
    """Test WindowSpec validation and helpers"""

    def test_helpers(self):
        spec = WindowSpec(t0=2, T_w=5, t1=4, delta_w=2)
        self.assertEqual(list(spec.frames), [2, 3, 4, 5, 6])
        self.assertEqual(list(spec.target_frames), [4, 5])
        self.assertEqual(spec.target_slice, slice(2, 4))
        self.assertEqual(spec.target_offset, 2)

    def test_invalid_geometry(self):
        with self.assertRaises(ValueError):
            WindowSpec(t0=0, T_w=2, t1=0, delta_w=3)
        with self.assertRaises(ValueError):
            WindowSpec(t0=0, T_w=4, t1=3, delta_w=2)
        with self.assertRaises(ValueError):
            WindowSpec(t0=-1, T_w=4, t1=0, delta_w=2)
        with self.assertRaises(ValueError):
            WindowSpec(t0=0, T_w=0, t1=0, delta_w=1)


class TestMeanLatency(unittest.TestCase):
    """Test the latency formula"""

    def test_middle_target(self):
        self.assertAlmostEqual(mean_latency(WindowSpec(t0=3, T_w=5, t1=5, delta_w=2)), 1.5)

    def test_tail_target(self):
        self.assertAlmostEqual(mean_latency(WindowSpec(t0=3, T_w=5, t1=7, delta_w=1)), 0.0)

    def test_block_mode(self):
        for T_w in (1, 2, 4, 7):
            spec = WindowSpec(t0=0, T_w=T_w, t1=0, delta_w=T_w)
            self.assertAlmostEqual(mean_latency(spec), (T_w - 1) / 2.0)


class TestMakeSchedule(unittest.TestCase):
    """Test make_schedule"""

    def test_sliding_example(self):
        schedule = make_schedule(10, 5, 2, 2)
        third, fourth = schedule.windows[2], schedule.windows[3]
        self.assertEqual(list(third.frames), [2, 3, 4, 5, 6])
        self.assertEqual(list(third.target_frames), [4, 5])
        self.assertEqual(list(fourth.frames), [4, 5, 6, 7, 8])
        self.assertEqual(list(fourth.target_frames), [6, 7])

    def test_frame_by_frame(self):
        schedule = make_schedule(6, 1, 1, 0)
        self.assertEqual(len(schedule.windows), 6)
        for t, window in enumerate(schedule.windows):
            self.assertEqual(list(window.frames), [t])
            self.assertEqual(list(window.target_frames), [t])

    def test_each_frame_decided_once(self):
        for T, T_w, delta_w, offset in ((10, 4, 2, 1), (11, 4, 2, 1), (7, 5, 3, 2), (3, 6, 2, 4)):
            schedule = make_schedule(T, T_w, delta_w, offset)
            decided = [t for w in schedule.windows for t in w.target_frames]
            self.assertEqual(decided, list(range(T)))
            for t in range(T):
                self.assertIn(t, schedule.decider_of(t).target_frames)

    def test_windows_stay_inside_trace(self):
        schedule = make_schedule(10, 4, 2, 1)
        for window in schedule.windows:
            self.assertGreaterEqual(window.t0, 0)
            self.assertLessEqual(window.t0 + window.T_w, 10)
            self.assertLessEqual(window.T_w, 4)
        self.assertEqual(list(schedule.windows[0].frames), [0, 1, 2])
        self.assertEqual(list(schedule.windows[1].frames), [1, 2, 3, 4])

    def test_invalid_arguments(self):
        with self.assertRaises(ValueError):
            make_schedule(0, 4, 2, 1)
        with self.assertRaises(ValueError):
            make_schedule(10, 4, 5, 0)
        with self.assertRaises(ValueError):
            make_schedule(10, 4, 2, 3)

    def test_table(self):
        table = make_schedule(4, 2, 2, 0).table()
        lines = table.splitlines()
        self.assertEqual(len(lines), 3)
        self.assertIn("0..1", lines[1])
        self.assertIn("2..3", lines[2])

    def test_schedule_latency(self):
        schedule = make_schedule(4, 2, 2, 0)
        self.assertAlmostEqual(schedule.mean_latency(), 0.5)


if __name__ == '__main__':
    unittest.main(verbosity=2)
