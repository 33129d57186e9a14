"""
Sliding Window Module - generalized detection windows

A window covers frames t0 .. t0+T_w-1 and finalizes decisions only for its
target sub-window t1 .. t1+delta_w-1; the next window advances by delta_w.
Frames are 0-indexed.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WindowSpec:
    """One window placement and its target sub-window"""
    t0: int
    T_w: int
    t1: int
    delta_w: int

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise ValueError("; ".join(errors))

    def validate(self) -> List[str]:
        errors = []
        if self.T_w < 1:
            errors.append(f"T_w must be >= 1, got {self.T_w}")
        if self.delta_w < 1:
            errors.append(f"delta_w must be >= 1, got {self.delta_w}")
        if self.delta_w > self.T_w:
            errors.append(f"delta_w={self.delta_w} exceeds T_w={self.T_w}")
        if self.t0 < 0:
            errors.append(f"t0 must be >= 0, got {self.t0}")
        if not self.t0 <= self.t1 <= self.t0 + self.T_w - self.delta_w:
            errors.append(f"target start t1={self.t1} outside [{self.t0}, {self.t0 + self.T_w - self.delta_w}]")
        return errors

    @property
    def frames(self) -> range:
        return range(self.t0, self.t0 + self.T_w)

    @property
    def target_frames(self) -> range:
        return range(self.t1, self.t1 + self.delta_w)

    @property
    def target_slice(self) -> slice:
        """Target sub-window as a slice into window-local frame indices"""
        start = self.t1 - self.t0
        return slice(start, start + self.delta_w)

    @property
    def target_offset(self) -> int:
        return self.t1 - self.t0


def mean_latency(spec: WindowSpec) -> float:
    """Average detection latency in frames: t0 + T_w - t1 - (delta_w + 1) / 2"""
    return spec.t0 + spec.T_w - spec.t1 - (spec.delta_w + 1) / 2.0


@dataclass(frozen=True)
class WindowSchedule:
    """Ordered windows whose targets tile frames 0..T-1 exactly once"""
    windows: Tuple[WindowSpec, ...]
    n_frames: int
    decided_by: Tuple[int, ...]

    def decider_of(self, frame: int) -> WindowSpec:
        """Window whose target sub-window decides the given frame"""
        return self.windows[self.decided_by[frame]]

    def mean_latency(self) -> float:
        """Latency averaged over all decided frames"""
        total = sum(mean_latency(w) * w.delta_w for w in self.windows)
        return total / self.n_frames

    def table(self) -> str:
        """Printable audit table"""
        lines = [f"{'win':>4} {'frames':>12} {'targets':>12} {'latency':>8}"]
        for i, w in enumerate(self.windows):
            frames = f"{w.t0}..{w.t0 + w.T_w - 1}"
            targets = f"{w.t1}..{w.t1 + w.delta_w - 1}"
            lines.append(f"{i:>4} {frames:>12} {targets:>12} {mean_latency(w):>8.2f}")
        return "\n".join(lines)


def make_schedule(T: int, T_w: int, delta_w: int, target_offset: int) -> WindowSchedule:
    """
    Build the sliding-window schedule.

    Target blocks start at 0, delta_w, 2*delta_w, ... For a block starting at
    t1 the window starts at t1 - target_offset; when that is before frame 0
    the window is truncated to start at 0, and when it runs past the last
    frame it is truncated at T-1. The last target block may be shorter than
    delta_w.

    Args:
        T: Total number of frames
        T_w: Window size
        delta_w: Target size and sliding step
        target_offset: t1 - t0 for full windows

    Returns:
        WindowSchedule covering every frame exactly once
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if T_w < 1 or delta_w < 1 or delta_w > T_w:
        raise ValueError(f"invalid window geometry T_w={T_w}, delta_w={delta_w}")
    if not 0 <= target_offset <= T_w - delta_w:
        raise ValueError(f"target_offset={target_offset} outside [0, {T_w - delta_w}]")

    windows = []
    decided_by = []
    for t1 in range(0, T, delta_w):
        delta = min(delta_w, T - t1)
        t0 = max(t1 - target_offset, 0)
        end = min(t1 - target_offset + T_w, T)
        end = max(end, t1 + delta)
        windows.append(WindowSpec(t0=t0, T_w=end - t0, t1=t1, delta_w=delta))
        decided_by.extend([len(windows) - 1] * delta)

    schedule = WindowSchedule(windows=tuple(windows), n_frames=T, decided_by=tuple(decided_by))
    logger.debug(f"Schedule with {len(windows)} windows over {T} frames")
    return schedule


__all__ = ['WindowSpec', 'WindowSchedule', 'make_schedule', 'mean_latency']
