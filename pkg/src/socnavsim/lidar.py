"""Laser scanner simulation and heading-calibrated motion features.

The scanner sweeps a 270 degree fan at a fixed rate; the motion feature
stacks the last K scans after rotating each historical sweep into the
current heading frame by an index shift, so that the stacked matrix
varies over time only where the surroundings moved (robot translation
is deliberately left in).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Shape, Vec2, cast_fan, wrap_angle

FAN_ANGLE = 1.5 * math.pi  # 270 degrees
RANGE_MIN = 0.1
RANGE_MAX = 10.0
HISTORY_LEN = 40


@dataclass(frozen=True)
class LidarConfig:
    beam_count: int = 1080
    range_min: float = RANGE_MIN
    range_max: float = RANGE_MAX
    noise_sigma: float = 0.0  # Gaussian range noise, disabled by default

    def __post_init__(self):
        if self.beam_count < 2:
            raise ValueError("need at least two beams")
        if not 0.0 < self.range_min < self.range_max:
            raise ValueError("invalid range bounds")

    @property
    def angle_increment(self) -> float:
        return FAN_ANGLE / (self.beam_count - 1)

    def beam_offsets(self) -> np.ndarray:
        """Beam angles relative to the robot heading, ascending."""
        return np.linspace(-FAN_ANGLE / 2.0, FAN_ANGLE / 2.0, self.beam_count)


@dataclass(frozen=True)
class Scan:
    ranges: np.ndarray
    heading_at_capture: float
    timestamp: int

    def __post_init__(self):
        r = np.asarray(self.ranges, dtype=float)
        if r.ndim != 1:
            raise ValueError("ranges must be a 1-D array")
        if r.size and (r.min() < RANGE_MIN - 1e-12 or r.max() > RANGE_MAX + 1e-12):
            raise ValueError("scan ranges outside sensor bounds")
        object.__setattr__(self, "ranges", r)


@dataclass(frozen=True)
class MotionFeature:
    matrix: np.ndarray  # (K, B), rows oldest -> newest
    goal_vector: tuple[float, float]  # (distance m, bearing rad in [-pi, pi])

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        object.__setattr__(self, "matrix", m)

    @property
    def current_scan_ranges(self) -> np.ndarray:
        """Last row: the current sweep, uncalibrated."""
        return self.matrix[-1]


def simulate_scan(
    shapes: list[Shape],
    position: Vec2,
    heading: float,
    timestamp: int,
    config: LidarConfig,
    noise_rng: np.random.Generator | None = None,
) -> Scan:
    """Sweep the fan centered on the robot heading and clamp returns."""
    angles = heading + config.beam_offsets()
    ranges = cast_fan(position, angles, shapes, config.range_max)
    if config.noise_sigma > 0.0 and noise_rng is not None:
        ranges = ranges + noise_rng.normal(0.0, config.noise_sigma, ranges.shape)
    np.clip(ranges, config.range_min, config.range_max, out=ranges)
    return Scan(ranges=ranges, heading_at_capture=heading, timestamp=timestamp)


def calibrate(prev: Scan, current_heading: float, config: LidarConfig) -> Scan:
    """Shift a past sweep into the current heading frame.

    Beam i of the result takes the value previously at i + shift, where
    shift = round(delta_heading / angle_increment); beams shifted in
    from outside the previous fan read range_max.
    """
    delta = wrap_angle(current_heading - prev.heading_at_capture)
    shift = int(round(delta / config.angle_increment))
    b = prev.ranges.size
    out = np.full(b, config.range_max)
    if shift >= 0:
        if shift < b:
            out[: b - shift] = prev.ranges[shift:]
    else:
        if -shift < b:
            out[-shift:] = prev.ranges[: b + shift]
    return Scan(ranges=out, heading_at_capture=current_heading, timestamp=prev.timestamp)


def calibration_shift(prev_heading: float, current_heading: float, config: LidarConfig) -> int:
    """Index shift applied by calibrate(); exposed for fill-in bookkeeping."""
    return int(round(wrap_angle(current_heading - prev_heading) / config.angle_increment))


def build_motion_feature(
    history: list[Scan] | tuple[Scan, ...],
    current_heading: float,
    goal_distance: float,
    goal_bearing: float,
    config: LidarConfig,
) -> MotionFeature:
    """Stack the last K sweeps, each calibrated to the current heading.

    The history must hold exactly K scans ordered oldest to newest; at
    episode start the caller pre-fills it by repeating the first scan.
    """
    if len(history) != HISTORY_LEN:
        raise ValueError(f"need exactly {HISTORY_LEN} scans, got {len(history)}")
    rows = [calibrate(s, current_heading, config).ranges for s in history]
    return MotionFeature(
        matrix=np.stack(rows),
        goal_vector=(goal_distance, wrap_angle(goal_bearing)),
    )
