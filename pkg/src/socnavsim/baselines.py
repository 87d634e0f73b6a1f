"""Scripted baselines: a greedy scan-window planner and an external hook.

The greedy planner scores every beam by windowed clearance minus a
goal-deviation penalty and steers proportionally toward the winner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .lidar import LidarConfig, MotionFeature

V_MAX = 1.5


@dataclass(frozen=True)
class GreedyParams:
    window_beams_at_180: int = 21  # scaled proportionally with beam count
    goal_bias: float = 2.0  # meters of clearance per radian of deviation
    heading_gain: float = 1.5
    stop_clearance: float = 0.5
    speed_per_clearance: float = 0.5
    hull_margin: float = 0.45  # stand-off subtracted from the winning range
    inflate_radius: float = 0.35  # hull radius eroding each return angularly


def _window_means(ranges: np.ndarray, window: int) -> np.ndarray:
    """Box-averaged ranges; edge windows shrink instead of zero-padding."""
    half = window // 2
    csum = np.concatenate([[0.0], np.cumsum(ranges)])
    n = ranges.size
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, n)
    return (csum[hi] - csum[lo]) / (hi - lo)


def _inflate_returns(
    ranges: np.ndarray, delta_theta: float, radius: float, range_max: float
) -> np.ndarray:
    """Erode the scan: each return blocks beams passing within the hull
    radius of it, so a beam's value is the distance the body (not just
    the ray) can travel."""
    safe = ranges.copy()
    n = ranges.size
    for j in np.flatnonzero(ranges < range_max - 1e-9):
        half = int(math.atan2(radius, ranges[j]) / delta_theta)
        if half <= 0:
            continue
        lo = max(0, j - half)
        hi = min(n, j + half + 1)
        np.minimum(safe[lo:hi], ranges[j], out=safe[lo:hi])
    return safe


def greedy_plan(
    ranges: np.ndarray,
    beam_offsets: np.ndarray,
    goal_bearing: float,
    goal_distance: float = 10.0,
    params: GreedyParams = GreedyParams(),
    range_max: float = 10.0,
) -> tuple[float, float]:
    """Pick the best beam and return (v_l, heading offset).

    Windowed clearance is capped at the goal distance (free range past
    the target is worthless), and the goal-deviation weight scales with
    the scene's best clearance so that uniformly scaling all ranges
    never changes the winner.  Ties break toward the goal side, then
    toward the lowest index.  Speed follows the winning beam's own range
    less a hull stand-off and drops during hard turns; when every
    windowed clearance falls under the stop threshold the planner halts
    forward motion and keeps turning.
    """
    window = max(3, int(round(params.window_beams_at_180 * ranges.size / 180.0)) | 1)
    ranges = np.asarray(ranges, dtype=float)
    delta_theta = float(beam_offsets[1] - beam_offsets[0])
    safe = _inflate_returns(ranges, delta_theta, params.inflate_radius, range_max)
    clearance = _window_means(safe, window)
    useful = np.minimum(clearance, goal_distance + params.stop_clearance)
    bias = params.goal_bias * useful.max() / range_max
    score = useful - bias * np.abs(beam_offsets - goal_bearing)
    best_score = score.max()
    tied = np.flatnonzero(score >= best_score - 1e-12)
    if tied.size > 1:
        deviations = np.abs(beam_offsets[tied] - goal_bearing)
        tied = tied[deviations <= deviations.min() + 1e-12]
    best = int(tied[0])

    angle = float(beam_offsets[best])
    v_w = float(np.clip(params.heading_gain * angle, -math.pi, math.pi))
    if clearance.max() < params.stop_clearance:
        return 0.0, v_w
    v_l = params.speed_per_clearance * (float(safe[best]) - params.hull_margin)
    # turn mostly in place when the winner sits far off the nose
    v_l *= max(0.1, math.cos(min(abs(angle), math.pi / 2.0)))
    v_l = float(np.clip(v_l, 0.0, V_MAX))
    return v_l, v_w


class GreedyPolicy:
    """Greedy planner adapted to the shared policy interface.

    Reads the raw current sweep (last feature row) plus the goal vector.
    The v_l = 0 stop case encodes as the zero action, which the twist
    mapping cannot combine with a turn command.
    """

    def __init__(self, lidar_config: LidarConfig, params: GreedyParams = GreedyParams()):
        self.name = "greedy"
        self.params = params
        self._offsets = lidar_config.beam_offsets()

    def begin_episode(self, obs: MotionFeature) -> None:
        if obs.matrix.shape[1] != self._offsets.size:
            raise ValueError("beam count mismatch between planner and observation")

    def act(self, obs: MotionFeature) -> tuple[float, float]:
        distance, bearing = obs.goal_vector
        v_l, v_w = greedy_plan(
            obs.current_scan_ranges, self._offsets, bearing, distance, self.params
        )
        return v_l * math.cos(v_w), v_l * math.sin(v_w)


class ExternalCrowdPolicy(Protocol):
    """Hook for planners that consume full pedestrian states.

    Implementations receive the robot pose tuple (x, y, heading), the
    goal position, and per-pedestrian (x, y, vx, vy, radius) tuples, and
    return a (v_l, heading offset) twist.  No model ships with this
    package; the evaluation runner feeds simulator ground truth to any
    object satisfying this protocol.
    """

    def plan(
        self,
        robot: tuple[float, float, float],
        goal: tuple[float, float],
        pedestrians: list[tuple[float, float, float, float, float]],
    ) -> tuple[float, float]: ...


class FullStatePolicyAdapter:
    """Adapts an ExternalCrowdPolicy to the shared interface.

    The evaluation runner recognizes `wants_state` and calls
    `observe_state` with simulator ground truth before each act().
    """

    wants_state = True

    def __init__(self, planner: ExternalCrowdPolicy, name: str = "external"):
        self.planner = planner
        self.name = name
        self._state = None

    def begin_episode(self, obs: MotionFeature) -> None:
        self._state = None

    def observe_state(self, robot, goal, pedestrians) -> None:
        self._state = (robot, goal, pedestrians)

    def act(self, obs: MotionFeature) -> tuple[float, float]:
        if self._state is None:
            raise RuntimeError("observe_state() was not called before act()")
        v_l, v_w = self.planner.plan(*self._state)
        return v_l * math.cos(v_w), v_l * math.sin(v_w)
