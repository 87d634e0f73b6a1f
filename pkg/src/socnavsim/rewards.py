"""Safety-aware reward terms computed from full simulator state.

Three parts: a graded penalty for letting anything close within the
robot's ego-safety circle (terminal on contact), a penalty for steering
the robot's forward interaction zone into those of nearby pedestrians,
and goal shaping with a terminal arrival bonus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .crowd import STILL_SPEED, Pedestrian
from .geometry import Circle, OrientedRect, Shape, Vec2, closest_distance, rects_intersect

EGO_MARGIN = 0.4  # ego-safety circle radius is robot radius + this
COLLISION_PENALTY = -10.0
EGO_SCALE = -0.25
SOCIAL_SCALE = -0.1
SOCIAL_RANGE = 5.0  # pedestrians beyond this are not considered
GOAL_BONUS = 10.0
GOAL_SCALE = -0.01
LOOKAHEAD_DT = 0.77
MIN_HEADWAY = 0.5


@dataclass(frozen=True)
class SafetyAssessment:
    d_t: float
    ego_violation: bool
    violations: int
    considered_pedestrians: int
    r_ego: float
    r_social: float
    r_goal: float

    @property
    def total(self) -> float:
        return self.r_ego + self.r_social + self.r_goal


def ego_reward(
    robot: Circle,
    pedestrians: list[Pedestrian],
    obstacles: list[Shape],
) -> tuple[float, bool, float]:
    """Graded ego-safety penalty; returns (reward, violation flag, d_t)."""
    shapes: list[Shape] = [p.body() for p in pedestrians] + list(obstacles)
    if not shapes:
        return 0.0, False, math.inf
    d_t = closest_distance(robot, shapes)
    zone = robot.radius + EGO_MARGIN
    if d_t <= 0.0:
        return COLLISION_PENALTY, True, d_t
    if d_t < zone:
        return EGO_SCALE * (1.0 - d_t / zone), True, d_t
    return 0.0, False, d_t


def social_zone(
    position: Vec2,
    motion_heading: float,
    radius: float,
    speed: float,
    lookahead_dt: float = LOOKAHEAD_DT,
    min_headway: float = MIN_HEADWAY,
) -> OrientedRect:
    """Forward interaction rectangle of one agent.

    Extends from the agent center along its motion direction by
    radius/2 + min_headway + lookahead_dt * speed, spanning one bounding
    diameter laterally.  Callers pass the last motion heading for
    near-stationary agents (speed below 0.05 m/s).
    """
    if speed < 0.0:
        raise ValueError("speed must be nonnegative")
    length = radius / 2.0 + min_headway + lookahead_dt * speed
    return OrientedRect(position, motion_heading, half_width=radius, length=length)


def pedestrian_zone(ped: Pedestrian) -> OrientedRect:
    speed = ped.velocity.norm()
    heading = ped.velocity.angle() if speed >= STILL_SPEED else ped.motion_heading
    return social_zone(ped.position, heading, ped.radius, speed)


def social_reward(
    robot_zone: OrientedRect,
    robot_position: Vec2,
    pedestrians: list[Pedestrian],
) -> tuple[float, int, int]:
    """Zone-intersection penalty; returns (reward, violations, considered).

    Only pedestrians within 5 m take part in the intersection checks,
    but the penalty is normalized by the total number of pedestrians in
    the scene; an empty scene yields zero.
    """
    if not pedestrians:
        return 0.0, 0, 0
    considered = [p for p in pedestrians if (p.position - robot_position).norm() <= SOCIAL_RANGE]
    violations = sum(1 for p in considered if rects_intersect(robot_zone, pedestrian_zone(p)))
    reward = SOCIAL_SCALE * violations / len(pedestrians)
    return reward, violations, len(considered)


def goal_reward(p_t: Vec2, p_star: Vec2, p_0: Vec2, reached: bool) -> float:
    """Arrival bonus, else a small penalty scaled by remaining distance.

    The distance ratio is clamped at 1 so the shaping term never exceeds
    the magnitude it has at the start position.
    """
    if reached:
        return GOAL_BONUS
    denom = (p_0 - p_star).norm()
    if denom <= 0.0:
        raise ValueError("start must differ from target")
    ratio = min(1.0, (p_t - p_star).norm() / denom)
    return GOAL_SCALE * ratio


def assess(
    robot: Circle,
    robot_motion_heading: float,
    robot_speed: float,
    pedestrians: list[Pedestrian],
    obstacles: list[Shape],
    p_star: Vec2,
    p_0: Vec2,
    reached: bool,
) -> SafetyAssessment:
    """All three reward parts from one full state snapshot."""
    r_ego, ego_violation, d_t = ego_reward(robot, pedestrians, obstacles)
    zone = social_zone(robot.center, robot_motion_heading, robot.radius, robot_speed)
    r_social, violations, considered = social_reward(zone, robot.center, pedestrians)
    r_goal = goal_reward(robot.center, p_star, p_0, reached)
    return SafetyAssessment(
        d_t=d_t,
        ego_violation=ego_violation,
        violations=violations,
        considered_pedestrians=considered,
        r_ego=r_ego,
        r_social=r_social,
        r_goal=r_goal,
    )
