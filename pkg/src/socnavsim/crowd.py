"""ORCA-driven pedestrian simulation with randomized behaviors.

Each pedestrian picks, every step, the velocity closest to its preferred
velocity among those satisfying per-neighbor reciprocal half-plane
constraints (2D linear program, with a fallback that minimizes the worst
violation when the constraints are infeasible).  Pedestrians avoid each
other and static obstacles but never see the robot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Circle, OrientedRect, Segment, Shape, Vec2

ORCA_EPSILON = 1e-5
AGENT_TIME_HORIZON = 2.0
OBSTACLE_TIME_HORIZON = 1.0
GOAL_REACHED_DIST = 0.3
MEAN_STOP_SECONDS = 1.0
STILL_SPEED = 0.05


@dataclass(frozen=True)
class Pedestrian:
    id: int
    position: Vec2
    velocity: Vec2
    pref_speed: float
    radius: float  # bounding circle used by avoidance and collision checks
    goal: Vec2
    rect_shape: bool = False  # rendered to lidar as an oriented rectangle
    stopped_steps: int = 0  # >0 while in a stop-and-go pause
    motion_heading: float = 0.0  # last heading of actual motion

    @property
    def walking(self) -> bool:
        return self.stopped_steps == 0

    def body(self) -> Circle:
        return Circle(self.position, self.radius)

    def lidar_shape(self) -> Shape:
        """Shape seen by the scanner; avoidance always uses the circle."""
        if not self.rect_shape:
            return self.body()
        side = self.radius / math.sqrt(2.0)
        fwd = Vec2.from_angle(self.motion_heading)
        anchor = self.position - fwd * side
        return OrientedRect(anchor, self.motion_heading, half_width=side, length=2.0 * side)


@dataclass(frozen=True)
class CrowdConfig:
    count: int = 8
    area: tuple[float, float] = (5.0, 5.0)
    center: tuple[float, float] = (0.0, 0.0)
    walk_in_probability: float = 0.0  # per step
    stop_go_probability: float = 0.0  # per step, walking -> stopped
    speed_range: tuple[float, float] = (0.5, 1.5)
    radius_range: tuple[float, float] = (0.15, 0.4)
    rect_shape_probability: float = 0.3
    max_count: int = 20  # cap on walk-in growth
    seed: int = 0

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("count must be nonnegative")
        for lo, hi in (self.speed_range, self.radius_range):
            if not 0.0 < lo <= hi:
                raise ValueError("ranges must be positive and nonempty")


@dataclass(frozen=True)
class _Line:
    point: Vec2
    direction: Vec2


def _det(a: Vec2, b: Vec2) -> float:
    return a.x * b.y - a.y * b.x


def _linear_program1(lines, line_no, radius, opt_velocity, direction_opt):
    """Clip the optimum onto constraint line line_no; None when infeasible."""
    line = lines[line_no]
    dot = line.point.dot(line.direction)
    discriminant = dot * dot + radius * radius - line.point.dot(line.point)
    if discriminant < 0.0:
        return None  # speed circle misses the line entirely
    sqrt_disc = math.sqrt(discriminant)
    t_left = -dot - sqrt_disc
    t_right = -dot + sqrt_disc

    for i in range(line_no):
        denominator = _det(line.direction, lines[i].direction)
        numerator = _det(lines[i].direction, line.point - lines[i].point)
        if abs(denominator) <= ORCA_EPSILON:
            if numerator < 0.0:
                return None
            continue
        t = numerator / denominator
        if denominator >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return None

    if direction_opt:
        if opt_velocity.dot(line.direction) > 0.0:
            t = t_right
        else:
            t = t_left
    else:
        t = line.direction.dot(opt_velocity - line.point)
        t = min(t_right, max(t_left, t))
    return line.point + line.direction * t


def _linear_program2(lines, radius, opt_velocity, direction_opt):
    """Sequential 2D LP; returns (result, index of first failing line or len)."""
    if direction_opt:
        result = opt_velocity * radius
    elif opt_velocity.dot(opt_velocity) > radius * radius:
        result = opt_velocity.normalized() * radius
    else:
        result = opt_velocity

    for i, line in enumerate(lines):
        if _det(line.direction, line.point - result) > 0.0:
            new_result = _linear_program1(lines, i, radius, opt_velocity, direction_opt)
            if new_result is None:
                return result, i
            result = new_result
    return result, len(lines)


def _linear_program3(lines, num_fixed, begin_line, radius, result):
    """Minimize the maximum constraint violation when the 2D LP failed.

    The first num_fixed lines (static obstacles) stay hard; the rest are
    relaxed uniformly, equivalent to the 3D program of the reference
    formulation projected back to 2D.
    """
    distance = 0.0
    for i in range(begin_line, len(lines)):
        if _det(lines[i].direction, lines[i].point - result) > distance:
            proj_lines = list(lines[:num_fixed])
            for j in range(num_fixed, i):
                determinant = _det(lines[i].direction, lines[j].direction)
                if abs(determinant) <= ORCA_EPSILON:
                    if lines[i].direction.dot(lines[j].direction) > 0.0:
                        continue  # parallel, same direction
                    point = (lines[i].point + lines[j].point) * 0.5
                else:
                    t = _det(lines[j].direction, lines[i].point - lines[j].point) / determinant
                    point = lines[i].point + lines[i].direction * t
                direction = (lines[j].direction - lines[i].direction).normalized()
                proj_lines.append(_Line(point, direction))

            opt_direction = Vec2(-lines[i].direction.y, lines[i].direction.x)
            new_result, fail = _linear_program2(proj_lines, radius, opt_direction, True)
            if fail >= len(proj_lines):
                result = new_result
            distance = _det(lines[i].direction, lines[i].point - result)
    return result


def _avoidance_line(
    rel_position: Vec2,
    rel_velocity: Vec2,
    combined_radius: float,
    inv_horizon: float,
    inv_dt: float,
    responsibility: float,
    velocity: Vec2,
) -> _Line:
    """Half-plane of velocities that stay clear of one neighbor."""
    dist_sq = rel_position.dot(rel_position)
    combined_sq = combined_radius * combined_radius

    if dist_sq > combined_sq:
        w = rel_velocity - rel_position * inv_horizon
        w_len_sq = w.dot(w)
        dot1 = w.dot(rel_position)
        if dot1 < 0.0 and dot1 * dot1 > combined_sq * w_len_sq:
            # project onto the cut-off circle
            w_len = math.sqrt(w_len_sq)
            unit_w = Vec2(w.x / w_len, w.y / w_len)
            direction = Vec2(unit_w.y, -unit_w.x)
            u = unit_w * (combined_radius * inv_horizon - w_len)
        else:
            # project onto a cone leg
            leg = math.sqrt(dist_sq - combined_sq)
            if _det(rel_position, w) > 0.0:
                direction = Vec2(
                    rel_position.x * leg - rel_position.y * combined_radius,
                    rel_position.x * combined_radius + rel_position.y * leg,
                ) * (1.0 / dist_sq)
            else:
                direction = Vec2(
                    rel_position.x * leg + rel_position.y * combined_radius,
                    -rel_position.x * combined_radius + rel_position.y * leg,
                ) * (-1.0 / dist_sq)
            dot2 = rel_velocity.dot(direction)
            u = direction * dot2 - rel_velocity
    else:
        # already colliding: resolve within one time step
        w = rel_velocity - rel_position * inv_dt
        w_len = w.norm()
        if w_len > 0.0:
            unit_w = Vec2(w.x / w_len, w.y / w_len)
        else:
            unit_w = Vec2(1.0, 0.0)
        direction = Vec2(unit_w.y, -unit_w.x)
        u = unit_w * (combined_radius * inv_dt - w_len)

    return _Line(velocity + u * responsibility, direction)


def _obstacle_discs(obstacles: list[Shape]) -> list[Circle]:
    """Static obstacles as bounding discs for avoidance purposes."""
    discs = []
    for shape in obstacles:
        if isinstance(shape, Circle):
            discs.append(shape)
        elif isinstance(shape, OrientedRect):
            fwd, _ = shape.axes()
            center = shape.anchor + fwd * (shape.length / 2.0)
            radius = math.hypot(shape.length / 2.0, shape.half_width)
            discs.append(Circle(center, max(radius, 1e-3)))
        elif isinstance(shape, Segment):
            continue  # boundary walls: pedestrians are goal-confined instead
        else:
            raise TypeError(f"unsupported shape {type(shape).__name__}")
    return discs


def preferred_velocity(ped: Pedestrian) -> Vec2:
    """Unit vector to the goal scaled by the preferred speed."""
    to_goal = ped.goal - ped.position
    dist = to_goal.norm()
    if dist < 1e-9:
        return Vec2(0.0, 0.0)
    return to_goal * (ped.pref_speed / dist)


def orca_velocity(
    ped: Pedestrian,
    neighbors: list[Pedestrian],
    obstacles: list[Shape],
    dt: float,
    time_horizon: float = AGENT_TIME_HORIZON,
    obstacle_time_horizon: float = OBSTACLE_TIME_HORIZON,
) -> Vec2:
    """New velocity closest to the preferred one under all constraints.

    The robot is never among the neighbors: pedestrians ignore it.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    lines: list[_Line] = []
    inv_dt = 1.0 / dt

    for disc in _obstacle_discs(obstacles):
        rel_position = disc.center - ped.position
        # full responsibility against non-reacting obstacles
        lines.append(
            _avoidance_line(
                rel_position,
                ped.velocity,
                ped.radius + disc.radius,
                1.0 / obstacle_time_horizon,
                inv_dt,
                1.0,
                ped.velocity,
            )
        )
    num_fixed = len(lines)

    for other in neighbors:
        if other.id == ped.id:
            continue
        rel_position = other.position - ped.position
        rel_velocity = ped.velocity - other.velocity
        lines.append(
            _avoidance_line(
                rel_position,
                rel_velocity,
                ped.radius + other.radius,
                1.0 / time_horizon,
                inv_dt,
                0.5,
                ped.velocity,
            )
        )

    pref = preferred_velocity(ped)
    result, fail = _linear_program2(lines, ped.pref_speed, pref, False)
    if fail < len(lines):
        result = _linear_program3(lines, num_fixed, fail, ped.pref_speed, result)
    return result


def _sample_ped(
    ped_id: int,
    position: Vec2,
    goal: Vec2,
    config: CrowdConfig,
    rng: np.random.Generator,
) -> Pedestrian:
    speed = float(rng.uniform(*config.speed_range))
    radius = float(rng.uniform(*config.radius_range))
    rect = bool(rng.random() < config.rect_shape_probability)
    heading = (goal - position).angle() if (goal - position).norm() > 1e-9 else 0.0
    velocity = Vec2.from_angle(heading, speed) if (goal - position).norm() > 1e-9 else Vec2(0.0, 0.0)
    return Pedestrian(
        id=ped_id,
        position=position,
        velocity=velocity,
        pref_speed=speed,
        radius=radius,
        goal=goal,
        rect_shape=rect,
        motion_heading=heading,
    )


def _area_bounds(config: CrowdConfig) -> tuple[float, float, float, float]:
    cx, cy = config.center
    w, h = config.area
    return cx - w / 2.0, cx + w / 2.0, cy - h / 2.0, cy + h / 2.0


def _random_point(config: CrowdConfig, rng: np.random.Generator) -> Vec2:
    x0, x1, y0, y1 = _area_bounds(config)
    return Vec2(float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1)))


def _boundary_point(config: CrowdConfig, rng: np.random.Generator) -> Vec2:
    x0, x1, y0, y1 = _area_bounds(config)
    side = int(rng.integers(0, 4))
    t = float(rng.random())
    if side == 0:
        return Vec2(x0, y0 + t * (y1 - y0))
    if side == 1:
        return Vec2(x1, y0 + t * (y1 - y0))
    if side == 2:
        return Vec2(x0 + t * (x1 - x0), y0)
    return Vec2(x0 + t * (x1 - x0), y1)


def spawn_crowd(config: CrowdConfig, rng: np.random.Generator) -> list[Pedestrian]:
    """Uniformly random pedestrians with random goals inside the area."""
    peds = []
    for i in range(config.count):
        pos = _random_point(config, rng)
        goal = _random_point(config, rng)
        peds.append(_sample_ped(i, pos, goal, config, rng))
    return peds


SCENARIO_KINDS = ("crossing", "towards", "ahead", "random")


def spawn_scenario(
    kind: str,
    count: int,
    config: CrowdConfig,
    rng: np.random.Generator,
    robot_start: Vec2,
    robot_goal: Vec2,
) -> list[Pedestrian]:
    """Structured crowd start states relative to the robot's route.

    crossing: flow perpendicular to the robot-goal axis; towards: walking
    at the robot's start; ahead: walking in the robot's goal direction at
    reduced speed; random: unconstrained intentions.
    """
    if kind not in SCENARIO_KINDS:
        raise ValueError(f"unknown scenario kind {kind!r}; expected one of {SCENARIO_KINDS}")
    axis = (robot_goal - robot_start).normalized()
    perp = Vec2(-axis.y, axis.x)
    x0, x1, y0, y1 = _area_bounds(config)
    span = max(x1 - x0, y1 - y0)
    cfg = config
    if kind == "ahead":
        lo, hi = config.speed_range
        cfg = replace(config, speed_range=(lo * 0.6, max(lo * 0.6 + 1e-3, hi * 0.6)))

    peds: list[Pedestrian] = []
    for i in range(count):
        for _ in range(200):
            pos = _random_point(config, rng)
            if (pos - robot_start).norm() < 1.0:
                continue
            if any((pos - p.position).norm() < 0.9 for p in peds):
                continue
            break
        if kind == "crossing":
            sign = 1.0 if rng.random() < 0.5 else -1.0
            goal = pos + perp * (sign * span)
        elif kind == "towards":
            goal = robot_start - axis * (0.5 * span) + perp * float(rng.uniform(-1.0, 1.0))
        elif kind == "ahead":
            goal = pos + axis * span
        else:
            goal = _random_point(config, rng)
        peds.append(_sample_ped(i, pos, goal, cfg, rng))
    return peds


def step_crowd(
    peds: list[Pedestrian],
    config: CrowdConfig,
    dt: float,
    rng: np.random.Generator,
    obstacles: list[Shape] | None = None,
) -> list[Pedestrian]:
    """Advance all pedestrians by one step of dt seconds.

    New velocities are computed from the previous snapshot and committed
    together.  Handles stop-and-go pauses, goal renewal, and walk-ins;
    fully deterministic under a fixed generator state.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    obstacles = obstacles or []
    out: list[Pedestrian] = []
    next_id = max((p.id for p in peds), default=-1) + 1

    for ped in peds:
        stopped_steps = ped.stopped_steps
        if stopped_steps > 0:
            stopped_steps -= 1
        elif config.stop_go_probability > 0.0 and rng.random() < config.stop_go_probability:
            # geometric pause, one expected second long
            stopped_steps = int(rng.geometric(min(1.0, dt / MEAN_STOP_SECONDS)))

        if stopped_steps > 0:
            out.append(replace(ped, velocity=Vec2(0.0, 0.0), stopped_steps=stopped_steps))
            continue

        velocity = orca_velocity(ped, peds, obstacles, dt)
        position = ped.position + velocity * dt
        goal = ped.goal
        if (position - goal).norm() < GOAL_REACHED_DIST:
            goal = _random_point(config, rng)
        heading = velocity.angle() if velocity.norm() >= STILL_SPEED else ped.motion_heading
        out.append(
            replace(
                ped,
                position=position,
                velocity=velocity,
                goal=goal,
                stopped_steps=0,
                motion_heading=heading,
            )
        )

    if config.walk_in_probability > 0.0 and len(out) < config.max_count:
        if rng.random() < config.walk_in_probability:
            pos = _boundary_point(config, rng)
            goal = _random_point(config, rng)
            out.append(_sample_ped(next_id, pos, goal, config, rng))
    return out
