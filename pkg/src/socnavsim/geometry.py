"""Exact 2D primitives: vectors, circles, segments, oriented rectangles.

Provides the raycasting and overlap tests used by the lidar simulation,
the safety rewards, and the crowd module.  All shapes use closed-set
semantics: boundary contact counts as intersection / zero distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(angle: float) -> float:
    """Normalize an angle to [-pi, pi]."""
    a = math.fmod(angle + math.pi, TWO_PI)
    if a < 0.0:
        a += TWO_PI
    return a - math.pi


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite Vec2 components ({self.x}, {self.y})")

    def __add__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x - other.x, self.y - other.y)

    def __mul__(self, s: float) -> "Vec2":
        return Vec2(self.x * s, self.y * s)

    __rmul__ = __mul__

    def dot(self, other: "Vec2") -> float:
        return self.x * other.x + self.y * other.y

    def cross(self, other: "Vec2") -> float:
        return self.x * other.y - self.y * other.x

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def normalized(self) -> "Vec2":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize zero vector")
        return Vec2(self.x / n, self.y / n)

    def rotated(self, angle: float) -> "Vec2":
        c, s = math.cos(angle), math.sin(angle)
        return Vec2(c * self.x - s * self.y, s * self.x + c * self.y)

    def angle(self) -> float:
        return math.atan2(self.y, self.x)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @staticmethod
    def from_angle(angle: float, length: float = 1.0) -> "Vec2":
        return Vec2(length * math.cos(angle), length * math.sin(angle))


@dataclass(frozen=True)
class Circle:
    center: Vec2
    radius: float

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0.0):
            raise ValueError(f"circle radius must be strictly positive, got {self.radius}")


@dataclass(frozen=True)
class Segment:
    a: Vec2
    b: Vec2

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError("degenerate segment: endpoints coincide")


@dataclass(frozen=True)
class OrientedRect:
    """Rectangle anchored at one end, extending `length` along `heading`.

    The anchor sits at the middle of the rear edge; the rect spans
    laterally +-half_width.  Degenerate extents (zero length or width)
    are allowed: they collapse to a segment or point and still behave
    correctly in intersection tests.
    """

    anchor: Vec2
    heading: float
    half_width: float
    length: float

    def __post_init__(self):
        if self.half_width < 0.0 or self.length < 0.0:
            raise ValueError("rect extents must be nonnegative")
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    def axes(self) -> tuple[Vec2, Vec2]:
        """Forward and left unit axes."""
        fwd = Vec2.from_angle(self.heading)
        return fwd, Vec2(-fwd.y, fwd.x)

    def corners(self) -> tuple[Vec2, Vec2, Vec2, Vec2]:
        """Counter-clockwise corners starting at the rear-right."""
        fwd, left = self.axes()
        rear = self.anchor
        front = rear + fwd * self.length
        w = left * self.half_width
        return (rear - w, front - w, front + w, rear + w)

    def edges(self) -> list[Segment]:
        cs = self.corners()
        out = []
        for i in range(4):
            a, b = cs[i], cs[(i + 1) % 4]
            if a != b:
                out.append(Segment(a, b))
        return out

    def contains(self, p: Vec2) -> bool:
        """Closed containment test."""
        fwd, left = self.axes()
        d = p - self.anchor
        lx = d.dot(fwd)
        ly = d.dot(left)
        eps = 1e-12
        return -eps <= lx <= self.length + eps and abs(ly) <= self.half_width + eps


Shape = Circle | Segment | OrientedRect


# ---------------------------------------------------------------------------
# Raycasting


def _ray_circle(ox, oy, dx, dy, c: Circle) -> float:
    fx, fy = ox - c.center.x, oy - c.center.y
    b = fx * dx + fy * dy
    disc = b * b - (fx * fx + fy * fy - c.radius * c.radius)
    if disc < 0.0:
        return math.inf
    sq = math.sqrt(disc)
    t = -b - sq
    if t < 0.0:
        t = -b + sq  # origin inside: exit point
    return t if t >= 0.0 else math.inf


def _ray_segment(ox, oy, dx, dy, seg: Segment) -> float:
    ex, ey = seg.b.x - seg.a.x, seg.b.y - seg.a.y
    denom = dx * ey - dy * ex
    if abs(denom) < 1e-15:
        return math.inf
    wx, wy = seg.a.x - ox, seg.a.y - oy
    t = (wx * ey - wy * ex) / denom
    s = (wx * dy - wy * dx) / denom
    if t >= 0.0 and 0.0 <= s <= 1.0:
        return t
    return math.inf


def _ray_shape(ox, oy, dx, dy, shape: Shape) -> float:
    if isinstance(shape, Circle):
        return _ray_circle(ox, oy, dx, dy, shape)
    if isinstance(shape, Segment):
        return _ray_segment(ox, oy, dx, dy, shape)
    if isinstance(shape, OrientedRect):
        return min(
            (_ray_segment(ox, oy, dx, dy, e) for e in shape.edges()),
            default=math.inf,
        )
    raise TypeError(f"unsupported shape {type(shape).__name__}")


def ray_cast(origin: Vec2, direction: Vec2, shapes: list[Shape], max_range: float) -> float:
    """Distance from origin along a unit direction to the first hit.

    Returns max_range when nothing is hit within range.
    """
    if max_range <= 0.0:
        raise ValueError("max_range must be positive")
    best = max_range
    for shape in shapes:
        t = _ray_shape(origin.x, origin.y, direction.x, direction.y, shape)
        if t < best:
            best = t
    return best


def cast_fan(origin: Vec2, angles: np.ndarray, shapes: list[Shape], max_range: float) -> np.ndarray:
    """Vectorized raycast over an array of world-frame beam angles."""
    dx = np.cos(angles)
    dy = np.sin(angles)
    best = np.full(angles.shape, max_range)
    for shape in shapes:
        segs: list[Segment]
        if isinstance(shape, Circle):
            fx = origin.x - shape.center.x
            fy = origin.y - shape.center.y
            b = fx * dx + fy * dy
            disc = b * b - (fx * fx + fy * fy - shape.radius**2)
            hit = disc >= 0.0
            sq = np.sqrt(np.where(hit, disc, 0.0))
            t = -b - sq
            t_exit = -b + sq
            t = np.where(t < 0.0, t_exit, t)
            valid = hit & (t >= 0.0)
            np.minimum(best, np.where(valid, t, np.inf), out=best)
            continue
        elif isinstance(shape, Segment):
            segs = [shape]
        elif isinstance(shape, OrientedRect):
            segs = shape.edges()
        else:
            raise TypeError(f"unsupported shape {type(shape).__name__}")
        for seg in segs:
            ex, ey = seg.b.x - seg.a.x, seg.b.y - seg.a.y
            wx, wy = seg.a.x - origin.x, seg.a.y - origin.y
            denom = dx * ey - dy * ex
            ok = np.abs(denom) >= 1e-15
            denom_safe = np.where(ok, denom, 1.0)
            t = (wx * ey - wy * ex) / denom_safe
            s = (wx * dy - wy * dx) / denom_safe
            valid = ok & (t >= 0.0) & (s >= 0.0) & (s <= 1.0)
            np.minimum(best, np.where(valid, t, np.inf), out=best)
    return best


# ---------------------------------------------------------------------------
# Overlap and distance


def _project(corners, axis: Vec2) -> tuple[float, float]:
    dots = [c.dot(axis) for c in corners]
    return min(dots), max(dots)


def rects_intersect(a: OrientedRect, b: OrientedRect) -> bool:
    """Closed-set overlap test via the separating-axis theorem.

    Only the four face normals need checking for a pair of rectangles;
    boundary contact counts as intersecting.
    """
    ca, cb = a.corners(), b.corners()
    for rect in (a, b):
        for axis in rect.axes():
            amin, amax = _project(ca, axis)
            bmin, bmax = _project(cb, axis)
            if amax < bmin or bmax < amin:
                return False
    return True


def point_segment_distance(p: Vec2, seg: Segment) -> float:
    d = seg.b - seg.a
    t = (p - seg.a).dot(d) / d.dot(d)
    t = min(1.0, max(0.0, t))
    closest = seg.a + d * t
    return (p - closest).norm()


def point_rect_signed_distance(p: Vec2, rect: OrientedRect) -> float:
    """Signed distance to the rectangle boundary; negative inside."""
    fwd, left = rect.axes()
    d = p - rect.anchor
    # local frame centered on the rect
    lx = d.dot(fwd) - rect.length / 2.0
    ly = d.dot(left)
    qx = abs(lx) - rect.length / 2.0
    qy = abs(ly) - rect.half_width
    outside = math.hypot(max(qx, 0.0), max(qy, 0.0))
    inside = min(max(qx, qy), 0.0)
    return outside + inside


def closest_distance(robot: Circle, shapes: list[Shape]) -> float:
    """Smallest surface-to-surface distance from the robot to any shape.

    Negative values indicate penetration depth.  Raises on an empty
    shape list: the no-neighbor case is the caller's to handle.
    """
    if not shapes:
        raise ValueError("closest_distance requires at least one shape")
    best = math.inf
    c, r = robot.center, robot.radius
    for shape in shapes:
        if isinstance(shape, Circle):
            d = (c - shape.center).norm() - shape.radius - r
        elif isinstance(shape, Segment):
            d = point_segment_distance(c, shape) - r
        elif isinstance(shape, OrientedRect):
            d = point_rect_signed_distance(c, shape) - r
        else:
            raise TypeError(f"unsupported shape {type(shape).__name__}")
        if d < best:
            best = d
    return best


# ---------------------------------------------------------------------------
# Exact convex-polygon overlap, used by tests as an oracle independent of SAT


def _orient(a: Vec2, b: Vec2, c: Vec2) -> float:
    return (b - a).cross(c - a)


def segments_intersect(s1: Segment, s2: Segment) -> bool:
    """Closed segment-segment intersection, collinear touch included."""
    d1 = _orient(s2.a, s2.b, s1.a)
    d2 = _orient(s2.a, s2.b, s1.b)
    d3 = _orient(s1.a, s1.b, s2.a)
    d4 = _orient(s1.a, s1.b, s2.b)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
        return True
    if d1 == 0 and _on_segment(s1.a, s2):
        return True
    if d2 == 0 and _on_segment(s1.b, s2):
        return True
    if d3 == 0 and _on_segment(s2.a, s1):
        return True
    if d4 == 0 and _on_segment(s2.b, s1):
        return True
    return False


def _on_segment(p: Vec2, seg: Segment) -> bool:
    return (
        min(seg.a.x, seg.b.x) <= p.x <= max(seg.a.x, seg.b.x)
        and min(seg.a.y, seg.b.y) <= p.y <= max(seg.a.y, seg.b.y)
    )
