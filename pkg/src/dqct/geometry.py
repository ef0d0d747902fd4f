"""
Planar vector/pose algebra and oriented-bounding-box queries.

Boxes are closed sets: touching edges count as an intersection. All headings
are normalized to (-pi, pi] when a value is constructed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

TWO_PI = 2.0 * math.pi


def normalize_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    if -math.pi < angle <= math.pi:
        return angle
    a = math.fmod(angle + math.pi, TWO_PI)
    if a <= 0.0:
        a += TWO_PI
    return a - math.pi


def _check_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite component: {v!r}")


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float

    def __post_init__(self):
        _check_finite(self.x, self.y)
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))

    def __add__(self, other: Vec2) -> Vec2:
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: Vec2) -> Vec2:
        return Vec2(self.x - other.x, self.y - other.y)

    def __mul__(self, s: float) -> Vec2:
        return Vec2(self.x * s, self.y * s)

    __rmul__ = __mul__

    def __neg__(self) -> Vec2:
        return Vec2(-self.x, -self.y)

    def dot(self, other: Vec2) -> float:
        return self.x * other.x + self.y * other.y

    def cross(self, other: Vec2) -> float:
        return self.x * other.y - self.y * other.x

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def perp(self) -> Vec2:
        # left-hand perpendicular, (x, y) -> (-y, x)
        return Vec2(-self.y, self.x)

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Pose2:
    position: Vec2
    heading: float

    def __post_init__(self):
        _check_finite(self.heading)
        object.__setattr__(self, "heading", normalize_angle(float(self.heading)))


@dataclass(frozen=True)
class OrientedBox:
    """Rectangle with arbitrary heading.

    ``half_dims.x`` is the half-extent along the heading direction and
    ``half_dims.y`` the half-extent across it.
    """

    center: Vec2
    heading: float
    half_dims: Vec2
    _axes: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _check_finite(self.heading)
        if not (self.half_dims.x > 0.0 and self.half_dims.y > 0.0):
            raise ValueError(f"half_dims must be strictly positive, got {self.half_dims}")
        heading = normalize_angle(float(self.heading))
        object.__setattr__(self, "heading", heading)
        c, s = math.cos(heading), math.sin(heading)
        object.__setattr__(self, "_axes", (Vec2(c, s), Vec2(-s, c)))

    @property
    def axes(self) -> tuple[Vec2, Vec2]:
        return self._axes

    def corners(self) -> list[Vec2]:
        """Counterclockwise corners starting at the rear-right one."""
        u, v = self._axes
        hx, hy = self.half_dims.x, self.half_dims.y
        c = self.center
        return [
            c - u * hx - v * hy,
            c + u * hx - v * hy,
            c + u * hx + v * hy,
            c - u * hx + v * hy,
        ]

    def edges(self) -> list[tuple[Vec2, Vec2]]:
        pts = self.corners()
        return [(pts[i], pts[(i + 1) % 4]) for i in range(4)]

    def contains(self, p: Vec2) -> bool:
        d = p - self.center
        u, v = self._axes
        return abs(d.dot(u)) <= self.half_dims.x and abs(d.dot(v)) <= self.half_dims.y


def rotate(v: Vec2, angle: float) -> Vec2:
    """Rotate ``v`` counterclockwise by ``angle`` radians."""
    c, s = math.cos(angle), math.sin(angle)
    return Vec2(c * v.x - s * v.y, s * v.x + c * v.y)


def _projected_radius(box: OrientedBox, axis: Vec2) -> float:
    u, v = box.axes
    return box.half_dims.x * abs(u.dot(axis)) + box.half_dims.y * abs(v.dot(axis))


def sat_intersects(a: OrientedBox, b: OrientedBox) -> bool:
    """Separating-axis test over the four face normals of ``a`` and ``b``.

    Returns True when the closed boxes share at least one point.
    """
    d = b.center - a.center
    for axis in (*a.axes, *b.axes):
        if abs(d.dot(axis)) > _projected_radius(a, axis) + _projected_radius(b, axis):
            return False
    return True


def inflate(b: OrientedBox, margin: float) -> OrientedBox:
    if margin < 0.0:
        raise ValueError(f"inflation margin must be non-negative, got {margin}")
    if margin == 0.0:
        return b
    return OrientedBox(b.center, b.heading, Vec2(b.half_dims.x + margin, b.half_dims.y + margin))


def ray_segment_distance(origin: Vec2, direction: Vec2, p: Vec2, q: Vec2) -> float | None:
    """Distance along a unit ray to segment pq, or None if it misses."""
    e = q - p
    denom = direction.cross(e)
    w = p - origin
    if denom == 0.0:
        # parallel; a collinear overlap is hit at its nearest endpoint ahead
        if w.cross(direction) != 0.0:
            return None
        ts = [t for t in (w.dot(direction), (q - origin).dot(direction)) if t >= 0.0]
        return min(ts) if ts else None
    t = w.cross(e) / denom
    s = w.cross(direction) / denom
    if t >= 0.0 and 0.0 <= s <= 1.0:
        return t
    return None


def clearance_ray(
    origin: Vec2, direction: float, boxes: Iterable[OrientedBox], max_range: float
) -> float:
    """Distance from ``origin`` to the first box edge along heading ``direction``.

    Returns ``max_range`` on a miss and 0.0 when the origin lies inside a box.
    """
    if max_range <= 0.0:
        raise ValueError("max_range must be positive")
    d = Vec2(math.cos(direction), math.sin(direction))
    best = max_range
    for box in boxes:
        if box.contains(origin):
            return 0.0
        for p, q in box.edges():
            t = ray_segment_distance(origin, d, p, q)
            if t is not None and t < best:
                best = t
    return best


def any_intersects(box: OrientedBox, others: Sequence[OrientedBox]) -> bool:
    return any(sat_intersects(box, o) for o in others)
