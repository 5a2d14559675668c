"""
Plane geometry kernel for realized constructions.

Finite segments and circles, their intersections, uniform sampling on a
primitive and point-to-primitive distances. Everything is double precision;
`TOL_GEOM` bounds kernel identities and `TOL_SCENE` bounds scene-level
constraint checks.
"""

import math
from dataclasses import dataclass
from typing import Tuple, Union

from dsl import GeoclideanError

TOL_GEOM = 1e-9
TOL_SCENE = 1e-6


class InvalidPrimitiveError(GeoclideanError):
    """Raised for zero-length segments and zero-radius circles."""


@dataclass(frozen=True)
class Coord:
    x: float
    y: float

    def __add__(self, other):
        return Coord(self.x + other.x, self.y + other.y)

    def __sub__(self, other):
        return Coord(self.x - other.x, self.y - other.y)

    def __mul__(self, f):
        return Coord(self.x * f, self.y * f)

    __rmul__ = __mul__

    def dot(self, other):
        return self.x * other.x + self.y * other.y

    def cross(self, other):
        return self.x * other.y - self.y * other.x

    def norm(self):
        return math.hypot(self.x, self.y)

    def distance(self, other):
        return math.hypot(self.x - other.x, self.y - other.y)

    def close(self, other, tol=TOL_GEOM):
        return self.distance(other) <= tol

    def as_tuple(self):
        return (self.x, self.y)


@dataclass(frozen=True)
class Segment:
    a: Coord
    b: Coord
    kind = "line"

    @property
    def length(self):
        return self.a.distance(self.b)

    @property
    def direction(self):
        return self.b - self.a


@dataclass(frozen=True)
class CircleShape:
    center: Coord
    radius: float
    kind = "circle"


Primitive = Union[Segment, CircleShape]


@dataclass(frozen=True)
class IntersectionSet:
    points: Tuple[Coord, ...] = ()

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __bool__(self):
        return bool(self.points)

    def same_as(self, other, tol=TOL_GEOM):
        """Set equality within `tol`, ignoring order."""
        if len(self) != len(other):
            return False
        return all(any(p.close(q, tol) for q in other.points) for p in self.points)


def validate(p):
    """Raise InvalidPrimitiveError if `p` is degenerate."""
    if isinstance(p, Segment):
        if p.length <= TOL_GEOM:
            raise InvalidPrimitiveError("zero-length segment at (%.6f, %.6f)" % (p.a.x, p.a.y))
    elif isinstance(p, CircleShape):
        if not p.radius > TOL_GEOM:
            raise InvalidPrimitiveError("circle at (%.6f, %.6f) has radius %r"
                                        % (p.center.x, p.center.y, p.radius))
    else:
        raise InvalidPrimitiveError("not a primitive: %r" % (p,))
    return p


def _param_window(seg):
    slack = TOL_GEOM / seg.length
    return -slack, 1.0 + slack


def _segment_segment(s1, s2):
    d1, d2 = s1.direction, s2.direction
    den = d1.cross(d2)
    # Parallel or collinear overlap: no canonical crossing point.
    if abs(den) <= TOL_GEOM * s1.length * s2.length:
        return IntersectionSet()
    w = s2.a - s1.a
    t = w.cross(d2) / den
    u = w.cross(d1) / den
    lo1, hi1 = _param_window(s1)
    lo2, hi2 = _param_window(s2)
    if lo1 <= t <= hi1 and lo2 <= u <= hi2:
        return IntersectionSet((s1.a + d1 * min(max(t, 0.0), 1.0),))
    return IntersectionSet()


def _segment_circle(seg, circle):
    d = seg.direction
    f = seg.a - circle.center
    aa = d.dot(d)
    t0 = -f.dot(d) / aa
    foot = seg.a + d * t0
    h = foot.distance(circle.center)
    lo, hi = _param_window(seg)
    r = circle.radius
    if abs(h - r) <= TOL_GEOM:
        if lo <= t0 <= hi:
            return IntersectionSet((foot,))
        return IntersectionSet()
    if h > r:
        return IntersectionSet()
    half = math.sqrt(max(r * r - h * h, 0.0) / aa)
    points = []
    for t in (t0 - half, t0 + half):
        if lo <= t <= hi:
            points.append(seg.a + d * t)
    return IntersectionSet(tuple(points))


def _circle_circle(c1, c2):
    delta = c2.center - c1.center
    d = delta.norm()
    if d <= TOL_GEOM:
        return IntersectionSet()
    r1, r2 = c1.radius, c2.radius
    if d > r1 + r2 + TOL_GEOM or d < abs(r1 - r2) - TOL_GEOM:
        return IntersectionSet()
    u = delta * (1.0 / d)
    a = (r1 * r1 - r2 * r2 + d * d) / (2 * d)
    if abs(d - (r1 + r2)) <= TOL_GEOM or abs(d - abs(r1 - r2)) <= TOL_GEOM:
        return IntersectionSet((c1.center + u * a,))
    h = math.sqrt(max(r1 * r1 - a * a, 0.0))
    base = c1.center + u * a
    normal = Coord(-u.y, u.x)
    return IntersectionSet((base + normal * h, base - normal * h))


def intersect(p1, p2):
    """
    Intersect two finite primitives.

    Args:
        p1, p2: Segment or CircleShape

    Returns:
        IntersectionSet with 0-2 points; tangent contacts within TOL_GEOM
        collapse to one point, parallel and collinear segments give none

    Raises:
        InvalidPrimitiveError: for degenerate inputs
    """
    validate(p1)
    validate(p2)
    if isinstance(p1, Segment) and isinstance(p2, Segment):
        return _segment_segment(p1, p2)
    if isinstance(p1, Segment):
        return _segment_circle(p1, p2)
    if isinstance(p2, Segment):
        return _segment_circle(p2, p1)
    return _circle_circle(p1, p2)


def sample_on(p, rng):
    """Uniform sample by arc length on a segment or circle."""
    validate(p)
    if isinstance(p, Segment):
        t = float(rng.random())
        return p.a + p.direction * t
    theta = float(rng.uniform(0.0, 2.0 * math.pi))
    return Coord(p.center.x + p.radius * math.cos(theta), p.center.y + p.radius * math.sin(theta))


def nearest_point(p, c):
    """Point of `p` closest to `c`."""
    if isinstance(p, Segment):
        d = p.direction
        aa = d.dot(d)
        if aa == 0.0:
            return p.a
        t = min(max((c - p.a).dot(d) / aa, 0.0), 1.0)
        return p.a + d * t
    offset = c - p.center
    n = offset.norm()
    if n == 0.0:
        return Coord(p.center.x + p.radius, p.center.y)
    return p.center + offset * (p.radius / n)


def distance_to(p, c):
    """Euclidean distance from `c` to the nearest point of `p`."""
    if isinstance(p, CircleShape):
        return abs(c.distance(p.center) - p.radius)
    return c.distance(nearest_point(p, c))


def bounding_box(p):
    """(xmin, ymin, xmax, ymax) of a primitive."""
    if isinstance(p, Segment):
        return (min(p.a.x, p.b.x), min(p.a.y, p.b.y), max(p.a.x, p.b.x), max(p.a.y, p.b.y))
    c, r = p.center, p.radius
    return (c.x - r, c.y - r, c.x + r, c.y + r)


def translate(obj, dx, dy):
    """Rigidly shift a coord, primitive or intersection set."""
    shift = Coord(dx, dy)
    if isinstance(obj, Coord):
        return obj + shift
    if isinstance(obj, Segment):
        return Segment(obj.a + shift, obj.b + shift)
    if isinstance(obj, CircleShape):
        return CircleShape(obj.center + shift, obj.radius)
    return IntersectionSet(tuple(q + shift for q in obj.points))


def rotate(obj, angle, origin=Coord(0.0, 0.0)):
    """Rotate a coord, primitive or intersection set about `origin`."""
    cos_a, sin_a = math.cos(angle), math.sin(angle)

    def turn(q):
        v = q - origin
        return Coord(origin.x + v.x * cos_a - v.y * sin_a, origin.y + v.x * sin_a + v.y * cos_a)

    if isinstance(obj, Coord):
        return turn(obj)
    if isinstance(obj, Segment):
        return Segment(turn(obj.a), turn(obj.b))
    if isinstance(obj, CircleShape):
        return CircleShape(turn(obj.center), obj.radius)
    return IntersectionSet(tuple(turn(q) for q in obj.points))
