"""Space-agnostic comparison geometry.

Points, geodesics, comparison and upper angles, the nonpositive-curvature
defect, projection onto convex sets, and geodesic extension. The concrete
space families live in `spaces`; every handle built there carries an
implementation object that this module dispatches to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .errors import (
    DegenerateTriangle,
    NotATriangle,
    OriginMismatch,
    ParamOutOfRange,
    ScheduleTooShort,
    UnsupportedConvexSet,
)

PT_TOL = 1e-9

__all__ = [
    "Point",
    "Piece",
    "Geodesic",
    "AngleEstimate",
    "SpaceHandle",
    "Segment",
    "Ball",
    "Subtree",
    "BoxRegion",
    "BallRegion",
    "TreeRegion",
    "EmptyRegion",
    "distance",
    "geodesic",
    "convex_combination",
    "comparison_angle",
    "alexandrov_angle",
    "cat0_defect",
    "project_convex",
    "extend",
    "normalize",
    "points_equal",
]


@dataclass(frozen=True)
class Point:
    """A point in one chart of a space.

    `chart` is the page id (open book), edge index (tree), or 0 (Euclidean);
    `coords` are the chart coordinates: the full coordinate vector in
    Euclidean space, (u, v) with u >= 0 on a page, or the arc-length offset
    (s,) along a tree edge.
    """

    chart: int
    coords: tuple[float, ...]


def point(chart: int, *coords: float) -> Point:
    return Point(int(chart), tuple(float(c) for c in coords))


@dataclass(frozen=True)
class Piece:
    """One straight-in-chart section of a geodesic, spanning [t0, t1]."""

    t0: float
    t1: float
    chart: int
    c0: tuple[float, ...]
    c1: tuple[float, ...]


@dataclass(frozen=True)
class SpaceHandle:
    """A concrete geodesic space: family tag, declared dimension, build data."""

    kind: str
    dim: int
    params: object
    impl: object = field(repr=False, compare=False)


@dataclass(frozen=True)
class Geodesic:
    """A constant-speed curve on [0, 1] between two points.

    `breakpoints` lists the interior chart transitions (spine crossings, tree
    vertices) as (parameter, point) pairs in increasing parameter order.
    """

    space: SpaceHandle
    start: Point
    end: Point
    length: float
    breakpoints: tuple[tuple[float, Point], ...]
    pieces: tuple[Piece, ...]

    def eval(self, t: float) -> Point:
        if not (-1e-12 <= t <= 1 + 1e-12):
            raise ParamOutOfRange(f"geodesic parameter {t} outside [0, 1]")
        if t <= 0:
            return self.start
        if t >= 1:
            return self.end
        for pc in self.pieces:
            if t <= pc.t1:
                w = (t - pc.t0) / (pc.t1 - pc.t0)
                coords = tuple(a + w * (b - a) for a, b in zip(pc.c0, pc.c1))
                return self.space.impl.normalize(Point(pc.chart, coords))
        return self.end

    def at_arc(self, s: float) -> Point:
        """Point at arc length s from the start."""
        if self.length == 0:
            return self.start
        return self.eval(s / self.length)

    def reverse(self) -> "Geodesic":
        rev = tuple(
            Piece(1 - pc.t1, 1 - pc.t0, pc.chart, pc.c1, pc.c0)
            for pc in reversed(self.pieces)
        )
        brk = tuple((1 - t, p) for t, p in reversed(self.breakpoints))
        return Geodesic(self.space, self.end, self.start, self.length, brk, rev)


@dataclass(frozen=True)
class AngleEstimate:
    """Upper angle estimate with its monotone bracket from the halving schedule."""

    value: float
    bracket_low: float
    bracket_high: float
    converged: bool


# Convex-set descriptors accepted by project_convex.


@dataclass(frozen=True)
class Segment:
    geodesic: Geodesic


@dataclass(frozen=True)
class Ball:
    center: Point
    radius: float


@dataclass(frozen=True)
class Subtree:
    """Tree-only: the subtree induced by a connected set of vertex ids."""

    vertices: tuple


# Region descriptors for the measure-theoretic estimators in `calculus`.


@dataclass(frozen=True)
class BoxRegion:
    """Axis box in one chart (Euclidean chart 0 or a single book page)."""

    chart: int
    lo: tuple[float, ...]
    hi: tuple[float, ...]


@dataclass(frozen=True)
class BallRegion:
    center: Point
    radius: float


@dataclass(frozen=True)
class TreeRegion:
    """Tree-only: the induced subtree of a connected vertex set."""

    vertices: tuple


@dataclass(frozen=True)
class EmptyRegion:
    pass


def normalize(space: SpaceHandle, p: Point) -> Point:
    """Canonical representative: boundary points land in the lowest chart."""
    space.impl.validate_point(p)
    return space.impl.normalize(p)


def points_equal(space: SpaceHandle, p: Point, q: Point, tol: float = PT_TOL) -> bool:
    return distance(space, p, q) <= tol


def distance(space: SpaceHandle, p: Point, q: Point) -> float:
    space.impl.validate_point(p)
    space.impl.validate_point(q)
    return space.impl.distance(space.impl.normalize(p), space.impl.normalize(q))


def geodesic(space: SpaceHandle, p: Point, q: Point) -> Geodesic:
    space.impl.validate_point(p)
    space.impl.validate_point(q)
    return space.impl.geodesic(space.impl.normalize(p), space.impl.normalize(q))


def convex_combination(space: SpaceHandle, p: Point, q: Point, t: float) -> Point:
    """The point x_t on [p, q] with d(p, x_t) = t d(p, q)."""
    if not (0.0 <= t <= 1.0):
        raise ParamOutOfRange(f"combination parameter {t} outside [0, 1]")
    return geodesic(space, p, q).eval(t)


def comparison_angle(a: float, b: float, c: float) -> float:
    """Euclidean angle between sides a and b opposite side c, clamped to [0, pi]."""
    if a <= 0 or b <= 0:
        raise DegenerateTriangle(f"zero side in comparison triangle (a={a}, b={b})")
    if c < -1e-12:
        raise NotATriangle(f"negative side c={c}")
    c = max(c, 0.0)
    slack = 1e-12
    if c > a + b + slack or c < abs(a - b) - slack:
        raise NotATriangle(f"sides ({a}, {b}, {c}) violate the triangle inequality")
    cos_val = (a * a + b * b - c * c) / (2.0 * a * b)
    return math.acos(min(1.0, max(-1.0, cos_val)))


def _default_angle_schedule(lg: float, lh: float) -> list[float]:
    s0 = min(lg, lh) / 4.0
    return [s0 * 2.0 ** (-k) for k in range(13)]


def alexandrov_angle(
    space: SpaceHandle,
    g: Geodesic,
    h: Geodesic,
    schedule: Optional[Sequence[float]] = None,
    tol: float = 1e-7,
) -> AngleEstimate:
    """Upper angle between two geodesics issuing from a common point.

    Comparison angles along the shrinking schedule are non-increasing in
    nonpositive curvature, so the value at the smallest scale is a certified
    upper bound on the limit and [last, first] brackets the whole sequence.
    """
    if distance(space, g.start, h.start) > PT_TOL:
        raise OriginMismatch("geodesics do not share a start point")
    if g.length <= 0 or h.length <= 0:
        raise ParamOutOfRange("angle needs two non-degenerate geodesics")
    if schedule is None:
        schedule = _default_angle_schedule(g.length, h.length)
    sched = [float(s) for s in schedule]
    if len(sched) < 2:
        raise ScheduleTooShort("angle schedule needs at least 2 entries")
    if any(s <= 0 for s in sched) or any(
        sched[i + 1] >= sched[i] for i in range(len(sched) - 1)
    ):
        raise ParamOutOfRange("angle schedule must be strictly decreasing and positive")

    cap = min(g.length, h.length)
    angles = []
    for s in sched:
        s = min(s, cap)
        pg = g.at_arc(s)
        ph = h.at_arc(s)
        angles.append(comparison_angle(s, s, space.impl.distance(pg, ph)))
    converged = abs(angles[-1] - angles[-2]) < tol
    low = min(angles[-1], angles[0])
    high = max(angles[-1], angles[0])
    return AngleEstimate(angles[-1], low, high, converged)


def comparison_angle_sequence(
    space: SpaceHandle, g: Geodesic, h: Geodesic, schedule: Sequence[float]
) -> list[float]:
    """Comparison angles along an explicit arc-length schedule (for monotonicity checks)."""
    cap = min(g.length, h.length)
    out = []
    for s in schedule:
        s = min(float(s), cap)
        out.append(comparison_angle(s, s, space.impl.distance(g.at_arc(s), h.at_arc(s))))
    return out


def cat0_defect(space: SpaceHandle, x: Point, y: Point, z: Point, t: float) -> float:
    """Slack in the quadratic nonpositive-curvature inequality at x_t.

    Returns (1-t) d(x,z)^2 + t d(y,z)^2 - t(1-t) d(x,y)^2 - d(x_t,z)^2, which
    is nonnegative in every space built here and identically zero in
    Euclidean space.
    """
    if not (0.0 <= t <= 1.0):
        raise ParamOutOfRange(f"parameter {t} outside [0, 1]")
    xt = convex_combination(space, x, y, t)
    dxz = distance(space, x, z)
    dyz = distance(space, y, z)
    dxy = distance(space, x, y)
    dxtz = distance(space, xt, z)
    return (1 - t) * dxz * dxz + t * dyz * dyz - t * (1 - t) * dxy * dxy - dxtz * dxtz


def project_convex(space: SpaceHandle, x: Point, cset) -> Point:
    """Nearest-point projection onto a segment, closed ball, or subtree."""
    space.impl.validate_point(x)
    xn = space.impl.normalize(x)
    if isinstance(cset, Ball):
        if cset.radius < 0:
            raise UnsupportedConvexSet("ball radius must be nonnegative")
        d0 = distance(space, xn, cset.center)
        if d0 <= cset.radius:
            return xn
        # the entry point of [center, x] into the sphere
        return convex_combination(space, cset.center, xn, cset.radius / d0)
    if isinstance(cset, Segment):
        return space.impl.project_segment(xn, cset.geodesic)
    if isinstance(cset, Subtree):
        proj = getattr(space.impl, "project_subtree", None)
        if proj is None:
            raise UnsupportedConvexSet(f"subtree projection unsupported on {space.kind}")
        return proj(xn, cset.vertices)
    raise UnsupportedConvexSet(f"unsupported convex-set descriptor {type(cset).__name__}")


def extend(space: SpaceHandle, g: Geodesic, delta: float) -> Geodesic:
    """Prolong g beyond its endpoint by arc length delta, keeping constant speed.

    At branch points (book spine, tree vertices) the continuation enters the
    admissible chart with the lowest identifier. Raises NotExtendable when the
    endpoint admits no continuation.
    """
    if delta <= 0:
        raise ParamOutOfRange(f"extension length {delta} must be positive")
    return space.impl.extend(g, delta)


def parameter_on(space: SpaceHandle, g: Geodesic, x: Point, tol: float = PT_TOL) -> float:
    """Curve parameter of a point lying on g (smallest match wins)."""
    from .errors import PointNotOnGeodesic

    space.impl.validate_point(x)
    xn = space.impl.normalize(x)
    if g.length == 0:
        if space.impl.distance(xn, g.start) <= tol:
            return 0.0
        raise PointNotOnGeodesic("point is not on the (degenerate) geodesic")
    best = None
    for pc in g.pieces:
        coords = space.impl.represent_in_chart(xn, pc.chart)
        if coords is None:
            continue
        seg = [b - a for a, b in zip(pc.c0, pc.c1)]
        sq = sum(v * v for v in seg)
        if sq == 0:
            w = 0.0
        else:
            w = sum((c - a) * v for c, a, v in zip(coords, pc.c0, seg)) / sq
            w = min(1.0, max(0.0, w))
        proj = [a + w * v for a, v in zip(pc.c0, seg)]
        err = math.sqrt(sum((c - p) ** 2 for c, p in zip(coords, proj)))
        if err <= tol:
            t = pc.t0 + w * (pc.t1 - pc.t0)
            if best is None or t < best:
                best = t
    if best is None:
        raise PointNotOnGeodesic("point is not on the geodesic (within 1e-9)")
    return best


def geodesic_from_chain(
    space: SpaceHandle, chain: Sequence[tuple[int, tuple, tuple]]
) -> Geodesic:
    """Assemble a Geodesic from consecutive straight-in-chart sections.

    Zero-length sections are dropped; breakpoints are recorded at the surviving
    junctions. The chain is trusted to be a geodesic of the space.
    """
    segs = []
    for chart, c0, c1 in chain:
        ln = math.sqrt(sum((b - a) ** 2 for a, b in zip(c0, c1)))
        if ln == 0:
            continue
        chart = int(chart)
        c0 = tuple(map(float, c0))
        c1 = tuple(map(float, c1))
        if segs and segs[-1][0] == chart and segs[-1][2] == c0:
            pch, pc0, pc1, pln = segs[-1]
            d_prev = tuple((b - a) / pln for a, b in zip(pc0, pc1))
            d_new = tuple((b - a) / ln for a, b in zip(c0, c1))
            if all(abs(u - v) <= 1e-12 for u, v in zip(d_prev, d_new)):
                segs[-1] = (chart, pc0, c1, pln + ln)
                continue
        segs.append((chart, c0, c1, ln))
    if not segs:
        chart, c0, _ = chain[0]
        p = space.impl.normalize(Point(int(chart), tuple(map(float, c0))))
        pc = Piece(0.0, 1.0, p.chart, p.coords, p.coords)
        return Geodesic(space, p, p, 0.0, (), (pc,))
    total = sum(s[3] for s in segs)
    pieces = []
    breakpoints = []
    acc = 0.0
    for k, (chart, c0, c1, ln) in enumerate(segs):
        t0 = acc / total
        acc += ln
        t1 = 1.0 if k == len(segs) - 1 else acc / total
        pieces.append(Piece(t0, t1, chart, c0, c1))
        if k < len(segs) - 1:
            breakpoints.append((t1, space.impl.normalize(Point(chart, c1))))
    start = space.impl.normalize(Point(segs[0][0], segs[0][1]))
    end = space.impl.normalize(Point(segs[-1][0], segs[-1][2]))
    return Geodesic(space, start, end, total, tuple(breakpoints), tuple(pieces))
