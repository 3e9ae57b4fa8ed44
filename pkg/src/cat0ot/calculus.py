"""Derivatives along geodesics and the testers built on them.

The squared-distance cost, one-sided geodesic derivatives with a halving
step schedule, twist and first-order minimality reports, radial projection,
and two Monte Carlo shell estimators: the co-area inequality for regions
swept by distance spheres, and positivity of the sphere-density at probe
points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    BadEpsilon,
    NotExtendable,
    OriginMismatch,
    ParamOutOfRange,
    ProbeAtCenter,
)
from .geometry import (
    BallRegion,
    EmptyRegion,
    Geodesic,
    Point,
    SpaceHandle,
    distance,
    extend,
    geodesic,
    normalize,
    parameter_on,
)
from .rng import substream

# Parameter-step schedule for difference quotients: 1/16 halved ten times.
DEFAULT_STEPS: tuple[float, ...] = tuple(2.0 ** (-4 - k) for k in range(11))
DIFF_TOL = 1e-5
GAP_TOL = 1e-6

__all__ = [
    "DerivativeEstimate",
    "TwistReport",
    "FermatReport",
    "cost",
    "cost_derivative_closed",
    "geodesic_derivative",
    "direction_set",
    "twist_test",
    "fermat_check",
    "radial_projection",
    "eilenberg_estimate",
    "zeta_positivity",
]


@dataclass(frozen=True)
class DerivativeEstimate:
    """One-sided derivatives of f along a geodesic, in curve-parameter units."""

    value: float
    one_sided_plus: float
    one_sided_minus: float
    step: float
    differentiable: bool


@dataclass(frozen=True)
class TwistReport:
    distinguishing_geodesic: Optional[Geodesic]
    max_gap: float
    twist_holds: bool


@dataclass(frozen=True)
class FermatReport:
    min_directional: float
    two_sided_zero: bool


def cost(space: SpaceHandle, x: Point, y: Point) -> float:
    """Half squared distance."""
    d = distance(space, x, y)
    return 0.5 * d * d


def cost_derivative_closed(g: Geodesic, t: float, s: float) -> float:
    """d/dt of cost(g(t), g(s)) along g: (t - s) * length(g)^2."""
    if not (0.0 <= t <= 1.0 and 0.0 <= s <= 1.0):
        raise ParamOutOfRange(f"parameters ({t}, {s}) outside [0, 1]")
    return (t - s) * g.length * g.length


def _one_sided(
    f: Callable[[Point], float],
    g: Geodesic,
    s: float,
    f0: float,
    sign: float,
    steps: Sequence[float],
) -> tuple[float, float]:
    """Refined difference quotient on one side; (nan, nan) when there is no room."""
    room = (1.0 - s) if sign > 0 else s
    if room <= 1e-15:
        return math.nan, math.nan
    scale = min(1.0, room / steps[0])
    hs = [h * scale for h in steps]
    quots = [(f(g.eval(s + sign * h)) - f0) / (sign * h) for h in hs]
    h1, h2 = hs[-2], hs[-1]
    # two-point extrapolation in h, exact for quadratic f along g
    return (h1 * quots[-1] - h2 * quots[-2]) / (h1 - h2), h2


def geodesic_derivative(
    space: SpaceHandle,
    f: Callable[[Point], float],
    x: Point,
    g: Geodesic,
    schedule: Optional[Sequence[float]] = None,
    tol: float = DIFF_TOL,
) -> DerivativeEstimate:
    """Derivative of f along g at x, with respect to the parameter on [0, 1].

    x must lie on g (within 1e-9). At the endpoints only the inward one-sided
    quotient exists; the missing side is reported as nan and the estimate is
    flagged non-differentiable.
    """
    s = parameter_on(space, g, x)
    steps = DEFAULT_STEPS if schedule is None else [float(h) for h in schedule]
    if len(steps) < 2 or any(h <= 0 for h in steps) or any(
        steps[i + 1] >= steps[i] for i in range(len(steps) - 1)
    ):
        raise ParamOutOfRange("step schedule must be strictly decreasing and positive")
    f0 = f(g.eval(s))
    d_plus, h_plus = _one_sided(f, g, s, f0, +1.0, steps)
    d_minus, h_minus = _one_sided(f, g, s, f0, -1.0, steps)
    have_plus = not math.isnan(d_plus)
    have_minus = not math.isnan(d_minus)
    if have_plus and have_minus:
        diff = abs(d_plus - d_minus) < tol * (1.0 + abs(d_plus) + abs(d_minus))
        value = 0.5 * (d_plus + d_minus)
        step = min(h_plus, h_minus)
    elif have_plus:
        diff, value, step = False, d_plus, h_plus
    elif have_minus:
        diff, value, step = False, d_minus, h_minus
    else:
        raise ParamOutOfRange("degenerate geodesic leaves no room for any quotient")
    return DerivativeEstimate(value, d_plus, d_minus, step, diff)


def direction_set(
    space: SpaceHandle,
    x: Point,
    targets: Sequence[Point] = (),
    count: int = 64,
    seed: int = 0,
) -> list[Geodesic]:
    """Geodesics issuing from x that exhaust the local directions.

    Equiangular unit targets on flat pieces (plus the explicit targets);
    on trees one direction per incident edge, which is already exhaustive.
    """
    xn = normalize(space, x)
    dirs = []
    for tgt in space.impl.direction_targets(xn, count, seed):
        if distance(space, xn, tgt) > 1e-12:
            dirs.append(geodesic(space, xn, tgt))
    if space.kind != "tree":
        for tgt in targets:
            if distance(space, xn, tgt) > 1e-12:
                dirs.append(geodesic(space, xn, tgt))
    return dirs


def _check_origins(space: SpaceHandle, x: Point, directions: Sequence[Geodesic]) -> None:
    for g in directions:
        if distance(space, g.start, x) > 1e-9:
            raise OriginMismatch("direction does not issue from the base point")


def twist_test(
    space: SpaceHandle,
    x: Point,
    y1: Point,
    y2: Point,
    directions: Sequence[Geodesic],
    gap_tol: float = GAP_TOL,
) -> TwistReport:
    """Can first-order cost data at x tell y1 and y2 apart along some direction?"""
    xn = normalize(space, x)
    _check_origins(space, xn, directions)
    f1 = lambda z: cost(space, z, y1)
    f2 = lambda z: cost(space, z, y2)
    max_gap = 0.0
    witness: Optional[Geodesic] = None
    for g in directions:
        if g.length == 0:
            continue
        d1 = geodesic_derivative(space, f1, xn, g).value
        d2 = geodesic_derivative(space, f2, xn, g).value
        gap = abs(d1 - d2)
        if gap > max_gap:
            max_gap = gap
            witness = g
    holds = max_gap > gap_tol
    return TwistReport(witness if holds else None, max_gap, holds)


def fermat_check(
    space: SpaceHandle,
    f: Callable[[Point], float],
    x_star: Point,
    directions: Sequence[Geodesic],
    tol: float = DIFF_TOL,
) -> FermatReport:
    """First-order minimality at x_star: directional derivatives over the sample.

    two_sided_zero quantifies only over directions that extend through x_star;
    at points with no continuation (tree leaves) it is vacuously true.
    """
    xn = normalize(space, x_star)
    _check_origins(space, xn, directions)
    min_dir = math.inf
    two_sided = True
    seen = False
    for g in directions:
        if g.length == 0:
            continue
        seen = True
        d_fwd = geodesic_derivative(space, f, xn, g).value
        min_dir = min(min_dir, d_fwd)
        try:
            ext = extend(space, g.reverse(), g.length)
        except NotExtendable:
            continue
        opp = geodesic(space, xn, ext.end)
        d_opp = geodesic_derivative(space, f, xn, opp).value
        if abs(d_fwd) > tol or abs(d_opp) > tol:
            two_sided = False
    if not seen:
        raise ParamOutOfRange("no non-degenerate directions supplied")
    return FermatReport(min_dir, two_sided)


def radial_projection(space: SpaceHandle, g: Geodesic, x: Point) -> Point:
    """Point of g at arc length min(d(g(0), x), length(g)) from its start."""
    d0 = distance(space, g.start, x)
    return g.at_arc(min(d0, g.length))


def _batch_sigma(values: np.ndarray, batches: int = 20) -> float:
    n = values.size
    if n < 2 * batches:
        return float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    m = n // batches
    means = values[: m * batches].reshape(batches, m).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))


def eilenberg_estimate(
    space: SpaceHandle,
    g: Geodesic,
    region,
    n_samples: int,
    eps: Optional[float] = None,
    seed: int = 0,
) -> tuple[float, float, bool]:
    """Shell estimate of the sphere-swept mass of a region against its volume.

    lhs integrates, over radii r in [0, length(g)], the co-dimension-one mass
    of the distance sphere about g(0) inside the region; each sphere slice is
    read off as (shell volume)/(2 eps). Collapsing the radius integral gives a
    single Monte Carlo average of vol * overlap/(2 eps), where overlap is the
    radial overlap of (d - eps, d + eps) with [0, length(g)]. rhs is the region
    volume, and holds checks lhs <= rhs within three standard errors.
    """
    lhs, vol, _sigma, holds = _shell_estimate(space, g, region, n_samples, eps, seed)
    return lhs, vol, holds


def _shell_estimate(
    space: SpaceHandle,
    g: Geodesic,
    region,
    n_samples: int,
    eps: Optional[float],
    seed: int,
) -> tuple[float, float, float, bool]:
    """eilenberg_estimate plus the Monte Carlo standard error of the lhs."""
    if isinstance(region, EmptyRegion):
        return 0.0, 0.0, 0.0, True
    vol = space.impl.region_volume(region)
    if vol <= 0:
        return 0.0, 0.0, 0.0, True
    diam = space.impl.region_diameter(region)
    if eps is None:
        eps = diam / 200.0
    if eps <= 0 or eps > diam / 10.0:
        raise BadEpsilon(f"eps = {eps} outside (0, diam/10 = {diam / 10.0}]")
    rng = substream(seed, "eilenberg")
    charts, coords = space.impl.sample_region(region, int(n_samples), rng)
    d = space.impl.distances_from(normalize(space, g.start), charts, coords)
    overlap = np.clip(np.minimum(g.length, d + eps) - np.maximum(0.0, d - eps), 0.0, None)
    est = vol * overlap / (2.0 * eps)
    lhs = float(est.mean())
    sigma = _batch_sigma(est)
    # the bound is attained with equality when the region sits inside the
    # annulus of radii [eps, length - eps]; there every overlap is exactly
    # 2 eps analytically, sigma vanishes, and the verdict must survive the
    # rounding of the same-scale subtraction above
    round_err = (
        8.0 * vol * np.finfo(float).eps * (float(d.max(initial=0.0)) + eps + g.length) / (2.0 * eps)
    )
    return lhs, vol, sigma, bool(lhs <= vol + 3.0 * sigma + round_err)


def zeta_positivity(
    space: SpaceHandle,
    x: Point,
    g: Geodesic,
    probe_points: Sequence[Point],
    eps: Optional[float] = None,
    n_samples: int = 100_000,
    seed: int = 0,
) -> dict:
    """Positivity of the sphere density about x at each probe point.

    Around a probe at radius r, the density is estimated as the shell volume
    {|d(x, .) - r| < eps} inside the ball B(probe, 5 eps), normalized by
    2 eps times the flat cross-section 2 * 5 eps; in flat pieces the estimate
    is 1. positive requires every probe to clear zero by three standard errors.
    """
    xn = normalize(space, x)
    if distance(space, g.start, xn) > 1e-9:
        raise OriginMismatch("the reference geodesic does not issue from x")
    if not probe_points:
        raise ParamOutOfRange("need at least one probe point")
    if eps is None:
        eps = g.length / 200.0
    if eps <= 0 or not math.isfinite(eps):
        raise BadEpsilon(f"eps = {eps} must be positive")
    radius = 5.0 * eps
    min_density = math.inf
    min_margin = math.inf
    for i, probe in enumerate(probe_points):
        pn = normalize(space, probe)
        r = distance(space, xn, pn)
        if r <= 1e-9:
            raise ProbeAtCenter(f"probe {i} coincides with x")
        region = BallRegion(pn, radius)
        vol = space.impl.region_volume(region)
        rng = substream(seed, f"zeta:{i}")
        charts, coords = space.impl.sample_region(region, int(n_samples), rng)
        d = space.impl.distances_from(xn, charts, coords)
        ind = (np.abs(d - r) < eps).astype(float)
        est = vol * ind / (2.0 * eps * 2.0 * radius)
        dens = float(est.mean())
        sigma = _batch_sigma(est)
        min_density = min(min_density, dens)
        min_margin = min(min_margin, dens - 3.0 * sigma)
    return {"min_density": min_density, "positive": bool(min_margin > 0.0)}
