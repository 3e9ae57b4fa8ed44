"""Scenario runner: wires spaces, calculus, and transport into reproducible reports."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .calculus import (
    _shell_estimate,
    cost,
    direction_set,
    fermat_check,
    geodesic_derivative,
    twist_test,
)
from .errors import Cat0otError, ConfigInvalid, IoFailure, ParamOutOfRange
from .geometry import (
    BallRegion,
    BoxRegion,
    Point,
    SpaceHandle,
    TreeRegion,
    cat0_defect,
    distance,
    geodesic,
)
from .polar import polar_factorize, verify_measure_preserving
from .rng import substream
from .spaces import space_from_json
from .transport import (
    DiscreteMeasure,
    GridPotential,
    check_cyclic_monotonicity,
    extract_monge_map,
    map_from_points,
    measure,
    measure_from_json,
    solve_kantorovich,
    verify_transport_identity,
)

EXPERIMENTS = (
    "solve",
    "monotonicity",
    "twist",
    "fermat",
    "eilenberg",
    "transport-identity",
    "polar",
    "geometry-suite",
)

LADDER = (5, 9, 17, 33, 49)


@dataclass(frozen=True)
class Scenario:
    """One experiment request: a space, an experiment tag, params, and a seed."""

    space: dict
    experiment: str
    params: dict
    seed: int


@dataclass(frozen=True)
class Report:
    """Outcome of a scenario; runtime is informational and kept out of serialized bytes."""

    scenario: Scenario
    metrics: dict[str, dict[str, Optional[float]]]
    passed: bool
    runtime_ms: int


def _metric(value: float, sigma: Optional[float] = None) -> dict[str, Optional[float]]:
    return {"value": float(value), "sigma": None if sigma is None else float(sigma)}


# ---------------------------------------------------------------------------
# instance builders (shared with the test suite)


def sample_points(space: SpaceHandle, rng: np.random.Generator, n: int) -> list[Point]:
    """Draw n points spread over a bounded patch of the space."""
    out: list[Point] = []
    if space.kind == "euclidean":
        for _ in range(n):
            out.append(Point(0, tuple(float(v) for v in rng.uniform(-1.0, 1.0, space.dim))))
        return out
    if space.kind == "tree":
        edges = space.params.edges
        lens = np.array([e[2] for e in edges])
        probs = lens / lens.sum()
        for _ in range(n):
            e = int(rng.choice(len(edges), p=probs))
            s = float(rng.uniform(0.0, edges[e][2]))
            out.append(space.impl.normalize(Point(e, (s,))))
        return out
    if space.kind == "open_book":
        for _ in range(n):
            page = int(rng.integers(0, space.params.pages))
            u = float(rng.uniform(0.0, 1.0))
            v = float(rng.uniform(-1.0, 1.0))
            out.append(space.impl.normalize(Point(page, (u, v))))
        return out
    raise ParamOutOfRange(f"no sampler for space kind {space.kind!r}")


def line_instance(space: SpaceHandle) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """Two unit-spaced sources pushed two units along the first axis."""
    if space.kind != "euclidean":
        raise ConfigInvalid("params.instance", "the line instance needs a euclidean space")

    def on_axis(x: float) -> Point:
        return Point(0, (x,) + (0.0,) * (space.dim - 1))

    mu = measure(space, [on_axis(0.0), on_axis(1.0)])
    nu = measure(space, [on_axis(2.0), on_axis(3.0)])
    return mu, nu


def translation_instance(
    space: SpaceHandle, n: int
) -> tuple[DiscreteMeasure, DiscreteMeasure, tuple[float, float], float]:
    """Uniform n-by-n grid on the unit square shifted by a quarter-width vector.

    Returns (mu, nu, shift, pitch). The shift is axis-aligned and snaps to the
    grid, so the optimal map is a pure lattice translation. Source atoms are
    ordered with the second coordinate fastest, matching grid-potential nodes.
    """
    if space.kind != "euclidean" or space.dim != 2:
        raise ConfigInvalid("space", "translation instances live on the euclidean plane")
    if n < 2:
        raise ConfigInvalid("params.n", "grid needs at least 2 nodes per side")
    h = 1.0 / (n - 1)
    shift = (round((n - 1) / 4) * h, 0.0)
    xs = [Point(0, (i * h, j * h)) for i in range(n) for j in range(n)]
    ys = [Point(0, (p.coords[0] + shift[0], p.coords[1] + shift[1])) for p in xs]
    return measure(space, xs), measure(space, ys), shift, h


def random_instance(
    space: SpaceHandle, seed: int, n: int, m: Optional[int] = None
) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """Random atoms with random weights on both sides."""
    m = n if m is None else m
    rng_mu = substream(seed, "mu")
    rng_nu = substream(seed, "nu")
    mu_pts = sample_points(space, rng_mu, n)
    nu_pts = sample_points(space, rng_nu, m)
    wa = rng_mu.uniform(0.5, 1.5, n)
    wb = rng_nu.uniform(0.5, 1.5, m)
    wa /= wa.sum()
    wb /= wb.sum()
    return measure(space, mu_pts, wa), measure(space, nu_pts, wb)


def _instance(
    space: SpaceHandle, params: dict, seed: int
) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    if "mu" in params and "nu" in params:
        return measure_from_json(space, params["mu"]), measure_from_json(space, params["nu"])
    tag = params.get("instance", "random")
    if tag == "line":
        return line_instance(space)
    if tag == "translation":
        mu, nu, _, _ = translation_instance(space, int(params.get("n", 5)))
        return mu, nu
    if tag == "random":
        n = int(params.get("n", 6))
        m = int(params.get("m", n))
        if n < 1 or m < 1:
            raise ConfigInvalid("params.n", "instance sizes must be positive")
        return random_instance(space, seed, n, m)
    raise ConfigInvalid("params.instance", f"unknown instance tag {tag!r}")


# ---------------------------------------------------------------------------
# experiment runners


def _dual_value(
    mu: DiscreteMeasure, nu: DiscreteMeasure, psi: tuple[float, ...], phi: tuple[float, ...]
) -> float:
    return float(
        sum(p * w for p, w in zip(phi, nu.weights))
        - sum(p * w for p, w in zip(psi, mu.weights))
    )


def _run_solve(space: SpaceHandle, params: dict, seed: int) -> tuple[dict, bool]:
    mu, nu = _instance(space, params, seed)
    plan, pot, total = solve_kantorovich(space, mu, nu)
    row = np.zeros(len(mu.points))
    col = np.zeros(len(nu.points))
    for i, j, w in plan.entries:
        row[i] += w
        col[j] += w
    marg = max(
        float(np.abs(row - np.asarray(mu.weights)).max()),
        float(np.abs(col - np.asarray(nu.weights)).max()),
    )
    gap = abs(total - _dual_value(mu, nu, pot.psi, pot.phi))
    ok = pot.feasible and gap <= 1e-9 and marg <= 1e-9
    metrics = {
        "cost": _metric(total),
        "duality_gap": _metric(gap),
        "slack_max": _metric(pot.slack_max),
        "marginal_error": _metric(marg),
        "entries": _metric(len(plan.entries)),
    }
    return metrics, ok


def _run_monotonicity(space: SpaceHandle, params: dict, seed: int) -> tuple[dict, bool]:
    mu, nu = _instance(space, params, seed)
    plan, _pot, total = solve_kantorovich(space, mu, nu)
    max_len = int(params.get("max_len", 3))
    result = check_cyclic_monotonicity(space, plan, max_len=max_len, seed=seed)
    metrics = {
        "violations": _metric(result["violations"]),
        "worst_slack": _metric(result["worst_slack"]),
        "cost": _metric(total),
    }
    return metrics, result["violations"] == 0


def _tree_same_gate_pair(
    space: SpaceHandle, rng: np.random.Generator
) -> tuple[Point, Point, Point]:
    """x behind a branch vertex, y1 != y2 equidistant from x beyond the same vertex."""
    edges = space.params.edges
    degree: dict = {v: 0 for v in space.params.vertices}
    for a, b, _ in edges:
        degree[a] += 1
        degree[b] += 1
    branch = [v for v in space.params.vertices if degree[v] >= 3]
    if not branch:
        raise ConfigInvalid("space", "twist probes on trees need a branch vertex")
    v = branch[int(rng.integers(0, len(branch)))]
    inc = [e for e, (a, b, _) in enumerate(edges) if v in (a, b)]
    idx = rng.permutation(len(inc))
    e_x, e_1, e_2 = inc[int(idx[0])], inc[int(idx[1])], inc[int(idx[2])]

    def at_arc(edge: int, s: float) -> Point:
        a, _b, ln = edges[edge]
        return space.impl.normalize(Point(edge, (s if a == v else ln - s,)))

    x = at_arc(e_x, 0.9 * edges[e_x][2])
    s = float(rng.uniform(0.3, 0.7)) * min(edges[e_1][2], edges[e_2][2])
    return x, at_arc(e_1, s), at_arc(e_2, s)


def _run_twist(space: SpaceHandle, params: dict, seed: int) -> tuple[dict, bool]:
    trials = int(params.get("trials", 20))
    count = int(params.get("directions", 16))
    rng = substream(seed, "twist")
    gaps = []
    holds = []
    for _ in range(trials):
        if space.kind == "tree":
            x, y1, y2 = _tree_same_gate_pair(space, rng)
        else:
            while True:
                x, y1, y2 = sample_points(space, rng, 3)
                if distance(space, y1, y2) <= 1e-3:
                    continue
                if space.kind == "open_book" and min(
                    x.coords[0], y1.coords[0], y2.coords[0]
                ) <= 1e-3:
                    continue
                break
        dirs = direction_set(space, x, targets=[y1, y2], count=count, seed=seed)
        rep = twist_test(space, x, y1, y2, dirs)
        gaps.append(rep.max_gap)
        holds.append(rep.twist_holds)
    frac = sum(holds) / trials
    metrics = {
        "trials": _metric(trials),
        "min_gap": _metric(min(gaps)),
        "max_gap": _metric(max(gaps)),
        "frac_holds": _metric(frac),
    }
    # trees are probed with equidistant same-branch targets, which the squared
    # distance cost cannot tell apart; everywhere else the probes distinguish.
    ok = frac == 0.0 if space.kind == "tree" else frac == 1.0
    return metrics, ok


def _run_fermat(space: SpaceHandle, params: dict, seed: int) -> tuple[dict, bool]:
    cap = float(params.get("slope_cap", 10.0))
    if space.kind == "tree":
        edges = space.params.edges
        degree: dict = {}
        for a, b, _ in edges:
            degree[a] = degree.get(a, 0) + 1
            degree[b] = degree.get(b, 0) + 1
        leaf = next(v for v in space.params.vertices if degree.get(v, 0) == 1)
        leaf_pt = space.impl.vertex_point(leaf)
        rep = fermat_check(
            space,
            lambda p: distance(space, p, leaf_pt),
            leaf_pt,
            direction_set(space, leaf_pt),
        )
        metrics = {
            "min_directional": _metric(rep.min_directional),
            "two_sided_zero": _metric(1.0 if rep.two_sided_zero else 0.0),
            "pitch": _metric(0.0),
        }
        return metrics, rep.min_directional > 0.0 and rep.two_sided_zero

    if space.kind == "open_book":
        rng = substream(seed, "fermat")
        while True:
            (y,) = sample_points(space, rng, 1)
            if y.coords[0] > 0.05:
                break
        rep = fermat_check(
            space,
            lambda p: cost(space, p, y),
            y,
            direction_set(space, y, count=int(params.get("directions", 16))),
        )
        metrics = {
            "min_directional": _metric(rep.min_directional),
            "two_sided_zero": _metric(1.0 if rep.two_sided_zero else 0.0),
            "pitch": _metric(0.0),
        }
        return metrics, rep.min_directional >= -1e-6 and rep.two_sided_zero

    n = int(params.get("n", 9))
    mu, nu, _shift, h = translation_instance(space, n)
    plan, pot, _total = solve_kantorovich(space, mu, nu, refine_duals=False)
    grid = GridPotential((0.0, 0.0), h, (n, n), pot.psi)
    # probe the target matched to the central source; the minimizer then sits
    # a quarter width off center and every quotient stays on the grid
    mid = (n // 2) * n + (n // 2)
    j_star = max((e for e in plan.entries if e[0] == mid), key=lambda e: e[2])[1]
    y = nu.points[j_star]

    def f(p: Point) -> float:
        return grid.interpolate(p) + cost(space, p, y)

    x_star = min(range(len(mu.points)), key=lambda i: f(mu.points[i]))
    xs = mu.points[x_star]
    worst = math.inf
    count = int(params.get("directions", 32))
    for g in direction_set(space, xs, targets=[y], count=count, seed=seed):
        d_plus = geodesic_derivative(space, f, xs, g).one_sided_plus
        if not math.isnan(d_plus):
            worst = min(worst, d_plus)
    metrics = {
        "min_directional": _metric(worst),
        "pitch": _metric(h),
        "slope_ratio": _metric(max(0.0, -worst) / h),
    }
    return metrics, worst >= -cap * h


def _run_eilenberg(space: SpaceHandle, params: dict, seed: int) -> tuple[dict, bool]:
    n_samples = int(params.get("n_samples", 40_000))
    eps = params.get("epsilon")
    eps = None if eps is None else float(eps)
    if space.kind == "euclidean":
        region = BoxRegion(0, (-0.5,) * space.dim, (0.5,) * space.dim)
        start = Point(0, (0.0,) * space.dim)
        end = Point(0, (0.5,) + (0.0,) * (space.dim - 1))
    elif space.kind == "tree":
        region = TreeRegion(tuple(space.params.vertices))
        impl = space.impl
        far = max(range(len(space.params.vertices)), key=lambda k: impl.droot[k])
        start = impl.vertex_point(impl.root)
        end = impl.vertex_point(space.params.vertices[far])
    elif space.kind == "open_book":
        start = space.impl.normalize(Point(0, (0.5, 0.0)))
        region = BallRegion(start, 0.4)
        end = space.impl.normalize(Point(0, (0.9, 0.0)))
    else:
        raise ConfigInvalid("space", f"no shell experiment for {space.kind!r}")
    g = geodesic(space, start, end)
    lhs, rhs, sigma, holds = _shell_estimate(space, g, region, n_samples, eps, seed)
    metrics = {
        "lhs": _metric(lhs, sigma),
        "rhs": _metric(rhs),
        "holds": _metric(1.0 if holds else 0.0),
    }
    return metrics, holds


def _run_transport_identity(space: SpaceHandle, params: dict, seed: int) -> tuple[dict, bool]:
    if space.kind != "euclidean" or space.dim != 2:
        raise ConfigInvalid("space", "transport-identity runs on the euclidean plane")
    sizes = tuple(int(v) for v in params.get("sizes", LADDER))
    if len(sizes) < 2 or any(s < 3 for s in sizes):
        raise ConfigInvalid("params.sizes", "need at least two grid sizes of side >= 3")
    pitches = []
    res_mean = []
    res_p95 = []
    res_max = []
    gap_p95 = []
    frac_quarter = []
    exact = True
    for n in sizes:
        mu, nu, shift, h = translation_instance(space, n)
        # raw node prices keep the finite-difference error on one scaling
        # regime across the whole ladder, which the order fit needs
        plan, pot, _total = solve_kantorovich(space, mu, nu, refine_duals=False)
        tmap = extract_monge_map(plan)
        if not hasattr(tmap, "points"):
            raise ParamOutOfRange("translation plan did not collapse to a map")
        for i, p in enumerate(mu.points):
            want = (p.coords[0] + shift[0], p.coords[1] + shift[1])
            if math.hypot(
                tmap.points[i].coords[0] - want[0], tmap.points[i].coords[1] - want[1]
            ) > 1e-12:
                exact = False
        grid = GridPotential((0.0, 0.0), h, (n, n), pot.psi)
        residuals = []
        gaps = []
        for flat in range(len(mu.points)):
            if not grid.is_interior(flat):
                continue
            rep = verify_transport_identity(space, grid, tmap, flat)
            residuals.append(rep.residual)
            gaps.append(rep.brenier_gap)
        res = np.array(residuals)
        gp = np.array(gaps)
        pitches.append(h)
        res_mean.append(float(res.mean()))
        res_p95.append(float(np.quantile(res, 0.95)))
        res_max.append(float(res.max()))
        gap_p95.append(float(np.quantile(gp, 0.95)))
        frac_quarter.append(float((res <= 0.25 * h).mean()))
    order = float(
        np.polyfit(np.log(pitches), np.log(np.maximum(res_mean, 1e-300)), 1)[0]
    )
    c_fit = max(p / h for p, h in zip(res_p95, pitches))
    c_gap = max(p / h for p, h in zip(gap_p95, pitches))
    frac_ok = min(frac_quarter)
    ok = order >= 0.9 and exact and frac_ok >= 0.95
    metrics = {
        "order": _metric(order),
        "c_fit": _metric(c_fit),
        "c_gap": _metric(c_gap),
        "residual_max_finest": _metric(res_max[-1]),
        "frac_quarter_pitch": _metric(frac_ok),
        "exact_translation": _metric(1.0 if exact else 0.0),
    }
    return metrics, ok


def _run_polar(space: SpaceHandle, params: dict, seed: int) -> tuple[dict, bool]:
    trials = int(params.get("trials", 20))
    n = int(params.get("n", 6))
    rng = substream(seed, "polar")
    worst = 0.0
    preserved = 0
    for _ in range(trials):
        mu = measure(space, sample_points(space, rng, n))
        perm = rng.permutation(n)
        s = map_from_points(space, mu, [mu.points[int(k)] for k in perm])
        fact = polar_factorize(space, mu, s)
        worst = max(worst, fact.residual)
        if verify_measure_preserving(mu, fact.u):
            preserved += 1
    metrics = {
        "trials": _metric(trials),
        "residual_max": _metric(worst),
        "frac_measure_preserving": _metric(preserved / trials),
    }
    return metrics, worst <= 1e-9 and preserved == trials


def _run_geometry_suite(space: SpaceHandle, params: dict, seed: int) -> tuple[dict, bool]:
    samples = int(params.get("samples", 2000))
    rng = substream(seed, "geometry")
    min_defect = math.inf
    max_defect = -math.inf
    worst_triangle = -math.inf
    worst_symmetry = 0.0
    worst_speed = 0.0
    for _ in range(samples):
        x, y, z = sample_points(space, rng, 3)
        dxy = distance(space, x, y)
        worst_symmetry = max(worst_symmetry, abs(dxy - distance(space, y, x)))
        worst_triangle = max(
            worst_triangle, distance(space, x, z) - dxy - distance(space, y, z)
        )
        g = geodesic(space, x, y)
        t1, t2 = sorted(rng.uniform(0.0, 1.0, 2))
        seg = distance(space, g.eval(float(t1)), g.eval(float(t2)))
        worst_speed = max(worst_speed, abs(seg - (t2 - t1) * g.length))
        defect = cat0_defect(space, x, y, z, float(rng.uniform(0, 1)))
        min_defect = min(min_defect, defect)
        max_defect = max(max_defect, defect)
    metrics = {
        "samples": _metric(samples),
        "min_defect": _metric(min_defect),
        "max_defect": _metric(max_defect),
        "max_triangle_violation": _metric(worst_triangle),
        "max_symmetry_error": _metric(worst_symmetry),
        "max_speed_deviation": _metric(worst_speed),
    }
    ok = (
        min_defect >= -1e-9
        and worst_triangle <= 1e-9
        and worst_symmetry <= 1e-12
        and worst_speed <= 1e-9
        # flat spaces meet the comparison identity exactly
        and (space.kind != "euclidean" or max_defect <= 1e-9)
    )
    return metrics, ok


_RUNNERS: dict[str, Callable[[SpaceHandle, dict, int], tuple[dict, bool]]] = {
    "solve": _run_solve,
    "monotonicity": _run_monotonicity,
    "twist": _run_twist,
    "fermat": _run_fermat,
    "eilenberg": _run_eilenberg,
    "transport-identity": _run_transport_identity,
    "polar": _run_polar,
    "geometry-suite": _run_geometry_suite,
}


# ---------------------------------------------------------------------------
# scenario plumbing


_ALLOWED_PARAMS = {
    "solve": {"mu", "nu", "instance", "n", "m"},
    "monotonicity": {"mu", "nu", "instance", "n", "m", "max_len"},
    "twist": {"trials", "directions"},
    "fermat": {"slope_cap", "directions", "n"},
    "eilenberg": {"n_samples", "epsilon"},
    "transport-identity": {"sizes"},
    "polar": {"trials", "n"},
    "geometry-suite": {"samples"},
}


def scenario_from_config(
    doc, experiment: Optional[str] = None, seed: Optional[int] = None
) -> Scenario:
    """Build a validated scenario from a parsed config document."""
    if not isinstance(doc, dict):
        raise ConfigInvalid("$", "config must be a JSON object")
    if "space" not in doc:
        raise ConfigInvalid("space", "missing space descriptor")
    tag = experiment if experiment is not None else doc.get("experiment")
    if tag is None:
        raise ConfigInvalid("experiment", "no experiment given")
    if tag not in EXPERIMENTS:
        raise ConfigInvalid("experiment", f"unknown experiment {tag!r}")
    params = doc.get("params", {})
    if not isinstance(params, dict):
        raise ConfigInvalid("params", "params must be an object")
    for key in params:
        if key not in _ALLOWED_PARAMS[tag]:
            raise ConfigInvalid(f"params.{key}", f"unknown parameter for {tag!r}")
    chosen = seed if seed is not None else doc.get("seed")
    if chosen is None:
        raise ConfigInvalid("seed", "no seed given")
    if not isinstance(chosen, int) or isinstance(chosen, bool):
        raise ConfigInvalid("seed", "seed must be an integer")
    return Scenario(space=doc["space"], experiment=str(tag), params=params, seed=chosen)


def run_scenario(scenario: Scenario) -> Report:
    """Run one experiment; identical scenarios produce identical reports."""
    if scenario.experiment not in _RUNNERS:
        raise ConfigInvalid("experiment", f"unknown experiment {scenario.experiment!r}")
    try:
        space = space_from_json(scenario.space)
    except ConfigInvalid:
        raise
    except Cat0otError as exc:
        raise ConfigInvalid("space", str(exc)) from exc
    start = time.perf_counter()
    metrics, passed = _RUNNERS[scenario.experiment](space, scenario.params, scenario.seed)
    runtime_ms = int(1000.0 * (time.perf_counter() - start))
    return Report(scenario=scenario, metrics=metrics, passed=bool(passed), runtime_ms=runtime_ms)


def run_batch(scenarios: list[Scenario]) -> list[Report]:
    """Run scenarios concurrently; results come back in input order."""
    if not scenarios:
        return []
    cap = os.environ.get("CAT0OT_THREADS")
    workers = int(cap) if cap else min(4, len(scenarios))
    if workers < 1:
        raise ConfigInvalid("CAT0OT_THREADS", "thread cap must be positive")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_scenario, scenarios))


# ---------------------------------------------------------------------------
# report emission


def report_to_json(report: Report) -> dict:
    """JSON document for a report; runtime is deliberately left out."""
    return {
        "scenario": {
            "space": report.scenario.space,
            "experiment": report.scenario.experiment,
            "params": report.scenario.params,
            "seed": report.scenario.seed,
        },
        "metrics": report.metrics,
        "pass": report.passed,
    }


def render_report(report: Report, fmt: str = "json") -> str:
    """Serialize a report to a byte-stable string."""
    if fmt == "json":
        return json.dumps(report_to_json(report), sort_keys=True, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "value", "sigma"])
        for name in sorted(report.metrics):
            cell = report.metrics[name]
            sigma = cell["sigma"]
            writer.writerow([name, repr(cell["value"]), "" if sigma is None else repr(sigma)])
        writer.writerow(["pass", repr(1.0 if report.passed else 0.0), ""])
        return buf.getvalue()
    raise ConfigInvalid("format", f"unknown format {fmt!r}")


def emit_report(report: Report, out: Optional[str] = None, fmt: str = "json") -> str:
    """Render a report and optionally write it to a file."""
    text = render_report(report, fmt)
    if out is not None:
        try:
            with open(out, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            raise IoFailure(f"could not write report to {out!r}: {exc}") from exc
    return text
