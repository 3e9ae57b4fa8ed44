from __future__ import annotations

import math

import numpy as np
import pytest

from cat0ot import (
    BoundaryPoint,
    DiscreteMeasure,
    EmptyBall,
    GridPotential,
    MapUndefined,
    NotDeterministic,
    ParamOutOfRange,
    Point,
    SupportTooLarge,
    TooManyTuples,
    TransportMap,
    TransportPlan,
    UnsupportedShape,
    WeightMismatch,
    brute_force_oracle,
    build_euclidean,
    c_subdifferential,
    c_transform,
    check_cyclic_monotonicity,
    cost,
    distance,
    extract_monge_map,
    measure,
    measure_from_json,
    measure_to_json,
    pairwise_costs,
    plan_from_json,
    plan_to_csv,
    plan_to_json,
    psi_R,
    solve_kantorovich,
    verify_transport_identity,
)
from cat0ot.harness import random_instance, sample_points, translation_instance
from cat0ot.rng import substream

from _oracles import lp_transport_cost


@pytest.fixture(scope="module")
def line_instance(e1):
    mu = measure(e1, [Point(0, (0.0,)), Point(0, (1.0,))])
    nu = measure(e1, [Point(0, (2.0,)), Point(0, (3.0,))])
    return mu, nu


# ---------------------------------------------------------------------------
# measures


def test_measure_normalizes_and_defaults_uniform(e1):
    m = measure(e1, [Point(0, (0.0,)), Point(0, (1.0,)), Point(0, (2.0,))])
    assert m.weights == (pytest.approx(1 / 3),) * 3
    with pytest.raises(ParamOutOfRange):
        measure(e1, [])
    with pytest.raises(WeightMismatch):
        measure(e1, [Point(0, (0.0,))], weights=[0.5, 0.5])
    with pytest.raises(WeightMismatch):
        measure(e1, [Point(0, (0.0,)), Point(0, (1.0,))], weights=[0.5, 0.4])
    with pytest.raises(ParamOutOfRange):
        measure(e1, [Point(0, (0.0,)), Point(0, (1.0,))], weights=[1.0, 0.0])


# ---------------------------------------------------------------------------
# the worked line instance, frozen end to end


def test_line_solution_frozen(e1, line_instance):
    mu, nu = line_instance
    plan, pot, total = solve_kantorovich(e1, mu, nu)
    assert plan.entries == ((0, 0, 0.5), (1, 1, 0.5))
    assert total == pytest.approx(2.0, abs=1e-12)
    assert pot.psi == pytest.approx((0.0, 2.0), abs=1e-12)
    assert pot.phi == pytest.approx((2.0, 4.0), abs=1e-12)
    assert pot.feasible
    assert pot.slack_max <= 1e-9
    # dual value matches the primal cost
    dual = sum(w * v for w, v in zip(nu.weights, pot.phi)) - sum(
        w * v for w, v in zip(mu.weights, pot.psi)
    )
    assert dual == pytest.approx(total, abs=1e-9)


def test_line_potentials_are_conjugate(e1, line_instance):
    mu, nu = line_instance
    _, pot, _ = solve_kantorovich(e1, mu, nu)
    phi = c_transform(e1, pot.psi, mu.points, nu.points)
    assert phi == pytest.approx(pot.phi, abs=1e-9)
    # transforming back reproduces psi: the potential is already c-concave
    psi_back = [-v for v in c_transform(e1, [-v for v in pot.phi], nu.points, mu.points)]
    assert psi_back == pytest.approx(pot.psi, abs=1e-9)


def test_support_entries_are_tight(e1, line_instance):
    mu, nu = line_instance
    plan, pot, _ = solve_kantorovich(e1, mu, nu)
    C = pairwise_costs(e1, mu, nu)
    for i, j, mass in plan.entries:
        assert mass > 0
        slack = C[i, j] - (pot.phi[j] - pot.psi[i])
        assert abs(slack) <= 1e-9
    # feasibility everywhere, not only on the support
    for i in range(len(mu.points)):
        for j in range(len(nu.points)):
            assert pot.phi[j] - pot.psi[i] <= C[i, j] + 1e-9


# ---------------------------------------------------------------------------
# solver against independent oracles


@pytest.mark.parametrize("kind", ["e2", "tripod", "book3"])
def test_solver_matches_permutation_minimum(kind, request):
    space = request.getfixturevalue(kind)
    for seed in range(20):
        rng = substream(seed, f"perm-oracle:{kind}")
        n = int(rng.integers(2, 8))
        pts_mu = sample_points(space, rng, n)
        pts_nu = sample_points(space, rng, n)
        mu, nu = measure(space, pts_mu), measure(space, pts_nu)
        plan, pot, total = solve_kantorovich(space, mu, nu)
        _, best = brute_force_oracle(space, mu, nu)
        assert total == pytest.approx(best, abs=1e-9)
        assert pot.feasible and pot.slack_max <= 1e-9
        assert total == pytest.approx(lp_transport_cost(space, mu, nu), abs=1e-9)


@pytest.mark.parametrize("kind", ["e2", "tripod"])
def test_solver_matches_lp_on_uneven_weights(kind, request):
    space = request.getfixturevalue(kind)
    for seed in range(10):
        rng = substream(seed, f"lp-oracle:{kind}")
        n, m = int(rng.integers(2, 7)), int(rng.integers(2, 7))
        w_mu = rng.uniform(0.2, 1.0, n)
        w_nu = rng.uniform(0.2, 1.0, m)
        mu = measure(space, sample_points(space, rng, n), w_mu / w_mu.sum())
        nu = measure(space, sample_points(space, rng, m), w_nu / w_nu.sum())
        plan, pot, total = solve_kantorovich(space, mu, nu)
        assert total == pytest.approx(lp_transport_cost(space, mu, nu), abs=1e-9)
        marg_mu = np.zeros(n)
        marg_nu = np.zeros(m)
        for i, j, mass in plan.entries:
            marg_mu[i] += mass
            marg_nu[j] += mass
        assert marg_mu == pytest.approx(mu.weights, abs=1e-9)
        assert marg_nu == pytest.approx(nu.weights, abs=1e-9)


def test_large_uniform_instance_stays_consistent(e2):
    # the assignment fast path must agree with the LP route
    rng = substream(7, "large-uniform")
    mu = measure(e2, sample_points(e2, rng, 64))
    nu = measure(e2, sample_points(e2, rng, 64))
    _, pot, total = solve_kantorovich(e2, mu, nu)
    assert pot.feasible and pot.slack_max <= 1e-9
    assert total == pytest.approx(lp_transport_cost(e2, mu, nu), abs=1e-9)


def test_solver_input_validation(e2):
    mu = measure(e2, [Point(0, (0.0, 0.0))], weights=[1.0])
    nu = measure(e2, [Point(0, (1.0, 0.0)), Point(0, (0.0, 1.0))], weights=[0.25, 0.75])
    plan, pot, total = solve_kantorovich(e2, mu, nu)  # single atom splits
    assert len(plan.entries) == 2
    with pytest.raises(UnsupportedShape):
        brute_force_oracle(e2, mu, nu)


# ---------------------------------------------------------------------------
# cyclic monotonicity


@pytest.mark.parametrize("kind", ["e2", "tripod", "book3"])
def test_optimal_plans_are_cyclically_monotone(kind, request):
    space = request.getfixturevalue(kind)
    for seed in range(10):
        mu, nu = random_instance(space, seed, 6)
        plan, _, _ = solve_kantorovich(space, mu, nu)
        out = check_cyclic_monotonicity(space, plan, max_len=3)
        assert out["violations"] == 0
        assert out["worst_slack"] <= 1e-9


def test_swapped_line_plan_has_one_violation(e1, line_instance):
    mu, nu = line_instance
    bad = TransportPlan(mu, nu, ((0, 1, 0.5), (1, 0, 0.5)))
    out = check_cyclic_monotonicity(e1, bad, max_len=2)
    assert out["violations"] == 1
    assert out["worst_slack"] == pytest.approx(1.0, abs=1e-12)


def test_cyclic_check_guards(e1, line_instance):
    mu, nu = line_instance
    plan, _, _ = solve_kantorovich(e1, mu, nu)
    with pytest.raises(ParamOutOfRange):
        check_cyclic_monotonicity(e1, plan, max_len=1)
    with pytest.raises(ParamOutOfRange):
        check_cyclic_monotonicity(e1, plan, mode="nonsense")
    big = measure(e1, [Point(0, (float(i),)) for i in range(40)])
    big_plan = TransportPlan(big, big, tuple((i, i, 1 / 40) for i in range(40)))
    with pytest.raises(TooManyTuples):
        check_cyclic_monotonicity(e1, big_plan, max_len=6)
    sampled = check_cyclic_monotonicity(e1, big_plan, max_len=6, mode="sampled", n_samples=500)
    assert sampled["violations"] == 0


# ---------------------------------------------------------------------------
# Monge maps


def test_extract_monge_map_from_deterministic_plan(e1, line_instance):
    mu, nu = line_instance
    plan, _, _ = solve_kantorovich(e1, mu, nu)
    T = extract_monge_map(plan)
    assert isinstance(T, TransportMap)
    assert T.assignment[0].coords == (2.0,)
    assert T.assignment[1].coords == (3.0,)


def test_split_atom_reports_not_deterministic(e1):
    mu = measure(
        e1,
        [Point(0, (0.0,)), Point(0, (1.0,)), Point(0, (2.0,))],
        weights=[0.5, 0.25, 0.25],
    )
    nu = measure(
        e1,
        [Point(0, (3.0,)), Point(0, (4.0,)), Point(0, (5.0,))],
        weights=[0.25, 0.25, 0.5],
    )
    plan = TransportPlan(mu, nu, ((0, 0, 0.25), (0, 1, 0.25), (1, 2, 0.25), (2, 2, 0.25)))
    out = extract_monge_map(plan)
    assert isinstance(out, NotDeterministic)
    assert out.split_mass == pytest.approx(0.25, abs=1e-12)


def test_map_from_points_needs_full_cover(e1, line_instance):
    mu, _ = line_instance
    from cat0ot import map_from_points

    with pytest.raises(MapUndefined):
        map_from_points(e1, mu, [Point(0, (0.0,))])


# ---------------------------------------------------------------------------
# ball-restricted potentials


def test_psi_R_matches_direct_minimum(e2):
    rng = substream(11, "psi-ball")
    mu = measure(e2, sample_points(e2, rng, 6))
    nu = measure(e2, sample_points(e2, rng, 6))
    _, pot, _ = solve_kantorovich(e2, mu, nu)
    x = sample_points(e2, rng, 1)[0]
    y0 = nu.points[0]
    R = 2.5
    got = psi_R(e2, pot, nu, x, y0, R)
    want = min(
        pot.phi[j] - cost(e2, x, y)
        for j, y in enumerate(nu.points)
        if distance(e2, y0, y) <= R
    )
    assert got == pytest.approx(want, abs=1e-12)


def test_psi_R_guards(e2):
    rng = substream(12, "psi-ball-guards")
    mu = measure(e2, sample_points(e2, rng, 4))
    nu = measure(e2, sample_points(e2, rng, 4))
    _, pot, _ = solve_kantorovich(e2, mu, nu)
    x = mu.points[0]
    with pytest.raises(ParamOutOfRange):
        psi_R(e2, pot, nu, x, nu.points[0], 0.0)
    far = Point(0, (500.0, 500.0))
    with pytest.raises(EmptyBall):
        psi_R(e2, pot, nu, x, far, 0.1)


def test_psi_R_is_lipschitz_with_rate_two_r(e2):
    rng = substream(13, "psi-ball-lip")
    mu = measure(e2, sample_points(e2, rng, 8))
    nu = measure(e2, sample_points(e2, rng, 8))
    _, pot, _ = solve_kantorovich(e2, mu, nu)
    y0 = nu.points[0]
    r = 2.0
    for _ in range(200):
        # both arguments stay inside the ball of radius r around y0
        u = rng.normal(size=2)
        v = rng.normal(size=2)
        x1 = Point(0, tuple(np.asarray(y0.coords) + r * rng.uniform(0, 1) * u / np.hypot(*u)))
        x2 = Point(0, tuple(np.asarray(y0.coords) + r * rng.uniform(0, 1) * v / np.hypot(*v)))
        lhs = abs(psi_R(e2, pot, nu, x1, y0, r) - psi_R(e2, pot, nu, x2, y0, r))
        assert lhs <= 2.0 * r * distance(e2, x1, x2) + 1e-9


# ---------------------------------------------------------------------------
# c-subdifferentials and the translation identity


def test_c_subdifferential_of_translation_is_the_match(e2):
    mu, nu, shift, h = translation_instance(e2, 5)
    plan, pot, _ = solve_kantorovich(e2, mu, nu)
    for i in range(len(mu.points)):
        assert c_subdifferential(e2, pot, mu, nu, i) == {i}


def test_grid_potential_basics():
    gp = GridPotential(origin=(0.0, 0.0), pitch=0.5, shape=(3, 3), values=tuple(range(9)))
    assert gp.node_index(gp.flat_index((2, 1))) == (2, 1)
    assert gp.node_point(4).coords == (0.5, 0.5)
    assert gp.is_interior(4)
    assert not gp.is_interior(0) and not gp.is_interior(8)
    lin = GridPotential(
        origin=(0.0, 0.0),
        pitch=0.5,
        shape=(3, 3),
        values=tuple(2.0 * (i * 0.5) + 3.0 * (j * 0.5) for i in range(3) for j in range(3)),
    )
    assert lin.gradient(4) == pytest.approx((2.0, 3.0), abs=1e-12)
    assert lin.interpolate(Point(0, (0.3, 0.7))) == pytest.approx(0.6 + 2.1, abs=1e-12)
    assert lin.interpolate(Point(0, (1.2, -0.1))) == pytest.approx(2.4 - 0.3, abs=1e-12)


def _translation_setup(space, n):
    mu, nu, shift, h = translation_instance(space, n)
    plan, _, _ = solve_kantorovich(space, mu, nu)
    T = extract_monge_map(plan)
    assert isinstance(T, TransportMap)
    values = tuple(
        shift[0] * p.coords[0] + shift[1] * p.coords[1] for p in mu.points
    )
    grid = GridPotential(origin=(0.0, 0.0), pitch=h, shape=(n, n), values=values)
    return grid, T, shift, h


def test_transport_identity_on_translation(e2):
    grid, T, shift, h = _translation_setup(e2, 9)
    n = 9
    for i in range(len(T.source.points)):
        if not grid.is_interior(i):
            continue
        rep = verify_transport_identity(e2, grid, T, i)
        assert rep.residual <= 0.25 * h
        assert rep.brenier_gap <= 1e-9  # the gradient of a linear potential is exact


def test_transport_identity_guards(e2, tripod):
    grid, T, _, _ = _translation_setup(e2, 5)
    with pytest.raises(BoundaryPoint):
        verify_transport_identity(e2, grid, T, 0)
    with pytest.raises(MapUndefined):
        verify_transport_identity(e2, grid, T, 999)
    with pytest.raises(ParamOutOfRange):
        verify_transport_identity(tripod, grid, T, 6)


# ---------------------------------------------------------------------------
# serialization


def test_measure_json_round_trip(tripod):
    m = measure(
        tripod,
        [Point(0, (0.4,)), Point(1, (0.7,)), Point(2, (0.1,))],
        weights=[0.5, 0.25, 0.25],
    )
    doc = measure_to_json(m)
    back = measure_from_json(tripod, doc)
    assert back == m


def test_plan_serialization_round_trip(e1, line_instance):
    mu, nu = line_instance
    plan, _, _ = solve_kantorovich(e1, mu, nu)
    doc = plan_to_json(plan)
    assert plan_from_json(doc, mu, nu) == plan
    csv_text = plan_to_csv(plan)
    lines = csv_text.strip().splitlines()
    assert lines[0] == "i,j,mass"
    assert lines[1] == "0,0,0.5"
    assert len(lines) == 3


def test_support_cap(e1):
    pts = [Point(0, (float(i),)) for i in range(10_001)]
    with pytest.raises(SupportTooLarge):
        solve_kantorovich(e1, DiscreteMeasure(tuple(pts), (1.0 / 10_001,) * 10_001), measure(e1, pts[:1]))
