"""Independent reference computations the tests compare against.

Everything here deliberately avoids the library's own geodesic and solver
code paths: tree distances go through networkx shortest paths on the raw edge
data, book distances through the two-case unfolding formula, transport costs
through scipy's LP solver, and comb sizes through a closed-form count.
"""

from __future__ import annotations

import math

import networkx as nx
import numpy as np
import scipy.optimize

from cat0ot import Point, SpaceHandle, normalize, pairwise_costs


def tree_distance(space: SpaceHandle, p: Point, q: Point) -> float:
    """Shortest-path distance from the raw edge list via networkx."""
    edges = space.params.edges
    pn = normalize(space, p)
    qn = normalize(space, q)
    if pn.chart == qn.chart:
        return abs(pn.coords[0] - qn.coords[0])
    G = nx.Graph()
    for a, b, ln in edges:
        G.add_edge(a, b, weight=ln)

    def splice(pt: Point, name: str):
        a, b, ln = edges[pt.chart]
        s = pt.coords[0]
        if s <= 1e-12:
            return a
        if s >= ln - 1e-12:
            return b
        G.add_edge(name, a, weight=s)
        G.add_edge(name, b, weight=ln - s)
        return name

    return float(
        nx.dijkstra_path_length(G, splice(pn, "__p__"), splice(qn, "__q__"))
    )


def book_distance(p: Point, q: Point) -> float:
    """Two-case open book distance: in-page straight line or unfolding."""
    (u1, v1), (u2, v2) = p.coords, q.coords
    if p.chart == q.chart:
        return math.hypot(u1 - u2, v1 - v2)
    return math.hypot(u1 + u2, v1 - v2)


def comb_counts(depth: int, grid: int) -> tuple[int, int]:
    """(vertices, edges) of the comb by direct counting.

    Generation 0 is the base chain with grid segments. Each later generation
    glues one tooth at every chain node of every previous-generation tooth
    (the base chain counts as the generation-0 tooth); intermediate teeth are
    themselves subdivided into grid segments, last-generation teeth are single
    unit edges.
    """
    if depth == 0:
        return 2, 1
    verts = grid + 1
    edges = grid
    anchors = grid + 1
    for gen in range(1, depth + 1):
        if gen < depth:
            verts += anchors * grid
            edges += anchors * grid
            anchors = anchors * (grid + 1)
        else:
            verts += anchors
            edges += anchors
    return verts, edges


def lp_transport_cost(space: SpaceHandle, mu, nu) -> float:
    """Optimal transport cost via scipy's LP solver (no shared solver code)."""
    C = pairwise_costs(space, mu, nu)
    n, m = C.shape
    A = []
    rhs = []
    for i in range(n):
        row = np.zeros(n * m)
        row[i * m : (i + 1) * m] = 1.0
        A.append(row)
        rhs.append(mu.weights[i])
    for j in range(m):
        row = np.zeros(n * m)
        row[j::m] = 1.0
        A.append(row)
        rhs.append(nu.weights[j])
    res = scipy.optimize.linprog(
        C.reshape(-1), A_eq=np.array(A[:-1]), b_eq=np.array(rhs[:-1]), method="highs"
    )
    assert res.status == 0, res.message
    return float(res.fun)


def euclidean_vertex_angle(origin, a, b) -> float:
    """Angle at origin of the Euclidean triangle (origin, a, b)."""
    u = np.asarray(a.coords) - np.asarray(origin.coords)
    v = np.asarray(b.coords) - np.asarray(origin.coords)
    cosv = float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))
    return math.acos(max(-1.0, min(1.0, cosv)))
