"""Dense transportation simplex.

Minimizes sum C[i, j] x[i, j] over nonnegative x with prescribed row sums a
and column sums b (sum a = sum b). Exact at desk scale: the basis is kept as
a spanning tree of the bipartite node graph, pricing is most-negative with a
deterministic first-index tie break, and a Bland fallback engages after a
streak of degenerate pivots so cycling cannot occur.
"""

from __future__ import annotations

import math

import numpy as np


def northwest_corner(a: np.ndarray, b: np.ndarray):
    """Initial basic feasible staircase with exactly n + m - 1 arcs."""
    n, m = len(a), len(b)
    ra = a.astype(float).copy()
    rb = b.astype(float).copy()
    basis: list[tuple[int, int]] = []
    flow: dict[tuple[int, int], float] = {}
    i = j = 0
    for k in range(n + m - 1):
        q = min(ra[i], rb[j])
        basis.append((i, j))
        flow[(i, j)] = q
        ra[i] -= q
        rb[j] -= q
        if k == n + m - 2:
            break
        if i == n - 1:
            j += 1
        elif j == m - 1:
            i += 1
        elif ra[i] <= 1e-15:
            i += 1
        else:
            j += 1
    return basis, flow


def _duals(n: int, m: int, basis, C: np.ndarray):
    """Node prices from the basis tree, anchored at alpha[0] = 0."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n + m)]
    for i, j in basis:
        adj[i].append((n + j, i * m + j))
        adj[n + j].append((i, i * m + j))
    alpha = np.full(n, np.nan)
    beta = np.full(m, np.nan)
    alpha[0] = 0.0
    stack = [0]
    while stack:
        u = stack.pop()
        for w, arc in adj[u]:
            i, j = divmod(arc, m)
            if w >= n:
                if math.isnan(beta[w - n]):
                    beta[w - n] = C[i, j] - alpha[i]
                    stack.append(w)
            else:
                if math.isnan(alpha[w]):
                    alpha[w] = C[i, j] - beta[j]
                    stack.append(w)
    return alpha, beta


def _tree_path(n: int, basis, src: int, dst: int):
    """Node path src -> dst inside the basis tree."""
    adj: dict[int, list[int]] = {}
    for i, j in basis:
        adj.setdefault(i, []).append(n + j)
        adj.setdefault(n + j, []).append(i)
    parent = {src: src}
    stack = [src]
    while stack:
        u = stack.pop()
        if u == dst:
            break
        for w in adj.get(u, ()):
            if w not in parent:
                parent[w] = u
                stack.append(w)
    path = [dst]
    while path[-1] != src:
        path.append(parent[path[-1]])
    path.reverse()
    return path


def solve_transport(C: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Optimal flows and dual prices for the dense transportation problem.

    Returns (flow dict (i, j) -> mass including degenerate basic arcs,
    alpha, beta) with alpha[i] + beta[j] <= C[i, j] everywhere and equality
    on basic arcs.
    """
    C = np.asarray(C, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n, m = C.shape
    if n == 1 or m == 1:
        # a single row or column forces the flow; duals are direct
        flow = {}
        if n == 1:
            flow = {(0, j): b[j] for j in range(m)}
            alpha = np.array([0.0])
            beta = C[0].copy()
        else:
            flow = {(i, 0): a[i] for i in range(n)}
            beta = np.array([C[:, 0].min()])
            alpha = C[:, 0] - beta[0]
        return flow, alpha, beta

    basis, flow = northwest_corner(a, b)
    basis_set = set(basis)
    enter_eps = 1e-12 * max(1.0, float(np.abs(C).max()))
    bland = False
    degenerate_streak = 0
    max_iters = 100 * (n + m) ** 2 + 10_000

    for _ in range(max_iters):
        alpha, beta = _duals(n, m, basis, C)
        reduced = C - alpha[:, None] - beta[None, :]
        for i, j in basis:
            reduced[i, j] = 0.0
        if bland:
            cand = np.argwhere(reduced < -enter_eps)
            if cand.size == 0:
                break
            ei, ej = int(cand[0][0]), int(cand[0][1])
        else:
            flat = int(np.argmin(reduced))
            ei, ej = divmod(flat, m)
            if reduced[ei, ej] >= -enter_eps:
                break
        path = _tree_path(n, basis, ei, n + ej)
        cycle_arcs = []
        for p, (u, w) in enumerate(zip(path, path[1:])):
            i, j = (u, w - n) if u < n else (w, u - n)
            cycle_arcs.append(((i, j), -1.0 if p % 2 == 0 else +1.0))
        theta = math.inf
        for arc, sign in cycle_arcs:
            if sign < 0 and flow[arc] < theta:
                theta = flow[arc]
        leaving = min(
            arc for arc, sign in cycle_arcs if sign < 0 and flow[arc] <= theta + 1e-15
        )
        for arc, sign in cycle_arcs:
            flow[arc] = max(0.0, flow[arc] + sign * theta)
        flow[(ei, ej)] = theta
        basis_set.remove(leaving)
        basis_set.add((ei, ej))
        basis = sorted(basis_set)
        del flow[leaving]
        if theta <= 1e-15:
            degenerate_streak += 1
            if degenerate_streak > 2 * (n + m):
                bland = True
        else:
            degenerate_streak = 0
    else:
        raise RuntimeError("transportation simplex failed to terminate")

    alpha, beta = _duals(n, m, basis, C)
    return flow, alpha, beta
