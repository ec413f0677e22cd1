"""Independent reference implementations used as test oracles.

Everything here is deliberately written with different algorithms/data
structures than the package code (per-node BFS instead of matrix powers,
LP feasibility instead of component checks, explicit path counting instead
of dependency accumulation) so agreement is meaningful.
"""
from __future__ import annotations

import math
from collections import deque

import numpy as np
from scipy.optimize import linprog


# -- dominance / Pareto ------------------------------------------------------


def beats(fb, fa) -> bool:
    """True iff fitness fb = (V, f1, f2) constraint-dominates fa."""
    va, vb = fa[0], fb[0]
    if (vb <= 0) != (va <= 0):
        return vb <= 0
    if vb > 0:  # both infeasible: lower violation wins
        return vb < va
    better = [x <= y for x, y in zip(fb[1:], fa[1:])]
    strictly = [x < y for x, y in zip(fb[1:], fa[1:])]
    return all(better) and any(strictly)


def bruteforce_ranks(fitnesses) -> list[int]:
    """1-based front rank of each fitness by repeated non-dominated extraction."""
    remaining = set(range(len(fitnesses)))
    ranks = [0] * len(fitnesses)
    rank = 1
    while remaining:
        front = {
            i
            for i in remaining
            if not any(beats(fitnesses[j], fitnesses[i]) for j in remaining if j != i)
        }
        assert front, "dominance relation must be acyclic"
        for i in front:
            ranks[i] = rank
        remaining -= front
        rank += 1
    return ranks


# -- placement constraints ---------------------------------------------------


def flow_connected(adjacency, genome) -> bool:
    """Feasibility of a single flow from one selected root to all other selected buses.

    Variables are directed arc flows on edges whose endpoints are both
    selected; the root supplies m-1 units and every other selected bus
    consumes one. The LP is feasible exactly when the induced subgraph is
    connected.
    """
    a = np.asarray(adjacency, dtype=bool)
    sel = np.flatnonzero(np.asarray(genome, dtype=bool))
    if sel.size == 0:
        return False
    if sel.size == 1:
        return True
    keep = np.zeros(a.shape[0], dtype=bool)
    keep[sel] = True
    arcs = [(int(u), int(v)) for u in sel for v in np.flatnonzero(a[u]) if keep[v]]
    if not arcs:
        return False
    pos = {int(b): k for k, b in enumerate(sel)}
    a_eq = np.zeros((sel.size, len(arcs)))
    for e, (u, v) in enumerate(arcs):
        a_eq[pos[u], e] += 1.0
        a_eq[pos[v], e] -= 1.0
    b_eq = np.full(sel.size, -1.0)
    b_eq[0] = float(sel.size - 1)
    res = linprog(np.zeros(len(arcs)), A_eq=a_eq, b_eq=b_eq, bounds=(0, None),
                  method="highs")
    return bool(res.success)


def sensors_in_range(adjacency, genome, radius: int) -> np.ndarray:
    """Per-bus count of selected buses within `radius` hops, one BFS per bus."""
    a = np.asarray(adjacency, dtype=bool)
    g = np.asarray(genome, dtype=bool)
    n = a.shape[0]
    counts = np.zeros(n, dtype=int)
    for s in range(n):
        dist = {s: 0}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            if dist[u] == radius:
                continue
            for v in np.flatnonzero(a[u]):
                v = int(v)
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        counts[s] = sum(1 for node in dist if g[node])
    return counts


def coverage_redundancy(adjacency, genome, radius, redundancy_min, priority=None):
    """(p_coverage, p_redundancy) recomputed from scratch via per-node BFS."""
    counts = sensors_in_range(adjacency, genome, radius)
    n = counts.size
    alpha = np.ones(n) if priority is None else np.asarray(priority, dtype=float)
    p_cov = float(np.sum(alpha * (counts == 0)) / n)
    p_red = float(np.sum(np.maximum(redundancy_min - counts, 0)) / n)
    return p_cov, p_red


# -- centralities ------------------------------------------------------------


def path_count_betweenness(adjacency) -> np.ndarray:
    """Betweenness by explicit sigma_st(v) enumeration over all pairs."""
    a = np.asarray(adjacency, dtype=bool)
    n = a.shape[0]
    dist = np.full((n, n), -1, dtype=int)
    sigma = np.zeros((n, n))
    for s in range(n):
        dist[s, s] = 0
        sigma[s, s] = 1.0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in np.flatnonzero(a[u]):
                v = int(v)
                if dist[s, v] < 0:
                    dist[s, v] = dist[s, u] + 1
                    queue.append(v)
                if dist[s, v] == dist[s, u] + 1:
                    sigma[s, v] += sigma[s, u]
    bc = np.zeros(n)
    for s in range(n):
        for t in range(s + 1, n):
            if dist[s, t] < 0:
                continue
            for v in range(n):
                if v == s or v == t:
                    continue
                if dist[s, v] >= 0 and dist[v, t] >= 0 \
                        and dist[s, v] + dist[v, t] == dist[s, t]:
                    bc[v] += sigma[s, v] * sigma[v, t] / sigma[s, t]
    return bc


def pair_solve_electrical_betweenness(network) -> np.ndarray:
    """Current-flow betweenness recomputed with one linear solve per pair."""
    n = network.n
    yser = np.zeros((n, n), dtype=complex)
    for br in network.branches:
        ys = 1.0 / (br.r + 1j * br.x)
        yser[br.from_bus, br.to_bus] += ys
        yser[br.to_bus, br.from_bus] += ys
    ybus = np.asarray(network.ybus)
    gens = [b for b in network.buses if b.kind in ("generator", "slack")]
    sinks = [b for b in network.buses if b.kind == "load" and b.base_load_p > 0]
    score = np.zeros(n)
    total = 0.0
    for gi in gens:
        for lj in sinks:
            w = math.sqrt(gi.gen_capacity * lj.base_load_p)
            if w == 0 or gi.id == lj.id:
                continue
            rhs = np.zeros(n, dtype=complex)
            rhs[gi.id] = 1.0
            rhs[lj.id] = -1.0
            u = np.linalg.lstsq(ybus, rhs, rcond=None)[0]
            per = np.zeros(n)
            for f in range(n):
                for t in range(n):
                    if yser[f, t] != 0:
                        per[f] += abs((u[f] - u[t]) * yser[f, t])
            per *= 0.5
            per[gi.id] = 1.0
            per[lj.id] = 1.0
            score += w * per
            total += w
    return score / total


# -- numerics ----------------------------------------------------------------


def central_difference(fun, eps: float = 1e-6) -> float:
    """d/dh fun(h) at h=0 by the symmetric two-point rule."""
    return (fun(eps) - fun(-eps)) / (2.0 * eps)


def relative_error(a: float, b: float, floor: float = 1e-6) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)
