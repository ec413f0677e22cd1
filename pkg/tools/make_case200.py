"""Deterministic generator for the synthetic 200-bus case bundled with gridsense.

The 200-bus network is synthetic: buses are scattered in a plane, joined by a
minimum spanning tree plus nearest-neighbour reinforcement edges (giving a
transmission-like average degree around 2.4), with typical per-unit line
parameters, a handful of tapped transformers, and a dispatch that covers the
total load with ~10% margin. Regenerate with::

    python3 tools/make_case200.py > src/gridsense/cases/case200.case
"""
from __future__ import annotations

import numpy as np

N = 200
SEED = 7


def spanning_edges(points: np.ndarray) -> list[tuple[int, int]]:
    """Prim's algorithm on Euclidean distance."""
    n = len(points)
    d = np.hypot(points[:, 0][:, None] - points[:, 0], points[:, 1][:, None] - points[:, 1])
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = d[0].copy()
    parent = np.zeros(n, dtype=int)
    edges = []
    for _ in range(n - 1):
        best_masked = np.where(in_tree, np.inf, best)
        j = int(np.argmin(best_masked))
        edges.append((int(parent[j]), j))
        in_tree[j] = True
        closer = d[j] < best
        best[closer] = d[j][closer]
        parent[closer] = j
    return edges


def main() -> None:
    rng = np.random.default_rng(SEED)
    pts = rng.uniform(0.0, 100.0, size=(N, 2))

    edges = set()
    for a, b in spanning_edges(pts):
        edges.add((min(a, b), max(a, b)))
    # reinforcement: connect each bus to its 2 nearest neighbours
    d = np.hypot(pts[:, 0][:, None] - pts[:, 0], pts[:, 1][:, None] - pts[:, 1])
    np.fill_diagonal(d, np.inf)
    for i in range(N):
        for j in np.argsort(d[i])[:2]:
            edges.add((min(i, int(j)), max(i, int(j))))
    edges = sorted(edges)

    # generators: 40 buses spread by index stride, slack = bus 1
    gen_buses = sorted(rng.choice(N, size=40, replace=False).tolist())
    is_gen = np.zeros(N, dtype=bool)
    is_gen[gen_buses] = True

    # loads at ~70% of the remaining buses
    load_p = np.zeros(N)
    load_q = np.zeros(N)
    for i in range(N):
        if not is_gen[i] and rng.random() < 0.72:
            p = rng.uniform(4.0, 28.0)
            load_p[i] = round(p, 1)
            load_q[i] = round(p * rng.uniform(0.15, 0.45), 1)
    total_load = float(load_p.sum())

    # dispatch: equal share of 1.05x total load across non-slack gens
    slack = gen_buses[0]
    pg = np.zeros(N)
    share = 1.05 * total_load / (len(gen_buses) - 1)
    for g in gen_buses[1:]:
        pg[g] = round(share * rng.uniform(0.7, 1.3), 1)
    vset = {g: round(float(rng.uniform(1.0, 1.045)), 3) for g in gen_buses}

    lines = ["# synthetic 200-bus case (see tools/make_case200.py)", "BASE_MVA 100.0", "", "BUS",
             "# id  type  Pd_MW  Qd_MVAr  Gs_MW  Bs_MVAr"]
    for i in range(N):
        code = 3 if i == slack else (2 if is_gen[i] else 1)
        lines.append(f"{i + 1}  {code}  {float(load_p[i])!r}  {float(load_q[i])!r}  0.0  0.0")
    lines += ["", "GEN", "# bus  Pg_MW  Vset_pu  Pmax_MW"]
    for g in gen_buses:
        p = round(1.15 * total_load, 1) if g == slack else float(pg[g])
        cap = round(p * 1.4 + 50.0, 1)
        lines.append(f"{g + 1}  {p!r}  {vset[g]!r}  {cap!r}")
    lines += ["", "BRANCH", "# from  to  r_pu  x_pu  b_pu  tap"]
    for k, (a, b) in enumerate(edges):
        x = round(float(rng.uniform(0.02, 0.10) * (0.5 + d[a, b] / 40.0)), 4)
        r = round(x / 4.0, 4)
        bsh = round(x * 0.25, 4)
        tap = 0.0
        if k % 23 == 0:  # sprinkle tapped transformers
            tap = round(float(rng.uniform(0.96, 1.04)), 3)
            bsh = 0.0
        lines.append(f"{a + 1}  {b + 1}  {r!r}  {x!r}  {bsh!r}  {tap!r}")
    print("\n".join(lines))


if __name__ == "__main__":
    main()
