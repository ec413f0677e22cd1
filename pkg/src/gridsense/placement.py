"""Sensor-placement constraints and seeded population initialization.

A placement is a boolean genome over buses. Its constraint violation is

    V = w_cn * P_connectivity + w_cr * P_coverage + w_rd * P_redundancy

where ``P_connectivity`` is 1 unless the sensor buses induce a connected
subgraph, ``P_coverage`` averages per-bus miss indicators for r-hop coverage,
and ``P_redundancy`` averages the shortfall below a minimum number of covering
sensors per bus. ``V = 0`` marks a feasible placement.
"""
from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np

from .network import PowerNetwork
from .utils.validation import check_adjacency, check_genome


@dataclass(frozen=True)
class ConstraintConfig:
    radius: int = 1
    redundancy_min: int = 2
    w_connectivity: float = 1.0
    w_coverage: float = 1.0
    w_redundancy: float = 1.0
    coverage_priority: np.ndarray | None = None  # optional per-bus weights alpha_j in [0, 1]

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"radius must be non-negative, got {self.radius}")
        if self.redundancy_min < 0:
            raise ValueError(f"redundancy_min must be non-negative, got {self.redundancy_min}")
        for name in ("w_connectivity", "w_coverage", "w_redundancy"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def hop_distances(adjacency, sources) -> np.ndarray:
    """BFS hop distance from each bus to the nearest source bus (-1 if unreachable)."""
    a = check_adjacency(adjacency)
    n = a.shape[0]
    dist = np.full(n, -1, dtype=int)
    queue = deque()
    for s in np.flatnonzero(np.asarray(sources, dtype=bool)):
        dist[s] = 0
        queue.append(int(s))
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(a[u]):
            v = int(v)
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def coverage_counts(adjacency, genome, radius: int) -> np.ndarray:
    """Number of placed sensors within ``radius`` hops of each bus."""
    a = check_adjacency(adjacency)
    g = check_genome(genome, a.shape[0])
    reach = _hop_reachability(a, radius)
    return reach[:, g].sum(axis=1)


def _hop_reachability(a: np.ndarray, radius: int) -> np.ndarray:
    """Boolean matrix: reach[i, j] iff j is within ``radius`` hops of i."""
    n = a.shape[0]
    reach = np.eye(n, dtype=bool)
    frontier = np.eye(n, dtype=bool)
    ai = a.astype(np.uint8)
    for _ in range(radius):
        frontier = ((frontier.astype(np.uint8) @ ai) > 0) & ~reach
        reach |= frontier
    return reach


def connectivity_penalty(network: PowerNetwork, genome) -> float:
    """0 when the sensor buses induce a connected subgraph, else 1."""
    g = check_genome(genome, network.n)
    if not g.any():
        return 1.0
    return 0.0 if network.is_connected(g) else 1.0


def coverage_penalty(adjacency, genome, radius: int, priority=None) -> float:
    """Average per-bus uncovered indicator, optionally weighted by priority."""
    a = check_adjacency(adjacency)
    n = a.shape[0]
    covered = coverage_counts(a, genome, radius) > 0
    alpha = np.ones(n) if priority is None else np.asarray(priority, dtype=float)
    if alpha.shape != (n,):
        raise ValueError(f"priority must have shape ({n},)")
    return float(np.sum(alpha * (~covered)) / n)


def redundancy_penalty(adjacency, genome, radius: int, redundancy_min: int) -> float:
    """Average shortfall below ``redundancy_min`` covering sensors per bus."""
    counts = coverage_counts(adjacency, genome, radius)
    shortfall = np.maximum(redundancy_min - counts, 0)
    return float(shortfall.sum() / counts.shape[0])


def violation(network: PowerNetwork, genome, config: ConstraintConfig | None = None) -> float:
    """Weighted constraint violation; zero iff the placement is feasible."""
    config = config or ConstraintConfig()
    return (
        config.w_connectivity * connectivity_penalty(network, genome)
        + config.w_coverage
        * coverage_penalty(network.adjacency, genome, config.radius, config.coverage_priority)
        + config.w_redundancy
        * redundancy_penalty(network.adjacency, genome, config.radius, config.redundancy_min)
    )


# -- seeded genomes ----------------------------------------------------------


def top_k_genome(scores, k: int, rng) -> np.ndarray:
    """Boolean genome of the k highest-scoring buses; ties broken by the rng."""
    scores = np.asarray(scores, dtype=float)
    n = scores.shape[0]
    if not 0 < k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    order = np.lexsort((rng.permutation(n), -scores))
    genome = np.zeros(n, dtype=bool)
    genome[order[:k]] = True
    return genome


def greedy_coverage_genome(adjacency, k: int, radius: int, scores=None, rng=None) -> np.ndarray:
    """Greedy r-hop cover: repeatedly add the bus covering the most uncovered buses.

    Ties are broken by importance score (if given) then by the rng (if given)
    then by lowest index.
    """
    a = check_adjacency(adjacency)
    n = a.shape[0]
    if not 0 < k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    scores = np.zeros(n) if scores is None else np.asarray(scores, dtype=float)
    jitter = np.zeros(n) if rng is None else rng.permutation(n).astype(float)
    reach = _hop_reachability(a, radius)
    genome = np.zeros(n, dtype=bool)
    covered = np.zeros(n, dtype=bool)
    for _ in range(k):
        gains = (reach & ~covered[None, :]).sum(axis=1)
        gains = np.where(genome, -1, gains)  # never re-pick
        best = np.lexsort((np.arange(n), -jitter, -scores, -gains))[0]
        genome[best] = True
        covered |= reach[best]
    return genome


def random_k_genome(n: int, k: int, rng) -> np.ndarray:
    genome = np.zeros(n, dtype=bool)
    genome[rng.choice(n, size=k, replace=False)] = True
    return genome


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    return int(np.count_nonzero(a != b))


def initialize_population(
    network: PowerNetwork,
    scores,
    n_pop: int,
    k: int,
    *,
    h_frac: float = 0.2,
    d_frac: float = 0.3,
    d_min: float = 0.2,
    radius: int = 1,
    rng=None,
) -> list[np.ndarray]:
    """Hybrid population seeding.

    The first ``floor(h_frac * n_pop / 2)`` genomes place sensors on the
    top-k importance buses (seeded tie-breaking), the next
    ``ceil(h_frac * n_pop / 2)`` come from the greedy r-hop cover, then
    diversity-gated random genomes (minimum Hamming distance
    ``d_min * n_buses`` from all previous members) fill up to
    ``(h_frac + d_frac) * n_pop``, and unconstrained random genomes complete
    the population. Exact duplicates are retried within a bounded budget and
    then admitted with a warning.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    scores = np.asarray(scores, dtype=float)
    n = network.n
    if n_pop < 2:
        raise ValueError(f"n_pop must be at least 2, got {n_pop}")
    if not 0 < k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    for name, frac in (("h_frac", h_frac), ("d_frac", d_frac), ("d_min", d_min)):
        if not 0 <= frac <= 1:
            raise ValueError(f"{name} must be in [0, 1], got {frac}")
    if h_frac + d_frac > 1:
        raise ValueError("h_frac + d_frac must not exceed 1")

    n_top = int(np.floor(h_frac * n_pop / 2))
    n_greedy = int(np.ceil(h_frac * n_pop / 2))
    n_diverse_end = int(np.floor((h_frac + d_frac) * n_pop))

    population: list[np.ndarray] = []
    seen: set[bytes] = set()
    budget = 20 * n_pop
    duplicates = 0

    def admit(genome: np.ndarray, require_unique: bool) -> bool:
        nonlocal duplicates
        key = genome.tobytes()
        if require_unique and key in seen:
            return False
        if key in seen:
            duplicates += 1
        seen.add(key)
        population.append(genome)
        return True

    for _ in range(n_top):
        for _ in range(budget):
            if admit(top_k_genome(scores, k, rng), require_unique=True):
                break
        else:
            admit(top_k_genome(scores, k, rng), require_unique=False)
    for _ in range(n_greedy):
        if len(population) >= n_pop:
            break
        for _ in range(budget):
            if admit(greedy_coverage_genome(network.adjacency, k, radius, scores, rng),
                     require_unique=True):
                break
        else:
            admit(greedy_coverage_genome(network.adjacency, k, radius, scores, rng),
                  require_unique=False)

    min_distance = d_min * n
    while len(population) < min(n_diverse_end, n_pop):
        accepted = False
        for _ in range(budget):
            cand = random_k_genome(n, k, rng)
            if cand.tobytes() in seen:
                continue
            if all(hamming(cand, g) >= min_distance for g in population):
                admit(cand, require_unique=True)
                accepted = True
                break
        if not accepted:
            admit(random_k_genome(n, k, rng), require_unique=False)
            break

    while len(population) < n_pop:
        for _ in range(budget):
            if admit(random_k_genome(n, k, rng), require_unique=True):
                break
        else:
            admit(random_k_genome(n, k, rng), require_unique=False)

    if duplicates:
        warnings.warn(f"population contains {duplicates} duplicate genomes after retries",
                      stacklevel=2)
    return population
