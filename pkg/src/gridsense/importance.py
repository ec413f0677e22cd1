"""Bus-importance scoring.

Combines two topological centralities (shortest-path betweenness, eigenvector
centrality) with two electrical measures derived from the bus impedance
matrix: current-flow betweenness under generator-to-load unit transfers, and
the electrical coupling degree (inverse total impedance distance). The hybrid
score is a weighted sum of the four components, each max-normalized to [0, 1].
"""
from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np

from .network import PowerNetwork
from .utils.validation import check_adjacency


@dataclass(frozen=True)
class ImportanceWeights:
    betweenness: float = 0.25
    eigenvector: float = 0.25
    electrical_betweenness: float = 0.25
    electrical_coupling: float = 0.25

    def __post_init__(self):
        for name, w in self.as_dict().items():
            if w < 0:
                raise ValueError(f"importance weight {name} must be non-negative, got {w}")

    def as_dict(self) -> dict[str, float]:
        return {
            "betweenness": self.betweenness,
            "eigenvector": self.eigenvector,
            "electrical_betweenness": self.electrical_betweenness,
            "electrical_coupling": self.electrical_coupling,
        }


def betweenness_centrality(adjacency) -> np.ndarray:
    """Shortest-path betweenness for an unweighted undirected graph (Brandes).

    Endpoint pairs are not counted; each undirected pair contributes once.
    """
    a = check_adjacency(adjacency)
    n = a.shape[0]
    neighbors = [np.flatnonzero(a[i]) for i in range(n)]
    bc = np.zeros(n)
    for s in range(n):
        stack: list[int] = []
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma = np.zeros(n)
        sigma[s] = 1.0
        dist = np.full(n, -1)
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w in neighbors[v]:
                w = int(w)
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = np.zeros(n)
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += (sigma[v] / sigma[w]) * (1.0 + delta[w])
            if w != s:
                bc[w] += delta[w]
    return bc / 2.0


def eigenvector_centrality(adjacency, tol: float = 1e-10, max_iter: int = 10_000) -> np.ndarray:
    """Principal-eigenvector scores by power iteration, L2-normalized.

    Iterates on ``A + I`` (same eigenvectors as ``A``; the shift makes the
    dominant eigenvalue strictly largest in modulus so bipartite structures
    also converge). On disconnected graphs the component with the largest
    spectral radius carries the mass.
    """
    a = check_adjacency(adjacency).astype(float)
    n = a.shape[0]
    x = np.full(n, 1.0 / np.sqrt(n))
    for _ in range(max_iter):
        nxt = a @ x + x
        norm = np.linalg.norm(nxt)
        if norm == 0:
            return x
        nxt /= norm
        if np.linalg.norm(nxt - x) / np.linalg.norm(nxt) < tol:
            return nxt
        x = nxt
    warnings.warn("eigenvector centrality did not reach tolerance; returning last iterate",
                  stacklevel=2)
    return x


def _series_admittance_matrix(network: PowerNetwork) -> np.ndarray:
    """Symmetric matrix of summed series branch admittances (parallel branches add)."""
    y = np.zeros((network.n, network.n), dtype=complex)
    for br in network.branches:
        ys = 1.0 / complex(br.r, br.x)
        y[br.from_bus, br.to_bus] += ys
        y[br.to_bus, br.from_bus] += ys
    return y


def electrical_betweenness(network: PowerNetwork) -> np.ndarray:
    """Current-flow betweenness under unit generator-to-load power transfers.

    For each generator/load pair (i, j) a unit current is injected at i and
    withdrawn at j; the branch current magnitudes incident to each other bus n
    are summed and halved, while the terminal buses score 1. Pair scores are
    combined with weights ``sqrt(W_i * W_j)`` (generation capacity times load
    level) and normalized by the total pair weight.
    """
    n = network.n
    z = network.zbus
    yser = _series_admittance_matrix(network)
    rows, cols = np.nonzero(yser)
    gens = [b.id for b in network.buses if b.kind in ("generator", "slack")]
    loads = [b.id for b in network.buses if b.base_load_p > 0 and b.kind == "load"]
    capacity = {b.id: b.gen_capacity for b in network.buses}
    demand = {b.id: b.base_load_p for b in network.buses}

    score = np.zeros(n)
    total_weight = 0.0
    for i in gens:
        for j in loads:
            if i == j:
                continue
            w = np.sqrt(capacity[i] * demand[j])
            if w == 0:
                continue
            u = z[:, i] - z[:, j]
            flows = np.abs((u[rows] - u[cols]) * yser[rows, cols])
            per_bus = np.zeros(n)
            np.add.at(per_bus, rows, flows)
            per_bus *= 0.5
            per_bus[i] = 1.0
            per_bus[j] = 1.0
            score += w * per_bus
            total_weight += w
    if total_weight == 0:
        warnings.warn("no weighted generator-to-load pairs; electrical betweenness is zero",
                      stacklevel=2)
        return score
    return score / total_weight


def electrical_coupling(network: PowerNetwork) -> np.ndarray:
    """Inverse total impedance distance: ``1 / sum_u |Z_vv + Z_uu - 2 Z_vu|``."""
    z = network.zbus
    diag = np.diag(z)
    dist = np.abs(diag[:, None] + diag[None, :] - 2.0 * z)
    totals = dist.sum(axis=1)  # diagonal contributes zero
    scores = np.zeros(network.n)
    nonzero = totals > 0
    scores[nonzero] = 1.0 / totals[nonzero]
    return scores


def _max_normalize(x: np.ndarray) -> np.ndarray:
    m = x.max()
    return x / m if m > 0 else x.copy()


def importance_components(network: PowerNetwork) -> dict[str, np.ndarray]:
    """Raw per-bus values of the four importance measures."""
    return {
        "betweenness": betweenness_centrality(network.adjacency),
        "eigenvector": eigenvector_centrality(network.adjacency),
        "electrical_betweenness": electrical_betweenness(network),
        "electrical_coupling": electrical_coupling(network),
    }


def hybrid_importance(
    network: PowerNetwork,
    weights: ImportanceWeights | None = None,
    components: dict[str, np.ndarray] | None = None,
) -> np.ndarray:
    """Weighted sum of the max-normalized importance components."""
    weights = weights or ImportanceWeights()
    if components is None:
        components = importance_components(network)
    score = np.zeros(network.n)
    for name, w in weights.as_dict().items():
        score += w * _max_normalize(components[name])
    return score
