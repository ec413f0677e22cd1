"""NSGA-II placement search with constraint domination and biased variation.

Each candidate placement is scored on three objectives ``(V, f1, f2)``: total
constraint violation, sensor count, and the detection loss of a detector
trained under that placement's observability. Sorting follows Deb's
constraint-domination rule (feasible solutions beat infeasible ones,
infeasible ones are ordered by violation), selection is a binary tournament
on (rank, crowding distance), and variation couples uniform crossover with a
per-bit mutation biased toward high-importance buses. The champion reported
at the end is the best individual ever evaluated under the lexicographic key
``(V > 0, V, f1 + f2)``, so it can never get worse across generations even
when crowding truncation drops it from the population.
"""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator

from .detector import AttackDetector
from .masks import placement_observability
from .network import PowerNetwork
from .placement import ConstraintConfig, initialize_population, violation
from .utils.validation import check_genome


@dataclass(eq=False)
class Individual:
    genome: np.ndarray
    fitness: tuple[float, float, float] | None = None  # (V, f1, f2)
    rank: int = 0
    crowding: float = 0.0


@dataclass(frozen=True)
class GaConfig:
    """Search settings; defaults follow the usual small-case recipe."""

    n_pop: int = 30
    generations: int = 40
    k: int | None = None  # seeding sensor budget; None -> 30% of buses
    radius: int = 1
    h_frac: float = 0.2
    d_frac: float = 0.3
    d_min: float = 0.2
    indpb: float = 0.1
    bias: float = 0.8
    crossover_prob: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.n_pop < 2:
            raise ValueError(f"n_pop must be at least 2, got {self.n_pop}")
        if self.generations < 0:
            raise ValueError(f"generations must be non-negative, got {self.generations}")
        if self.k is not None and self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")
        if self.radius < 0:
            raise ValueError(f"radius must be non-negative, got {self.radius}")
        for name in ("h_frac", "d_frac", "d_min", "indpb", "bias", "crossover_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.h_frac + self.d_frac > 1.0:
            raise ValueError("h_frac + d_frac must not exceed 1")

    def resolve_k(self, n_buses: int) -> int:
        if self.k is not None:
            return self.k
        return max(1, round(0.3 * n_buses))


@dataclass
class GaResult:
    champion: Individual
    front: list[Individual]
    population: list[Individual]
    history: list[dict] = field(default_factory=list)
    n_evaluations: int = 0


def champion_key(fitness) -> tuple:
    """Lexicographic selection key: feasibility flag, violation, f1 + f2."""
    v, f1, f2 = fitness
    return (1 if v > 0 else 0, v, f1 + f2)


def dominates(fa, fb) -> bool:
    """Deb constraint domination between fitness tuples ``(V, f1, f2)``."""
    feasible_a = fa[0] <= 0
    feasible_b = fb[0] <= 0
    if feasible_a != feasible_b:
        return feasible_a
    if not feasible_a:
        return fa[0] < fb[0]
    return fa[1] <= fb[1] and fa[2] <= fb[2] and (fa[1] < fb[1] or fa[2] < fb[2])


def nondominated_sort(population: list[Individual]) -> list[list[Individual]]:
    """Partition into Pareto fronts, assigning 1-based ``rank`` to each member."""
    if not population:
        return []
    n = len(population)
    beats: list[list[int]] = [[] for _ in range(n)]
    n_dominators = [0] * n
    for i in range(n):
        fi = population[i].fitness
        for j in range(i + 1, n):
            fj = population[j].fitness
            if dominates(fi, fj):
                beats[i].append(j)
                n_dominators[j] += 1
            elif dominates(fj, fi):
                beats[j].append(i)
                n_dominators[i] += 1

    fronts: list[list[int]] = [[i for i in range(n) if n_dominators[i] == 0]]
    for i in fronts[0]:
        population[i].rank = 1
    while True:
        nxt = []
        for i in fronts[-1]:
            for j in beats[i]:
                n_dominators[j] -= 1
                if n_dominators[j] == 0:
                    population[j].rank = len(fronts) + 1
                    nxt.append(j)
        if not nxt:
            break
        fronts.append(nxt)
    return [[population[i] for i in front] for front in fronts]


def crowding_distance(front: list[Individual]) -> np.ndarray:
    """Per-objective sorted-neighbor gap sums; boundaries get infinity.

    Feasible fronts are spread on (f1, f2); infeasible fronts on the violation
    alone, which keeps diversity pressure meaningful among infeasibles.
    """
    m = len(front)
    dist = np.zeros(m)
    if m <= 2:
        dist[:] = np.inf
    else:
        feasible = all(ind.fitness[0] <= 0 for ind in front)
        for axis in (1, 2) if feasible else (0,):
            vals = np.array([ind.fitness[axis] for ind in front])
            order = np.argsort(vals, kind="stable")
            dist[order[0]] = dist[order[-1]] = np.inf
            span = vals[order[-1]] - vals[order[0]]
            if span > 0:
                dist[order[1:-1]] += (vals[order[2:]] - vals[order[:-2]]) / span
    for ind, d in zip(front, dist):
        ind.crowding = float(d)
    return dist


def uniform_crossover(a: np.ndarray, b: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
    """Swap each bit between the parents with probability 1/2."""
    swap = rng.random(a.shape[0]) < 0.5
    return np.where(swap, b, a), np.where(swap, a, b)


def biased_mutation(genome, scores, indpb: float, bias: float, rng) -> np.ndarray:
    """Per-bit mutation that prefers turning important buses on.

    Each bit mutates with probability ``indpb``. A mutating bit takes the
    importance-guided branch with probability ``bias`` — set to 1 with
    probability ``scores[i]``, else 0 — and is otherwise flipped outright.
    The three draws are made sequentially per bit, so the operator's
    behaviour is reproducible bit-for-bit from the generator state.
    """
    out = np.array(genome, dtype=bool, copy=True)
    scores = np.asarray(scores, dtype=float)
    if scores.shape != out.shape:
        raise ValueError("scores must have one entry per bus")
    for i in range(out.shape[0]):
        if rng.random() < indpb:
            if rng.random() < bias:
                out[i] = rng.random() < scores[i]
            else:
                out[i] = not out[i]
    return out


def _tournament(population: list[Individual], rng) -> Individual:
    i, j = rng.integers(len(population), size=2)
    a, b = population[int(i)], population[int(j)]
    ka = (a.rank, -a.crowding)
    kb = (b.rank, -b.crowding)
    return a if ka <= kb else b


def _snapshot(ind: Individual) -> Individual:
    return Individual(genome=ind.genome.copy(), fitness=ind.fitness,
                      rank=ind.rank, crowding=ind.crowding)


def evolve(
    network: PowerNetwork,
    scores,
    evaluator,
    config: GaConfig | None = None,
    *,
    progress=None,
) -> GaResult:
    """Run the (mu + lambda) search and return population, front and champion.

    ``evaluator`` maps a boolean genome to ``(V, f1, f2)``; if it exposes an
    ``evaluate_many`` method, whole batches of unseen genomes are handed over
    at once (which is where parallel detector training plugs in). Evaluations
    are memoized by genome, a failing evaluation demotes the genome to worst
    fitness instead of aborting the run, and ``progress`` (if given) receives
    one dict per generation.
    """
    config = config or GaConfig()
    scores = np.asarray(scores, dtype=float)
    rng = np.random.default_rng(config.seed)
    k = config.resolve_k(network.n)

    memo: dict[bytes, tuple[float, float, float]] = {}

    def evaluate(individuals: list[Individual]) -> None:
        fresh_keys: list[bytes] = []
        fresh: list[np.ndarray] = []
        for ind in individuals:
            key = ind.genome.tobytes()
            if ind.fitness is None and key not in memo and key not in fresh_keys:
                fresh_keys.append(key)
                fresh.append(ind.genome)
        if fresh:
            results = None
            if hasattr(evaluator, "evaluate_many"):
                try:
                    results = [tuple(map(float, f)) for f in evaluator.evaluate_many(fresh)]
                except Exception as exc:  # noqa: BLE001 - degrade to per-genome calls
                    warnings.warn(f"batch fitness evaluation failed ({exc!r}); "
                                  "retrying genomes one at a time")
            if results is None:
                results = [_safe_fitness(evaluator, g) for g in fresh]
            for key, fit in zip(fresh_keys, results):
                memo[key] = fit
        for ind in individuals:
            if ind.fitness is None:
                ind.fitness = memo[ind.genome.tobytes()]

    genomes = initialize_population(
        network, scores, config.n_pop, k,
        h_frac=config.h_frac, d_frac=config.d_frac, d_min=config.d_min,
        radius=config.radius, rng=rng,
    )
    population = [Individual(g) for g in genomes]
    evaluate(population)
    champion = _snapshot(min(population, key=lambda ind: champion_key(ind.fitness)))

    history: list[dict] = []

    def record(generation: int, fronts: list[list[Individual]]) -> None:
        entry = {
            "generation": generation,
            "champion": {
                "violation": champion.fitness[0],
                "n_sensors": champion.fitness[1],
                "detection_loss": champion.fitness[2],
            },
            "front_sizes": [len(f) for f in fronts],
            "evaluations": len(memo),
        }
        history.append(entry)
        if progress is not None:
            progress(entry)

    fronts = nondominated_sort(population)
    for front in fronts:
        crowding_distance(front)
    record(0, fronts)

    for generation in range(1, config.generations + 1):
        offspring: list[Individual] = []
        while len(offspring) < config.n_pop:
            ga = _tournament(population, rng).genome
            gb = _tournament(population, rng).genome
            if rng.random() < config.crossover_prob:
                ga, gb = uniform_crossover(ga, gb, rng)
            offspring.append(Individual(biased_mutation(ga, scores, config.indpb,
                                                        config.bias, rng)))
            if len(offspring) < config.n_pop:
                offspring.append(Individual(biased_mutation(gb, scores, config.indpb,
                                                            config.bias, rng)))
        evaluate(offspring)

        fronts = nondominated_sort(population + offspring)
        population = []
        for front in fronts:
            crowding_distance(front)
            if len(population) + len(front) <= config.n_pop:
                population.extend(front)
            else:
                ordered = sorted(front, key=lambda ind: -ind.crowding)
                population.extend(ordered[: config.n_pop - len(population)])
                break

        best = min(offspring, key=lambda ind: champion_key(ind.fitness))
        if champion_key(best.fitness) < champion_key(champion.fitness):
            champion = _snapshot(best)
        record(generation, fronts)

    final_fronts = nondominated_sort(population)
    for front in final_fronts:
        crowding_distance(front)
    return GaResult(champion=champion, front=final_fronts[0], population=population,
                    history=history, n_evaluations=len(memo))


def _safe_fitness(evaluator, genome) -> tuple[float, float, float]:
    try:
        v, f1, f2 = evaluator(genome)
        return float(v), float(f1), float(f2)
    except Exception as exc:  # noqa: BLE001 - the search must survive bad genomes
        warnings.warn(f"fitness evaluation failed ({exc!r}); assigning worst fitness")
        return math.inf, math.inf, math.inf


def resolve_workers(workers=None) -> int:
    """Worker count: GRIDSENSE_WORKERS wins, then the argument, then all cores."""
    env = os.environ.get("GRIDSENSE_WORKERS")
    if env:
        return max(1, int(env))
    if workers is not None:
        return max(1, int(workers))
    return os.cpu_count() or 1


class PlacementFitness:
    """Closed-loop fitness ``genome -> (V, f1, f2)``.

    ``V`` is the placement's constraint violation, ``f1`` its sensor count
    and ``f2`` the cross-entropy on held-out labeled frames of a detector
    trained from scratch under the placement's observability. The training
    seed is fixed, so a genome's fitness never depends on evaluation order;
    results are memoized by genome bytes and ``n_trainings`` counts actual
    detector fits. Unseen genomes in a batch train in parallel when more
    than one worker is available.
    """

    def __init__(
        self,
        network: PowerNetwork,
        train_x,
        train_y,
        val_x,
        val_y,
        *,
        constraints: ConstraintConfig | None = None,
        detector_params: dict | None = None,
        train_seed: int = 0,
        workers: int | None = None,
    ):
        self.network = network
        self.train_x = np.asarray(train_x, dtype=float)
        self.train_y = np.asarray(train_y, dtype=int)
        self.val_x = np.asarray(val_x, dtype=float)
        self.val_y = np.asarray(val_y, dtype=int)
        self.constraints = constraints if constraints is not None else ConstraintConfig()
        self.detector_params = dict(detector_params or {})
        self.train_seed = int(train_seed)
        self.workers = workers
        self.n_trainings = 0
        self._memo: dict[bytes, tuple[float, float, float]] = {}

    def __call__(self, genome) -> tuple[float, float, float]:
        return self.evaluate_many([genome])[0]

    def evaluate_many(self, genomes) -> list[tuple[float, float, float]]:
        genomes = [check_genome(g, self.network.n) for g in genomes]
        keys = [g.tobytes() for g in genomes]
        fresh: dict[bytes, np.ndarray] = {}
        for key, genome in zip(keys, genomes):
            if key not in self._memo and key not in fresh:
                fresh[key] = genome
        if fresh:
            pending = list(fresh.values())
            n_jobs = resolve_workers(self.workers)
            if n_jobs > 1 and len(pending) > 1:
                results = Parallel(n_jobs=min(n_jobs, len(pending)))(
                    delayed(self._evaluate)(g) for g in pending
                )
            else:
                results = [self._evaluate(g) for g in pending]
            self._memo.update(zip(fresh.keys(), results))
            self.n_trainings += len(pending)
        return [self._memo[key] for key in keys]

    def train_detector(self, genome) -> AttackDetector:
        """Fit a fresh detector under the genome's observability (fixed seed)."""
        observed, mask = placement_observability(self.network, genome)
        params = dict(self.detector_params)
        params.setdefault("seed", self.train_seed)
        detector = AttackDetector(adjacency=self.network.adjacency, observed=observed,
                                  sensor_mask=mask, **params)
        return detector.fit(self.train_x, self.train_y)

    def _evaluate(self, genome) -> tuple[float, float, float]:
        v = violation(self.network, genome, self.constraints)
        detector = self.train_detector(genome)
        proba = np.clip(detector.predict_proba(self.val_x)[:, 1], 1e-12, 1 - 1e-12)
        bce = -np.mean(self.val_y * np.log(proba) + (1 - self.val_y) * np.log1p(-proba))
        return float(v), float(np.count_nonzero(genome)), float(bce)


class SensorPlacementGA(BaseEstimator):
    """Estimator-flavored front end for :func:`evolve`.

    ``fit`` runs the search and exposes the champion genome, final front,
    population and per-generation history as fitted attributes. ``X`` and
    ``y`` are accepted for interface compatibility and ignored; the data
    enters through the ``evaluator``.
    """

    def __init__(
        self,
        network: PowerNetwork | None = None,
        scores=None,
        evaluator=None,
        n_pop: int = 30,
        generations: int = 40,
        k: int | None = None,
        radius: int = 1,
        h_frac: float = 0.2,
        d_frac: float = 0.3,
        d_min: float = 0.2,
        indpb: float = 0.1,
        bias: float = 0.8,
        crossover_prob: float = 0.9,
        seed: int = 0,
        progress=None,
    ):
        self.network = network
        self.scores = scores
        self.evaluator = evaluator
        self.n_pop = n_pop
        self.generations = generations
        self.k = k
        self.radius = radius
        self.h_frac = h_frac
        self.d_frac = d_frac
        self.d_min = d_min
        self.indpb = indpb
        self.bias = bias
        self.crossover_prob = crossover_prob
        self.seed = seed
        self.progress = progress

    def fit(self, X=None, y=None):
        if self.network is None or self.scores is None or self.evaluator is None:
            raise ValueError("network, scores and evaluator must all be set before fit")
        config = GaConfig(
            n_pop=self.n_pop, generations=self.generations, k=self.k,
            radius=self.radius, h_frac=self.h_frac, d_frac=self.d_frac,
            d_min=self.d_min, indpb=self.indpb, bias=self.bias,
            crossover_prob=self.crossover_prob, seed=self.seed,
        )
        result = evolve(self.network, self.scores, self.evaluator, config,
                        progress=self.progress)
        self.result_ = result
        self.champion_ = result.champion.genome
        self.champion_fitness_ = result.champion.fitness
        self.selected_buses_ = np.flatnonzero(result.champion.genome)
        self.front_ = [(ind.genome, ind.fitness) for ind in result.front]
        self.history_ = result.history
        self.n_evaluations_ = result.n_evaluations
        return self

    def get_support(self) -> np.ndarray:
        """Boolean mask of the champion placement."""
        if not hasattr(self, "champion_"):
            raise ValueError("call fit first")
        return self.champion_.copy()
