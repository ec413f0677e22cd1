"""Constraint-dominated sorting, variation operators, and the search loop."""
import numpy as np
import pytest

from gridsense.attacks import AttackConfig, attack_random
from gridsense.nsga2 import (GaConfig, Individual, PlacementFitness, SensorPlacementGA,
                             biased_mutation, champion_key, crowding_distance, dominates,
                             evolve, nondominated_sort, resolve_workers, uniform_crossover)
from gridsense.placement import ConstraintConfig, violation

from oracles import beats, bruteforce_ranks


def individuals(fitnesses):
    return [Individual(genome=np.zeros(2, dtype=bool), fitness=f) for f in fitnesses]


def test_dominates_follows_constraint_rules():
    assert dominates((0.0, 9.0, 9.0), (0.1, 1.0, 1.0))   # feasible beats infeasible
    assert not dominates((0.1, 1.0, 1.0), (0.0, 9.0, 9.0))
    assert dominates((0.5, 9.0, 9.0), (0.7, 1.0, 1.0))   # infeasibles ordered by V only
    assert not dominates((0.5, 1.0, 1.0), (0.5, 9.0, 9.0))
    assert dominates((0.0, 1.0, 2.0), (0.0, 2.0, 2.0))
    assert not dominates((0.0, 1.0, 2.0), (0.0, 2.0, 1.0))  # trade-off: incomparable
    assert not dominates((0.0, 1.0, 1.0), (0.0, 1.0, 1.0))  # never against an equal


def test_front_partition_fixture():
    pop = individuals([(0.0, 1.0, 1.0), (0.0, 1.0, 2.0), (0.0, 2.0, 1.0), (0.0, 2.0, 2.0)])
    fronts = nondominated_sort(pop)
    shape = [sorted(ind.fitness[1:] for ind in front) for front in fronts]
    assert shape == [[(1.0, 1.0)], [(1.0, 2.0), (2.0, 1.0)], [(2.0, 2.0)]]
    assert [ind.rank for ind in pop] == [1, 2, 2, 3]


def test_sort_matches_bruteforce_extraction():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(1, 30))
        fits = []
        for _ in range(n):
            v = 0.0 if rng.random() < 0.5 else float(rng.integers(1, 4))
            fits.append((v, float(rng.integers(0, 5)), float(rng.integers(0, 5))))
        pop = individuals(fits)
        nondominated_sort(pop)
        assert [ind.rank for ind in pop] == bruteforce_ranks(fits)


def test_crowding_distance_fixture():
    # four equally spaced points on a feasible line: middles get 2/3 per axis
    front = individuals([(0.0, 0.0, 3.0), (0.0, 1.0, 2.0), (0.0, 2.0, 1.0), (0.0, 3.0, 0.0)])
    dist = crowding_distance(front)
    assert dist[0] == np.inf and dist[3] == np.inf
    assert dist[1] == pytest.approx(4 / 3) and dist[2] == pytest.approx(4 / 3)
    assert front[1].crowding == pytest.approx(4 / 3)

    # pairs and singletons are always boundaries
    assert np.all(np.isinf(crowding_distance(individuals([(0.0, 1.0, 1.0)]))))
    assert np.all(np.isinf(crowding_distance(individuals([(0.0, 1.0, 1.0),
                                                          (0.0, 2.0, 0.0)]))))

    # an infeasible front spreads on the violation axis alone
    infeasible = individuals([(1.0, 0.0, 0.0), (2.0, 0.0, 0.0), (5.0, 0.0, 0.0)])
    np.testing.assert_array_equal(crowding_distance(infeasible), [np.inf, 1.0, np.inf])


def test_champion_key_ordering():
    assert champion_key((0.0, 9.0, 9.0)) < champion_key((0.1, 0.0, 0.0))
    assert champion_key((0.0, 2.0, 1.0)) < champion_key((0.0, 2.0, 2.0))
    assert champion_key((0.2, 5.0, 5.0)) < champion_key((0.3, 0.0, 0.0))


def test_uniform_crossover_preserves_bits_per_position():
    rng = np.random.default_rng(0)
    a = rng.random(64) < 0.5
    b = rng.random(64) < 0.5
    c, d = uniform_crossover(a, b, rng)
    for i in range(64):
        assert {c[i], d[i]} == {a[i], b[i]}
    assert not np.array_equal(c, a) and not np.array_equal(d, b)


def test_biased_mutation_branches():
    rng = np.random.default_rng(0)
    genome = np.array([True, False, True, False, True])

    same = biased_mutation(genome, np.full(5, 0.5), 0.0, 0.8, rng)
    np.testing.assert_array_equal(same, genome)

    ones = biased_mutation(genome, np.ones(5), 1.0, 1.0, rng)
    np.testing.assert_array_equal(ones, np.ones(5, dtype=bool))

    zeros = biased_mutation(genome, np.zeros(5), 1.0, 1.0, rng)
    np.testing.assert_array_equal(zeros, np.zeros(5, dtype=bool))

    flipped = biased_mutation(genome, np.full(5, 0.5), 1.0, 0.0, rng)
    np.testing.assert_array_equal(flipped, ~genome)

    # the per-bit draws are sequential, so one seed fixes the outcome
    a = biased_mutation(genome, np.full(5, 0.7), 0.5, 0.8, np.random.default_rng(42))
    b = biased_mutation(genome, np.full(5, 0.7), 0.5, 0.8, np.random.default_rng(42))
    np.testing.assert_array_equal(a, b)

    with pytest.raises(ValueError, match="per bus"):
        biased_mutation(genome, np.ones(3), 0.5, 0.8, rng)


def test_ga_config_validation_and_budget():
    assert GaConfig().resolve_k(14) == 4
    assert GaConfig(k=7).resolve_k(14) == 7
    assert GaConfig().resolve_k(3) == 1
    for kwargs in ({"n_pop": 1}, {"generations": -1}, {"k": 0}, {"indpb": 1.5},
                   {"bias": -0.1}, {"h_frac": 0.8, "d_frac": 0.4}):
        with pytest.raises(ValueError):
            GaConfig(**kwargs)


def surrogate(network, constraints=ConstraintConfig()):
    """Cheap deterministic stand-in for the detector-training fitness."""

    def fitness(genome):
        return (violation(network, genome, constraints), float(genome.sum()), 0.0)

    return fitness


@pytest.mark.filterwarnings("ignore:population contains")
def test_evolve_on_a_cheap_fitness(case14, case14_scores):
    config = GaConfig(n_pop=12, generations=8, k=4, seed=1)
    result = evolve(case14, case14_scores, surrogate(case14), config)

    assert len(result.population) == 12
    assert len(result.history) == 9
    assert [h["generation"] for h in result.history] == list(range(9))

    # the reported champion never worsens from one generation to the next
    keys = [champion_key((h["champion"]["violation"], h["champion"]["n_sensors"],
                          h["champion"]["detection_loss"])) for h in result.history]
    assert all(b <= a for a, b in zip(keys, keys[1:]))

    # front members are mutually non-dominating and rank 1
    front_fits = [ind.fitness for ind in result.front]
    for fa in front_fits:
        assert all(not beats(fb, fa) for fb in front_fits if fb is not fa)
    assert all(ind.rank == 1 for ind in result.front)

    champ = result.champion
    assert champ.fitness[1] == champ.genome.sum()
    assert result.n_evaluations == result.history[-1]["evaluations"]
    assert result.n_evaluations <= 12 * 9

    again = evolve(case14, case14_scores, surrogate(case14), config)
    assert np.array_equal(again.champion.genome, champ.genome)
    assert again.history == result.history


@pytest.mark.filterwarnings("ignore:population contains")
def test_evolve_memoizes_by_genome(case14, case14_scores):
    counts: dict[bytes, int] = {}
    base = surrogate(case14)

    def counting(genome):
        counts[genome.tobytes()] = counts.get(genome.tobytes(), 0) + 1
        return base(genome)

    result = evolve(case14, case14_scores, counting, GaConfig(n_pop=10, generations=5, seed=3))
    assert all(c == 1 for c in counts.values())
    assert result.n_evaluations == len(counts)


@pytest.mark.filterwarnings("ignore:population contains")
def test_evolve_survives_failing_evaluations(case14, case14_scores):
    base = surrogate(case14)

    def flaky(genome):
        if genome.sum() % 2 == 1:
            raise RuntimeError("resource hiccup")
        return base(genome)

    with pytest.warns(UserWarning, match="worst fitness"):
        result = evolve(case14, case14_scores, flaky,
                        GaConfig(n_pop=10, generations=4, seed=0))
    assert np.isfinite(result.champion.fitness).all()
    assert result.champion.genome.sum() % 2 == 0


@pytest.mark.filterwarnings("ignore:population contains")
def test_evolve_prefers_batch_evaluation(case14, case14_scores):
    base = surrogate(case14)

    class Batch:
        def __init__(self):
            self.batches = []
            self.single_calls = 0

        def __call__(self, genome):
            self.single_calls += 1
            return base(genome)

        def evaluate_many(self, genomes):
            self.batches.append(len(genomes))
            return [base(g) for g in genomes]

    batch = Batch()
    evolve(case14, case14_scores, batch, GaConfig(n_pop=8, generations=3, seed=0))
    assert batch.single_calls == 0
    assert batch.batches and batch.batches[0] <= 8

    class Broken(Batch):
        def evaluate_many(self, genomes):
            raise RuntimeError("no cluster today")

    broken = Broken()
    with pytest.warns(UserWarning, match="one at a time"):
        result = evolve(case14, case14_scores, broken, GaConfig(n_pop=8, generations=2, seed=0))
    assert broken.single_calls == result.n_evaluations


def test_resolve_workers(monkeypatch):
    monkeypatch.delenv("GRIDSENSE_WORKERS", raising=False)
    assert resolve_workers(5) == 5
    assert resolve_workers(0) == 1
    assert resolve_workers(None) >= 1
    monkeypatch.setenv("GRIDSENSE_WORKERS", "3")
    assert resolve_workers(5) == 3


def test_placement_fitness_mechanics(case14, case14_frames, fast_detector_params):
    benign = case14_frames[:16]
    cfg = AttackConfig(kind="random", alpha=0.15, seed=5)
    attacked = [attack_random(f, cfg) for f in case14_frames[16:32]]
    frames = [f for pair in zip(benign, attacked) for f in pair]
    x = np.stack([f.data for f in frames])
    y = np.array([f.label for f in frames])

    fitness = PlacementFitness(case14, x[:24], y[:24], x[24:], y[24:],
                               detector_params=fast_detector_params, workers=1)
    genome = np.zeros(case14.n, dtype=bool)
    genome[[3, 4, 5, 8]] = True
    v, f1, f2 = fitness(genome)
    assert v == violation(case14, genome)
    assert f1 == 4.0
    assert np.isfinite(f2) and f2 > 0.0
    assert fitness.n_trainings == 1

    # repeated and duplicated requests never retrain
    assert fitness(genome) == (v, f1, f2)
    batch = fitness.evaluate_many([genome, genome, np.zeros(case14.n, dtype=bool)])
    assert batch[0] == batch[1] == (v, f1, f2)
    assert fitness.n_trainings == 2


@pytest.mark.filterwarnings("ignore:population contains")
def test_estimator_front_end(case14, case14_scores):
    ga = SensorPlacementGA(network=case14, scores=case14_scores,
                           evaluator=surrogate(case14), n_pop=8, generations=3, k=4, seed=2)
    assert ga.get_params()["n_pop"] == 8
    with pytest.raises(ValueError, match="call fit first"):
        ga.get_support()
    ga.fit()
    assert np.array_equal(ga.get_support(), ga.champion_)
    np.testing.assert_array_equal(ga.selected_buses_, np.flatnonzero(ga.champion_))
    assert ga.champion_fitness_ == ga.result_.champion.fitness
    assert len(ga.history_) == 4
    assert ga.n_evaluations_ > 0
    assert all(fit[0] >= 0 for _, fit in ga.front_)

    with pytest.raises(ValueError, match="must all be set"):
        SensorPlacementGA().fit()
