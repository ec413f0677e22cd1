"""Experiment harness: dataset splits, placement benchmarking, failure robustness.

The harness turns a benign frame history into labeled train/val/test splits
(training sees random and general attacks, testing sees only unseen load
redistribution attacks), trains detectors under candidate placements, and
stress-tests trained detectors under random sensor failures without
retraining. Robustness is summarized by the inverse mean accuracy
degradation ``R = 1 / (1 + mean relative ACC drop)``, the trapezoidal area
under F1 versus normalized failure level, and the critical failure count —
the smallest number of failed sensors that drags mean F1 below 90% of its
no-failure value.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attacks import (AttackConfig, attack_general, attack_lr, attack_random,
                      measurement_ranges)
from .detector import AttackDetector
from .exceptions import EvaluationError, PowerFlowError
from .masks import placement_observability
from .network import PowerNetwork
from .placement import top_k_genome
from .powerflow import MeasurementFrame

METRIC_NAMES = ("accuracy", "tpr", "fpr", "precision", "f1")


def detection_metrics(y_true, y_pred) -> dict[str, float]:
    """Confusion-matrix summary; undefined ratios resolve to 0.0.

    A constant-negative predictor therefore scores precision 0 and F1 0
    rather than raising, which keeps level sweeps well-defined when a
    degraded detector stops firing entirely.
    """
    y_true = np.asarray(y_true, dtype=int).ravel()
    y_pred = np.asarray(y_pred, dtype=int).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred must have the same length")
    if y_true.size == 0:
        raise ValueError("need at least one sample")
    tp = int(np.count_nonzero((y_true == 1) & (y_pred == 1)))
    tn = int(np.count_nonzero((y_true == 0) & (y_pred == 0)))
    fp = int(np.count_nonzero((y_true == 0) & (y_pred == 1)))
    fn = int(np.count_nonzero((y_true == 1) & (y_pred == 0)))
    tpr = tp / (tp + fn) if tp + fn else 0.0
    fpr = fp / (fp + tn) if fp + tn else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    f1 = 2 * precision * tpr / (precision + tpr) if precision + tpr else 0.0
    return {
        "accuracy": (tp + tn) / y_true.size,
        "tpr": tpr,
        "fpr": fpr,
        "precision": precision,
        "f1": f1,
    }


def frames_to_arrays(frames) -> tuple[np.ndarray, np.ndarray]:
    """Stack frames into a (B, N, 6) tensor and a label vector."""
    frames = list(frames)
    if not frames:
        raise EvaluationError("no frames given")
    x = np.stack([f.data for f in frames])
    y = np.array([f.label for f in frames], dtype=int)
    return x, y


@dataclass
class DatasetSplits:
    train: list[MeasurementFrame]
    val: list[MeasurementFrame]
    test: list[MeasurementFrame]
    ranges: np.ndarray  # per-(bus, channel) spreads of the training-pool benign history

    def arrays(self, part: str) -> tuple[np.ndarray, np.ndarray]:
        return frames_to_arrays(getattr(self, part))


def _lr_attack_with_retries(frame, network, config, attempts=8) -> MeasurementFrame:
    try:
        return attack_lr(frame, network, config)
    except PowerFlowError:
        pass
    for attempt in range(1, attempts):
        rng = np.random.default_rng([config.seed, frame.t, attempt])
        try:
            return attack_lr(frame, network, config, rng=rng)
        except PowerFlowError:
            continue
    raise EvaluationError(
        f"load redistribution attack failed to converge on frame t={frame.t} "
        f"after {attempts} attempts"
    )


def make_splits(
    network: PowerNetwork,
    frames,
    *,
    random_config: AttackConfig | None = None,
    general_config: AttackConfig | None = None,
    lr_config: AttackConfig | None = None,
    test_fraction: float = 0.3,
    attack_fraction: float = 0.5,
    val_fraction: float = 0.3,
    seed: int = 0,
) -> DatasetSplits:
    """Carve a benign history into labeled train/val/test splits.

    A test pool is reserved first (no frame index appears on both sides);
    half of it is replaced by load-redistribution attacks, so the test
    distribution contains only benign frames and attacks unseen in training.
    In the remaining pool, ``attack_fraction`` of the frames are replaced by
    attacked copies, alternating the random and general families, and the
    pool is then split ``1 - val_fraction`` / ``val_fraction``. General-attack
    channel spreads come from the training pool's benign history only.
    """
    frames = list(frames)
    if len(frames) < 10:
        raise EvaluationError(f"need at least 10 benign frames, got {len(frames)}")
    if any(f.label != 0 for f in frames):
        raise EvaluationError("make_splits expects benign frames")
    if not 0 < test_fraction < 1 or not 0 <= attack_fraction <= 1 or not 0 < val_fraction < 1:
        raise EvaluationError("fractions must lie in (0, 1)")
    random_config = random_config or AttackConfig(kind="random", seed=seed)
    general_config = general_config or AttackConfig(kind="general", seed=seed)
    lr_config = lr_config or AttackConfig(kind="lr", seed=seed)
    for config, kind in ((random_config, "random"), (general_config, "general"),
                         (lr_config, "lr")):
        if config.kind != kind:
            raise EvaluationError(f"expected a {kind!r} attack config, got {config.kind!r}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(frames))
    n_test = max(2, int(round(test_fraction * len(frames))))
    test_idx = order[:n_test]
    pool_idx = order[n_test:]
    if pool_idx.size < 4:
        raise EvaluationError("too few frames left for training after the test reservation")

    pool = [frames[i] for i in pool_idx]
    ranges = measurement_ranges(pool)

    n_attack = int(round(attack_fraction * len(pool)))
    victims = np.sort(rng.permutation(len(pool))[:n_attack])
    for j, row in enumerate(victims):
        if j % 2 == 0:
            pool[row] = attack_random(pool[row], random_config)
        else:
            pool[row] = attack_general(pool[row], ranges, general_config)

    shuffle = rng.permutation(len(pool))
    n_val = int(round(val_fraction * len(pool)))
    val = [pool[i] for i in shuffle[:n_val]]
    train = [pool[i] for i in shuffle[n_val:]]

    test = []
    for j, i in enumerate(test_idx):
        if j % 2 == 1:
            test.append(_lr_attack_with_retries(frames[i], network, lr_config))
        else:
            test.append(frames[i])
    return DatasetSplits(train=train, val=val, test=test, ranges=ranges)


def greedy_placement(network: PowerNetwork, scores, k: int, seed: int = 0) -> np.ndarray:
    """Top-k buses by importance score with seeded tie-breaking."""
    if k > network.n:
        raise EvaluationError(f"cannot place {k} sensors on {network.n} buses")
    return top_k_genome(scores, k, np.random.default_rng(seed))


def fit_placement_detector(
    network: PowerNetwork,
    genome,
    x,
    y,
    *,
    detector_params: dict | None = None,
    seed: int = 0,
) -> AttackDetector:
    """Train a fresh detector under a placement's observability."""
    observed, mask = placement_observability(network, genome)
    params = dict(detector_params or {})
    params.setdefault("seed", seed)
    detector = AttackDetector(adjacency=network.adjacency, observed=observed,
                              sensor_mask=mask, **params)
    return detector.fit(np.asarray(x, dtype=float), np.asarray(y, dtype=int))


def simulate_failures(genome, level: int, trials: int, seed=0) -> list[np.ndarray]:
    """Degraded copies of ``genome`` with ``level`` placed sensors knocked out.

    Only placed sensors can fail; the pre-existing baseline metering is
    untouched by construction because it is not part of the genome.
    """
    genome = np.asarray(genome, dtype=bool)
    placed = np.flatnonzero(genome)
    if level < 0:
        raise EvaluationError(f"failure level must be non-negative, got {level}")
    if level > placed.size:
        raise EvaluationError(f"cannot fail {level} of {placed.size} placed sensors")
    if trials < 1:
        raise EvaluationError(f"trials must be positive, got {trials}")
    rng = np.random.default_rng(seed)
    masks = []
    for _ in range(trials):
        degraded = genome.copy()
        degraded[rng.choice(placed, size=level, replace=False)] = False
        masks.append(degraded)
    return masks


def failure_levels(network: PowerNetwork, genome, max_levels: int = 8) -> list[int]:
    """Evenly spaced failure counts from 0 up to min(30% of buses, placed sensors)."""
    top = min(int(0.3 * network.n), int(np.count_nonzero(np.asarray(genome, dtype=bool))))
    ks = np.linspace(0, top, min(max_levels, top + 1))
    return [int(k) for k in np.unique(np.round(ks).astype(int))]


@dataclass
class RobustnessReport:
    levels: list[int]
    accuracy: list[float]
    tpr: list[float]
    fpr: list[float]
    precision: list[float]
    f1: list[float]
    r_score: float
    f1_area: float
    f_crit: int
    mean_accuracy: float
    mean_f1: float
    mean_precision: float

    def as_dict(self) -> dict:
        return {
            "levels": list(self.levels),
            "accuracy": list(self.accuracy),
            "tpr": list(self.tpr),
            "fpr": list(self.fpr),
            "precision": list(self.precision),
            "f1": list(self.f1),
            "r_score": self.r_score,
            "f1_area": self.f1_area,
            "f_crit": self.f_crit,
            "mean_accuracy": self.mean_accuracy,
            "mean_f1": self.mean_f1,
            "mean_precision": self.mean_precision,
        }


def robustness_curves(levels, accuracy, f1) -> tuple[float, float, int]:
    """(R, F1 area, critical failure count) from per-level metric traces.

    ``R = 1 / (1 + mean_{l>0} (ACC_0 - ACC_l) / ACC_0)`` with the mean
    degradation floored at zero so R stays in (0, 1]. The F1 area is the
    trapezoid over failure levels normalized to [0, 1]; the critical count is
    the smallest level whose F1 falls below 90% of the no-failure F1, or the
    largest tested level if none does.
    """
    levels = list(levels)
    accuracy = np.asarray(accuracy, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    if not levels or levels[0] != 0:
        raise EvaluationError("level traces must start at failure level 0")
    if len(levels) != accuracy.size or len(levels) != f1.size:
        raise EvaluationError("levels and metric traces must have equal length")

    if len(levels) == 1:
        delta_acc = 0.0
        area = float(f1[0])
    else:
        acc0 = accuracy[0]
        if acc0 <= 0:
            raise EvaluationError("zero baseline accuracy; degradation is undefined")
        delta_acc = max(0.0, float(np.mean((acc0 - accuracy[1:]) / acc0)))
        span = np.asarray(levels, dtype=float) / max(levels)
        area = float(np.trapezoid(f1, span))
    r_score = 1.0 / (1.0 + delta_acc)

    below = [lvl for lvl, value in zip(levels, f1) if value < 0.9 * f1[0]]
    f_crit = below[0] if below else max(levels)
    return r_score, area, int(f_crit)


def robustness_report(
    detector: AttackDetector,
    network: PowerNetwork,
    genome,
    test_frames,
    *,
    levels=None,
    trials: int = 30,
    seed: int = 0,
) -> RobustnessReport:
    """Stress a trained detector under random sensor failures (no retraining)."""
    genome = np.asarray(genome, dtype=bool)
    if levels is None:
        levels = failure_levels(network, genome)
    levels = [int(lvl) for lvl in levels]
    if sorted(set(levels)) != levels:
        raise EvaluationError("failure levels must be strictly increasing")
    x, y = frames_to_arrays(test_frames)

    per_level = {name: [] for name in METRIC_NAMES}
    for level in levels:
        if level == 0:
            masks = [genome]
        else:
            masks = simulate_failures(genome, level, trials, seed=[seed, level])
        trial_metrics = {name: [] for name in METRIC_NAMES}
        for degraded in masks:
            observed, mask = placement_observability(network, degraded)
            y_pred = detector.predict(x, observed=observed, sensor_mask=mask)
            for name, value in detection_metrics(y, y_pred).items():
                trial_metrics[name].append(value)
        for name in METRIC_NAMES:
            per_level[name].append(float(np.mean(trial_metrics[name])))

    r_score, area, f_crit = robustness_curves(levels, per_level["accuracy"], per_level["f1"])
    return RobustnessReport(
        levels=levels,
        accuracy=per_level["accuracy"],
        tpr=per_level["tpr"],
        fpr=per_level["fpr"],
        precision=per_level["precision"],
        f1=per_level["f1"],
        r_score=r_score,
        f1_area=area,
        f_crit=f_crit,
        mean_accuracy=float(np.mean(per_level["accuracy"])),
        mean_f1=float(np.mean(per_level["f1"])),
        mean_precision=float(np.mean(per_level["precision"])),
    )


COMPARISON_COLUMNS = (
    "method", "n_sensors", "accuracy", "tpr", "fpr", "precision", "f1",
    "improvement_accuracy", "improvement_tpr", "improvement_f1",
    "f_crit", "r_score", "f1_area", "mean_accuracy", "mean_f1", "mean_precision",
)


def compare_placements(
    network: PowerNetwork,
    methods: dict,
    splits: DatasetSplits,
    *,
    detector_params: dict | None = None,
    levels=None,
    trials: int = 30,
    train_seed: int = 0,
    failure_seed: int = 0,
) -> tuple[list[dict], dict[str, RobustnessReport]]:
    """Benchmark placement genomes against the bare pre-existing metering.

    ``methods`` maps a display name to a genome (``None`` means no added
    sensors). Every method trains a fresh detector with the same seed and
    budget, reports nominal test metrics, per-metric improvement over the
    baseline row, and the sensor-failure robustness summary. Returns the
    comparison rows (``COMPARISON_COLUMNS`` order, baseline first) plus the
    full per-level robustness report for each method.
    """
    x_train, y_train = frames_to_arrays(splits.train)
    baseline = np.zeros(network.n, dtype=bool)
    entries = [("baseline", baseline)]
    for name, genome in methods.items():
        if name == "baseline":
            continue
        entries.append((name, baseline if genome is None
                        else np.asarray(genome, dtype=bool)))

    rows = []
    reports: dict[str, RobustnessReport] = {}
    reference = None
    for name, genome in entries:
        detector = fit_placement_detector(network, genome, x_train, y_train,
                                          detector_params=detector_params, seed=train_seed)
        x_test, y_test = frames_to_arrays(splits.test)
        observed, mask = placement_observability(network, genome)
        nominal = detection_metrics(
            y_test, detector.predict(x_test, observed=observed, sensor_mask=mask))
        report = robustness_report(detector, network, genome, splits.test,
                                   levels=levels, trials=trials, seed=failure_seed)
        if reference is None:
            reference = nominal
        row = {
            "method": name,
            "n_sensors": int(np.count_nonzero(genome)),
            **{name_: nominal[name_] for name_ in METRIC_NAMES},
            "improvement_accuracy": nominal["accuracy"] - reference["accuracy"],
            "improvement_tpr": nominal["tpr"] - reference["tpr"],
            "improvement_f1": nominal["f1"] - reference["f1"],
            "f_crit": report.f_crit,
            "r_score": report.r_score,
            "f1_area": report.f1_area,
            "mean_accuracy": report.mean_accuracy,
            "mean_f1": report.mean_f1,
            "mean_precision": report.mean_precision,
        }
        rows.append(row)
        reports[name] = report
    return rows, reports
