"""Command-line entry point tying the pipeline together.

Subcommands cover the full loop: ``simulate`` benign datasets, ``attack``
them, rank buses with ``importance``, search placements with ``optimize``,
benchmark them with ``evaluate`` and quantify the state-estimation payoff
with ``psse``. Exit codes: 2 for configuration problems, 3 for power-flow
failures, 4 for evaluation/estimation failures, 5 for missing artifacts.
All randomness flows from the single configured seed, so re-running a
command with the same inputs reproduces its outputs byte for byte.
"""
from __future__ import annotations

import csv
import functools
import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import __version__
from .attacks import (ATTACK_KINDS, AttackConfig, attack_general, attack_lr,
                      attack_random, measurement_ranges)
from .config import ExperimentConfig, load_config
from .evaluation import (COMPARISON_COLUMNS, compare_placements, frames_to_arrays,
                         greedy_placement, make_splits)
from .exceptions import (AttackError, CaseFormatError, ConfigError, EvaluationError,
                         GridsenseError, PowerFlowError, UnobservableError)
from .importance import hybrid_importance, importance_components
from .network import PowerNetwork, load_case
from .nsga2 import PlacementFitness, evolve
from .powerflow import LoadProfile, generate_dataset, load_frames, save_frames
from .stateest import psse_improvement

_ERROR_CODES = (
    (ConfigError, 2),
    (CaseFormatError, 2),
    (PowerFlowError, 3),
    (UnobservableError, 4),
    (EvaluationError, 4),
    (AttackError, 4),
)


def _exit(code: int, message) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _mapped_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except GridsenseError as exc:
            for etype, code in _ERROR_CODES:
                if isinstance(exc, etype):
                    _exit(code, exc)
            _exit(1, exc)

    return wrapper


def _load_network(case: str) -> PowerNetwork:
    try:
        return load_case(case)
    except FileNotFoundError as exc:
        _exit(2, exc)


def _resolve_config(config_path, case, output, seed, workers) -> ExperimentConfig:
    cfg = load_config(config_path) if config_path else ExperimentConfig()
    overrides = {}
    if case is not None:
        overrides["case"] = case
    if output is not None:
        overrides["output"] = output
    if seed is not None:
        overrides["seed"] = seed
    if workers is not None:
        overrides["workers"] = workers
    return replace(cfg, **overrides) if overrides else cfg


def _simulate_frames(cfg: ExperimentConfig, network: PowerNetwork):
    profile = cfg.simulation.profile(network.n, cfg.seed)
    return generate_dataset(network, profile)


def _build_splits(cfg: ExperimentConfig, network: PowerNetwork, frames):
    return make_splits(
        network, frames,
        random_config=cfg.attacks.config("random", cfg.seed),
        general_config=cfg.attacks.config("general", cfg.seed),
        lr_config=cfg.attacks.config("lr", cfg.seed),
        test_fraction=cfg.evaluation.test_fraction,
        attack_fraction=cfg.evaluation.attack_fraction,
        val_fraction=cfg.evaluation.val_fraction,
        seed=cfg.seed,
    )


def _buses_of(genome) -> list[int]:
    """Sorted 1-based bus positions of a placement genome."""
    return [int(i) + 1 for i in np.flatnonzero(np.asarray(genome, dtype=bool))]


def _genome_of(buses, n: int) -> np.ndarray:
    genome = np.zeros(n, dtype=bool)
    for bus in buses:
        bus = int(bus)
        if not 1 <= bus <= n:
            _exit(5, f"bus id {bus} outside 1..{n}")
        genome[bus - 1] = True
    return genome


def _read_placements(path, n: int) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        _exit(5, f"placements file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        _exit(5, f"could not parse {path}: {exc}")
    table = data.get("placements") if isinstance(data, dict) else None
    if table is None and isinstance(data, dict) and "buses" in data:
        table = {data.get("name", path.stem): data["buses"]}
    if not isinstance(table, dict):
        _exit(5, f"{path} carries no placements table")
    return {name: _genome_of(buses, n) for name, buses in table.items()}


def _write_json(payload: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


@click.group()
@click.version_option(__version__)
def main():
    """Sensor placement and attack detection for power grids."""


@main.command()
@click.option("--case", default="case14", show_default=True,
              help="Bundled case name or path to a case file.")
@click.option("--horizon", default=200, show_default=True, type=int,
              help="Number of timesteps to simulate.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--period", default=96, show_default=True, type=int,
              help="Timesteps per daily load cycle.")
@click.option("--amplitude", default=0.1, show_default=True, type=float,
              help="Relative amplitude of the daily load swing.")
@click.option("--noise", default=0.08, show_default=True, type=float,
              help="Relative bounds of the per-bus load jitter.")
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False),
              help="Dataset file to write (.csv or .jsonl).")
@_mapped_errors
def simulate(case, horizon, seed, period, amplitude, noise, output):
    """Generate a benign measurement dataset from daily load flows."""
    network = _load_network(case)
    try:
        profile = LoadProfile.daily(network.n, horizon, seed=seed, period=period,
                                    amplitude=amplitude, noise=noise)
    except ValueError as exc:
        _exit(2, exc)
    frames = generate_dataset(network, profile)
    save_frames(frames, output)
    click.echo(f"wrote {len(frames)} frames x {network.n} buses to {output}")


@main.command()
@click.option("--case", default="case14", show_default=True,
              help="Case the dataset was simulated from (needed to re-solve lr attacks).")
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False),
              help="Benign dataset to read.")
@click.option("--kind", type=click.Choice(ATTACK_KINDS), default="random",
              show_default=True)
@click.option("--alpha", default=0.1, show_default=True, type=float,
              help="Attack magnitude (relative).")
@click.option("--fraction", default=0.5, show_default=True, type=float,
              help="Fraction of frames to attack.")
@click.option("--target-fraction", default=0.3, show_default=True, type=float,
              help="Fraction of buses targeted within an attacked frame.")
@click.option("--tau-max", default=0.20, show_default=True, type=float,
              help="Load-shift bound for lr attacks.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False))
@_mapped_errors
def attack(case, input_path, kind, alpha, fraction, target_fraction, tau_max, seed, output):
    """Inject false data into a fraction of an existing dataset."""
    if not Path(input_path).exists():
        _exit(5, f"dataset not found: {input_path}")
    if not 0 < fraction <= 1:
        _exit(2, f"--fraction must be in (0, 1], got {fraction}")
    frames = load_frames(input_path)
    config = AttackConfig(kind=kind, alpha=alpha, target_fraction=target_fraction,
                          tau_max=tau_max, seed=seed)
    rng = np.random.default_rng(seed)
    victims = np.sort(rng.permutation(len(frames))[: int(round(fraction * len(frames)))])
    network = _load_network(case) if kind == "lr" else None
    benign = [f for f in frames if f.label == 0]
    ranges = measurement_ranges(benign) if kind == "general" else None
    for i in victims:
        if kind == "random":
            frames[i] = attack_random(frames[i], config)
        elif kind == "general":
            frames[i] = attack_general(frames[i], ranges, config)
        else:
            frames[i] = attack_lr(frames[i], network, config)
    save_frames(frames, output)
    click.echo(f"attacked {victims.size} of {len(frames)} frames ({kind}) -> {output}")


@main.command()
@click.option("--case", default="case14", show_default=True)
@click.option("--top", default=10, show_default=True, type=int,
              help="Number of leading buses to print.")
@click.option("--output", "-o", type=click.Path(dir_okay=False), default=None,
              help="Also write the full score table as JSON.")
@_mapped_errors
def importance(case, top, output):
    """Rank buses by the hybrid importance score."""
    network = _load_network(case)
    components = importance_components(network)
    scores = hybrid_importance(network, components=components)
    order = np.argsort(-scores, kind="stable")
    click.echo(f"{'bus':>5}  {'label':>6}  {'score':>8}")
    for i in order[: max(0, top)]:
        click.echo(f"{i + 1:>5}  {network.labels[i]:>6}  {scores[i]:>8.4f}")
    if output:
        payload = {
            "case": network.name,
            "bus": [int(i) + 1 for i in range(network.n)],
            "label": [int(lbl) for lbl in network.labels],
            "score": [float(s) for s in scores],
            **{name: [float(v) for v in values] for name, values in components.items()},
        }
        _write_json(payload, Path(output))
        click.echo(f"wrote scores to {output}")


@main.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="TOML or JSON experiment config.")
@click.option("--case", default=None, help="Override the configured case.")
@click.option("--output", "-o", default=None, help="Override the results directory.")
@click.option("--seed", type=int, default=None, help="Override the master seed.")
@click.option("--workers", type=int, default=None, help="Cap parallel detector training.")
@click.option("--n-pop", type=int, default=None, help="Override the population size.")
@click.option("--generations", type=int, default=None, help="Override the generation count.")
@click.option("--k", type=int, default=None, help="Override the sensor budget.")
@_mapped_errors
def optimize(config_path, case, output, seed, workers, n_pop, generations, k):
    """Search sensor placements with the detector in the loop."""
    cfg = _resolve_config(config_path, case, output, seed, workers)
    ga_overrides = {}
    if n_pop is not None:
        ga_overrides["n_pop"] = n_pop
    if generations is not None:
        ga_overrides["generations"] = generations
    if k is not None:
        ga_overrides["k"] = k
    if ga_overrides:
        cfg = replace(cfg, ga=replace(cfg.ga, **ga_overrides))
    try:
        ga_config = cfg.ga.config(cfg.seed)
    except ValueError as exc:
        _exit(2, exc)

    network = _load_network(cfg.case)
    frames = _simulate_frames(cfg, network)
    splits = _build_splits(cfg, network, frames)
    x_train, y_train = frames_to_arrays(splits.train)
    x_val, y_val = frames_to_arrays(splits.val)

    scores = hybrid_importance(network)
    fitness = PlacementFitness(network, x_train, y_train, x_val, y_val,
                               constraints=cfg.constraints.config(),
                               detector_params=cfg.detector.params(),
                               train_seed=cfg.seed, workers=cfg.workers)

    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "log.jsonl", "w", encoding="utf-8") as log_fh:

        def progress(record: dict) -> None:
            log_fh.write(json.dumps(record, sort_keys=True) + "\n")
            log_fh.flush()

        result = evolve(network, scores, fitness, ga_config, progress=progress)

    def entry(ind) -> dict:
        return {
            "buses": _buses_of(ind.genome),
            "violation": ind.fitness[0],
            "n_sensors": ind.fitness[1],
            "detection_loss": ind.fitness[2],
        }

    champion = entry(result.champion)
    front = [entry(ind) for ind in sorted(result.front, key=lambda ind: ind.fitness)]
    greedy = greedy_placement(network, scores, ga_config.resolve_k(network.n),
                              seed=cfg.seed)
    _write_json({
        "case": cfg.case,
        "seed": cfg.seed,
        "config": cfg.as_dict(),
        "champion": champion,
        "placements": {"ga": champion["buses"], "greedy": _buses_of(greedy)},
        "evaluations": result.n_evaluations,
        "trainings": fitness.n_trainings,
    }, outdir / "placements.json")
    _write_json({"champion": champion, "front": front}, outdir / "pareto.json")

    click.echo(f"champion buses {champion['buses']} "
               f"(violation={champion['violation']:.4f}, "
               f"loss={champion['detection_loss']:.4f})")
    click.echo(f"front size {len(front)}, {result.n_evaluations} unique genomes, "
               f"{fitness.n_trainings} detector fits")
    click.echo(f"results in {outdir}")


@main.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
@click.option("--case", default=None, help="Override the configured case.")
@click.option("--output", "-o", default=None, help="Override the results directory.")
@click.option("--seed", type=int, default=None)
@click.option("--placements", "placements_path", type=click.Path(dir_okay=False),
              default=None, help="placements.json from a prior optimize run.")
@click.option("--genome", "genome_paths", multiple=True, type=click.Path(dir_okay=False),
              help="Extra placement JSON ({'name':..., 'buses':[...]}); repeatable.")
@click.option("--trials", type=int, default=None, help="Failure trials per level.")
@_mapped_errors
def evaluate(config_path, case, output, seed, placements_path, genome_paths, trials):
    """Benchmark placements: nominal detection metrics plus failure robustness."""
    cfg = _resolve_config(config_path, case, output, seed, None)
    network = _load_network(cfg.case)
    frames = _simulate_frames(cfg, network)
    splits = _build_splits(cfg, network, frames)

    methods: dict[str, np.ndarray] = {}
    if placements_path:
        methods.update(_read_placements(placements_path, network.n))
    for path in genome_paths:
        methods.update(_read_placements(path, network.n))

    n_trials = trials if trials is not None else cfg.evaluation.trials
    rows, reports = compare_placements(
        network, methods, splits,
        detector_params=cfg.detector.params(),
        trials=n_trials, train_seed=cfg.seed, failure_seed=cfg.seed)

    outdir = Path(cfg.output)
    _write_csv(outdir / "metrics.csv", COMPARISON_COLUMNS,
               [[row[col] for col in COMPARISON_COLUMNS] for row in rows])
    level_rows = []
    for name, report in reports.items():
        for j, level in enumerate(report.levels):
            level_rows.append([name, level, report.accuracy[j], report.tpr[j],
                               report.fpr[j], report.precision[j], report.f1[j]])
    _write_csv(outdir / "robustness.csv",
               ("method", "level", "accuracy", "tpr", "fpr", "precision", "f1"),
               level_rows)

    for row in rows:
        click.echo(f"{row['method']:<10} n={row['n_sensors']:<3} "
                   f"acc={row['accuracy']:.3f} f1={row['f1']:.3f} "
                   f"R={row['r_score']:.3f} F_crit={row['f_crit']}")
    click.echo(f"wrote {outdir / 'metrics.csv'} and {outdir / 'robustness.csv'}")


@main.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
@click.option("--case", default=None, help="Override the configured case.")
@click.option("--output", "-o", default=None, help="Override the results directory.")
@click.option("--seed", type=int, default=None)
@click.option("--placements", "placements_path", type=click.Path(dir_okay=False),
              required=True, help="placements.json from a prior optimize run.")
@click.option("--method", default="ga", show_default=True,
              help="Placement entry to evaluate.")
@click.option("--frames", "n_frames", default=8, show_default=True, type=int,
              help="Benign frames to estimate states on.")
@click.option("--trials", type=int, default=None, help="Noise draws per frame.")
@click.option("--sigma", type=float, default=None, help="Measurement noise std dev.")
@_mapped_errors
def psse(config_path, case, output, seed, placements_path, method, n_frames, trials, sigma):
    """Quantify how much a placement improves WLS state estimation."""
    cfg = _resolve_config(config_path, case, output, seed, None)
    network = _load_network(cfg.case)
    methods = _read_placements(placements_path, network.n)
    if method not in methods:
        _exit(5, f"placement {method!r} not in {placements_path} "
                 f"(available: {', '.join(sorted(methods))})")
    genome = methods[method]

    frames = _simulate_frames(cfg, network)
    step = max(1, len(frames) // max(1, n_frames))
    subset = frames[::step][: max(1, n_frames)]
    report = psse_improvement(
        network, subset, genome,
        trials=trials if trials is not None else cfg.evaluation.psse_trials,
        sigma=sigma if sigma is not None else cfg.evaluation.psse_sigma,
        seed=cfg.seed)

    outdir = Path(cfg.output)
    _write_json({
        "case": cfg.case,
        "seed": cfg.seed,
        "method": method,
        "buses": _buses_of(genome),
        "frames": len(subset),
        **{key: float(value) for key, value in report.items()},
    }, outdir / "psse.json")
    click.echo(f"Vm error: {report['vm_error_reference']:.5f} -> "
               f"{report['vm_error_placement']:.5f} "
               f"({report['vm_improvement_pct']:.1f}% better)")
    click.echo(f"Va error: {report['va_error_reference']:.5f} -> "
               f"{report['va_error_placement']:.5f} "
               f"({report['va_improvement_pct']:.1f}% better)")
    click.echo(f"wrote {outdir / 'psse.json'}")


if __name__ == "__main__":
    main()
