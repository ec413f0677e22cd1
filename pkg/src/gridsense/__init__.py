"""gridsense: joint sensor placement and physics-informed attack detection for power grids."""

__version__ = "0.1.0"

from .attacks import AttackConfig, attack_general, attack_lr, attack_random
from .detector import AttackDetector
from .evaluation import (DatasetSplits, RobustnessReport, compare_placements,
                         detection_metrics, greedy_placement, make_splits,
                         robustness_report)
from .importance import ImportanceWeights, hybrid_importance, importance_components
from .masks import baseline_observability, placement_observability
from .network import Branch, Bus, PowerNetwork, load_case, parse_case, write_case
from .nsga2 import GaConfig, PlacementFitness, SensorPlacementGA, evolve
from .placement import ConstraintConfig, initialize_population, violation
from .powerflow import (CHANNELS, LoadProfile, MeasurementFrame, generate_dataset,
                        load_frames, physics_residuals, save_frames, solve_powerflow)
from .stateest import psse_improvement, wls_estimate

__all__ = [
    "AttackConfig",
    "AttackDetector",
    "Branch",
    "Bus",
    "CHANNELS",
    "ConstraintConfig",
    "DatasetSplits",
    "GaConfig",
    "ImportanceWeights",
    "LoadProfile",
    "MeasurementFrame",
    "PlacementFitness",
    "PowerNetwork",
    "RobustnessReport",
    "SensorPlacementGA",
    "attack_general",
    "attack_lr",
    "attack_random",
    "baseline_observability",
    "compare_placements",
    "detection_metrics",
    "evolve",
    "generate_dataset",
    "greedy_placement",
    "hybrid_importance",
    "importance_components",
    "initialize_population",
    "load_case",
    "load_frames",
    "make_splits",
    "parse_case",
    "physics_residuals",
    "placement_observability",
    "psse_improvement",
    "robustness_report",
    "save_frames",
    "solve_powerflow",
    "violation",
    "wls_estimate",
    "write_case",
    "__version__",
]
