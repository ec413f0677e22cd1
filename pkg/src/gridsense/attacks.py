"""False data injection attacks on measurement frames.

Three attack families:

* ``random``  — multiplicative scaling ``Z <- (1 + alpha) * Z`` on the
  configured channels of the targeted buses.
* ``general`` — additive perturbation ``Z <- Z + (-1)**beta * alpha * gamma *
  range(Z)`` with fresh ``beta ~ Bernoulli(0.5)`` and ``gamma ~ U(0, 1)`` per
  (bus, channel), where ``range`` is the per-bus/per-channel spread observed
  over a benign history.
* ``lr``      — load redistribution: a zero-sum shift of targeted bus loads,
  bounded by ``tau_max`` relative deviation, pushed through a fresh AC power
  flow so the falsified frame still satisfies the physics identities.

Targeting policy: targets are sampled without replacement with probability
proportional to per-bus attack energy (squared channel values for ``random``,
squared channel ranges for ``general``, squared active load for ``lr``). Buses
whose attacked channels all sit below ``magnitude_floor`` are excluded — scaling
a near-zero measurement is a vacuous attack that produces no meaningful
deviation to detect.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import AttackError
from .network import PowerNetwork
from .powerflow import CHANNEL_INDEX, CHANNELS, MeasurementFrame, extract_frame, solve_powerflow
from .utils.validation import as_rng

ATTACK_KINDS = ("random", "general", "lr")
_KIND_CODE = {kind: k for k, kind in enumerate(ATTACK_KINDS)}


@dataclass(frozen=True)
class AttackConfig:
    """Parameters shared by the attack generators."""

    kind: str = "random"
    alpha: float = 0.1
    target_fraction: float = 0.3
    channels: tuple[str, ...] = ("P", "Q")
    tau_max: float = 0.20
    magnitude_floor: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise AttackError(f"unknown attack kind {self.kind!r}; expected one of {ATTACK_KINDS}")
        if self.alpha < 0:
            raise AttackError(f"alpha must be non-negative, got {self.alpha}")
        if not 0 < self.target_fraction <= 1:
            raise AttackError(f"target_fraction must be in (0, 1], got {self.target_fraction}")
        if not self.channels:
            raise AttackError("channels must not be empty")
        for c in self.channels:
            if c not in CHANNELS:
                raise AttackError(f"unknown channel {c!r}; expected subset of {CHANNELS}")
        if not 0 < self.tau_max <= 1:
            raise AttackError(f"tau_max must be in (0, 1], got {self.tau_max}")
        if self.magnitude_floor < 0:
            raise AttackError("magnitude_floor must be non-negative")


def _frame_rng(config: AttackConfig, frame: MeasurementFrame, rng) -> np.random.Generator:
    """Per-frame stream derived from the config seed unless an explicit rng is given."""
    if rng is not None:
        return as_rng(rng)
    return np.random.default_rng([config.seed, _KIND_CODE[config.kind], frame.t])


def _sample_targets(
    weights: np.ndarray,
    n_targets: int,
    rng: np.random.Generator,
    floor_energy: float,
) -> np.ndarray:
    eligible = np.flatnonzero(weights > floor_energy)
    if eligible.size == 0:
        raise AttackError("no eligible target buses (all attacked channels below the magnitude floor)")
    if eligible.size < n_targets:
        warnings.warn(
            f"only {eligible.size} eligible targets for a request of {n_targets}; shrinking",
            stacklevel=3,
        )
        n_targets = eligible.size
    p = weights[eligible] / weights[eligible].sum()
    return np.sort(rng.choice(eligible, size=n_targets, replace=False, p=p))


def _n_targets(config: AttackConfig, n_buses: int) -> int:
    return max(1, int(round(config.target_fraction * n_buses)))


def attack_random(
    frame: MeasurementFrame, config: AttackConfig, rng=None
) -> MeasurementFrame:
    """Scale the configured channels of sampled target buses by ``1 + alpha``."""
    if config.alpha == 0:
        warnings.warn("alpha=0: frame is labelled attacked but left unmodified", stacklevel=2)
    rng = _frame_rng(config, frame, rng)
    cols = [CHANNEL_INDEX[c] for c in config.channels]
    energy = (frame.data[:, cols] ** 2).sum(axis=1)
    targets = _sample_targets(energy, _n_targets(config, frame.n), rng, config.magnitude_floor**2)
    data = frame.data.copy()
    data[np.ix_(targets, cols)] *= 1.0 + config.alpha
    return frame.with_data(data, label=1, attack_type="random")


def measurement_ranges(frames) -> np.ndarray:
    """Per-bus, per-channel spread (max - min) over a benign history of frames."""
    frames = list(frames)
    if not frames:
        raise AttackError("cannot compute measurement ranges from an empty history")
    stack = np.stack([f.data for f in frames])
    return stack.max(axis=0) - stack.min(axis=0)


def attack_general(
    frame: MeasurementFrame,
    ranges: np.ndarray,
    config: AttackConfig,
    rng=None,
) -> MeasurementFrame:
    """Additive range-proportional perturbation with per-(bus, channel) sign and scale."""
    ranges = np.asarray(ranges, dtype=float)
    if ranges.shape != frame.data.shape:
        raise AttackError(f"ranges must have shape {frame.data.shape}, got {ranges.shape}")
    if config.alpha == 0:
        warnings.warn("alpha=0: frame is labelled attacked but left unmodified", stacklevel=2)
    rng = _frame_rng(config, frame, rng)
    cols = [CHANNEL_INDEX[c] for c in config.channels]
    energy = (ranges[:, cols] ** 2).sum(axis=1)
    targets = _sample_targets(energy, _n_targets(config, frame.n), rng, config.magnitude_floor**2)
    sign = np.where(rng.random((targets.size, len(cols))) < 0.5, 1.0, -1.0)
    gamma = rng.uniform(0.0, 1.0, size=(targets.size, len(cols)))
    data = frame.data.copy()
    data[np.ix_(targets, cols)] += sign * config.alpha * gamma * ranges[np.ix_(targets, cols)]
    return frame.with_data(data, label=1, attack_type="general")


# -- load redistribution -----------------------------------------------------


def recover_loads(network: PowerNetwork, frame: MeasurementFrame) -> np.ndarray:
    """Per-bus (P, Q) demand implied by a benign frame.

    Active demand is ``schedule - injection`` (exact at generator and load
    buses). Reactive demand is recovered at load buses only; generator and
    slack buses keep their base reactive load, which the power flow never
    consults.
    """
    p_load = network.gen_schedule - frame.channel("P")
    q_load = network.base_load[:, 1].copy()
    pq = network.load_indices
    q_load[pq] = -frame.channel("Q")[pq]
    return np.column_stack([p_load, q_load])


def sample_lr_shift(
    loads_p: np.ndarray,
    tau_max: float,
    rng,
) -> np.ndarray:
    """Zero-sum load shift with max relative deviation drawn in [tau_max/2, tau_max).

    ``loads_p`` are the true active loads of the targeted buses (all nonzero).
    """
    loads_p = np.asarray(loads_p, dtype=float)
    if loads_p.size < 2:
        raise AttackError("load redistribution needs at least 2 targeted buses")
    if np.any(loads_p == 0):
        raise AttackError("targeted buses must all have nonzero active load")
    rng = as_rng(rng)
    for _ in range(100):
        g = rng.standard_normal(loads_p.size)
        g -= g.mean()
        peak = np.max(np.abs(g / loads_p))
        if peak > 1e-12:
            break
    else:  # pragma: no cover - essentially impossible
        raise AttackError("could not draw a non-degenerate shift")
    tau_star = rng.uniform(0.5 * tau_max, tau_max)
    return g * (tau_star / peak)


def attack_lr(
    frame: MeasurementFrame,
    network: PowerNetwork,
    config: AttackConfig,
    rng=None,
) -> MeasurementFrame:
    """Load-redistribution attack: zero-sum falsified loads re-solved through power flow.

    The resulting frame satisfies the injection identities (the attack is
    stealthy against pure physics checks); only the load pattern is wrong.
    """
    rng = _frame_rng(config, frame, rng)
    loads = recover_loads(network, frame)
    candidates = np.zeros(network.n, dtype=bool)
    candidates[network.load_indices] = True
    weights = np.where(candidates, loads[:, 0] ** 2, 0.0)
    n_t = max(2, _n_targets(config, network.n))
    available = int(np.count_nonzero(weights > 1e-12))
    if available < 2:
        raise AttackError("load redistribution needs at least 2 load buses with nonzero demand")
    n_t = min(n_t, available)
    targets = _sample_targets(weights, n_t, rng, 1e-12)
    shift = sample_lr_shift(loads[targets, 0], config.tau_max, rng)
    falsified = loads.copy()
    scale = (loads[targets, 0] + shift) / loads[targets, 0]
    falsified[targets, 0] = loads[targets, 0] * scale
    falsified[targets, 1] = loads[targets, 1] * scale
    result = solve_powerflow(network, falsified)
    attacked = extract_frame(network, result.v, t=frame.t, label=1, attack_type="lr")
    return attacked
