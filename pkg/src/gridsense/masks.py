"""Per-channel observability patterns for measurement frames.

Without any placed sensors a network is partially observable through its
existing instrumentation: generator buses expose voltage magnitude and active
injection, load buses expose active/reactive injection (forecast-grade), and
the slack bus exposes voltage magnitude, voltage angle and active injection.
A placed sensor makes all six channels of its bus observable.

Channel columns follow :data:`gridsense.powerflow.CHANNELS`:
``V=0, I=1, theta=2, delta=3, P=4, Q=5``.
"""
from __future__ import annotations

import numpy as np

from .network import PowerNetwork
from .utils.validation import check_genome

_BASELINE_COLUMNS = {
    "generator": (0, 4),
    "load": (4, 5),
    "slack": (0, 2, 4),
}


def baseline_observability(network: PowerNetwork) -> np.ndarray:
    """(N, 6) boolean matrix of channels observable with no placed sensors."""
    obs = np.zeros((network.n, 6), dtype=bool)
    for bus in network.buses:
        obs[bus.id, list(_BASELINE_COLUMNS[bus.kind])] = True
    return obs


def placement_observability(
    network: PowerNetwork, genome=None, *, include_baseline: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Observability matrix and sensor indicator for a placement genome.

    Returns ``(observed, sensor_mask)`` where ``observed`` is (N, 6) bool and
    ``sensor_mask`` is the (N,) genome as floats suitable for the detector's
    7th feature column. Sensor buses observe all six channels.
    """
    obs = baseline_observability(network) if include_baseline else np.zeros((network.n, 6), bool)
    if genome is None:
        mask = np.zeros(network.n, dtype=bool)
    else:
        mask = check_genome(genome, network.n)
    obs = obs | mask[:, None]
    return obs, mask
