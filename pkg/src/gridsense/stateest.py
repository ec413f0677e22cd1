"""Weighted least squares power system state estimation.

The state vector is ``[Va at non-slack buses, Vm at all buses]`` with the
slack angle fixed at zero. Measurements are voltage magnitudes, voltage
angles, and active/reactive bus injections; each row carries its own
variance. Gauss-Newton iterations solve the normal equations
``(H' W H) dx = H' W r`` with analytic Jacobians until the largest state
update falls below tolerance.

Measurement sets combine a baseline (generator buses meter V and P, the slack
meters V, theta and P, and load buses contribute forecast-grade P/Q
pseudo-measurements at 10x the metered variance) with full V/theta/P/Q
metering at buses selected by a placement genome.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import UnobservableError
from .network import PowerNetwork
from .powerflow import MeasurementFrame
from .utils.validation import check_genome

MEASUREMENT_TYPES = ("vm", "va", "p", "q")

#: variance multiplier for load-bus injection pseudo-measurements
PSEUDO_FACTOR = 10.0


@dataclass(frozen=True)
class Measurement:
    kind: str          # one of MEASUREMENT_TYPES
    bus: int           # 0-based bus index
    value: float
    variance: float

    def __post_init__(self):
        if self.kind not in MEASUREMENT_TYPES:
            raise ValueError(f"unknown measurement type {self.kind!r}")
        if self.variance <= 0:
            raise ValueError(f"variance must be positive, got {self.variance}")


@dataclass(frozen=True)
class StateEstimate:
    vm: np.ndarray
    va: np.ndarray
    iterations: int
    converged: bool
    objective: float   # weighted residual sum of squares at the solution


_CHANNEL_OF_KIND = {"vm": "V", "va": "theta", "p": "P", "q": "Q"}


def baseline_measurements(
    network: PowerNetwork,
    frame: MeasurementFrame,
    *,
    sigma: float = 0.01,
) -> list[Measurement]:
    """Measurement rows available without any placed sensors."""
    var = sigma * sigma
    rows = []
    for bus in network.buses:
        if bus.kind == "slack":
            kinds = ("vm", "va", "p")
            variances = (var, var, var)
        elif bus.kind == "generator":
            kinds = ("vm", "p")
            variances = (var, var)
        else:
            kinds = ("p", "q")
            variances = (PSEUDO_FACTOR * var, PSEUDO_FACTOR * var)
        for kind, variance in zip(kinds, variances):
            value = float(frame.channel(_CHANNEL_OF_KIND[kind])[bus.id])
            rows.append(Measurement(kind, bus.id, value, variance))
    return rows


def sensor_measurements(
    network: PowerNetwork,
    frame: MeasurementFrame,
    genome,
    *,
    sigma: float = 0.01,
) -> list[Measurement]:
    """Full V/theta/P/Q metering at each placed-sensor bus."""
    g = check_genome(genome, network.n)
    var = sigma * sigma
    rows = []
    for i in np.flatnonzero(g):
        for kind in MEASUREMENT_TYPES:
            value = float(frame.channel(_CHANNEL_OF_KIND[kind])[int(i)])
            rows.append(Measurement(kind, int(i), value, var))
    return rows


def build_measurement_set(
    network: PowerNetwork,
    frame: MeasurementFrame,
    genome=None,
    *,
    sigma: float = 0.01,
    include_baseline: bool = True,
) -> list[Measurement]:
    """Baseline plus sensor rows; duplicate (type, bus) rows keep the best variance."""
    rows: dict[tuple[str, int], Measurement] = {}
    pool: list[Measurement] = []
    if include_baseline:
        pool += baseline_measurements(network, frame, sigma=sigma)
    if genome is not None:
        pool += sensor_measurements(network, frame, genome, sigma=sigma)
    for m in pool:
        key = (m.kind, m.bus)
        if key not in rows or m.variance < rows[key].variance:
            rows[key] = m
    return [rows[k] for k in sorted(rows)]


def perturb_measurements(measurements, seed_key) -> list[Measurement]:
    """Add zero-mean Gaussian noise scaled by each row's standard deviation.

    Each row's noise comes from a stream keyed by ``(*seed_key, type, bus)``,
    so rows shared between two measurement sets receive identical noise for
    the same key (paired-comparison support).
    """
    prefix = [int(k) for k in np.atleast_1d(seed_key)]
    noisy = []
    for m in measurements:
        stream = np.random.default_rng(prefix + [MEASUREMENT_TYPES.index(m.kind), m.bus])
        noise = stream.standard_normal() * np.sqrt(m.variance)
        noisy.append(Measurement(m.kind, m.bus, m.value + noise, m.variance))
    return noisy


def _injections(ybus: np.ndarray, vm: np.ndarray, va: np.ndarray):
    v = vm * np.exp(1j * va)
    s = v * np.conj(ybus @ v)
    return s.real, s.imag


def measurement_model(
    network: PowerNetwork,
    measurements,
    vm: np.ndarray,
    va: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Predicted measurement vector h(x) and its Jacobian at the state (vm, va).

    The state ordering is ``[va at non-slack buses ascending, vm at all
    buses]``; the slack angle is not a state variable.
    """
    n = network.n
    slack = network.slack
    ybus = network.ybus
    g_mat, b_mat = ybus.real, ybus.imag
    angle_states = [i for i in range(n) if i != slack]
    angle_pos = {bus: k for k, bus in enumerate(angle_states)}
    n_ang = len(angle_states)

    p, q = _injections(ybus, vm, va)
    h = np.zeros(len(measurements))
    jac = np.zeros((len(measurements), n_ang + n))
    dva = va[:, None] - va[None, :]
    cos_d, sin_d = np.cos(dva), np.sin(dva)
    # common Jacobian blocks for injections
    vivj = vm[:, None] * vm[None, :]
    dp_dva = vivj * (g_mat * sin_d - b_mat * cos_d)
    np.fill_diagonal(dp_dva, -q - b_mat.diagonal() * vm**2)
    dp_dvm = vm[:, None] * (g_mat * cos_d + b_mat * sin_d)
    np.fill_diagonal(dp_dvm, p / vm + g_mat.diagonal() * vm)
    dq_dva = -vivj * (g_mat * cos_d + b_mat * sin_d)
    np.fill_diagonal(dq_dva, p - g_mat.diagonal() * vm**2)
    dq_dvm = vm[:, None] * (g_mat * sin_d - b_mat * cos_d)
    np.fill_diagonal(dq_dvm, q / vm - b_mat.diagonal() * vm)

    for row, m in enumerate(measurements):
        i = m.bus
        if m.kind == "vm":
            h[row] = vm[i]
            jac[row, n_ang + i] = 1.0
        elif m.kind == "va":
            h[row] = va[i]
            if i != slack:
                jac[row, angle_pos[i]] = 1.0
        elif m.kind == "p":
            h[row] = p[i]
            for j in range(n):
                if j != slack:
                    jac[row, angle_pos[j]] = dp_dva[i, j]
                jac[row, n_ang + j] = dp_dvm[i, j]
        else:
            h[row] = q[i]
            for j in range(n):
                if j != slack:
                    jac[row, angle_pos[j]] = dq_dva[i, j]
                jac[row, n_ang + j] = dq_dvm[i, j]
    return h, jac


def wls_estimate(
    network: PowerNetwork,
    measurements,
    *,
    tol: float = 1e-8,
    max_iter: int = 25,
    cond_limit: float = 1e12,
) -> StateEstimate:
    """Gauss-Newton WLS state estimate.

    Raises
    ------
    UnobservableError
        If the gain matrix is numerically singular (insufficient measurements).
    """
    measurements = list(measurements)
    if not measurements:
        raise UnobservableError("empty measurement set")
    n = network.n
    angle_states = [i for i in range(n) if i != network.slack]
    n_ang = len(angle_states)

    z = np.array([m.value for m in measurements])
    w = np.array([1.0 / m.variance for m in measurements])

    vm = np.ones(n)
    va = np.zeros(n)

    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        h, jac = measurement_model(network, measurements, vm, va)
        r = z - h
        weighted = jac * w[:, None]
        gain = weighted.T @ jac
        if not np.all(np.isfinite(gain)) or np.linalg.cond(gain) > cond_limit:
            raise UnobservableError(
                "gain matrix is singular; the measurement set does not observe the state"
            )
        dx = np.linalg.solve(gain, weighted.T @ r)
        va[angle_states] += dx[:n_ang]
        vm += dx[n_ang:]
        if np.max(np.abs(dx)) < tol:
            converged = True
            break
    h, _ = measurement_model(network, measurements, vm, va)
    objective = float(np.sum(w * (z - h) ** 2))
    return StateEstimate(vm=vm, va=va, iterations=iterations, converged=converged,
                         objective=objective)


def estimation_errors(frame: MeasurementFrame, estimate: StateEstimate) -> tuple[float, float]:
    """Mean absolute voltage magnitude / angle errors against a ground-truth frame."""
    evm = float(np.mean(np.abs(estimate.vm - frame.channel("V"))))
    eva = float(np.mean(np.abs(estimate.va - frame.channel("theta"))))
    return evm, eva


def psse_improvement(
    network: PowerNetwork,
    frames,
    genome,
    *,
    reference=None,
    trials: int = 10,
    sigma: float = 0.01,
    seed: int = 0,
) -> dict[str, float]:
    """Percentage reduction of WLS estimation error due to a sensor placement.

    Compares the placement ``genome`` against ``reference`` (default: baseline
    metering only) over ``trials`` noise draws per frame. Shared measurement
    rows of the two sets see identical noise in each trial, so the comparison
    is paired.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("need at least one frame")
    err_a = np.zeros(2)
    err_b = np.zeros(2)
    count = 0
    for frame in frames:
        set_a = build_measurement_set(network, frame, reference, sigma=sigma)
        set_b = build_measurement_set(network, frame, genome, sigma=sigma)
        for trial in range(trials):
            rng_key = [seed, frame.t, trial]
            noisy_a = perturb_measurements(set_a, rng_key)
            noisy_b = perturb_measurements(set_b, rng_key)
            est_a = wls_estimate(network, noisy_a)
            est_b = wls_estimate(network, noisy_b)
            err_a += estimation_errors(frame, est_a)
            err_b += estimation_errors(frame, est_b)
            count += 1
    err_a /= count
    err_b /= count
    with np.errstate(divide="ignore", invalid="ignore"):
        gains = np.where(err_a > 0, 100.0 * (err_a - err_b) / err_a, 0.0)
    return {
        "vm_error_reference": float(err_a[0]),
        "va_error_reference": float(err_a[1]),
        "vm_error_placement": float(err_b[0]),
        "va_error_placement": float(err_b[1]),
        "vm_improvement_pct": float(gains[0]),
        "va_improvement_pct": float(gains[1]),
    }
