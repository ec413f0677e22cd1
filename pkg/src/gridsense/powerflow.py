"""AC power flow and measurement-frame simulation.

The solver is a dense Newton-Raphson in polar coordinates with the Jacobian
assembled from the complex partial derivatives of the injected power
``S(V) = V * conj(Ybus @ V)``. Flat start, no reactive-limit switching.

A *measurement frame* is the per-bus channel matrix ``[V, I, theta, delta, P, Q]``
(voltage magnitude/angle, injection current magnitude/angle, active/reactive
injection) for one timestamp, plus a ground-truth label and attack-type tag.
Benign frames satisfy ``P = V*I*cos(theta-delta)`` and
``Q = V*I*sin(theta-delta)`` by construction.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import PowerFlowDivergenceError, PowerFlowError
from .network import PowerNetwork

CHANNELS = ("V", "I", "theta", "delta", "P", "Q")
CHANNEL_INDEX = {name: k for k, name in enumerate(CHANNELS)}

#: current magnitudes below this are treated as zero when taking angles
_ZERO_CURRENT = 1e-12


@dataclass(frozen=True)
class MeasurementFrame:
    """Channel matrix for one timestamp, shape (N, 6), columns ordered as CHANNELS."""

    t: int
    data: np.ndarray
    label: int = 0
    attack_type: str = "none"

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2 or data.shape[1] != len(CHANNELS):
            raise ValueError(f"frame data must be (N, 6), got {data.shape}")
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def channel(self, name: str) -> np.ndarray:
        return self.data[:, CHANNEL_INDEX[name]]

    def with_data(self, data: np.ndarray, label: int, attack_type: str) -> "MeasurementFrame":
        return MeasurementFrame(t=self.t, data=data, label=label, attack_type=attack_type)


@dataclass(frozen=True)
class PowerFlowResult:
    v: np.ndarray          # complex bus voltages
    iterations: int
    mismatch: float        # final infinity-norm of the power mismatch


def _dsbus_dv(ybus: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of S = V conj(Ybus V) w.r.t. voltage angle and magnitude."""
    ibus = ybus @ v
    diag_v = np.diag(v)
    diag_i = np.diag(ibus)
    diag_vnorm = np.diag(v / np.abs(v))
    ds_dva = 1j * diag_v @ np.conj(diag_i - ybus @ diag_v)
    ds_dvm = diag_v @ np.conj(ybus @ diag_vnorm) + np.conj(diag_i) @ diag_vnorm
    return ds_dva, ds_dvm


def _injection_spec(network: PowerNetwork, loads: np.ndarray) -> np.ndarray:
    """Complex specified injections: generation minus load (Q spec only used at PQ buses)."""
    return network.gen_schedule - loads[:, 0] - 1j * loads[:, 1]


def solve_powerflow(
    network: PowerNetwork,
    loads: np.ndarray | None = None,
    *,
    tol: float = 1e-8,
    max_iter: int = 20,
) -> PowerFlowResult:
    """Newton-Raphson AC power flow from a flat start.

    Parameters
    ----------
    loads : optional (N, 2) array of per-bus active/reactive demand in per
        unit; defaults to the network's base load.

    Raises
    ------
    PowerFlowError
        If the network is disconnected or ``loads`` is malformed.
    PowerFlowDivergenceError
        If the mismatch does not drop below ``tol`` within ``max_iter`` iterations.
    """
    if not network.is_connected():
        raise PowerFlowError("network is disconnected; power flow is ill-posed")
    if loads is None:
        loads = network.base_load
    loads = np.asarray(loads, dtype=float)
    if loads.shape != (network.n, 2):
        raise PowerFlowError(f"loads must have shape ({network.n}, 2), got {loads.shape}")

    ybus = network.ybus
    n = network.n
    pv = network.generator_indices
    pq = network.load_indices
    pvpq = np.concatenate([pv, pq])
    npv, npq = len(pv), len(pq)

    vm = np.ones(n)
    setpoints = network.voltage_setpoints
    fixed = np.concatenate([[network.slack], pv]).astype(int)
    vm[fixed] = setpoints[fixed]
    va = np.zeros(n)
    v = vm * np.exp(1j * va)
    s_spec = _injection_spec(network, loads)

    def mismatch_vector(v):
        mis = v * np.conj(ybus @ v) - s_spec
        return np.concatenate([mis[pvpq].real, mis[pq].imag])

    f = mismatch_vector(v)
    for iteration in range(max_iter + 1):
        norm = float(np.max(np.abs(f))) if f.size else 0.0
        if norm < tol:
            return PowerFlowResult(v=v, iterations=iteration, mismatch=norm)
        if iteration == max_iter or not np.isfinite(norm):
            raise PowerFlowDivergenceError(mismatch=norm, iterations=iteration)
        ds_dva, ds_dvm = _dsbus_dv(ybus, v)
        j11 = ds_dva[np.ix_(pvpq, pvpq)].real
        j12 = ds_dvm[np.ix_(pvpq, pq)].real
        j21 = ds_dva[np.ix_(pq, pvpq)].imag
        j22 = ds_dvm[np.ix_(pq, pq)].imag
        jac = np.block([[j11, j12], [j21, j22]])
        try:
            dx = np.linalg.solve(jac, f)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowDivergenceError(mismatch=norm, iterations=iteration) from exc
        va[pvpq] -= dx[: npv + npq]
        vm[pq] -= dx[npv + npq :]
        v = vm * np.exp(1j * va)
        f = mismatch_vector(v)
    raise PowerFlowDivergenceError(mismatch=float(np.max(np.abs(f))), iterations=max_iter)


def extract_frame(
    network: PowerNetwork,
    v: np.ndarray,
    t: int = 0,
    label: int = 0,
    attack_type: str = "none",
) -> MeasurementFrame:
    """Build the six-channel measurement frame from a solved voltage vector."""
    i_inj = network.ybus @ v
    s = v * np.conj(i_inj)
    i_mag = np.abs(i_inj)
    delta = np.where(i_mag < _ZERO_CURRENT, 0.0, np.angle(i_inj))
    data = np.column_stack([np.abs(v), i_mag, np.angle(v), delta, s.real, s.imag])
    return MeasurementFrame(t=t, data=data, label=label, attack_type=attack_type)


def physics_residuals(data: np.ndarray, reactive: str = "sin") -> tuple[float, float]:
    """Mean squared violation of the injection identities over the buses.

    Returns ``(L_P, L_Q)`` where ``L_P = mean((P - V*I*cos(theta-delta))**2)``
    and ``L_Q`` uses ``sin`` (physical) or ``cos`` (legacy variant) of the same
    angle difference depending on ``reactive``.
    """
    if reactive not in ("sin", "cos"):
        raise ValueError(f"reactive must be 'sin' or 'cos', got {reactive!r}")
    data = np.asarray(data, dtype=float)
    vi = data[:, 0] * data[:, 1]
    ang = data[:, 2] - data[:, 3]
    rp = data[:, 4] - vi * np.cos(ang)
    fq = np.sin if reactive == "sin" else np.cos
    rq = data[:, 5] - vi * fq(ang)
    return float(np.mean(rp**2)), float(np.mean(rq**2))


# -- load profiles and dataset generation -----------------------------------


@dataclass(frozen=True)
class LoadProfile:
    """Per-timestamp, per-bus multipliers applied to the base load, shape (T, N)."""

    multipliers: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.multipliers, dtype=float)
        if m.ndim != 2:
            raise ValueError("multipliers must be a (T, N) array")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "multipliers", m)

    @property
    def horizon(self) -> int:
        return self.multipliers.shape[0]

    @classmethod
    def daily(
        cls,
        n_buses: int,
        horizon: int,
        seed: int = 0,
        *,
        period: int = 96,
        amplitude: float = 0.1,
        noise: float = 0.08,
        low: float = 0.8,
        high: float = 1.2,
    ) -> "LoadProfile":
        """Smooth diurnal shape (trough at t=0) plus per-bus uniform noise, clipped."""
        rng = np.random.default_rng(seed)
        t = np.arange(horizon)
        shape = 1.0 - amplitude * np.cos(2.0 * np.pi * (t % period) / period)
        jitter = rng.uniform(-noise, noise, size=(horizon, n_buses))
        return cls(np.clip(shape[:, None] + jitter, low, high))


def generate_dataset(
    network: PowerNetwork,
    profile: LoadProfile,
    *,
    start_t: int = 0,
) -> list[MeasurementFrame]:
    """Solve one power flow per profile row and return the benign frames.

    Timestamps whose power flow fails to converge are skipped with a warning;
    the returned frames keep their original timestamp indices.
    """
    if profile.multipliers.shape[1] != network.n:
        raise PowerFlowError(
            f"profile has {profile.multipliers.shape[1]} columns, network has {network.n} buses"
        )
    base = network.base_load
    frames = []
    skipped = 0
    for k in range(profile.horizon):
        loads = base * profile.multipliers[k][:, None]
        try:
            result = solve_powerflow(network, loads)
        except PowerFlowDivergenceError:
            skipped += 1
            continue
        frames.append(extract_frame(network, result.v, t=start_t + k))
    if skipped:
        warnings.warn(f"skipped {skipped} non-converged timestamps", stacklevel=2)
    return frames


# -- frame file formats ------------------------------------------------------

CSV_HEADER = ["t", "bus", "V", "I", "theta", "delta", "P", "Q", "label", "attack_type"]


def save_frames_csv(frames, path) -> None:
    """Write frames as one row per bus per timestamp (bus column is 1-based)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for frame in frames:
            for i in range(frame.n):
                row = [frame.t, i + 1]
                row += [repr(float(x)) for x in frame.data[i]]
                row += [frame.label, frame.attack_type]
                writer.writerow(row)


def load_frames_csv(path) -> list[MeasurementFrame]:
    frames: list[MeasurementFrame] = []
    rows: list[list[float]] = []
    meta: tuple[int, int, str] | None = None

    def flush():
        if meta is not None:
            t, label, attack_type = meta
            frames.append(
                MeasurementFrame(t=t, data=np.array(rows), label=label, attack_type=attack_type)
            )

    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header!r}")
        for rec in reader:
            bus = int(rec[1])
            if bus == 1:
                flush()
                rows = []
                meta = (int(rec[0]), int(rec[8]), rec[9])
            rows.append([float(x) for x in rec[2:8]])
    flush()
    return frames


def save_frames_jsonl(frames, path) -> None:
    """Write frames as one JSON object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for frame in frames:
            obj = {
                "t": frame.t,
                "label": frame.label,
                "attack_type": frame.attack_type,
                "channels": frame.data.tolist(),
            }
            fh.write(json.dumps(obj) + "\n")


def load_frames_jsonl(path) -> list[MeasurementFrame]:
    frames = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            frames.append(
                MeasurementFrame(
                    t=obj["t"],
                    data=np.array(obj["channels"]),
                    label=obj["label"],
                    attack_type=obj["attack_type"],
                )
            )
    return frames


def save_frames(frames, path) -> None:
    """Dispatch on file suffix: ``.csv`` or ``.jsonl``."""
    if str(path).endswith(".jsonl"):
        save_frames_jsonl(frames, path)
    else:
        save_frames_csv(frames, path)


def load_frames(path) -> list[MeasurementFrame]:
    if str(path).endswith(".jsonl"):
        return load_frames_jsonl(path)
    return load_frames_csv(path)
