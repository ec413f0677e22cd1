"""WLS state estimation: measurement sets, Jacobians, observability, pairing."""
import numpy as np
import pytest

from gridsense.exceptions import UnobservableError
from gridsense.stateest import (Measurement, baseline_measurements, build_measurement_set,
                                estimation_errors, measurement_model, perturb_measurements,
                                psse_improvement, sensor_measurements, wls_estimate)

from oracles import relative_error

SIGMA = 0.01


@pytest.fixture(scope="module")
def frame(case14, case14_frames):
    return case14_frames[0]


def test_measurement_validation():
    Measurement("vm", 0, 1.0, 1e-4)  # fine
    with pytest.raises(ValueError, match="unknown measurement type"):
        Measurement("volts", 0, 1.0, 1e-4)
    with pytest.raises(ValueError, match="variance must be positive"):
        Measurement("p", 0, 1.0, 0.0)


def test_baseline_census(case14, frame):
    rows = baseline_measurements(case14, frame, sigma=SIGMA)
    # slack meters vm/va/p, generators vm/p, load buses get p/q pseudo rows
    assert len(rows) == 3 + 2 * 4 + 2 * 9 == 29
    by_bus = {}
    for m in rows:
        by_bus.setdefault(m.bus, set()).add(m.kind)
        channel = {"vm": "V", "va": "theta", "p": "P", "q": "Q"}[m.kind]
        assert m.value == float(frame.channel(channel)[m.bus])
    assert by_bus[case14.slack] == {"vm", "va", "p"}
    for bus in case14.buses:
        if bus.kind == "generator":
            assert by_bus[bus.id] == {"vm", "p"}
        elif bus.kind == "load":
            assert by_bus[bus.id] == {"p", "q"}
    pseudo = [m for m in rows if case14.buses[m.bus].kind == "load"]
    assert all(m.variance == pytest.approx(10 * SIGMA**2) for m in pseudo)
    metered = [m for m in rows if case14.buses[m.bus].kind != "load"]
    assert all(m.variance == pytest.approx(SIGMA**2) for m in metered)


def test_sensor_rows_and_dedup(case14, frame):
    genome = np.zeros(case14.n, dtype=bool)
    genome[[2, 5]] = True
    rows = sensor_measurements(case14, frame, genome, sigma=SIGMA)
    assert len(rows) == 8
    assert {(m.kind, m.bus) for m in rows} == {
        (kind, bus) for bus in (2, 5) for kind in ("vm", "va", "p", "q")}
    assert all(m.variance == pytest.approx(SIGMA**2) for m in rows)

    # a sensor upgrades the load-bus pseudo rows to metered variance
    merged = build_measurement_set(case14, frame, np.ones(case14.n, dtype=bool),
                                   sigma=SIGMA)
    assert len(merged) == 4 * case14.n
    assert all(m.variance == pytest.approx(SIGMA**2) for m in merged)
    keys = [(m.kind, m.bus) for m in merged]
    assert keys == sorted(keys)
    assert len(set(keys)) == len(keys)


@pytest.mark.parametrize("genome_of", [lambda n: None, lambda n: np.ones(n, dtype=bool)])
def test_noiseless_recovery(case14, frame, genome_of):
    rows = build_measurement_set(case14, frame, genome_of(case14.n), sigma=SIGMA)
    est = wls_estimate(case14, rows)
    np.testing.assert_allclose(est.vm, frame.channel("V"), atol=1e-6)
    np.testing.assert_allclose(est.va, frame.channel("theta"), atol=1e-6)
    assert est.converged and est.iterations <= 10
    assert est.objective < 1e-12


def test_unobservable_cases(case14):
    with pytest.raises(UnobservableError, match="empty"):
        wls_estimate(case14, [])
    angles_only = [Measurement("va", i, 0.0, 1e-4) for i in range(case14.n)]
    with pytest.raises(UnobservableError, match="singular"):
        wls_estimate(case14, angles_only)


def test_jacobian_matches_finite_differences(case14, frame):
    rows = build_measurement_set(case14, frame, sigma=SIGMA)
    n, slack = case14.n, case14.slack
    angle_states = [i for i in range(n) if i != slack]
    rng = np.random.default_rng(0)
    vm = 1.0 + 0.05 * rng.standard_normal(n)
    va = 0.1 * rng.standard_normal(n)
    va[slack] = 0.0

    _, jac = measurement_model(case14, rows, vm, va)

    def h_at(x):
        va_x = va.copy()
        va_x[angle_states] = x[: len(angle_states)]
        return measurement_model(case14, rows, x[len(angle_states):], va_x)[0]

    x0 = np.concatenate([va[angle_states], vm])
    eps = 1e-6
    for col in range(x0.size):
        step = np.zeros_like(x0)
        step[col] = eps
        fd = (h_at(x0 + step) - h_at(x0 - step)) / (2 * eps)
        for row in range(jac.shape[0]):
            assert relative_error(jac[row, col], fd[row]) < 1e-4


def test_objective_is_monotone_in_iteration_budget(case14, frame):
    rows = perturb_measurements(build_measurement_set(case14, frame, sigma=SIGMA), [1, 2])
    objectives = [wls_estimate(case14, rows, max_iter=k).objective
                  for k in (1, 2, 3, 5, 25)]
    assert all(a >= b - 1e-12 for a, b in zip(objectives, objectives[1:]))
    assert objectives[0] > 100 * objectives[-1]  # the first step is far from done


def test_added_rows_shrink_the_covariance(case14, frame):
    base = baseline_measurements(case14, frame, sigma=SIGMA)
    genome = np.zeros(case14.n, dtype=bool)
    genome[[3, 8]] = True
    extra = base + sensor_measurements(case14, frame, genome, sigma=SIGMA)

    def trace_inv_gain(rows):
        vm, va = frame.channel("V"), frame.channel("theta")
        _, jac = measurement_model(case14, rows, vm, va)
        w = np.array([1.0 / m.variance for m in rows])
        return float(np.trace(np.linalg.inv((jac * w[:, None]).T @ jac)))

    assert trace_inv_gain(extra) < trace_inv_gain(base)


def test_perturbation_is_paired_by_type_and_bus(case14, frame):
    rows = baseline_measurements(case14, frame, sigma=SIGMA)
    once = perturb_measurements(rows, [7, 3])
    again = perturb_measurements(rows, [7, 3])
    assert [m.value for m in once] == [m.value for m in again]
    other_key = perturb_measurements(rows, [7, 4])
    assert [m.value for m in once] != [m.value for m in other_key]

    # the same (type, bus) row sees the same noise regardless of list position
    shuffled = perturb_measurements(rows[::-1], [7, 3])
    assert [m.value for m in shuffled] == [m.value for m in once][::-1]
    # noise scales with the row's own standard deviation
    inflated = [Measurement(m.kind, m.bus, m.value, 4 * m.variance) for m in rows]
    noisy_inflated = perturb_measurements(inflated, [7, 3])
    for clean, a, b in zip(rows, once, noisy_inflated):
        assert b.value - clean.value == pytest.approx(2 * (a.value - clean.value), rel=1e-12)


def test_estimation_errors_arithmetic(case14, frame):
    est = wls_estimate(case14, build_measurement_set(case14, frame, sigma=SIGMA))
    shifted = type(est)(vm=est.vm + 0.01, va=est.va - 0.02,
                        iterations=est.iterations, converged=True, objective=0.0)
    evm, eva = estimation_errors(frame, shifted)
    assert evm == pytest.approx(0.01, abs=1e-6)
    assert eva == pytest.approx(0.02, abs=1e-6)


def test_placement_comparison_is_paired(case14, case14_frames):
    frames = case14_frames[:2]
    genome = np.zeros(case14.n, dtype=bool)
    genome[[3, 4, 5, 8]] = True

    same = psse_improvement(case14, frames, genome, reference=genome, trials=2)
    assert same["vm_improvement_pct"] == 0.0
    assert same["va_improvement_pct"] == 0.0

    against_baseline = psse_improvement(case14, frames, genome, trials=3)
    assert set(against_baseline) == {
        "vm_error_reference", "va_error_reference", "vm_error_placement",
        "va_error_placement", "vm_improvement_pct", "va_improvement_pct"}
    assert against_baseline["vm_improvement_pct"] > 0
    assert against_baseline["va_improvement_pct"] > 0

    with pytest.raises(ValueError, match="at least one frame"):
        psse_improvement(case14, [], genome)
