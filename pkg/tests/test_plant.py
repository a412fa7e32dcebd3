import math

import numpy as np
import pytest

from mtctl.plant import (
    ActuatorModel,
    PlantState,
    SpecimenModel,
    plant_step,
    read_sensor,
    sensor_true_value,
    specimen_force,
)

ACT = ActuatorModel(gain=10.0, time_constant_tau=0.05, velocity_limit=100.0)
ELASTIC = SpecimenModel(stiffness_k=100.0)


def test_zero_command_from_rest_is_equilibrium():
    state = PlantState()
    state2, force, disp = plant_step(state, ACT, ELASTIC, 0.0, 1e-5)
    assert state2.position == 0.0 and state2.velocity == 0.0
    assert force == 0.0 and disp == 0.0


def test_hookes_law():
    assert specimen_force(0.01, ELASTIC) == pytest.approx(1.0)
    assert specimen_force(0.0, ELASTIC) == 0.0
    assert specimen_force(-0.01, ELASTIC) == pytest.approx(-1.0)


def test_first_order_step_response_matches_analytic():
    # velocity(t) = gain*(1 - exp(-t/tau)) for a unit command step
    dt = 1e-5
    tau = ACT.time_constant_tau
    state = PlantState()
    n = int(5 * tau / dt)
    for _ in range(n):
        state, _, _ = plant_step(state, ACT, ELASTIC, 1.0, dt)
    analytic = 10.0 * (1.0 - math.exp(-5.0))
    assert abs(state.velocity - analytic) / analytic < 0.005


def test_velocity_limit_clamps():
    act = ActuatorModel(gain=1000.0, time_constant_tau=0.05, velocity_limit=20.0)
    state = PlantState()
    for _ in range(100000):
        state, _, _ = plant_step(state, act, ELASTIC, 1.0, 1e-5)
    assert state.velocity <= 20.0 + 1e-12


def test_specimen_piecewise_plasticity():
    model = SpecimenModel(stiffness_k=100.0, yield_force=5.0, plastic_slope=10.0)
    # x_yield = 0.05 mm; at 0.08 mm: 5 + 10*(0.08-0.05) = 5.3
    assert specimen_force(0.08, model) == pytest.approx(5.3, abs=1e-12)
    assert specimen_force(-0.08, model) == pytest.approx(-5.3, abs=1e-12)
    # continuity across the yield point (dense sweep oracle)
    xs = np.linspace(0.0, 0.1, 20001)
    fs = np.array([specimen_force(float(x), model) for x in xs])
    max_jump = np.abs(np.diff(fs)).max()
    assert max_jump < 100.0 * (xs[1] - xs[0]) * 1.01  # bounded by elastic slope


def test_fracture_latch_is_permanent():
    model = SpecimenModel(stiffness_k=100.0, fracture_displacement=0.5)
    act = ActuatorModel(gain=50.0, time_constant_tau=0.01, velocity_limit=1000.0)
    state = PlantState()
    broke_at = None
    for i in range(20000):
        state, force, disp = plant_step(state, act, model, 1.0, 1e-4)
        if not state.specimen_intact and broke_at is None:
            broke_at = i
            assert force == 0.0
    assert broke_at is not None
    # drive back toward zero: still no force
    for _ in range(20000):
        state, force, _ = plant_step(state, act, model, -1.0, 1e-4)
        assert force == 0.0
    assert not state.specimen_intact


def test_energy_sanity_no_oscillation():
    state = PlantState(velocity=5.0)
    prev = abs(state.velocity)
    for _ in range(1000):
        state, _, _ = plant_step(state, ACT, ELASTIC, 0.0, 1e-4)
        assert abs(state.velocity) <= prev + 1e-15
        prev = abs(state.velocity)


def test_peak_stress_tracking():
    state = PlantState()
    act = ActuatorModel(gain=10.0, time_constant_tau=0.01, velocity_limit=100.0)
    for _ in range(5000):
        state, _, _ = plant_step(state, act, ELASTIC, 1.0, 1e-4)
    peak = state.peak_stress_seen
    for _ in range(5000):
        state, _, _ = plant_step(state, act, ELASTIC, -1.0, 1e-4)
    assert state.peak_stress_seen >= peak


def test_read_sensor_quantization_only():
    raw, eng, rng = read_sensor(10.0, 0.0, 1.0, 0.0, 2.5, rng_state=123)
    assert rng == 123  # zero draws when noise is off
    assert abs(eng - 2.5) <= 10.0 / (2**31 - 1)
    raw0, eng0, _ = read_sensor(10.0, 0.0, 1.0, 0.0, 0.0, rng_state=5)
    assert raw0 == 0 and eng0 == 0.0


def test_read_sensor_calibration_transform():
    raw, eng, _ = read_sensor(10.0, 0.0, 2.0, 1.0, 2.5, rng_state=0)
    # scaled = 2.5*2 + 1 = 6; engineering inverts the transform
    assert abs(eng - 2.5) <= 10.0 / (2**31 - 1) / 2.0 + 1e-15


def test_read_sensor_noise_rms():
    fsr = 10.0
    sigma = 1e-5 * fsr
    rng = 2024
    errs = []
    for _ in range(10000):
        _, eng, rng = read_sensor(fsr, sigma, 1.0, 0.0, 3.3, rng)
        errs.append(eng - 3.3)
    rms = float(np.sqrt(np.mean(np.square(errs))))
    assert rms <= 1.2e-5 * fsr


def test_read_sensor_deterministic():
    a = read_sensor(10.0, 1e-3, 1.0, 0.0, 1.0, rng_state=42)
    b = read_sensor(10.0, 1e-3, 1.0, 0.0, 1.0, rng_state=42)
    assert a == b
    # exactly two draws consumed per noisy read
    from mtctl.waveform import rng_next

    _, s1 = rng_next(42)
    _, s2 = rng_next(s1)
    assert a[2] == s2


def test_sensor_true_value_quantities():
    model = SpecimenModel(gauge_length_mm=50.0)
    assert sensor_true_value("force", 7.0, 0.1, model) == 7.0
    assert sensor_true_value("displacement", 7.0, 0.1, model) == 0.1
    assert sensor_true_value("strain", 7.0, 0.1, model) == pytest.approx(0.2)
