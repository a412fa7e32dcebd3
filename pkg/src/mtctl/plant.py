"""Simulated materials-testing machine: actuator dynamics, specimen, sensor readout.

The actuator is a first-order velocity-mode servo (target velocity gain*u with
time constant tau), integrated with semi-implicit Euler at the controller tick
rate. The specimen is piecewise elastic/plastic with an optional fracture
latch. A full second-order rig model is deliberately out of scope; this one is
analytically checkable and exercises PID and adaptive control.
"""

from __future__ import annotations

from dataclasses import dataclass

from .iodrivers import adc_decode, adc_encode, clamp
from .waveform import gaussian


class PlantError(ValueError):
    pass


@dataclass(frozen=True)
class ActuatorModel:
    """Velocity-mode servo: u in [-1,1] commands gain*u mm/s with lag tau."""

    gain: float = 10.0
    time_constant_tau: float = 0.05
    velocity_limit: float = 100.0


@dataclass(frozen=True)
class SpecimenModel:
    """Elastic / plastic / fracture force law, symmetric in extension sign.

    gauge_length_mm only matters for strain channels (strain % = 100*x/L0).
    """

    stiffness_k: float = 100.0
    yield_force: float | None = None
    plastic_slope: float = 0.0
    fracture_displacement: float | None = None
    gauge_length_mm: float = 50.0


@dataclass(frozen=True)
class PlantState:
    position: float = 0.0
    velocity: float = 0.0
    specimen_intact: bool = True
    peak_stress_seen: float = 0.0


def specimen_force(position: float, model: SpecimenModel, intact: bool = True) -> float:
    """Force in kN at the given displacement; zero after fracture."""
    if not intact:
        return 0.0
    x = abs(position)
    s = 1.0 if position >= 0.0 else -1.0
    f = model.stiffness_k * x
    if model.yield_force is not None and f > model.yield_force:
        x_yield = model.yield_force / model.stiffness_k
        f = model.yield_force + model.plastic_slope * (x - x_yield)
    return s * f


def plant_step(
    state: PlantState,
    actuator: ActuatorModel,
    specimen: SpecimenModel,
    command: float,
    dt: float,
) -> tuple[PlantState, float, float]:
    """Advance the machine one tick under normalized command u.

    Returns (new_state, force_kN, displacement_mm). dt must satisfy the
    configuration-time stability guard dt <= tau/5.
    """
    if dt <= 0:
        raise PlantError("dt must be positive")
    v_target = clamp(actuator.gain * command, -actuator.velocity_limit, actuator.velocity_limit)
    velocity = state.velocity + (v_target - state.velocity) * (dt / actuator.time_constant_tau)
    position = state.position + velocity * dt
    intact = state.specimen_intact
    if (
        intact
        and specimen.fracture_displacement is not None
        and abs(position) >= specimen.fracture_displacement
    ):
        intact = False
    force = specimen_force(position, specimen, intact)
    peak = state.peak_stress_seen
    if abs(force) > peak:
        peak = abs(force)
    new_state = PlantState(
        position=position, velocity=velocity, specimen_intact=intact, peak_stress_seen=peak
    )
    return new_state, force, position


def read_sensor(
    fsr: float,
    noise_sigma: float,
    calibration_gain: float,
    calibration_offset: float,
    true_value: float,
    rng_state: int,
) -> tuple[int, float, int]:
    """One noisy quantized reading: returns (raw code, engineering value, rng_state').

    noisy = true + sigma*g with g from the documented Box-Muller construction
    (two SplitMix64 doubles per read; zero draws when sigma == 0), then
    raw = adc_encode(noisy*gain + offset, fsr) and
    engineering = (adc_decode(raw) - offset)/gain.
    """
    if noise_sigma > 0.0:
        g, rng_state = gaussian(rng_state)
        noisy = true_value + noise_sigma * g
    else:
        noisy = true_value
    raw = adc_encode(noisy * calibration_gain + calibration_offset, fsr)
    engineering = (adc_decode(raw, fsr) - calibration_offset) / calibration_gain
    return raw, engineering, rng_state


def sensor_true_value(quantity: str, force: float, position: float, specimen: SpecimenModel) -> float:
    """Physical value a channel of the given quantity observes."""
    if quantity == "force":
        return force
    if quantity == "displacement":
        return position
    if quantity == "strain":
        return position / specimen.gauge_length_mm * 100.0
    raise PlantError(f"unknown quantity {quantity!r}")
