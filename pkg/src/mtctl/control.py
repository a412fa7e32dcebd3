"""Closed-loop control laws: PID with anti-windup, feed-forward, adaptive amplitude/mean.

All functions are pure state transitions; the engine owns one state per
station. The PID is positional with derivative-on-measurement (no derivative
kick on setpoint steps) and integrator clamping for anti-windup.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .iodrivers import clamp


class ControlError(ValueError):
    pass


@dataclass(frozen=True)
class PidGains:
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0
    out_min: float = -1.0
    out_max: float = 1.0


@dataclass(frozen=True)
class FfGains:
    """Static setpoint and setpoint-velocity feed-forward."""

    kff_s: float = 0.0
    kff_v: float = 0.0


@dataclass(frozen=True)
class ControlState:
    integrator: float = 0.0
    prev_pv: float = 0.0
    prev_setpoint: float = 0.0
    initialized: bool = False


@dataclass(frozen=True)
class AdaptiveConfig:
    """Per-cycle amplitude/mean correction gains and the correction clamp."""

    g_a: float = 0.0
    g_m: float = 0.0
    clamp: float = 0.0


@dataclass(frozen=True)
class AdaptiveState:
    amp_correction: float = 0.0
    mean_correction: float = 0.0
    cycle_max: float = -math.inf
    cycle_min: float = math.inf


def pid_step(
    gains: PidGains,
    ff: FfGains,
    setpoint: float,
    pv: float,
    state: ControlState,
    dt: float,
) -> tuple[float, ControlState]:
    """One controller tick.

    e = setpoint - pv; the integrator accumulates ki*e*dt and is clamped to the
    output range (anti-windup); derivative acts on the measurement, and both
    the derivative and the setpoint-velocity feed-forward are zero on the
    first call after (re)initialization.
    """
    if dt <= 0:
        raise ControlError("dt must be positive")
    e = setpoint - pv
    integ = clamp(state.integrator + gains.ki * e * dt, gains.out_min, gains.out_max)
    if state.initialized:
        d = -gains.kd * (pv - state.prev_pv) / dt
        ff_v = ff.kff_v * (setpoint - state.prev_setpoint) / dt
    else:
        d = 0.0
        ff_v = 0.0
    ff_term = ff.kff_s * setpoint + ff_v
    output = clamp(gains.kp * e + integ + d + ff_term, gains.out_min, gains.out_max)
    return output, ControlState(
        integrator=integ, prev_pv=pv, prev_setpoint=setpoint, initialized=True
    )


def bumpless_init(
    gains: PidGains, state: ControlState, current_output: float, current_pv: float
) -> ControlState:
    """Re-seed the controller so the next step reproduces current_output at zero error.

    Used on hold->resume and open->closed transitions: the integrator takes
    over the present output level and the derivative/velocity history is
    aligned with the present measurement.
    """
    return ControlState(
        integrator=clamp(current_output, gains.out_min, gains.out_max),
        prev_pv=current_pv,
        prev_setpoint=current_pv,
        initialized=True,
    )


def observe_cycle(state: AdaptiveState, pv: float) -> AdaptiveState:
    """Track the running PV extrema of the current cycle."""
    return AdaptiveState(
        amp_correction=state.amp_correction,
        mean_correction=state.mean_correction,
        cycle_max=pv if pv > state.cycle_max else state.cycle_max,
        cycle_min=pv if pv < state.cycle_min else state.cycle_min,
    )


def adaptive_update(
    target_amp: float,
    target_mean: float,
    state: AdaptiveState,
    gains: AdaptiveConfig,
) -> tuple[float, float, AdaptiveState]:
    """Per-cycle amplitude/mean correction from the cycle's PV extrema.

    A_meas = (max - min)/2, M_meas = (max + min)/2; the corrections integrate
    the amplitude/mean error with gains g_a/g_m and are clamped to
    +/-gains.clamp. The corrected command for the next cycle is
    target + correction. Converges for 0 < g_a*beta < 2 when the plant scales
    commanded amplitude by beta.
    """
    if state.cycle_max < state.cycle_min:
        raise ControlError("adaptive_update called before any PV was observed")
    a_meas = (state.cycle_max - state.cycle_min) / 2.0
    m_meas = (state.cycle_max + state.cycle_min) / 2.0
    amp = clamp(
        state.amp_correction + gains.g_a * (target_amp - a_meas), -gains.clamp, gains.clamp
    )
    mean = clamp(
        state.mean_correction + gains.g_m * (target_mean - m_meas), -gains.clamp, gains.clamp
    )
    new_state = AdaptiveState(amp_correction=amp, mean_correction=mean)
    return amp, mean, new_state
