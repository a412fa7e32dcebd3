"""Marshalling between config/state dataclasses and the kernel's flat arrays."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..config import StationConfig, TestConfig, control_channel_index, resolve_setpoint_span
from ..control import AdaptiveState, ControlState
from ..plant import PlantState
from ..waveform import GeneratorState, PERIODIC_KINDS, NOISE_STREAM_SALT
from . import kernel as kn

_KIND_CODE = {
    "ramp": kn.K_RAMP,
    "hold": kn.K_HOLD,
    "sine": kn.K_SINE,
    "square": kn.K_SQUARE,
    "triangular": kn.K_TRIANGULAR,
    "tapered_sine": kn.K_TAPERED,
    "sweep_sine": kn.K_SWEEP,
    "random_sine": kn.K_RANDOM,
}
_ACT_CODE = {"dac_servo": kn.A_DAC, "pwm_dc": kn.A_PWM, "stepper": kn.A_STEPPER}
_QTY_CODE = {"force": 0, "displacement": 1, "strain": 2}
FAULT_KIND_NAMES = {
    kn.F_ESTOP: "estop",
    kn.F_LIMIT: "limit_exceeded",
    kn.F_BREAK: "specimen_break",
    kn.F_OVERRANGE: "sensor_overrange",
}
_MASK64 = (1 << 64) - 1


@dataclass
class PackedStation:
    """Flat kernel-side mirror of one station's config and mutable state."""

    CF: np.ndarray
    CI: np.ndarray
    SEGF: np.ndarray
    SEGI: np.ndarray
    SENF: np.ndarray
    SENI: np.ndarray
    LIMF: np.ndarray
    LIMI: np.ndarray
    SF: np.ndarray
    SI: np.ndarray
    RS: np.ndarray
    n_channels: int

    @property
    def records_per_log_tick(self) -> int:
        return self.n_channels + 2

    def log_capacity(self, n_ticks: int) -> int:
        decim = int(self.CI[kn.CI_LOG_DECIM])
        return ((n_ticks + decim - 1) // decim + 1) * self.records_per_log_tick


def pack_limits(station: StationConfig, test: TestConfig) -> tuple[np.ndarray, np.ndarray]:
    id_to_index = {ch.channel_id: i for i, ch in enumerate(station.sensor_channels)}
    n = len(test.limits)
    LIMF = np.zeros((max(n, 1), 2), np.float64)
    LIMI = np.zeros(max(n, 1), np.int64)
    for i, lim in enumerate(test.limits):
        LIMF[i, kn.LMF_MIN] = lim.min
        LIMF[i, kn.LMF_MAX] = lim.max
        LIMI[i] = id_to_index[lim.channel_id]
    return LIMF, LIMI


def pack_station(station: StationConfig, test: TestConfig, tick_rate_hz: int) -> PackedStation:
    CF = np.zeros(kn.CF_LEN, np.float64)
    CI = np.zeros(kn.CI_LEN, np.int64)
    CF[kn.CF_DT] = 1.0 / tick_rate_hz
    CF[kn.CF_TICK_RATE] = float(tick_rate_hz)
    CF[kn.CF_SPAN] = resolve_setpoint_span(station, test)
    CF[kn.CF_KP] = test.pid.kp
    CF[kn.CF_KI] = test.pid.ki
    CF[kn.CF_KD] = test.pid.kd
    CF[kn.CF_OUT_MIN] = test.pid.out_min
    CF[kn.CF_OUT_MAX] = test.pid.out_max
    CF[kn.CF_KFF_S] = test.feedforward.kff_s
    CF[kn.CF_KFF_V] = test.feedforward.kff_v
    if test.adaptive is not None:
        CF[kn.CF_GA] = test.adaptive.g_a
        CF[kn.CF_GM] = test.adaptive.g_m
        CF[kn.CF_ACLAMP] = test.adaptive.clamp
    CF[kn.CF_ACT_GAIN] = station.actuator.gain
    CF[kn.CF_ACT_TAU] = station.actuator.time_constant_tau
    CF[kn.CF_ACT_VLIM] = station.actuator.velocity_limit
    CF[kn.CF_MAX_STEP] = station.max_step_rate_hz
    CF[kn.CF_SPEC_K] = station.specimen.stiffness_k
    CF[kn.CF_SPEC_YIELD] = math.nan if station.specimen.yield_force is None else station.specimen.yield_force
    CF[kn.CF_SPEC_PLASTIC] = station.specimen.plastic_slope
    CF[kn.CF_SPEC_FRACTURE] = (
        math.nan
        if station.specimen.fracture_displacement is None
        else station.specimen.fracture_displacement
    )
    CF[kn.CF_GAUGE] = station.specimen.gauge_length_mm
    brk = test.end_conditions.break_detection
    CF[kn.CF_BREAK_DROP] = brk.drop_fraction if brk else 0.0
    CF[kn.CF_BREAK_MIN_PEAK] = brk.min_peak if brk else 0.0

    CI[kn.CI_CLOSED_LOOP] = 1 if test.control_mode == "closed_loop" else 0
    CI[kn.CI_CTRL_CH] = control_channel_index(station, test)
    CI[kn.CI_ADAPTIVE] = 1 if test.adaptive is not None else 0
    CI[kn.CI_ACT_KIND] = _ACT_CODE[station.actuator_kind]
    CI[kn.CI_DAC_BITS] = station.dac_bits
    CI[kn.CI_LOG_DECIM] = test.log_decimation
    ec = test.end_conditions
    CI[kn.CI_MAX_DURATION] = -1 if ec.max_duration_ticks is None else ec.max_duration_ticks
    CI[kn.CI_MAX_CYCLES] = -1 if ec.max_cycles is None else ec.max_cycles
    CI[kn.CI_BREAK_EN] = 1 if brk is not None else 0
    CI[kn.CI_N_CHANNELS] = len(station.sensor_channels)
    CI[kn.CI_N_LIMITS] = len(test.limits)
    break_ch = -1
    for i, ch in enumerate(station.sensor_channels):
        if ch.quantity == "force":
            break_ch = i
            break
    CI[kn.CI_BREAK_CH] = break_ch
    CI[kn.CI_N_SEGMENTS] = len(test.program)

    n_seg = len(test.program)
    SEGF = np.zeros((n_seg, kn.SGF_LEN), np.float64)
    SEGI = np.zeros((n_seg, kn.SGI_LEN), np.int64)
    for i, seg in enumerate(test.program):
        SEGF[i, kn.SGF_AMPLITUDE] = seg.amplitude
        SEGF[i, kn.SGF_MEAN] = seg.mean
        SEGF[i, kn.SGF_FREQUENCY] = seg.frequency_hz if seg.frequency_hz is not None else 0.0
        SEGF[i, kn.SGF_END_VALUE] = seg.end_value if seg.end_value is not None else 0.0
        SEGF[i, kn.SGF_F_START] = seg.f_start_hz if seg.f_start_hz is not None else 0.0
        SEGF[i, kn.SGF_F_END] = seg.f_end_hz if seg.f_end_hz is not None else 0.0
        SEGF[i, kn.SGF_AMP_MIN] = seg.amp_min if seg.amp_min is not None else 0.0
        SEGF[i, kn.SGF_AMP_MAX] = seg.amp_max if seg.amp_max is not None else 0.0
        SEGI[i, kn.SGI_KIND] = _KIND_CODE[seg.kind]
        SEGI[i, kn.SGI_DURATION] = -1 if seg.duration_ticks is None else seg.duration_ticks
        SEGI[i, kn.SGI_CYCLES] = -1 if seg.cycles is None else seg.cycles
        SEGI[i, kn.SGI_TAPER_IN] = seg.taper_cycles_in
        SEGI[i, kn.SGI_TAPER_OUT] = seg.taper_cycles_out
        SEGI[i, kn.SGI_SWEEP_LAW] = 0 if seg.sweep_law == "linear" else 1
        SEGI[i, kn.SGI_PERIODIC] = 1 if seg.kind in PERIODIC_KINDS else 0

    n_ch = len(station.sensor_channels)
    SENF = np.zeros((n_ch, kn.SNF_LEN), np.float64)
    SENI = np.zeros((n_ch, kn.SNI_LEN), np.int64)
    for i, ch in enumerate(station.sensor_channels):
        SENF[i, kn.SNF_FSR] = ch.fsr
        SENF[i, kn.SNF_SIGMA] = ch.noise_sigma
        SENF[i, kn.SNF_GAIN] = ch.calibration_gain
        SENF[i, kn.SNF_OFFSET] = ch.calibration_offset
        SENI[i, kn.SNI_QUANTITY] = _QTY_CODE[ch.quantity]
        SENI[i, kn.SNI_CHANNEL_ID] = ch.channel_id

    LIMF, LIMI = pack_limits(station, test)

    SF = np.zeros(kn.SF_LEN, np.float64)
    SI = np.zeros(kn.SI_LEN, np.int64)
    RS = np.zeros(2, np.uint64)
    reset_state(SF, SI, RS, test.rng_seed)
    return PackedStation(
        CF=CF, CI=CI, SEGF=SEGF, SEGI=SEGI, SENF=SENF, SENI=SENI,
        LIMF=LIMF, LIMI=LIMI, SF=SF, SI=SI, RS=RS, n_channels=n_ch,
    )


def reset_state(SF: np.ndarray, SI: np.ndarray, RS: np.ndarray, rng_seed: int) -> None:
    SF[:] = 0.0
    SF[kn.SF_CYC_MAX] = -math.inf
    SF[kn.SF_CYC_MIN] = math.inf
    SF[kn.SF_BREAK_PEAK] = -math.inf
    SI[:] = 0
    SI[kn.SI_INTACT] = 1
    SI[kn.SI_FAULT_KIND] = kn.F_NONE
    SI[kn.SI_FAULT_CH] = -1
    RS[kn.RS_NOISE] = np.uint64((rng_seed ^ NOISE_STREAM_SALT) & _MASK64)
    RS[kn.RS_GEN] = np.uint64(rng_seed & _MASK64)


def generator_state(p: PackedStation) -> GeneratorState:
    return GeneratorState(
        segment_index=int(p.SI[kn.SI_SEG]),
        tick_in_segment=int(p.SI[kn.SI_TICK_IN_SEG]),
        phase=float(p.SF[kn.SF_PHASE]),
        cycle_count=int(p.SI[kn.SI_CYC_IN_SEG]),
        entry_value=float(p.SF[kn.SF_ENTRY]),
        current_cycle_amplitude=float(p.SF[kn.SF_CYCAMP]),
        rng_state=int(p.RS[kn.RS_GEN]),
    )


def control_state(p: PackedStation) -> ControlState:
    return ControlState(
        integrator=float(p.SF[kn.SF_INTEG]),
        prev_pv=float(p.SF[kn.SF_PREV_PV]),
        prev_setpoint=float(p.SF[kn.SF_PREV_SP]),
        initialized=bool(p.SI[kn.SI_PID_INIT]),
    )


def adaptive_state(p: PackedStation) -> AdaptiveState:
    return AdaptiveState(
        amp_correction=float(p.SF[kn.SF_AMP_CORR]),
        mean_correction=float(p.SF[kn.SF_MEAN_CORR]),
        cycle_max=float(p.SF[kn.SF_CYC_MAX]),
        cycle_min=float(p.SF[kn.SF_CYC_MIN]),
    )


def plant_state(p: PackedStation) -> PlantState:
    return PlantState(
        position=float(p.SF[kn.SF_POS]),
        velocity=float(p.SF[kn.SF_VEL]),
        specimen_intact=bool(p.SI[kn.SI_INTACT]),
        peak_stress_seen=float(p.SF[kn.SF_PEAK_STRESS]),
    )


def warmup_kernel() -> None:
    """Compile the kernel on a tiny throwaway station (no-op when jit disabled)."""
    from ..config import SensorChannelConfig
    from ..waveform import WaveformSegment

    station = StationConfig(
        sensor_channels=(SensorChannelConfig(channel_id=0, quantity="force", fsr=10.0),)
    )
    test = TestConfig(
        control_mode="closed_loop",
        control_variable="force",
        program=(WaveformSegment(kind="sine", amplitude=1.0, mean=0.0, frequency_hz=100.0, cycles=1000),),
        log_decimation=1,
    )
    p = pack_station(station, test, 100000)
    cap = p.log_capacity(16)
    with np.errstate(over="ignore"):
        kn.advance(
            16, p.CF, p.CI, p.SEGF, p.SEGI, p.SENF, p.SENI, p.LIMF, p.LIMI,
            p.SF, p.SI, p.RS,
            np.zeros(cap, np.uint64), np.zeros(cap, np.uint8),
            np.zeros(cap, np.int32), np.zeros(cap, np.float64),
        )
