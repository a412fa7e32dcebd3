"""Batched per-station tick pipeline, JIT-compiled with numba.

One call advances a single station up to n_ticks through the full pipeline:
acquire -> process variable -> safety -> waveform -> control (or open-loop
bypass) -> output encode -> plant -> decimated logging -> end conditions.
The arithmetic mirrors the pure module functions (waveform.next_point,
control.pid_step, plant.plant_step, iodrivers.*) expression for expression;
the test suite asserts bit-identical streams between the two, and between the
jitted and non-jitted builds of this same source.

Set MTCTL_NO_JIT=1 to run the uncompiled Python (identical results, ~100x
slower). Mixing int64 with uint64 promotes to float64 under numba, so all
RNG constants and shift counts are np.uint64.
"""

from __future__ import annotations

import math
import os

import numpy as np

TWO_PI = 2.0 * math.pi
INV_2_53 = 2.0**-53
ADC_FULL_F = 2147483647.0
NEG_INF = -math.inf
POS_INF = math.inf

# SplitMix64 constants (uint64-typed: see module docstring)
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)

# segment kinds
K_RAMP = 0
K_HOLD = 1
K_SINE = 2
K_SQUARE = 3
K_TRIANGULAR = 4
K_TAPERED = 5
K_SWEEP = 6
K_RANDOM = 7

# actuator kinds
A_DAC = 0
A_PWM = 1
A_STEPPER = 2

# fault kinds
F_NONE = -1
F_ESTOP = 0
F_LIMIT = 1
F_BREAK = 2
F_OVERRANGE = 3

# advance() exit status
X_RAN = 0
X_DONE = 1
X_FAULT = 2

# float config slots
CF_DT = 0
CF_SPAN = 1
CF_KP = 2
CF_KI = 3
CF_KD = 4
CF_OUT_MIN = 5
CF_OUT_MAX = 6
CF_KFF_S = 7
CF_KFF_V = 8
CF_GA = 9
CF_GM = 10
CF_ACLAMP = 11
CF_ACT_GAIN = 12
CF_ACT_TAU = 13
CF_ACT_VLIM = 14
CF_MAX_STEP = 15
CF_SPEC_K = 16
CF_SPEC_YIELD = 17  # nan = no yield
CF_SPEC_PLASTIC = 18
CF_SPEC_FRACTURE = 19  # nan = no fracture
CF_GAUGE = 20
CF_BREAK_DROP = 21
CF_BREAK_MIN_PEAK = 22
CF_TICK_RATE = 23
CF_LEN = 24

# int config slots
CI_CLOSED_LOOP = 0
CI_CTRL_CH = 1
CI_ADAPTIVE = 2
CI_ACT_KIND = 3
CI_DAC_BITS = 4
CI_LOG_DECIM = 5
CI_MAX_DURATION = 6  # -1 = none
CI_MAX_CYCLES = 7  # -1 = none
CI_BREAK_EN = 8
CI_N_CHANNELS = 9
CI_N_LIMITS = 10
CI_BREAK_CH = 11
CI_N_SEGMENTS = 12
CI_LEN = 13

# segment float columns
SGF_AMPLITUDE = 0
SGF_MEAN = 1
SGF_FREQUENCY = 2
SGF_END_VALUE = 3
SGF_F_START = 4
SGF_F_END = 5
SGF_AMP_MIN = 6
SGF_AMP_MAX = 7
SGF_LEN = 8

# segment int columns
SGI_KIND = 0
SGI_DURATION = 1  # -1 = none
SGI_CYCLES = 2  # -1 = none
SGI_TAPER_IN = 3
SGI_TAPER_OUT = 4
SGI_SWEEP_LAW = 5  # 0 linear, 1 logarithmic
SGI_PERIODIC = 6
SGI_LEN = 7

# sensor float columns: fsr, noise_sigma, calibration_gain, calibration_offset
SNF_FSR = 0
SNF_SIGMA = 1
SNF_GAIN = 2
SNF_OFFSET = 3
SNF_LEN = 4
# sensor int columns: quantity (0 force, 1 displacement, 2 strain), channel id
SNI_QUANTITY = 0
SNI_CHANNEL_ID = 1
SNI_LEN = 2

# limit columns
LMF_MIN = 0
LMF_MAX = 1

# station float state
SF_PHASE = 0
SF_ENTRY = 1
SF_CYCAMP = 2
SF_INTEG = 3
SF_PREV_PV = 4
SF_PREV_SP = 5
SF_AMP_CORR = 6
SF_MEAN_CORR = 7
SF_CYC_MAX = 8
SF_CYC_MIN = 9
SF_POS = 10
SF_VEL = 11
SF_PEAK_STRESS = 12
SF_LAST_OUT = 13
SF_BREAK_PEAK = 14
SF_PREV_POS = 15
SF_FAULT_VALUE = 16
SF_LAST_SP = 17
SF_LEN = 18

# station int state
SI_SEG = 0
SI_TICK_IN_SEG = 1
SI_CYC_IN_SEG = 2
SI_TOTAL_CYCLES = 3
SI_TICK = 4
SI_PID_INIT = 5
SI_INTACT = 6
SI_FAULT_KIND = 7
SI_FAULT_CH = 8
SI_FAULT_TICK = 9
SI_HOLDING = 10
SI_DIG_ESTOP = 11
SI_DIG_LIMIT = 12
SI_EMITTED = 13
SI_LEN = 14

# rng slots (uint64 array)
RS_NOISE = 0
RS_GEN = 1

JIT_ENABLED = not os.environ.get("MTCTL_NO_JIT")


def _jit(fn):
    if not JIT_ENABLED:
        return fn
    from numba import njit

    return njit(cache=True, nogil=True)(fn)


@_jit
def _clamp(x, lo, hi):
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


@_jit
def _rhaz(x):
    if x >= 0.0:
        return math.floor(x + 0.5)
    return math.ceil(x - 0.5)


@_jit
def _rng_u(state):
    state = state + _GAMMA
    z = state
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    z = z ^ (z >> _S31)
    return float(z >> _S11) * INV_2_53, state


@_jit
def _gauss(state):
    u1, state = _rng_u(state)
    u2, state = _rng_u(state)
    return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(TWO_PI * u2), state


@_jit
def _spec_force(pos, k, yld, plastic, intact):
    if intact == 0:
        return 0.0
    x = abs(pos)
    s = 1.0 if pos >= 0.0 else -1.0
    f = k * x
    if not math.isnan(yld) and f > yld:
        xy = yld / k
        f = yld + plastic * (x - xy)
    return s * f


@_jit
def _taper_env(cycle, total, tin, tout):
    if tin > 0 and cycle < tin:
        return (cycle + 1) / tin
    if tout > 0 and cycle >= total - tout:
        return (total - cycle) / tout
    return 1.0


def _advance_impl(
    n_ticks,
    CF,
    CI,
    SEGF,
    SEGI,
    SENF,
    SENI,
    LIMF,
    LIMI,
    SF,
    SI,
    RS,
    L_T,
    L_CH,
    L_RAW,
    L_ENG,
):
    dt = CF[CF_DT]
    fs = CF[CF_TICK_RATE]
    span = CF[CF_SPAN]
    n_ch = CI[CI_N_CHANNELS]
    n_lim = CI[CI_N_LIMITS]
    n_seg = CI[CI_N_SEGMENTS]
    closed = CI[CI_CLOSED_LOOP] == 1
    adaptive = CI[CI_ADAPTIVE] == 1
    ctrl = CI[CI_CTRL_CH]
    decim = CI[CI_LOG_DECIM]
    holding = SI[SI_HOLDING] == 1
    act_kind = CI[CI_ACT_KIND]
    dac_full = float((1 << (CI[CI_DAC_BITS] - 1)) - 1)
    spec_k = CF[CF_SPEC_K]
    spec_yld = CF[CF_SPEC_YIELD]
    spec_pl = CF[CF_SPEC_PLASTIC]
    spec_frac = CF[CF_SPEC_FRACTURE]
    break_en = CI[CI_BREAK_EN] == 1 and CI[CI_BREAK_CH] >= 0

    eng = np.empty(n_ch, np.float64)
    raw = np.empty(n_ch, np.int64)
    rng_noise = RS[RS_NOISE]
    rng_gen = RS[RS_GEN]
    ln = 0
    status = X_RAN
    ticks_done = 0

    for it in range(n_ticks):
        tick = SI[SI_TICK]
        pos = SF[SF_POS]
        intact = SI[SI_INTACT]

        # (1) acquire every configured sensor channel
        for c in range(n_ch):
            q = SENI[c, SNI_QUANTITY]
            if q == 0:
                truth = _spec_force(pos, spec_k, spec_yld, spec_pl, intact)
            elif q == 1:
                truth = pos
            else:
                truth = pos / CF[CF_GAUGE] * 100.0
            sigma = SENF[c, SNF_SIGMA]
            if sigma > 0.0:
                g, rng_noise = _gauss(rng_noise)
                noisy = truth + sigma * g
            else:
                noisy = truth
            gain = SENF[c, SNF_GAIN]
            offset = SENF[c, SNF_OFFSET]
            fsr = SENF[c, SNF_FSR]
            scaled = noisy * gain + offset
            code = int(_rhaz(_clamp(scaled, -fsr, fsr) / fsr * ADC_FULL_F))
            raw[c] = code
            dec = code / ADC_FULL_F * fsr
            eng[c] = (dec - offset) / gain

        # (2) process variable + per-cycle extrema
        if ctrl >= 0:
            pv = eng[ctrl]
            if pv > SF[SF_CYC_MAX]:
                SF[SF_CYC_MAX] = pv
            if pv < SF[SF_CYC_MIN]:
                SF[SF_CYC_MIN] = pv
        else:
            pv = 0.0

        # (3) safety interlocks; a trip forces zero output at this same tick
        fault = F_NONE
        fault_ch = -1
        fault_val = 0.0
        if SI[SI_DIG_ESTOP] == 1:
            fault = F_ESTOP
        if fault == F_NONE and SI[SI_DIG_LIMIT] == 1:
            fault = F_LIMIT
        if fault == F_NONE:
            for c in range(n_ch):
                if raw[c] >= 2147483647 or raw[c] <= -2147483647:
                    fault = F_OVERRANGE
                    fault_ch = SENI[c, SNI_CHANNEL_ID]
                    fault_val = eng[c]
                    break
        if fault == F_NONE:
            for li in range(n_lim):
                c = LIMI[li]
                v = eng[c]
                if v < LIMF[li, LMF_MIN] or v > LIMF[li, LMF_MAX]:
                    fault = F_LIMIT
                    fault_ch = SENI[c, SNI_CHANNEL_ID]
                    fault_val = v
                    break
        if fault == F_NONE and break_en:
            bc = CI[CI_BREAK_CH]
            f_now = eng[bc]
            if f_now > SF[SF_BREAK_PEAK]:
                SF[SF_BREAK_PEAK] = f_now
            peak = SF[SF_BREAK_PEAK]
            if (
                peak > CF[CF_BREAK_MIN_PEAK]
                and f_now < (1.0 - CF[CF_BREAK_DROP]) * peak
                and pos > SF[SF_PREV_POS]
            ):
                fault = F_BREAK
                fault_ch = SENI[bc, SNI_CHANNEL_ID]
                fault_val = f_now

        if fault != F_NONE:
            SF[SF_LAST_OUT] = 0.0
            if act_kind == A_DAC:
                z_raw = 0
                z_eng = 0.0
            elif act_kind == A_PWM:
                counts = int(_rhaz((0.0 + 1.0) / 2.0 * 65535.0))
                z_raw = counts
                z_eng = counts / 65535.0
            else:
                z_raw = 0
                z_eng = 0.0
            if tick % decim == 0:
                for c in range(n_ch):
                    L_T[ln] = tick
                    L_CH[ln] = SENI[c, SNI_CHANNEL_ID]
                    L_RAW[ln] = raw[c]
                    L_ENG[ln] = eng[c]
                    ln += 1
                L_T[ln] = tick
                L_CH[ln] = 254
                L_RAW[ln] = 0
                L_ENG[ln] = SF[SF_LAST_SP]
                ln += 1
                L_T[ln] = tick
                L_CH[ln] = 255
                L_RAW[ln] = z_raw
                L_ENG[ln] = z_eng
                ln += 1
                SI[SI_EMITTED] += n_ch + 2
            SI[SI_FAULT_KIND] = fault
            SI[SI_FAULT_CH] = fault_ch
            SI[SI_FAULT_TICK] = tick
            SF[SF_FAULT_VALUE] = fault_val
            SI[SI_TICK] = tick + 1
            status = X_FAULT
            ticks_done = it + 1
            break

        # (4) waveform point (frozen while holding)
        prog_done = False
        cycle_completed = False
        if holding:
            sp = SF[SF_LAST_SP]
        else:
            si_ = SI[SI_SEG]
            if si_ >= n_seg:
                sp = SF[SF_ENTRY]
                prog_done = True
            else:
                kind = SEGI[si_, SGI_KIND]
                k = SI[SI_TICK_IN_SEG]
                phase = SF[SF_PHASE]
                amp = SEGF[si_, SGF_AMPLITUDE]
                mean = SEGF[si_, SGF_MEAN]
                if kind == K_RAMP:
                    sp = SF[SF_ENTRY] + (SEGF[si_, SGF_END_VALUE] - SF[SF_ENTRY]) * (
                        k / SEGI[si_, SGI_DURATION]
                    )
                elif kind == K_HOLD:
                    sp = mean
                elif kind == K_SINE:
                    sp = (mean + SF[SF_MEAN_CORR]) + (amp + SF[SF_AMP_CORR]) * math.sin(phase)
                elif kind == K_SQUARE:
                    sp = mean + (amp if math.sin(phase) >= 0.0 else -amp)
                elif kind == K_TRIANGULAR:
                    sp = mean + amp * (2.0 / math.pi) * math.asin(math.sin(phase))
                elif kind == K_TAPERED:
                    env = _taper_env(
                        SI[SI_CYC_IN_SEG],
                        SEGI[si_, SGI_CYCLES],
                        SEGI[si_, SGI_TAPER_IN],
                        SEGI[si_, SGI_TAPER_OUT],
                    )
                    sp = mean + env * amp * math.sin(phase)
                elif kind == K_SWEEP:
                    sp = mean + amp * math.sin(phase)
                else:  # K_RANDOM
                    if k == 0:
                        u, rng_gen = _rng_u(rng_gen)
                        SF[SF_CYCAMP] = SEGF[si_, SGF_AMP_MIN] + u * (
                            SEGF[si_, SGF_AMP_MAX] - SEGF[si_, SGF_AMP_MIN]
                        )
                    sp = mean + SF[SF_CYCAMP] * math.sin(phase)

                # advance the generator by one tick
                k += 1
                if SEGI[si_, SGI_PERIODIC] == 1:
                    if kind == K_SWEEP:
                        t = (k - 1) / fs
                        T = SEGI[si_, SGI_DURATION] / fs
                        if SEGI[si_, SGI_SWEEP_LAW] == 0:
                            f = SEGF[si_, SGF_F_START] + (
                                SEGF[si_, SGF_F_END] - SEGF[si_, SGF_F_START]
                            ) * (t / T)
                        else:
                            kfac = (SEGF[si_, SGF_F_END] / SEGF[si_, SGF_F_START]) ** (1.0 / T)
                            f = SEGF[si_, SGF_F_START] * kfac**t
                    else:
                        f = SEGF[si_, SGF_FREQUENCY]
                    phase = phase + TWO_PI * f / fs
                    if phase >= TWO_PI:
                        phase -= TWO_PI
                        cycle_completed = True

                cc = SI[SI_CYC_IN_SEG]
                seg_done = False
                if cycle_completed:
                    cc += 1
                    if SEGI[si_, SGI_CYCLES] >= 0 and cc >= SEGI[si_, SGI_CYCLES]:
                        seg_done = True
                if SEGI[si_, SGI_DURATION] >= 0 and k >= SEGI[si_, SGI_DURATION]:
                    seg_done = True
                if seg_done:
                    nsi = si_ + 1
                    SF[SF_ENTRY] = sp
                    k = 0
                    cc = 0
                    if nsi >= n_seg:
                        prog_done = True
                    elif not (SEGI[si_, SGI_PERIODIC] == 1 and SEGI[nsi, SGI_PERIODIC] == 1):
                        phase = 0.0
                    SI[SI_SEG] = nsi
                elif cycle_completed and kind == K_RANDOM:
                    u, rng_gen = _rng_u(rng_gen)
                    SF[SF_CYCAMP] = SEGF[si_, SGF_AMP_MIN] + u * (
                        SEGF[si_, SGF_AMP_MAX] - SEGF[si_, SGF_AMP_MIN]
                    )
                SI[SI_TICK_IN_SEG] = k
                SI[SI_CYC_IN_SEG] = cc
                SF[SF_PHASE] = phase
            SF[SF_LAST_SP] = sp

            if cycle_completed:
                SI[SI_TOTAL_CYCLES] += 1
                if (
                    adaptive
                    and kind == K_SINE
                    and SF[SF_CYC_MAX] >= SF[SF_CYC_MIN]
                ):
                    a_meas = (SF[SF_CYC_MAX] - SF[SF_CYC_MIN]) / 2.0
                    m_meas = (SF[SF_CYC_MAX] + SF[SF_CYC_MIN]) / 2.0
                    SF[SF_AMP_CORR] = _clamp(
                        SF[SF_AMP_CORR] + CF[CF_GA] * (amp - a_meas),
                        -CF[CF_ACLAMP],
                        CF[CF_ACLAMP],
                    )
                    SF[SF_MEAN_CORR] = _clamp(
                        SF[SF_MEAN_CORR] + CF[CF_GM] * (mean - m_meas),
                        -CF[CF_ACLAMP],
                        CF[CF_ACLAMP],
                    )
                SF[SF_CYC_MAX] = NEG_INF
                SF[SF_CYC_MIN] = POS_INF
                SF[SF_BREAK_PEAK] = NEG_INF

        # (5) control law, or open-loop bypass (no control-state access at all)
        if holding:
            output = SF[SF_LAST_OUT]
        elif closed:
            e = sp - pv
            integ = _clamp(
                SF[SF_INTEG] + CF[CF_KI] * e * dt, CF[CF_OUT_MIN], CF[CF_OUT_MAX]
            )
            if SI[SI_PID_INIT] == 1:
                d = -CF[CF_KD] * (pv - SF[SF_PREV_PV]) / dt
                ff_v = CF[CF_KFF_V] * (sp - SF[SF_PREV_SP]) / dt
            else:
                d = 0.0
                ff_v = 0.0
            ff_term = CF[CF_KFF_S] * sp + ff_v
            output = _clamp(
                CF[CF_KP] * e + integ + d + ff_term, CF[CF_OUT_MIN], CF[CF_OUT_MAX]
            )
            SF[SF_INTEG] = integ
            SF[SF_PREV_PV] = pv
            SF[SF_PREV_SP] = sp
            SI[SI_PID_INIT] = 1
        else:
            output = _clamp(sp / span, CF[CF_OUT_MIN], CF[CF_OUT_MAX])
        SF[SF_LAST_OUT] = output

        # (6) encode for the configured driver; the plant sees the quantized command
        if act_kind == A_DAC:
            code = int(_rhaz(output * dac_full))
            cmd_raw = code
            u_plant = code / dac_full
            cmd_eng = u_plant
        elif act_kind == A_PWM:
            counts = int(_rhaz((output + 1.0) / 2.0 * 65535.0))
            duty = counts / 65535.0
            cmd_raw = counts
            u_plant = 2.0 * duty - 1.0
            cmd_eng = duty
        else:
            rate = output * CF[CF_MAX_STEP]
            cmd_raw = int(_rhaz(rate))
            u_plant = output
            cmd_eng = rate

        # (7) plant step (semi-implicit Euler, first-order velocity servo)
        v_target = _clamp(CF[CF_ACT_GAIN] * u_plant, -CF[CF_ACT_VLIM], CF[CF_ACT_VLIM])
        vel = SF[SF_VEL] + (v_target - SF[SF_VEL]) * (dt / CF[CF_ACT_TAU])
        new_pos = SF[SF_POS] + vel * dt
        if intact == 1 and not math.isnan(spec_frac) and abs(new_pos) >= spec_frac:
            SI[SI_INTACT] = 0
            intact = 0
        force = _spec_force(new_pos, spec_k, spec_yld, spec_pl, intact)
        if abs(force) > SF[SF_PEAK_STRESS]:
            SF[SF_PEAK_STRESS] = abs(force)
        SF[SF_PREV_POS] = SF[SF_POS]
        SF[SF_VEL] = vel
        SF[SF_POS] = new_pos

        # (8) decimated logging: sensors in config order, then setpoint, actuator
        if tick % decim == 0:
            for c in range(n_ch):
                L_T[ln] = tick
                L_CH[ln] = SENI[c, SNI_CHANNEL_ID]
                L_RAW[ln] = raw[c]
                L_ENG[ln] = eng[c]
                ln += 1
            L_T[ln] = tick
            L_CH[ln] = 254
            L_RAW[ln] = 0
            L_ENG[ln] = sp
            ln += 1
            L_T[ln] = tick
            L_CH[ln] = 255
            L_RAW[ln] = cmd_raw
            L_ENG[ln] = cmd_eng
            ln += 1
            SI[SI_EMITTED] += n_ch + 2

        # (9) end conditions
        SI[SI_TICK] = tick + 1
        if not holding and prog_done:
            status = X_DONE
            ticks_done = it + 1
            break
        md = CI[CI_MAX_DURATION]
        if md >= 0 and SI[SI_TICK] >= md:
            status = X_DONE
            ticks_done = it + 1
            break
        if not holding:
            mc = CI[CI_MAX_CYCLES]
            if mc >= 0 and SI[SI_TOTAL_CYCLES] >= mc:
                status = X_DONE
                ticks_done = it + 1
                break

    RS[RS_NOISE] = rng_noise
    RS[RS_GEN] = rng_gen
    if status == X_RAN:
        ticks_done = n_ticks
    return status, ticks_done, ln


advance = _jit(_advance_impl)
advance_py = _advance_impl


def warmup() -> None:
    """Force JIT compilation with a minimal throwaway station (used by bench/CLI)."""
    from . import packing  # local import to avoid a cycle

    packing.warmup_kernel()
