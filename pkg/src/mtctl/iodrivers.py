"""Converter and driver models: 32-bit ADC, DAC, PWM duty and stepper rate encodings.

All encoders are stateless pure functions. The ADC uses a symmetric bipolar
scale +/-(2^31-1); code -2^31 is never produced so that negation symmetry
adc_encode(-v) == -adc_encode(v) holds exactly. Rounding is half-away-from-zero
everywhere because the codes appear verbatim in golden log files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ADC_FULL_SCALE = 2**31 - 1
PWM_STEPS = 65535
DEFAULT_DAC_BITS = 20
DEFAULT_MAX_STEP_RATE_HZ = 10000.0

ACTUATOR_KINDS = ("dac_servo", "pwm_dc", "stepper")


class EncodeError(ValueError):
    """Raised for non-finite inputs or unknown actuator kinds."""


def round_half_away(x: float) -> float:
    """Round to nearest integer, ties away from zero (not banker's rounding)."""
    if x >= 0.0:
        return math.floor(x + 0.5)
    return math.ceil(x - 0.5)


def clamp(x: float, lo: float, hi: float) -> float:
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


@dataclass(frozen=True)
class ActuatorCommand:
    """One encoded output sample for a specific actuator kind.

    ``raw`` is the integer form that lands in log records (DAC code, PWM
    counts, or step rate rounded to whole Hz); ``normalized`` is the
    quantized command the plant actually sees, back on the [-1, 1] scale
    (stepper rates are not quantized, so there it equals the input).
    """

    kind: str
    raw: int
    normalized: float
    dac_code: int | None = None
    pwm_duty: float | None = None
    step_rate_hz: float | None = None


def adc_encode(value: float, fsr: float) -> int:
    """Quantize an engineering value onto the signed 32-bit ADC scale.

    raw = round_half_away(clamp(value, -fsr, +fsr) / fsr * (2^31 - 1))
    """
    if not math.isfinite(value):
        raise EncodeError(f"cannot encode non-finite value {value!r}")
    if fsr <= 0:
        raise EncodeError("fsr must be positive")
    x = clamp(value, -fsr, fsr) / fsr * 2147483647.0
    return int(round_half_away(x))


def adc_decode(raw: int, fsr: float) -> float:
    """Inverse of adc_encode up to one code: value = raw/(2^31-1) * fsr."""
    return raw / 2147483647.0 * fsr


def adc_encode_array(values: np.ndarray, fsr: float) -> np.ndarray:
    """Vectorized adc_encode for bulk sweeps; same formula, same rounding."""
    if not np.all(np.isfinite(values)):
        raise EncodeError("cannot encode non-finite values")
    if fsr <= 0:
        raise EncodeError("fsr must be positive")
    x = np.clip(values, -fsr, fsr) / fsr * 2147483647.0
    return np.copysign(np.floor(np.abs(x) + 0.5), x).astype(np.int64)


def adc_decode_array(raw: np.ndarray, fsr: float) -> np.ndarray:
    return raw / 2147483647.0 * fsr


def encode_output(
    control_output: float,
    actuator_kind: str,
    dac_bits: int = DEFAULT_DAC_BITS,
    max_step_rate_hz: float = DEFAULT_MAX_STEP_RATE_HZ,
) -> ActuatorCommand:
    """Encode a normalized control output u in [-1, 1] for the configured driver.

    dac_servo: code = round_half_away(u * (2^(N-1) - 1))
    pwm_dc:    duty = round_half_away((u + 1)/2 * 65535) / 65535
    stepper:   signed step rate u * max_step_rate_hz (sign = direction)
    """
    u = control_output
    if not math.isfinite(u):
        raise EncodeError(f"cannot encode non-finite command {u!r}")
    if actuator_kind == "dac_servo":
        full = float(2 ** (dac_bits - 1) - 1)
        code = int(round_half_away(u * full))
        return ActuatorCommand(
            kind=actuator_kind, raw=code, normalized=code / full, dac_code=code
        )
    if actuator_kind == "pwm_dc":
        counts = int(round_half_away((u + 1.0) / 2.0 * 65535.0))
        duty = counts / 65535.0
        return ActuatorCommand(
            kind=actuator_kind, raw=counts, normalized=2.0 * duty - 1.0, pwm_duty=duty
        )
    if actuator_kind == "stepper":
        rate = u * max_step_rate_hz
        return ActuatorCommand(
            kind=actuator_kind,
            raw=int(round_half_away(rate)),
            normalized=u,
            step_rate_hz=rate,
        )
    raise EncodeError(f"unknown actuator kind {actuator_kind!r}")
