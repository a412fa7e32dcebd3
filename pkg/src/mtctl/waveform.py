"""Point-by-point setpoint profile generator (DDS-style phase accumulation).

Each tick the generator renders the setpoint for the current phase/segment
state, then advances by 2*pi*f/tick_rate. The phase accumulator wraps by
subtracting 2*pi (never by float modulo of a growing argument), which keeps
accumulated phase error under 1e-6 rad across 1e7 ticks. All state is double
precision; the whole profile stream is a deterministic function of
(program, seed).

Amplitude draws for random_sine come from SplitMix64 so profiles are
bit-identical across implementations and platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi

SEGMENT_KINDS = (
    "ramp",
    "hold",
    "sine",
    "square",
    "triangular",
    "tapered_sine",
    "sweep_sine",
    "random_sine",
)
PERIODIC_KINDS = frozenset(
    ("sine", "square", "triangular", "tapered_sine", "sweep_sine", "random_sine")
)
SWEEP_LAWS = ("linear", "logarithmic")

# Adaptive amplitude/mean corrections apply only to plain sine segments:
# tapered/random amplitudes are intentionally modulated, sweeps change cycle rate.
ADAPTIVE_KINDS = frozenset(("sine",))

_MASK64 = (1 << 64) - 1
_SM64_GAMMA = 0x9E3779B97F4A7C15
_SM64_MIX1 = 0xBF58476D1CE4E5B9
_SM64_MIX2 = 0x94D049BB133111EB
# Salt for deriving the per-station sensor-noise stream from the test seed so
# generator draws and noise draws never share a stream.
NOISE_STREAM_SALT = 0x5DEECE66DA3E39CB


class WaveformError(ValueError):
    """Raised for inconsistent generator inputs (empty program, bad tick rate)."""


def rng_next_raw(state: int) -> tuple[int, int]:
    """One SplitMix64 step: returns (64-bit output, new state)."""
    state = (state + _SM64_GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * _SM64_MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _SM64_MIX2) & _MASK64
    z = z ^ (z >> 31)
    return z, state


def rng_next(state: int) -> tuple[float, int]:
    """Uniform double in [0, 1) from the top 53 bits of a SplitMix64 output."""
    z, state = rng_next_raw(state)
    return (z >> 11) * 2.0**-53, state


def gaussian(state: int) -> tuple[float, int]:
    """Standard normal via single-branch Box-Muller.

    Consumes exactly two uniforms: g = sqrt(-2 ln(1-u1)) * cos(2 pi u2).
    1-u1 is in (0, 1], so the log never sees zero.
    """
    u1, state = rng_next(state)
    u2, state = rng_next(state)
    return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(TWO_PI * u2), state


@dataclass(frozen=True)
class WaveformSegment:
    """One piece of the commanded profile. Only the fields for its kind are set.

    ramp:         end_value, duration_ticks
    hold:         mean (the held level), duration_ticks
    sine/square/triangular: amplitude, mean, frequency_hz, cycles XOR duration_ticks
    tapered_sine: amplitude, mean, frequency_hz, cycles, taper_cycles_in/out
    sweep_sine:   amplitude, mean, f_start_hz, f_end_hz, sweep_law, duration_ticks
    random_sine:  amp_min, amp_max, mean, frequency_hz, cycles XOR duration_ticks
    """

    kind: str
    amplitude: float = 0.0
    mean: float = 0.0
    frequency_hz: float | None = None
    end_value: float | None = None
    duration_ticks: int | None = None
    cycles: int | None = None
    taper_cycles_in: int = 0
    taper_cycles_out: int = 0
    f_start_hz: float | None = None
    f_end_hz: float | None = None
    sweep_law: str = "linear"
    amp_min: float | None = None
    amp_max: float | None = None


@dataclass(frozen=True)
class GeneratorState:
    """Phase/cycle accumulator; one per station, never shared."""

    segment_index: int = 0
    tick_in_segment: int = 0
    phase: float = 0.0
    cycle_count: int = 0
    entry_value: float = 0.0
    current_cycle_amplitude: float = 0.0
    rng_state: int = 0


def initial_state(rng_seed: int = 0) -> GeneratorState:
    return GeneratorState(rng_state=rng_seed & _MASK64)


def taper_envelope(cycle: int, total_cycles: int, taper_in: int, taper_out: int) -> float:
    """Linear per-cycle amplitude envelope; cycle is 0-based."""
    if taper_in > 0 and cycle < taper_in:
        return (cycle + 1) / taper_in
    if taper_out > 0 and cycle >= total_cycles - taper_out:
        return (total_cycles - cycle) / taper_out
    return 1.0


def segment_errors(seg: WaveformSegment, path: str = "segment") -> list[str]:
    """Per-kind field validation; every violation carries the field path."""
    errs: list[str] = []

    def bad(field: str, msg: str) -> None:
        errs.append(f"{path}.{field}: {msg}")

    if seg.kind not in SEGMENT_KINDS:
        bad("kind", f"unknown kind {seg.kind!r}")
        return errs

    def require_duration() -> None:
        if seg.duration_ticks is None:
            bad("duration_ticks", "required for this kind")
        elif seg.duration_ticks < 1:
            bad("duration_ticks", "must be >= 1")

    def require_period_length(cycles_only: bool = False) -> None:
        if cycles_only:
            if seg.cycles is None:
                bad("cycles", "required for this kind")
        elif (seg.cycles is None) == (seg.duration_ticks is None):
            bad("cycles", "exactly one of cycles or duration_ticks must be set")
        if seg.cycles is not None and seg.cycles < 1:
            bad("cycles", "must be >= 1")
        if seg.duration_ticks is not None and seg.duration_ticks < 1:
            bad("duration_ticks", "must be >= 1")

    def require_frequency() -> None:
        if seg.frequency_hz is None:
            bad("frequency_hz", "required for this kind")
        elif not seg.frequency_hz > 0:
            bad("frequency_hz", "must be positive")

    if seg.kind == "ramp":
        if seg.end_value is None:
            bad("end_value", "required for ramp")
        require_duration()
    elif seg.kind == "hold":
        require_duration()
    elif seg.kind in ("sine", "square", "triangular"):
        require_frequency()
        require_period_length()
    elif seg.kind == "tapered_sine":
        require_frequency()
        require_period_length(cycles_only=True)
        if seg.taper_cycles_in < 0 or seg.taper_cycles_out < 0:
            bad("taper_cycles_in", "taper cycle counts must be >= 0")
        if seg.cycles is not None and seg.taper_cycles_in + seg.taper_cycles_out > seg.cycles:
            bad("cycles", "must cover taper_cycles_in + taper_cycles_out")
    elif seg.kind == "sweep_sine":
        if seg.f_start_hz is None or not seg.f_start_hz > 0:
            bad("f_start_hz", "must be positive")
        if seg.f_end_hz is None or not seg.f_end_hz > 0:
            bad("f_end_hz", "must be positive")
        if seg.sweep_law not in SWEEP_LAWS:
            bad("sweep_law", f"must be one of {SWEEP_LAWS}")
        require_duration()
    elif seg.kind == "random_sine":
        require_frequency()
        require_period_length()
        if seg.amp_min is None or seg.amp_max is None:
            bad("amp_min", "amp_min and amp_max required for random_sine")
        elif seg.amp_min > seg.amp_max:
            bad("amp_min", "must be <= amp_max")
    for name in ("amplitude", "mean"):
        v = getattr(seg, name)
        if not math.isfinite(v):
            bad(name, "must be finite")
    return errs


def _sweep_frequency(seg: WaveformSegment, t: float, tick_rate_hz: float) -> float:
    T = seg.duration_ticks / tick_rate_hz
    if seg.sweep_law == "linear":
        return seg.f_start_hz + (seg.f_end_hz - seg.f_start_hz) * (t / T)
    k = (seg.f_end_hz / seg.f_start_hz) ** (1.0 / T)
    return seg.f_start_hz * k**t


def next_point(
    program: list[WaveformSegment],
    state: GeneratorState,
    tick_rate_hz: float,
    amp_correction: float = 0.0,
    mean_correction: float = 0.0,
) -> tuple[float, GeneratorState, bool, bool]:
    """Render the setpoint for the current tick, then advance one tick.

    Returns (setpoint, new_state, program_done, cycle_completed).
    cycle_completed is raised on the tick whose advance wraps the phase; the
    adaptive corrections, when nonzero, shift the amplitude/mean of sine
    segments only (see ADAPTIVE_KINDS).
    """
    if not program:
        raise WaveformError("no program")
    if tick_rate_hz <= 0:
        raise WaveformError("tick_rate_hz must be positive")
    si = state.segment_index
    if si >= len(program):
        return state.entry_value, state, True, False

    seg = program[si]
    kind = seg.kind
    k = state.tick_in_segment
    phase = state.phase
    rng = state.rng_state
    cyc_amp = state.current_cycle_amplitude
    fs = float(tick_rate_hz)

    # render the current tick
    if kind == "ramp":
        sp = state.entry_value + (seg.end_value - state.entry_value) * (k / seg.duration_ticks)
    elif kind == "hold":
        sp = seg.mean
    elif kind == "sine":
        sp = (seg.mean + mean_correction) + (seg.amplitude + amp_correction) * math.sin(phase)
    elif kind == "square":
        sp = seg.mean + (seg.amplitude if math.sin(phase) >= 0.0 else -seg.amplitude)
    elif kind == "triangular":
        sp = seg.mean + seg.amplitude * (2.0 / math.pi) * math.asin(math.sin(phase))
    elif kind == "tapered_sine":
        env = taper_envelope(state.cycle_count, seg.cycles, seg.taper_cycles_in, seg.taper_cycles_out)
        sp = seg.mean + env * seg.amplitude * math.sin(phase)
    elif kind == "sweep_sine":
        sp = seg.mean + seg.amplitude * math.sin(phase)
    elif kind == "random_sine":
        if k == 0:
            u, rng = rng_next(rng)
            cyc_amp = seg.amp_min + u * (seg.amp_max - seg.amp_min)
        sp = seg.mean + cyc_amp * math.sin(phase)
    else:  # pragma: no cover - segment_errors rejects unknown kinds
        raise WaveformError(f"unknown segment kind {kind!r}")

    # advance one tick
    k += 1
    cycle_completed = False
    if kind in PERIODIC_KINDS:
        if kind == "sweep_sine":
            f = _sweep_frequency(seg, (k - 1) / fs, fs)
        else:
            f = seg.frequency_hz
        phase = phase + TWO_PI * f / fs
        if phase >= TWO_PI:
            phase -= TWO_PI
            cycle_completed = True

    cc = state.cycle_count
    seg_done = False
    if cycle_completed:
        cc += 1
        if seg.cycles is not None and cc >= seg.cycles:
            seg_done = True
    if seg.duration_ticks is not None and k >= seg.duration_ticks:
        seg_done = True

    entry = state.entry_value
    program_done = False
    if seg_done:
        si += 1
        entry = sp
        k = 0
        cc = 0
        if si >= len(program):
            program_done = True
        elif not (kind in PERIODIC_KINDS and program[si].kind in PERIODIC_KINDS):
            phase = 0.0
    elif cycle_completed and kind == "random_sine":
        u, rng = rng_next(rng)
        cyc_amp = seg.amp_min + u * (seg.amp_max - seg.amp_min)

    new_state = GeneratorState(
        segment_index=si,
        tick_in_segment=k,
        phase=phase,
        cycle_count=cc,
        entry_value=entry,
        current_cycle_amplitude=cyc_amp,
        rng_state=rng,
    )
    return sp, new_state, program_done, cycle_completed


def render(
    program: list[WaveformSegment],
    ticks: int,
    tick_rate_hz: float,
    rng_seed: int = 0,
) -> list[float]:
    """Convenience: render up to `ticks` setpoints (stops early if program ends)."""
    state = initial_state(rng_seed)
    out: list[float] = []
    for _ in range(ticks):
        sp, state, done, _ = next_point(program, state, tick_rate_hz)
        out.append(sp)
        if done:
            break
    return out
