"""Machine and test configuration: types, JSON document load/render, validation.

The configuration format is a single JSON document with a `machine` section
and one `tests[i]` entry per station. Field names mirror the dataclasses
(snake_case); unknown fields are validation errors so typos cannot silently
disable a limit. Defaults (tick_rate_hz=100000, log_decimation=100,
rng_seed=0) are applied here so the engine never sees a partially-specified
config. validate() is pure and returns every violation with a path string.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from typing import Any, Sequence

from .control import AdaptiveConfig, FfGains, PidGains
from .plant import ActuatorModel, SpecimenModel
from .waveform import WaveformSegment, segment_errors

DEFAULT_TICK_RATE_HZ = 100000
DEFAULT_LOG_DECIMATION = 100
MAX_STATIONS = 16
QUANTITIES = ("force", "displacement", "strain")
DIGITAL_ROLES = ("estop", "limit_switch", "generic")
CONTROL_MODES = ("open_loop", "closed_loop")
ACTUATOR_KINDS = ("dac_servo", "pwm_dc", "stepper")
DAC_BITS_CHOICES = (16, 18, 20)
# channel ids 254/255 are reserved for the setpoint / actuator pseudo-channels
MAX_CHANNEL_ID = 253


class ConfigError(ValueError):
    """Parse or validation failure; .violations carries the full list."""

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = violations or []


@dataclass(frozen=True)
class SensorChannelConfig:
    channel_id: int
    quantity: str
    fsr: float
    noise_sigma: float = 0.0
    calibration_gain: float = 1.0
    calibration_offset: float = 0.0


@dataclass(frozen=True)
class DigitalInputConfig:
    role: str
    name: str = ""


@dataclass(frozen=True)
class StationConfig:
    """Per-station wiring: actuator kind+dynamics, specimen, sensors, digital IO."""

    actuator_kind: str = "dac_servo"
    dac_bits: int = 20
    max_step_rate_hz: float = 10000.0
    actuator: ActuatorModel = field(default_factory=ActuatorModel)
    specimen: SpecimenModel = field(default_factory=SpecimenModel)
    sensor_channels: tuple[SensorChannelConfig, ...] = ()
    digital_inputs: tuple[DigitalInputConfig, ...] = ()


@dataclass(frozen=True)
class MachineConfig:
    tick_rate_hz: int = DEFAULT_TICK_RATE_HZ
    stations: tuple[StationConfig, ...] = ()

    @property
    def station_count(self) -> int:
        return len(self.stations)


@dataclass(frozen=True)
class BreakConfig:
    """Specimen-break detector: force drop from the running cycle peak."""

    drop_fraction: float = 0.5
    min_peak: float = 0.0


@dataclass(frozen=True)
class EndConditions:
    max_duration_ticks: int | None = None
    max_cycles: int | None = None
    break_detection: BreakConfig | None = None


@dataclass(frozen=True)
class ChannelLimit:
    channel_id: int
    min: float
    max: float


@dataclass(frozen=True)
class TestConfig:
    control_mode: str = "open_loop"
    control_variable: str | None = None
    pid: PidGains = field(default_factory=PidGains)
    feedforward: FfGains = field(default_factory=FfGains)
    adaptive: AdaptiveConfig | None = None
    program: tuple[WaveformSegment, ...] = ()
    log_decimation: int = DEFAULT_LOG_DECIMATION
    end_conditions: EndConditions = field(default_factory=EndConditions)
    limits: tuple[ChannelLimit, ...] = ()
    rng_seed: int = 0
    # engineering units mapping to |u| = 1 in open loop; None = control channel FSR
    setpoint_span: float | None = None


# ---------------------------------------------------------------------------
# parsing


def _check_keys(obj: dict, allowed: Sequence[str], path: str, violations: list[str]) -> None:
    for key in obj:
        if key not in allowed:
            violations.append(f"{path}.{key}: unknown field")


def _req(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise ConfigError(f"{path}.{key}: missing required field")
    return obj[key]


def _num(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def _str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{path}: expected a string, got {value!r}")
    return value


def _obj(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected an object, got {value!r}")
    return value


def _arr(value: Any, path: str) -> list:
    if not isinstance(value, list):
        raise ConfigError(f"{path}: expected an array, got {value!r}")
    return value


def _parse_segment(obj: dict, path: str, violations: list[str]) -> WaveformSegment:
    allowed = [f.name for f in fields(WaveformSegment)]
    _check_keys(_obj(obj, path), allowed, path, violations)
    kw: dict[str, Any] = {"kind": _str(_req(obj, "kind", path), f"{path}.kind")}
    for name in ("amplitude", "mean"):
        if name in obj:
            kw[name] = _num(obj[name], f"{path}.{name}")
    for name in ("frequency_hz", "end_value", "f_start_hz", "f_end_hz", "amp_min", "amp_max"):
        if name in obj and obj[name] is not None:
            kw[name] = _num(obj[name], f"{path}.{name}")
    for name in ("duration_ticks", "cycles"):
        if name in obj and obj[name] is not None:
            kw[name] = _int(obj[name], f"{path}.{name}")
    for name in ("taper_cycles_in", "taper_cycles_out"):
        if name in obj:
            kw[name] = _int(obj[name], f"{path}.{name}")
    if "sweep_law" in obj:
        kw["sweep_law"] = _str(obj["sweep_law"], f"{path}.sweep_law")
    return WaveformSegment(**kw)


def _parse_channel(obj: dict, path: str, violations: list[str]) -> SensorChannelConfig:
    allowed = [f.name for f in fields(SensorChannelConfig)]
    _check_keys(_obj(obj, path), allowed, path, violations)
    return SensorChannelConfig(
        channel_id=_int(_req(obj, "channel_id", path), f"{path}.channel_id"),
        quantity=_str(_req(obj, "quantity", path), f"{path}.quantity"),
        fsr=_num(_req(obj, "fsr", path), f"{path}.fsr"),
        noise_sigma=_num(obj.get("noise_sigma", 0.0), f"{path}.noise_sigma"),
        calibration_gain=_num(obj.get("calibration_gain", 1.0), f"{path}.calibration_gain"),
        calibration_offset=_num(obj.get("calibration_offset", 0.0), f"{path}.calibration_offset"),
    )


def _parse_station(obj: dict, path: str, violations: list[str]) -> StationConfig:
    allowed = [f.name for f in fields(StationConfig)]
    _check_keys(_obj(obj, path), allowed, path, violations)
    act = _obj(obj.get("actuator", {}), f"{path}.actuator")
    _check_keys(act, [f.name for f in fields(ActuatorModel)], f"{path}.actuator", violations)
    spec = _obj(obj.get("specimen", {}), f"{path}.specimen")
    _check_keys(spec, [f.name for f in fields(SpecimenModel)], f"{path}.specimen", violations)
    channels = tuple(
        _parse_channel(ch, f"{path}.sensor_channels[{i}]", violations)
        for i, ch in enumerate(_arr(_req(obj, "sensor_channels", path), f"{path}.sensor_channels"))
    )
    digitals = []
    for i, d in enumerate(_arr(obj.get("digital_inputs", []), f"{path}.digital_inputs")):
        dpath = f"{path}.digital_inputs[{i}]"
        _check_keys(_obj(d, dpath), ["role", "name"], dpath, violations)
        digitals.append(
            DigitalInputConfig(
                role=_str(_req(d, "role", dpath), f"{dpath}.role"),
                name=_str(d.get("name", ""), f"{dpath}.name"),
            )
        )
    yield_force = spec.get("yield_force")
    fracture = spec.get("fracture_displacement")
    return StationConfig(
        actuator_kind=_str(obj.get("actuator_kind", "dac_servo"), f"{path}.actuator_kind"),
        dac_bits=_int(obj.get("dac_bits", 20), f"{path}.dac_bits"),
        max_step_rate_hz=_num(obj.get("max_step_rate_hz", 10000.0), f"{path}.max_step_rate_hz"),
        actuator=ActuatorModel(
            gain=_num(act.get("gain", 10.0), f"{path}.actuator.gain"),
            time_constant_tau=_num(act.get("time_constant_tau", 0.05), f"{path}.actuator.time_constant_tau"),
            velocity_limit=_num(act.get("velocity_limit", 100.0), f"{path}.actuator.velocity_limit"),
        ),
        specimen=SpecimenModel(
            stiffness_k=_num(spec.get("stiffness_k", 100.0), f"{path}.specimen.stiffness_k"),
            yield_force=None if yield_force is None else _num(yield_force, f"{path}.specimen.yield_force"),
            plastic_slope=_num(spec.get("plastic_slope", 0.0), f"{path}.specimen.plastic_slope"),
            fracture_displacement=None
            if fracture is None
            else _num(fracture, f"{path}.specimen.fracture_displacement"),
            gauge_length_mm=_num(spec.get("gauge_length_mm", 50.0), f"{path}.specimen.gauge_length_mm"),
        ),
        sensor_channels=channels,
        digital_inputs=tuple(digitals),
    )


def parse_test(obj: dict, path: str = "test", violations: list[str] | None = None) -> TestConfig:
    """Parse one per-station test section (shared by the config file and the service)."""
    vio = violations if violations is not None else []
    allowed = [f.name for f in fields(TestConfig)]
    _check_keys(_obj(obj, path), allowed, path, vio)
    pid = _obj(obj.get("pid", {}), f"{path}.pid")
    _check_keys(pid, [f.name for f in fields(PidGains)], f"{path}.pid", vio)
    ff = _obj(obj.get("feedforward", {}), f"{path}.feedforward")
    _check_keys(ff, [f.name for f in fields(FfGains)], f"{path}.feedforward", vio)
    adaptive = None
    if obj.get("adaptive") is not None:
        ad = _obj(obj["adaptive"], f"{path}.adaptive")
        _check_keys(ad, [f.name for f in fields(AdaptiveConfig)], f"{path}.adaptive", vio)
        adaptive = AdaptiveConfig(
            g_a=_num(ad.get("g_a", 0.0), f"{path}.adaptive.g_a"),
            g_m=_num(ad.get("g_m", 0.0), f"{path}.adaptive.g_m"),
            clamp=_num(ad.get("clamp", 0.0), f"{path}.adaptive.clamp"),
        )
    program = tuple(
        _parse_segment(seg, f"{path}.program[{i}]", vio)
        for i, seg in enumerate(_arr(_req(obj, "program", path), f"{path}.program"))
    )
    end = _obj(obj.get("end_conditions", {}), f"{path}.end_conditions")
    _check_keys(end, [f.name for f in fields(EndConditions)], f"{path}.end_conditions", vio)
    brk = None
    if end.get("break_detection") is not None:
        b = _obj(end["break_detection"], f"{path}.end_conditions.break_detection")
        _check_keys(b, [f.name for f in fields(BreakConfig)], f"{path}.end_conditions.break_detection", vio)
        brk = BreakConfig(
            drop_fraction=_num(b.get("drop_fraction", 0.5), f"{path}...drop_fraction"),
            min_peak=_num(b.get("min_peak", 0.0), f"{path}...min_peak"),
        )
    limits = []
    for i, lm in enumerate(_arr(obj.get("limits", []), f"{path}.limits")):
        lpath = f"{path}.limits[{i}]"
        _check_keys(_obj(lm, lpath), ["channel_id", "min", "max"], lpath, vio)
        limits.append(
            ChannelLimit(
                channel_id=_int(_req(lm, "channel_id", lpath), f"{lpath}.channel_id"),
                min=_num(_req(lm, "min", lpath), f"{lpath}.min"),
                max=_num(_req(lm, "max", lpath), f"{lpath}.max"),
            )
        )
    cv = obj.get("control_variable")
    md = end.get("max_duration_ticks")
    mc = end.get("max_cycles")
    span = obj.get("setpoint_span")
    return TestConfig(
        control_mode=_str(obj.get("control_mode", "open_loop"), f"{path}.control_mode"),
        control_variable=None if cv is None else _str(cv, f"{path}.control_variable"),
        pid=PidGains(
            kp=_num(pid.get("kp", 0.0), f"{path}.pid.kp"),
            ki=_num(pid.get("ki", 0.0), f"{path}.pid.ki"),
            kd=_num(pid.get("kd", 0.0), f"{path}.pid.kd"),
            out_min=_num(pid.get("out_min", -1.0), f"{path}.pid.out_min"),
            out_max=_num(pid.get("out_max", 1.0), f"{path}.pid.out_max"),
        ),
        feedforward=FfGains(
            kff_s=_num(ff.get("kff_s", 0.0), f"{path}.feedforward.kff_s"),
            kff_v=_num(ff.get("kff_v", 0.0), f"{path}.feedforward.kff_v"),
        ),
        adaptive=adaptive,
        program=program,
        log_decimation=_int(obj.get("log_decimation", DEFAULT_LOG_DECIMATION), f"{path}.log_decimation"),
        end_conditions=EndConditions(
            max_duration_ticks=None if md is None else _int(md, f"{path}.end_conditions.max_duration_ticks"),
            max_cycles=None if mc is None else _int(mc, f"{path}.end_conditions.max_cycles"),
            break_detection=brk,
        ),
        limits=tuple(limits),
        rng_seed=_int(obj.get("rng_seed", 0), f"{path}.rng_seed"),
        setpoint_span=None if span is None else _num(span, f"{path}.setpoint_span"),
    )


def parse_station(obj: dict, path: str = "station", violations: list[str] | None = None) -> StationConfig:
    vio = violations if violations is not None else []
    return _parse_station(obj, path, vio)


def load(text: str) -> tuple[MachineConfig, list[TestConfig]]:
    """Parse and validate a configuration document.

    Raises ConfigError with a line/field location on parse errors and with the
    full violation list when the document is structurally fine but invalid.
    """
    if not text.strip():
        raise ConfigError("parse error: empty document")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    violations: list[str] = []
    root = _obj(doc, "document")
    _check_keys(root, ["machine", "tests"], "document", violations)
    mobj = _obj(_req(root, "machine", "document"), "machine")
    _check_keys(mobj, ["tick_rate_hz", "station_count", "stations"], "machine", violations)
    stations = tuple(
        _parse_station(s, f"machine.stations[{i}]", violations)
        for i, s in enumerate(_arr(_req(mobj, "stations", "machine"), "machine.stations"))
    )
    machine = MachineConfig(
        tick_rate_hz=_int(mobj.get("tick_rate_hz", DEFAULT_TICK_RATE_HZ), "machine.tick_rate_hz"),
        stations=stations,
    )
    if "station_count" in mobj:
        declared = _int(mobj["station_count"], "machine.station_count")
        if declared != len(stations):
            violations.append(
                f"machine.station_count: declares {declared} but {len(stations)} stations are defined"
            )
    tests = [
        parse_test(t, f"tests[{i}]", violations)
        for i, t in enumerate(_arr(_req(root, "tests", "document"), "tests"))
    ]
    violations.extend(validate(machine, tests))
    if violations:
        raise ConfigError(
            "invalid configuration:\n  " + "\n  ".join(violations), violations=violations
        )
    return machine, tests


# ---------------------------------------------------------------------------
# validation


def _finite(x: float) -> bool:
    return math.isfinite(x)


def _validate_station(st: StationConfig, dt: float, path: str, out: list[str]) -> None:
    if st.actuator_kind not in ACTUATOR_KINDS:
        out.append(f"{path}.actuator_kind: unknown kind {st.actuator_kind!r}")
    if st.dac_bits not in DAC_BITS_CHOICES:
        out.append(f"{path}.dac_bits: must be one of {DAC_BITS_CHOICES}")
    if not st.max_step_rate_hz > 0:
        out.append(f"{path}.max_step_rate_hz: must be positive")
    if not st.actuator.time_constant_tau > 0:
        out.append(f"{path}.actuator.time_constant_tau: must be positive")
    elif dt > st.actuator.time_constant_tau / 5.0:
        out.append(
            f"{path}.actuator.time_constant_tau: tick period {dt:g}s violates the "
            f"stability guard dt <= tau/5 (tau={st.actuator.time_constant_tau:g}s)"
        )
    if not st.actuator.velocity_limit > 0:
        out.append(f"{path}.actuator.velocity_limit: must be positive")
    if not _finite(st.actuator.gain):
        out.append(f"{path}.actuator.gain: must be finite")
    if not st.specimen.stiffness_k > 0:
        out.append(f"{path}.specimen.stiffness_k: must be positive")
    if st.specimen.plastic_slope > st.specimen.stiffness_k:
        out.append(f"{path}.specimen.plastic_slope: must be <= stiffness_k")
    if st.specimen.yield_force is not None and not st.specimen.yield_force > 0:
        out.append(f"{path}.specimen.yield_force: must be positive")
    if st.specimen.fracture_displacement is not None and not st.specimen.fracture_displacement > 0:
        out.append(f"{path}.specimen.fracture_displacement: must be positive")
    if not st.specimen.gauge_length_mm > 0:
        out.append(f"{path}.specimen.gauge_length_mm: must be positive")
    if len(st.sensor_channels) == 0:
        out.append(f"{path}.sensor_channels: each station needs at least one sensor channel")
    seen_ids: set[int] = set()
    for i, ch in enumerate(st.sensor_channels):
        cpath = f"{path}.sensor_channels[{i}]"
        if ch.channel_id < 0 or ch.channel_id > MAX_CHANNEL_ID:
            out.append(f"{cpath}.channel_id: must be in 0..{MAX_CHANNEL_ID}")
        if ch.channel_id in seen_ids:
            out.append(f"{cpath}.channel_id: duplicate channel id {ch.channel_id}")
        seen_ids.add(ch.channel_id)
        if ch.quantity not in QUANTITIES:
            out.append(f"{cpath}.quantity: must be one of {QUANTITIES}")
        if not ch.fsr > 0:
            out.append(f"{cpath}.fsr: fsr must be positive")
        if ch.noise_sigma < 0:
            out.append(f"{cpath}.noise_sigma: must be >= 0")
        if ch.calibration_gain == 0 or not _finite(ch.calibration_gain):
            out.append(f"{cpath}.calibration_gain: must be finite and nonzero")
        if not _finite(ch.calibration_offset):
            out.append(f"{cpath}.calibration_offset: must be finite")
    for i, d in enumerate(st.digital_inputs):
        if d.role not in DIGITAL_ROLES:
            out.append(f"{path}.digital_inputs[{i}].role: must be one of {DIGITAL_ROLES}")


def _validate_test(test: TestConfig, st: StationConfig | None, path: str, out: list[str]) -> None:
    if test.control_mode not in CONTROL_MODES:
        out.append(f"{path}.control_mode: must be one of {CONTROL_MODES}")
    channel_quantities = {ch.quantity for ch in st.sensor_channels} if st else set()
    channel_ids = {ch.channel_id for ch in st.sensor_channels} if st else set()
    if test.control_mode == "closed_loop":
        if test.control_variable is None:
            out.append(f"{path}.control_variable: required for closed_loop")
        elif st is not None and test.control_variable not in channel_quantities:
            out.append(
                f"{path}.control_variable: no sensor channel measures {test.control_variable!r}"
            )
    if test.control_variable is not None and test.control_variable not in QUANTITIES:
        out.append(f"{path}.control_variable: must be one of {QUANTITIES}")
    for g in ("kp", "ki", "kd"):
        if getattr(test.pid, g) < 0:
            out.append(f"{path}.pid.{g}: must be >= 0")
    if not test.pid.out_min < test.pid.out_max:
        out.append(f"{path}.pid.out_min: must be < out_max")
    if test.adaptive is not None:
        if test.control_variable is None:
            out.append(f"{path}.adaptive: requires control_variable (extrema need a measured channel)")
        if not test.adaptive.clamp > 0:
            out.append(f"{path}.adaptive.clamp: must be positive")
        for g in ("g_a", "g_m"):
            if not _finite(getattr(test.adaptive, g)):
                out.append(f"{path}.adaptive.{g}: must be finite")
    if len(test.program) == 0:
        out.append(f"{path}.program: must not be empty")
    for i, seg in enumerate(test.program):
        out.extend(segment_errors(seg, f"{path}.program[{i}]"))
    if test.log_decimation < 1:
        out.append(f"{path}.log_decimation: must be >= 1")
    ec = test.end_conditions
    if ec.max_duration_ticks is not None and ec.max_duration_ticks < 1:
        out.append(f"{path}.end_conditions.max_duration_ticks: must be >= 1")
    if ec.max_cycles is not None and ec.max_cycles < 1:
        out.append(f"{path}.end_conditions.max_cycles: must be >= 1")
    if ec.break_detection is not None:
        if not 0 < ec.break_detection.drop_fraction <= 1:
            out.append(f"{path}.end_conditions.break_detection.drop_fraction: must be in (0, 1]")
        if ec.break_detection.min_peak < 0:
            out.append(f"{path}.end_conditions.break_detection.min_peak: must be >= 0")
        if st is not None and "force" not in channel_quantities:
            out.append(
                f"{path}.end_conditions.break_detection: requires a force channel on the station"
            )
    for i, lim in enumerate(test.limits):
        lpath = f"{path}.limits[{i}]"
        if st is not None and lim.channel_id not in channel_ids:
            out.append(f"{lpath}.channel_id: station has no channel {lim.channel_id}")
        if not lim.min < lim.max:
            out.append(f"{lpath}.min: must be < max")
    if not 0 <= test.rng_seed < 2**64:
        out.append(f"{path}.rng_seed: must fit in 64 bits unsigned")
    if test.setpoint_span is not None and not test.setpoint_span > 0:
        out.append(f"{path}.setpoint_span: must be positive")


def validate(machine: MachineConfig, tests: Sequence[TestConfig]) -> list[str]:
    """Return every violated invariant with a path string; empty list = valid.

    Pure and deterministic: same inputs yield the same list in the same order.
    """
    out: list[str] = []
    if not machine.tick_rate_hz > 0:
        out.append("machine.tick_rate_hz: must be positive")
    if machine.station_count > MAX_STATIONS:
        out.append(
            f"machine.station_count: station_count exceeds {MAX_STATIONS} (got {machine.station_count})"
        )
    if machine.station_count < 1:
        out.append("machine.station_count: at least one station required")
    dt = 1.0 / machine.tick_rate_hz if machine.tick_rate_hz > 0 else 0.0
    for i, st in enumerate(machine.stations):
        _validate_station(st, dt, f"machine.stations[{i}]", out)
    if len(tests) != machine.station_count:
        out.append(
            f"tests: expected {machine.station_count} test sections (one per station), got {len(tests)}"
        )
    for i, test in enumerate(tests):
        st = machine.stations[i] if i < machine.station_count else None
        _validate_test(test, st, f"tests[{i}]", out)
    return out


# ---------------------------------------------------------------------------
# rendering (exact round-trip: load(render(m, t)) == (m, t))


def _segment_to_obj(seg: WaveformSegment) -> dict:
    obj: dict[str, Any] = {"kind": seg.kind}
    if seg.kind == "ramp":
        obj["end_value"] = seg.end_value
        obj["duration_ticks"] = seg.duration_ticks
        if seg.mean:
            obj["mean"] = seg.mean
    elif seg.kind == "hold":
        obj["mean"] = seg.mean
        obj["duration_ticks"] = seg.duration_ticks
    else:
        if seg.kind != "random_sine":
            obj["amplitude"] = seg.amplitude
        obj["mean"] = seg.mean
        if seg.kind == "sweep_sine":
            obj["f_start_hz"] = seg.f_start_hz
            obj["f_end_hz"] = seg.f_end_hz
            obj["sweep_law"] = seg.sweep_law
        else:
            obj["frequency_hz"] = seg.frequency_hz
        if seg.kind == "random_sine":
            obj["amp_min"] = seg.amp_min
            obj["amp_max"] = seg.amp_max
        if seg.kind == "tapered_sine":
            obj["taper_cycles_in"] = seg.taper_cycles_in
            obj["taper_cycles_out"] = seg.taper_cycles_out
        if seg.duration_ticks is not None:
            obj["duration_ticks"] = seg.duration_ticks
        if seg.cycles is not None:
            obj["cycles"] = seg.cycles
    return obj


def station_to_obj(st: StationConfig) -> dict:
    return {
        "actuator_kind": st.actuator_kind,
        "dac_bits": st.dac_bits,
        "max_step_rate_hz": st.max_step_rate_hz,
        "actuator": {
            "gain": st.actuator.gain,
            "time_constant_tau": st.actuator.time_constant_tau,
            "velocity_limit": st.actuator.velocity_limit,
        },
        "specimen": {
            "stiffness_k": st.specimen.stiffness_k,
            "yield_force": st.specimen.yield_force,
            "plastic_slope": st.specimen.plastic_slope,
            "fracture_displacement": st.specimen.fracture_displacement,
            "gauge_length_mm": st.specimen.gauge_length_mm,
        },
        "sensor_channels": [
            {
                "channel_id": ch.channel_id,
                "quantity": ch.quantity,
                "fsr": ch.fsr,
                "noise_sigma": ch.noise_sigma,
                "calibration_gain": ch.calibration_gain,
                "calibration_offset": ch.calibration_offset,
            }
            for ch in st.sensor_channels
        ],
        "digital_inputs": [{"role": d.role, "name": d.name} for d in st.digital_inputs],
    }


def test_to_obj(test: TestConfig) -> dict:
    obj: dict[str, Any] = {
        "control_mode": test.control_mode,
        "pid": {
            "kp": test.pid.kp,
            "ki": test.pid.ki,
            "kd": test.pid.kd,
            "out_min": test.pid.out_min,
            "out_max": test.pid.out_max,
        },
        "feedforward": {"kff_s": test.feedforward.kff_s, "kff_v": test.feedforward.kff_v},
        "program": [_segment_to_obj(s) for s in test.program],
        "log_decimation": test.log_decimation,
        "limits": [{"channel_id": l.channel_id, "min": l.min, "max": l.max} for l in test.limits],
        "rng_seed": test.rng_seed,
    }
    if test.control_variable is not None:
        obj["control_variable"] = test.control_variable
    if test.adaptive is not None:
        obj["adaptive"] = {
            "g_a": test.adaptive.g_a,
            "g_m": test.adaptive.g_m,
            "clamp": test.adaptive.clamp,
        }
    ec = test.end_conditions
    end: dict[str, Any] = {}
    if ec.max_duration_ticks is not None:
        end["max_duration_ticks"] = ec.max_duration_ticks
    if ec.max_cycles is not None:
        end["max_cycles"] = ec.max_cycles
    if ec.break_detection is not None:
        end["break_detection"] = {
            "drop_fraction": ec.break_detection.drop_fraction,
            "min_peak": ec.break_detection.min_peak,
        }
    if end:
        obj["end_conditions"] = end
    if test.setpoint_span is not None:
        obj["setpoint_span"] = test.setpoint_span
    return obj


def render(machine: MachineConfig, tests: Sequence[TestConfig]) -> str:
    """Serialize back to the JSON document format (exact float round-trip)."""
    doc = {
        "machine": {
            "tick_rate_hz": machine.tick_rate_hz,
            "station_count": machine.station_count,
            "stations": [station_to_obj(s) for s in machine.stations],
        },
        "tests": [test_to_obj(t) for t in tests],
    }
    return json.dumps(doc, indent=2)


def control_channel_index(station: StationConfig, test: TestConfig) -> int:
    """Array index (not channel id) of the control-variable channel, or -1."""
    if test.control_variable is None:
        return -1
    for i, ch in enumerate(station.sensor_channels):
        if ch.quantity == test.control_variable:
            return i
    return -1


def resolve_setpoint_span(station: StationConfig, test: TestConfig) -> float:
    """Engineering units that map to |u| = 1 for open-loop normalization."""
    if test.setpoint_span is not None:
        return test.setpoint_span
    idx = control_channel_index(station, test)
    if idx >= 0:
        return station.sensor_channels[idx].fsr
    return station.sensor_channels[0].fsr
