import json

import pytest

from mtctl.config import (
    BreakConfig,
    ChannelLimit,
    ConfigError,
    EndConditions,
    MachineConfig,
    SensorChannelConfig,
    StationConfig,
    TestConfig,
    DigitalInputConfig,
    load,
    render,
    validate,
)
from mtctl.control import AdaptiveConfig, FfGains, PidGains
from mtctl.plant import ActuatorModel, SpecimenModel
from mtctl.waveform import WaveformSegment


def _station(**kw):
    kw.setdefault(
        "sensor_channels",
        (SensorChannelConfig(channel_id=0, quantity="force", fsr=10.0),),
    )
    return StationConfig(**kw)


def _test(**kw):
    kw.setdefault(
        "program", (WaveformSegment(kind="hold", mean=1.0, duration_ticks=100),)
    )
    return TestConfig(**kw)


def _machine(n=1, **kw):
    return MachineConfig(stations=tuple(_station() for _ in range(n)), **kw)


def test_station_count_bound():
    errs = validate(_machine(17), [_test() for _ in range(17)])
    assert any("station_count exceeds 16" in e for e in errs)
    assert validate(_machine(16), [_test() for _ in range(16)]) == []


def test_closed_loop_with_matching_channel_is_valid():
    test = _test(
        control_mode="closed_loop",
        control_variable="force",
        pid=PidGains(kp=1.0),
    )
    assert validate(_machine(), [test]) == []


def test_negative_fsr_violation():
    st = _station(sensor_channels=(SensorChannelConfig(channel_id=0, quantity="force", fsr=-5.0),))
    errs = validate(MachineConfig(stations=(st,)), [_test()])
    assert any("fsr must be positive" in e for e in errs)


def test_closed_loop_missing_channel():
    test = _test(control_mode="closed_loop", control_variable="strain")
    errs = validate(_machine(), [test])
    assert any("no sensor channel measures" in e for e in errs)


def test_stability_guard_dt_vs_tau():
    st = _station(actuator=ActuatorModel(time_constant_tau=1e-5))
    errs = validate(MachineConfig(tick_rate_hz=100000, stations=(st,)), [_test()])
    assert any("stability guard" in e for e in errs)


def test_limit_references_unknown_channel():
    test = _test(limits=(ChannelLimit(channel_id=9, min=-1.0, max=1.0),))
    errs = validate(_machine(), [test])
    assert any("no channel 9" in e for e in errs)


def test_duplicate_channel_ids():
    st = _station(
        sensor_channels=(
            SensorChannelConfig(channel_id=0, quantity="force", fsr=10.0),
            SensorChannelConfig(channel_id=0, quantity="displacement", fsr=5.0),
        )
    )
    errs = validate(MachineConfig(stations=(st,)), [_test()])
    assert any("duplicate channel id" in e for e in errs)


def test_adaptive_requires_control_variable_and_clamp():
    test = _test(adaptive=AdaptiveConfig(g_a=0.3, g_m=0.1, clamp=0.0))
    errs = validate(_machine(), [test])
    assert any("requires control_variable" in e for e in errs)
    assert any("clamp" in e for e in errs)


def test_break_detection_needs_force_channel():
    st = _station(sensor_channels=(SensorChannelConfig(channel_id=0, quantity="displacement", fsr=5.0),))
    test = _test(end_conditions=EndConditions(break_detection=BreakConfig()))
    errs = validate(MachineConfig(stations=(st,)), [test])
    assert any("force channel" in e for e in errs)


def test_tests_length_mismatch():
    errs = validate(_machine(2), [_test()])
    assert any("expected 2 test sections" in e for e in errs)


def test_empty_program_and_decimation():
    errs = validate(_machine(), [TestConfig(program=(), log_decimation=0)])
    assert any("program: must not be empty" in e for e in errs)
    assert any("log_decimation" in e for e in errs)


def test_validate_is_deterministic():
    machine = _machine(17)
    tests = [TestConfig(program=(), log_decimation=0) for _ in range(17)]
    assert validate(machine, tests) == validate(machine, tests)


# --- document loading --------------------------------------------------------


def _doc(**overrides):
    doc = {
        "machine": {
            "stations": [
                {
                    "sensor_channels": [
                        {"channel_id": 0, "quantity": "force", "fsr": 10.0}
                    ]
                }
            ]
        },
        "tests": [
            {"program": [{"kind": "sine", "amplitude": 1.0, "frequency_hz": 10.0, "cycles": 100}]}
        ],
    }
    doc.update(overrides)
    return doc


def test_defaults_applied():
    machine, tests = load(json.dumps(_doc()))
    assert machine.tick_rate_hz == 100000
    assert tests[0].log_decimation == 100
    assert tests[0].rng_seed == 0
    assert len(tests[0].program) == 1
    assert tests[0].program[0].kind == "sine"


def test_empty_document_is_parse_error():
    with pytest.raises(ConfigError, match="empty"):
        load("")


def test_json_syntax_error_carries_location():
    with pytest.raises(ConfigError, match="line 2"):
        load('{\n  "machine": }')


def test_unknown_field_is_violation():
    doc = _doc()
    doc["machine"]["stations"][0]["sensor_channels"][0]["fullscale"] = 1.0
    with pytest.raises(ConfigError) as exc:
        load(json.dumps(doc))
    assert any("fullscale: unknown field" in v for v in exc.value.violations)


def test_station_count_consistency_check():
    doc = _doc()
    doc["machine"]["station_count"] = 3
    with pytest.raises(ConfigError) as exc:
        load(json.dumps(doc))
    assert any("declares 3" in v for v in exc.value.violations)


def test_seventeen_station_document_rejected():
    doc = _doc()
    doc["machine"]["stations"] = doc["machine"]["stations"] * 17
    doc["tests"] = doc["tests"] * 17
    with pytest.raises(ConfigError) as exc:
        load(json.dumps(doc))
    assert any("station_count exceeds 16" in v for v in exc.value.violations)


def _full_config():
    machine = MachineConfig(
        tick_rate_hz=50000,
        stations=(
            StationConfig(
                actuator_kind="pwm_dc",
                dac_bits=18,
                max_step_rate_hz=5000.0,
                actuator=ActuatorModel(gain=12.5, time_constant_tau=0.07, velocity_limit=42.0),
                specimen=SpecimenModel(
                    stiffness_k=80.0, yield_force=5.5, plastic_slope=7.0,
                    fracture_displacement=1.25, gauge_length_mm=60.0,
                ),
                sensor_channels=(
                    SensorChannelConfig(0, "force", 12.0, 1e-4, 1.02, -0.01),
                    SensorChannelConfig(3, "displacement", 6.0, 0.0, 1.0, 0.0),
                    SensorChannelConfig(5, "strain", 4.0, 2e-5, 0.98, 0.005),
                ),
                digital_inputs=(
                    DigitalInputConfig(role="estop", name="panel"),
                    DigitalInputConfig(role="limit_switch", name="upper"),
                    DigitalInputConfig(role="generic", name="door"),
                ),
            ),
            _station(),
        ),
    )
    tests = [
        TestConfig(
            control_mode="closed_loop",
            control_variable="force",
            pid=PidGains(kp=0.4, ki=17.0, kd=3e-4, out_min=-0.9, out_max=0.95),
            feedforward=FfGains(kff_s=0.01, kff_v=2e-5),
            adaptive=AdaptiveConfig(g_a=0.3, g_m=0.05, clamp=2.5),
            program=(
                WaveformSegment(kind="ramp", end_value=2.0, duration_ticks=5000),
                WaveformSegment(kind="hold", mean=2.0, duration_ticks=1000),
                WaveformSegment(kind="sine", amplitude=1.0, mean=2.0, frequency_hz=10.0, cycles=50),
                WaveformSegment(kind="square", amplitude=0.5, mean=2.0, frequency_hz=5.0, duration_ticks=30000),
                WaveformSegment(kind="triangular", amplitude=0.25, mean=2.0, frequency_hz=8.0, cycles=4),
                WaveformSegment(
                    kind="tapered_sine", amplitude=1.0, mean=2.0, frequency_hz=20.0,
                    cycles=40, taper_cycles_in=5, taper_cycles_out=5,
                ),
                WaveformSegment(
                    kind="sweep_sine", amplitude=0.75, mean=2.0, f_start_hz=1.0, f_end_hz=30.0,
                    sweep_law="logarithmic", duration_ticks=250000,
                ),
                WaveformSegment(
                    kind="random_sine", amp_min=0.2, amp_max=0.8, mean=2.0,
                    frequency_hz=15.0, cycles=25,
                ),
            ),
            log_decimation=50,
            end_conditions=EndConditions(
                max_duration_ticks=10**7, max_cycles=5000,
                break_detection=BreakConfig(drop_fraction=0.4, min_peak=0.5),
            ),
            limits=(ChannelLimit(0, -11.0, 11.0), ChannelLimit(3, -5.5, 5.5)),
            rng_seed=991,
            setpoint_span=12.0,
        ),
        TestConfig(program=(WaveformSegment(kind="hold", mean=0.5, duration_ticks=100),)),
    ]
    return machine, tests


def test_round_trip_exact():
    machine, tests = _full_config()
    assert validate(machine, tests) == []
    text = render(machine, tests)
    machine2, tests2 = load(text)
    assert machine2 == machine
    assert tests2 == tests
    # idempotent: render(load(render(x))) == render(x)
    assert render(machine2, tests2) == text


def test_program_single_segment_echo():
    doc = _doc()
    machine, tests = load(json.dumps(doc))
    seg = tests[0].program[0]
    assert (seg.amplitude, seg.frequency_hz, seg.cycles) == (1.0, 10.0, 100)
