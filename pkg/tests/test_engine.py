import dataclasses
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from mtctl.acquisition import ACTUATOR_CHANNEL, SETPOINT_CHANNEL
from mtctl.config import (
    BreakConfig,
    ChannelLimit,
    EndConditions,
    MachineConfig,
    SensorChannelConfig,
    StationConfig,
    TestConfig,
    control_channel_index,
    resolve_setpoint_span,
)
from mtctl.control import (
    AdaptiveConfig,
    AdaptiveState,
    ControlState,
    FfGains,
    PidGains,
    adaptive_update,
    observe_cycle,
    pid_step,
)
from mtctl.engine import Command, EngineError, Lifecycle, Station, Supervisor, run_supervisor
from mtctl.iodrivers import clamp, encode_output
from mtctl.plant import (
    ActuatorModel,
    PlantState,
    SpecimenModel,
    plant_step,
    read_sensor,
    sensor_true_value,
    specimen_force,
)
from mtctl.waveform import WaveformSegment, initial_state, next_point

from conftest import collect_run, make_station_cfg, make_test_cfg, sine_seg

FS = 100000


# ---------------------------------------------------------------------------
# kernel vs module equivalence (bit-exact)


def _oracle_open_loop(station_cfg, test_cfg, tick_rate, n_ticks):
    """Recompute the open-loop stream from the pure module functions."""
    span = resolve_setpoint_span(station_cfg, test_cfg)
    gains = test_cfg.pid
    state = initial_state(test_cfg.rng_seed)
    program = list(test_cfg.program)
    sps, raws, engs = [], [], []
    for _ in range(n_ticks):
        sp, state, done, _ = next_point(program, state, tick_rate)
        u = clamp(sp / span, gains.out_min, gains.out_max)
        cmd = encode_output(
            u, station_cfg.actuator_kind, station_cfg.dac_bits, station_cfg.max_step_rate_hz
        )
        sps.append(sp)
        raws.append(cmd.raw)
        engs.append(cmd.step_rate_hz if station_cfg.actuator_kind == "stepper"
                    else (cmd.pwm_duty if station_cfg.actuator_kind == "pwm_dc" else cmd.normalized))
        if done:
            break
    return np.array(sps), np.array(raws, np.int64), np.array(engs)


# a zero-gain actuator keeps the plant motionless so pure waveform-path
# comparisons cannot trip force limits or ADC overrange mid-run
STILL_ACTUATOR = ActuatorModel(gain=0.0)

ALL_KIND_SEGMENTS = {
    "ramp": WaveformSegment(kind="ramp", end_value=3.0, duration_ticks=2000),
    "hold": WaveformSegment(kind="hold", mean=2.0, duration_ticks=2000),
    "sine": sine_seg(amplitude=2.0, mean=1.0, frequency_hz=97.0, cycles=5),
    "square": WaveformSegment(kind="square", amplitude=1.5, mean=0.5, frequency_hz=53.0, cycles=4),
    "triangular": WaveformSegment(kind="triangular", amplitude=1.0, mean=-0.5, frequency_hz=71.0, cycles=4),
    "tapered_sine": WaveformSegment(
        kind="tapered_sine", amplitude=2.0, mean=0.0, frequency_hz=80.0,
        cycles=10, taper_cycles_in=3, taper_cycles_out=3,
    ),
    "sweep_sine": WaveformSegment(
        kind="sweep_sine", amplitude=1.0, mean=0.0, f_start_hz=20.0, f_end_hz=200.0,
        sweep_law="logarithmic", duration_ticks=4000,
    ),
    "random_sine": WaveformSegment(
        kind="random_sine", amp_min=0.3, amp_max=2.2, mean=0.2, frequency_hz=90.0, cycles=6
    ),
}


@pytest.mark.parametrize("kind", list(ALL_KIND_SEGMENTS))
@pytest.mark.parametrize("actuator_kind", ["dac_servo", "pwm_dc", "stepper"])
def test_kernel_matches_module_open_loop(kind, actuator_kind):
    station_cfg = make_station_cfg(actuator_kind=actuator_kind, actuator=STILL_ACTUATOR)
    test_cfg = make_test_cfg([ALL_KIND_SEGMENTS[kind]], rng_seed=17)
    st, samples, _ = collect_run(station_cfg, test_cfg, FS, max_ticks=6000)
    sp_ticks, _, sp_engs = samples[SETPOINT_CHANNEL]
    act_ticks, act_raws, act_engs = samples[ACTUATOR_CHANNEL]
    o_sps, o_raws, o_engs = _oracle_open_loop(station_cfg, test_cfg, FS, 6000)
    n = len(sp_ticks)
    assert n == len(o_sps)
    assert np.array_equal(sp_engs, o_sps)  # bit-exact setpoints
    assert np.array_equal(act_raws.astype(np.int64), o_raws)  # bit-exact codes
    assert np.array_equal(act_engs, o_engs)


def test_kernel_matches_module_chained_program():
    program = [
        ALL_KIND_SEGMENTS["ramp"],
        ALL_KIND_SEGMENTS["sine"],
        ALL_KIND_SEGMENTS["hold"],
        ALL_KIND_SEGMENTS["tapered_sine"],
        ALL_KIND_SEGMENTS["sweep_sine"],
        ALL_KIND_SEGMENTS["random_sine"],
        ALL_KIND_SEGMENTS["square"],
        ALL_KIND_SEGMENTS["triangular"],
    ]
    station_cfg = make_station_cfg(actuator=STILL_ACTUATOR)
    test_cfg = make_test_cfg(program, rng_seed=99)
    st, samples, _ = collect_run(station_cfg, test_cfg, FS, max_ticks=60000)
    _, _, sp_engs = samples[SETPOINT_CHANNEL]
    _, act_raws, _ = samples[ACTUATOR_CHANNEL]
    o_sps, o_raws, _ = _oracle_open_loop(station_cfg, test_cfg, FS, 60000)
    assert np.array_equal(sp_engs, o_sps)
    assert np.array_equal(act_raws.astype(np.int64), o_raws)
    assert st.lifecycle is Lifecycle.COMPLETED


def _oracle_closed_loop(station_cfg, test_cfg, tick_rate, n_ticks):
    """Full-chain oracle: modules only, mirroring the documented pipeline order."""
    dt = 1.0 / tick_rate
    channels = station_cfg.sensor_channels
    ctrl = control_channel_index(station_cfg, test_cfg)
    noise_rng = test_cfg.rng_seed ^ 0x5DEECE66DA3E39CB
    gen = initial_state(test_cfg.rng_seed)
    plant = PlantState()
    ctrl_state = ControlState()
    ad_state = AdaptiveState()
    amp_corr = mean_corr = 0.0
    program = list(test_cfg.program)
    out = {ch.channel_id: [] for ch in channels}
    sps, act_raws, act_engs = [], [], []
    for _ in range(n_ticks):
        force = specimen_force(plant.position, station_cfg.specimen, plant.specimen_intact)
        engs = []
        for ch in channels:
            truth = sensor_true_value(ch.quantity, force, plant.position, station_cfg.specimen)
            raw, eng, noise_rng = read_sensor(
                ch.fsr, ch.noise_sigma, ch.calibration_gain, ch.calibration_offset, truth, noise_rng
            )
            out[ch.channel_id].append(eng)
            engs.append(eng)
        pv = engs[ctrl]
        ad_state = observe_cycle(ad_state, pv)
        seg = program[gen.segment_index] if gen.segment_index < len(program) else None
        sp, gen, done, wrapped = next_point(program, gen, tick_rate, amp_corr, mean_corr)
        if wrapped and test_cfg.adaptive is not None and seg is not None and seg.kind == "sine":
            amp_corr, mean_corr, ad_state = adaptive_update(
                seg.amplitude, seg.mean, ad_state, test_cfg.adaptive
            )
        elif wrapped:
            ad_state = AdaptiveState(ad_state.amp_correction, ad_state.mean_correction)
        u, ctrl_state = pid_step(test_cfg.pid, test_cfg.feedforward, sp, pv, ctrl_state, dt)
        cmd = encode_output(
            u, station_cfg.actuator_kind, station_cfg.dac_bits, station_cfg.max_step_rate_hz
        )
        plant, _, _ = plant_step(
            plant, station_cfg.actuator, station_cfg.specimen, cmd.normalized, dt
        )
        sps.append(sp)
        act_raws.append(cmd.raw)
        act_engs.append(cmd.normalized if station_cfg.actuator_kind == "dac_servo"
                        else (cmd.pwm_duty if station_cfg.actuator_kind == "pwm_dc" else cmd.step_rate_hz))
        if done:
            break
    return out, np.array(sps), np.array(act_raws, np.int64), np.array(act_engs)


def test_kernel_matches_module_closed_loop_with_noise_and_adaptive():
    station_cfg = make_station_cfg(
        sensor_channels=(
            SensorChannelConfig(0, "force", 10.0, noise_sigma=1e-4, calibration_gain=1.01,
                                calibration_offset=-0.02),
            SensorChannelConfig(1, "displacement", 5.0, noise_sigma=2e-5),
        ),
    )
    test_cfg = make_test_cfg(
        [sine_seg(amplitude=2.0, mean=1.0, frequency_hz=50.0, cycles=3000)],
        control_mode="closed_loop",
        control_variable="force",
        pid=PidGains(kp=0.4, ki=25.0, kd=2e-4),
        feedforward=FfGains(kff_s=0.05, kff_v=1e-5),
        adaptive=AdaptiveConfig(g_a=0.4, g_m=0.2, clamp=3.0),
        rng_seed=4242,
    )
    n = 5000
    st, samples, _ = collect_run(station_cfg, test_cfg, FS, max_ticks=n)
    oracle_engs, o_sps, o_raws, o_engs = _oracle_closed_loop(station_cfg, test_cfg, FS, n)
    for ch_id, expected in oracle_engs.items():
        _, _, engs = samples[ch_id]
        assert np.array_equal(engs, np.array(expected)), f"channel {ch_id} diverged"
    assert np.array_equal(samples[SETPOINT_CHANNEL][2], o_sps)
    assert np.array_equal(samples[ACTUATOR_CHANNEL][1].astype(np.int64), o_raws)
    assert np.array_equal(samples[ACTUATOR_CHANNEL][2], o_engs)


def test_jit_and_pure_python_struck_identical(tmp_path):
    code = (
        "import hashlib, json\n"
        "from mtctl.config import load\n"
        "from mtctl.engine import run_supervisor\n"
        "machine, tests = load(open(r'%s').read())\n"
        "run_supervisor(machine, tests, duration_ticks=20000, out_dir=r'%s', run_id='x')\n"
        "print(hashlib.sha256(open(r'%s/station0_x.mtlog','rb').read()).hexdigest())\n"
    )
    cfg_path = tmp_path / "cfg.json"
    import json

    from mtctl.config import render

    station_cfg = make_station_cfg(noise=1e-4)
    test_cfg = make_test_cfg(
        [sine_seg(amplitude=1.0, mean=2.0, frequency_hz=40.0, cycles=10**6)],
        control_mode="closed_loop", control_variable="force",
        pid=PidGains(kp=0.5, ki=20.0, kd=1e-4), log_decimation=10, rng_seed=5,
    )
    machine = MachineConfig(tick_rate_hz=FS, stations=(station_cfg,))
    cfg_path.write_text(render(machine, [test_cfg]))
    digests = {}
    for label, env_extra in (("jit", {}), ("nojit", {"MTCTL_NO_JIT": "1"})):
        outdir = tmp_path / label
        env = dict(os.environ, **env_extra)
        src = code % (cfg_path, outdir, outdir)
        proc = subprocess.run([sys.executable, "-c", src], capture_output=True, text=True, env=env)
        assert proc.returncode == 0, proc.stderr
        digests[label] = proc.stdout.strip()
    assert digests["jit"] == digests["nojit"]


# ---------------------------------------------------------------------------
# open-loop purity


def test_open_loop_never_touches_control_state():
    station_cfg = make_station_cfg(noise=1e-4)
    test_cfg = make_test_cfg(
        [sine_seg(amplitude=3.0, mean=0.0, frequency_hz=60.0, cycles=50)],
        pid=PidGains(kp=123.0, ki=456.0, kd=7.0),  # present but must never act
        rng_seed=8,
    )
    st, samples, _ = collect_run(station_cfg, test_cfg, FS)
    cs = st.control_state
    assert cs.integrator == 0.0
    assert cs.prev_pv == 0.0
    assert cs.prev_setpoint == 0.0
    assert not cs.initialized
    # every actuator code equals encode_output of the normalized waveform point
    span = resolve_setpoint_span(station_cfg, test_cfg)
    sp = samples[SETPOINT_CHANNEL][2]
    raws = samples[ACTUATOR_CHANNEL][1]
    expected = np.array(
        [encode_output(clamp(s / span, -1.0, 1.0), "dac_servo").raw for s in sp], np.int64
    )
    assert np.array_equal(raws.astype(np.int64), expected)


# ---------------------------------------------------------------------------
# lifecycle and commands


def _configure_payload():
    return (make_station_cfg(), make_test_cfg([sine_seg(cycles=10**6)]))


def _sup(n=2) -> Supervisor:
    sup = Supervisor(tick_rate_hz=FS, n_slots=n)
    return sup


def _bring_to(sup: Supervisor, idx: int, state: str) -> None:
    st = sup.stations[idx]
    if state == "Idle":
        return
    sup.apply_command(Command("configure", idx, _configure_payload()))
    if state == "Configured":
        return
    if state == "Completed":
        st.test_cfg = dataclasses.replace(
            st.test_cfg, end_conditions=EndConditions(max_duration_ticks=10)
        )
        st.packed.CI[6] = 10  # CI_MAX_DURATION
        sup.apply_command(Command("start", idx))
        st.run_ticks(100)
        assert st.lifecycle is Lifecycle.COMPLETED
        return
    sup.apply_command(Command("start", idx))
    if state == "Running":
        return
    if state == "Holding":
        sup.apply_command(Command("hold", idx))
        return
    if state == "Faulted":
        st.trip_estop()
        return
    raise AssertionError(state)


LIFECYCLE_TABLE = {
    # command: set of states it succeeds from
    "configure": {"Idle", "Completed", "Faulted"},
    "start": {"Configured"},
    "hold": {"Running"},
    "resume": {"Holding"},
    "stop": {"Idle", "Configured", "Running", "Holding", "Completed", "Faulted"},
    "set_gains": {"Configured", "Running", "Holding", "Completed", "Faulted"},
    "set_limits": {"Configured", "Running", "Holding", "Completed", "Faulted"},
}
ALL_STATES = ["Idle", "Configured", "Running", "Holding", "Completed", "Faulted"]


@pytest.mark.parametrize("state", ALL_STATES)
@pytest.mark.parametrize("kind", list(LIFECYCLE_TABLE))
def test_lifecycle_total_function(state, kind):
    sup = _sup()
    _bring_to(sup, 0, state)
    payload = None
    if kind == "configure":
        payload = _configure_payload()
    elif kind == "set_gains":
        payload = (PidGains(kp=1.0), None)
    elif kind == "set_limits":
        payload = (ChannelLimit(0, -5.0, 5.0),)
    res = sup.apply_command(Command(kind, 0, payload))
    if state in LIFECYCLE_TABLE[kind]:
        assert res.ok, (state, kind, res.code, res.detail)
    else:
        assert not res.ok and res.code == "illegal_transition", (state, kind, res)


def test_start_unconfigured_reports_not_configured():
    sup = _sup()
    res = sup.apply_command(Command("start", 0))
    assert not res.ok and res.detail == "not configured"


def test_unknown_station_rejected():
    sup = _sup()
    res = sup.apply_command(Command("configure", 16, _configure_payload()))
    assert not res.ok and res.code == "bad_station"


def test_configure_validation_failure_keeps_state():
    sup = _sup()
    bad_station = StationConfig(sensor_channels=())  # no channels
    res = sup.apply_command(Command("configure", 0, (bad_station, _configure_payload()[1])))
    assert not res.ok and res.code == "validation"
    assert any("at least one sensor channel" in v for v in res.detail)
    assert sup.stations[0].lifecycle is Lifecycle.IDLE


def test_estop_faults_all_16_stations():
    sup = _sup(16)
    for i in range(16):
        sup.apply_command(Command("configure", i, _configure_payload()))
        sup.apply_command(Command("start", i))
    res = sup.apply_command(Command("estop", 3))
    assert res.ok
    assert len(res.events) == 16
    for st in sup.stations:
        assert st.lifecycle is Lifecycle.FAULTED
        assert st.fault.kind == "estop"
        assert st.last_output == 0.0


def test_estop_faults_idle_stations_too():
    sup = _sup(2)
    res = sup.apply_command(Command("estop"))
    assert res.ok and len(res.events) == 2
    assert all(st.lifecycle is Lifecycle.FAULTED for st in sup.stations)
    # recovery path: configure brings a Faulted station back
    res = sup.apply_command(Command("configure", 0, _configure_payload()))
    assert res.ok and sup.stations[0].lifecycle is Lifecycle.CONFIGURED


def test_stop_zeroes_output_and_idles():
    sup = _sup()
    _bring_to(sup, 0, "Running")
    sup.stations[0].run_ticks(100)
    assert sup.stations[0].last_output != 0.0
    res = sup.apply_command(Command("stop", 0))
    assert res.ok and res.lifecycle == "Idle"
    assert sup.stations[0].last_output == 0.0


def test_tick_rejected_outside_running_holding():
    st = Station(0)
    with pytest.raises(EngineError):
        st.run_ticks(1)
    st.configure(*_configure_payload(), FS)
    with pytest.raises(EngineError):
        st.tick()


# ---------------------------------------------------------------------------
# hold / resume


def test_hold_freezes_generator_and_output():
    station_cfg = make_station_cfg()
    test_cfg = make_test_cfg(
        [sine_seg(amplitude=1.0, mean=2.0, frequency_hz=20.0, cycles=10**6)],
        control_mode="closed_loop", control_variable="force", pid=PidGains(kp=0.5, ki=30.0),
    )
    st = Station(0)
    st.configure(station_cfg, test_cfg, FS)
    st.start()
    st.run_ticks(5000)
    tick_before = st.tick_count
    held_output = st.last_output
    held_sp = float(st.packed.SF[17])  # SF_LAST_SP
    st.hold()
    res = st.run_ticks(2000)
    assert st.tick_count == tick_before + 2000  # holding still samples and ticks
    sp_mask = res.channels == SETPOINT_CHANNEL
    act_mask = res.channels == ACTUATOR_CHANNEL
    assert np.all(res.engs[sp_mask] == held_sp)
    assert st.last_output == held_output
    # generator phase untouched while holding
    assert st.generator_state.phase == pytest.approx(held_sp * 0.0 + st.generator_state.phase)
    st.resume()
    res2 = st.run_ticks(1)
    assert st.lifecycle is Lifecycle.RUNNING


def test_resume_is_bumpless_against_unheld_twin():
    station_cfg = make_station_cfg()
    base = make_test_cfg(
        [sine_seg(amplitude=1.0, mean=2.0, frequency_hz=20.0, cycles=10**6)],
        control_mode="closed_loop", control_variable="force",
        pid=PidGains(kp=0.5, ki=30.0),
    )
    # twin run without hold measures the normal per-tick output increment
    # once the loop has settled (first cycles saturate during the transient)
    settle = 60000
    twin = Station(0)
    twin.configure(station_cfg, base, FS)
    twin.start()
    twin.run_ticks(settle)
    res = twin.run_ticks(8000)
    act = res.engs[res.channels == ACTUATOR_CHANNEL]
    normal_step = np.abs(np.diff(act)).max()

    st = Station(0)
    st.configure(station_cfg, base, FS)
    st.start()
    st.run_ticks(settle)
    held = st.last_output
    st.hold()
    st.run_ticks(100)  # brief operator hold: plant drift stays small
    st.resume()
    st.run_ticks(1)
    # output continuous to within a few normal tick increments
    assert abs(st.last_output - held) <= 10 * normal_step + 1e-6


# ---------------------------------------------------------------------------
# safety


def test_limit_trip_forces_zero_output_same_tick():
    station_cfg = make_station_cfg(
        actuator=ActuatorModel(gain=50.0, time_constant_tau=0.005, velocity_limit=1000.0),
    )
    test_cfg = make_test_cfg(
        [WaveformSegment(kind="ramp", end_value=8.0, duration_ticks=200000)],
        limits=(ChannelLimit(0, -2.0, 2.0),),
    )
    st, samples, event = collect_run(station_cfg, test_cfg, FS)
    assert st.lifecycle is Lifecycle.FAULTED
    assert event is not None and event.kind == "limit_exceeded"
    assert event.channel_id == 0
    assert event.value > 2.0
    f_ticks, _, f_engs = samples[0]
    first_over = int(f_ticks[np.argmax(f_engs > 2.0)])
    assert event.tick == first_over
    a_ticks, a_raws, _ = samples[ACTUATOR_CHANNEL]
    at_fault = a_raws[a_ticks == event.tick]
    assert len(at_fault) == 1 and at_fault[0] == 0  # zero DAC code at the trip tick
    # nothing runs after the fault
    assert f_ticks.max() == event.tick


def test_digital_estop_input_faults_station():
    station_cfg = make_station_cfg(
        digital_inputs=(
            __import__("mtctl.config", fromlist=["DigitalInputConfig"]).DigitalInputConfig(
                role="estop", name="panel"
            ),
        )
    )
    test_cfg = make_test_cfg([sine_seg(cycles=10**6)])
    st = Station(0)
    st.configure(station_cfg, test_cfg, FS)
    st.start()
    st.run_ticks(100)
    st.set_digital_input("panel", True)
    res = st.run_ticks(1000)
    assert res.ticks_done == 1  # trips on the very next tick
    assert st.lifecycle is Lifecycle.FAULTED
    assert st.fault.kind == "estop"
    assert st.last_output == 0.0


def test_limit_switch_input_faults_station():
    from mtctl.config import DigitalInputConfig

    station_cfg = make_station_cfg(
        digital_inputs=(DigitalInputConfig(role="limit_switch", name="upper"),)
    )
    st = Station(0)
    st.configure(station_cfg, make_test_cfg([sine_seg(cycles=10**6)]), FS)
    st.start()
    st.run_ticks(10)
    st.set_digital_input("upper", True)
    st.run_ticks(10)
    assert st.fault.kind == "limit_exceeded"


def test_sensor_overrange_faults():
    station_cfg = make_station_cfg(
        sensor_channels=(
            SensorChannelConfig(0, "force", 10.0, calibration_offset=10.0),
        )
    )
    st, _, event = collect_run(station_cfg, make_test_cfg([sine_seg(cycles=10)]), FS, max_ticks=10)
    assert event is not None and event.kind == "sensor_overrange"


def test_specimen_break_detection():
    station_cfg = make_station_cfg(
        actuator=ActuatorModel(gain=50.0, time_constant_tau=0.005, velocity_limit=1000.0),
        specimen=SpecimenModel(stiffness_k=100.0, fracture_displacement=0.03),
    )
    test_cfg = make_test_cfg(
        [WaveformSegment(kind="ramp", end_value=8.0, duration_ticks=400000)],
        end_conditions=EndConditions(break_detection=BreakConfig(drop_fraction=0.5, min_peak=0.5)),
    )
    st, samples, event = collect_run(station_cfg, test_cfg, FS)
    assert st.lifecycle is Lifecycle.FAULTED
    assert event.kind == "specimen_break"
    assert event.channel_id == 0
    assert not st.plant_state.specimen_intact


# ---------------------------------------------------------------------------
# end conditions


def test_program_done_completes_at_exact_tick():
    st, _, _ = collect_run(
        make_station_cfg(),
        make_test_cfg([WaveformSegment(kind="ramp", end_value=1.0, duration_ticks=1234)]),
        FS,
    )
    assert st.lifecycle is Lifecycle.COMPLETED
    assert st.tick_count == 1234


def test_max_duration_stops_run():
    st, _, _ = collect_run(
        make_station_cfg(),
        make_test_cfg([sine_seg(cycles=10**6)], end_conditions=EndConditions(max_duration_ticks=777)),
        FS,
    )
    assert st.lifecycle is Lifecycle.COMPLETED
    assert st.tick_count == 777


def test_max_cycles_stops_run():
    st, _, _ = collect_run(
        make_station_cfg(),
        make_test_cfg(
            [sine_seg(frequency_hz=100.0, cycles=10**6)],
            end_conditions=EndConditions(max_cycles=5),
        ),
        FS,
    )
    assert st.lifecycle is Lifecycle.COMPLETED
    assert st.total_cycles == 5


# ---------------------------------------------------------------------------
# adaptive in the engine


def test_adaptive_corrections_engage_at_cycle_boundaries():
    station_cfg = make_station_cfg(
        actuator=ActuatorModel(gain=31.5, time_constant_tau=0.001, velocity_limit=1000.0),
        sensor_channels=(SensorChannelConfig(0, "displacement", 5.0),),
    )
    test_cfg = make_test_cfg(
        [sine_seg(amplitude=1.0, mean=0.0, frequency_hz=10.0, cycles=10**6)],
        control_variable="displacement",
        adaptive=AdaptiveConfig(g_a=0.3, g_m=0.3, clamp=5.0),
        setpoint_span=1.0,
    )
    st = Station(0)
    st.configure(station_cfg, test_cfg, FS)
    st.start()
    st.run_ticks(int(FS / 10.0 * 1.5))  # 1.5 cycles
    assert st.adaptive_state.amp_correction != 0.0


# ---------------------------------------------------------------------------
# isolation and sample-stream invariants


def test_station_isolation_solo_vs_together():
    # the same station config, run alone and alongside siblings, emits
    # identical sample streams
    machine_stations = tuple(
        make_station_cfg(noise=1e-4) for _ in range(3)
    )
    tests = [
        make_test_cfg([sine_seg(frequency_hz=10.0 + 7 * i, cycles=20)], rng_seed=100 + i)
        for i in range(3)
    ]
    together = {}
    sup = Supervisor.from_configs(MachineConfig(tick_rate_hz=FS, stations=machine_stations), tests)
    for st in sup.stations:
        st.start()
    while sup.active_stations():
        for idx, res in sup.advance(4096).items():
            together.setdefault(idx, []).append(res)
    for j in range(3):
        solo_st, solo_samples, _ = collect_run(machine_stations[j], tests[j], FS, index=j)
        got_ticks = np.concatenate([r.ticks for r in together[j]])
        got_engs = np.concatenate([r.engs for r in together[j]])
        got_raws = np.concatenate([r.raws for r in together[j]])
        got_chans = np.concatenate([r.channels for r in together[j]])
        solo_ticks = np.concatenate([solo_samples[c][0] for c in sorted(solo_samples)])
        assert len(got_ticks) == len(solo_ticks)
        for ch in sorted(solo_samples):
            mask = got_chans == ch
            assert np.array_equal(got_engs[mask], solo_samples[ch][2])
            assert np.array_equal(got_raws[mask], solo_samples[ch][1])


def test_sample_ticks_strictly_increasing_per_channel():
    st, samples, _ = collect_run(
        make_station_cfg(noise=1e-4),
        make_test_cfg([sine_seg(cycles=30)], log_decimation=7),
        FS,
    )
    for ch, (ticks, _, _) in samples.items():
        assert np.all(np.diff(ticks.astype(np.int64)) > 0)
        assert np.all(ticks % 7 == 0)
