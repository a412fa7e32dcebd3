"""Headless entry points: run tests, render waveforms, validate configs, bench, serve.

Exit codes are a stable CI contract: 0 success, 2 configuration error,
3 runtime fault (a station ended Faulted).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
import time
from pathlib import Path

import click

from . import config as cfg
from .engine import run_supervisor
from .engine.kernel import JIT_ENABLED, warmup
from .waveform import initial_state, next_point, segment_errors

EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_FAULT = 3


@click.group()
def main() -> None:
    """Materials-testing machine controller (simulated plant)."""


def _load_config(path: str, seed: int | None):
    try:
        text = Path(path).read_text(encoding="utf-8")
        machine, tests = cfg.load(text)
    except (OSError, cfg.ConfigError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    if seed is not None:
        tests = [dataclasses.replace(t, rng_seed=(seed + i) & (2**64 - 1)) for i, t in enumerate(tests)]
    return text, machine, tests


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
def validate(config_path: str) -> None:
    """Validate a configuration document; prints every violation."""
    try:
        text = Path(config_path).read_text(encoding="utf-8")
        cfg.load(text)
    except cfg.ConfigError as exc:
        if exc.violations:
            for v in exc.violations:
                click.echo(v, err=True)
        else:
            click.echo(str(exc), err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    click.echo("ok")


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--duration-ticks", type=int, default=None, help="Stop after this many ticks per station.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="out", show_default=True)
@click.option("--seed", type=int, default=None, help="Override rng_seed: station i gets seed+i.")
@click.option("--run-id", default=None, help="Log file suffix; defaults to a config+seed digest.")
def run(config_path: str, duration_ticks: int | None, out_dir: str, seed: int | None, run_id: str | None) -> None:
    """Run every configured station; writes .mtlog files and a JSON summary."""
    text, machine, tests = _load_config(config_path, seed)
    if run_id is None:
        digest = hashlib.sha256()
        digest.update(text.encode())
        digest.update(str(seed).encode())
        run_id = digest.hexdigest()[:10]
    warmup()
    summary = run_supervisor(machine, tests, duration_ticks=duration_ticks, out_dir=out_dir, run_id=run_id)
    summary["run_id"] = run_id
    summary_path = Path(out_dir) / f"summary_{run_id}.json"
    summary_path.write_text(json.dumps(summary, indent=2), encoding="utf-8")
    click.echo(json.dumps(summary, indent=2))
    if any(s["lifecycle"] == "Faulted" for s in summary["stations"]):
        sys.exit(EXIT_RUNTIME_FAULT)


@main.command()
@click.argument("segment_json")
@click.option("--ticks", type=int, required=True)
@click.option("--tick-rate", type=int, default=cfg.DEFAULT_TICK_RATE_HZ, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def render(segment_json: str, ticks: int, tick_rate: int, seed: int) -> None:
    """Render one waveform segment as CSV (tick,setpoint) on stdout.

    SEGMENT_JSON example: '{"kind":"sine","amplitude":1,"mean":0,"frequency_hz":10,"cycles":100}'
    """
    try:
        obj = json.loads(segment_json)
        violations: list[str] = []
        seg = cfg._parse_segment(obj, "segment", violations)
        violations.extend(segment_errors(seg))
    except (json.JSONDecodeError, cfg.ConfigError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    if violations:
        for v in violations:
            click.echo(v, err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    state = initial_state(seed)
    out = ["tick,setpoint"]
    program = [seg]
    for t in range(ticks):
        sp, state, done, _ = next_point(program, state, tick_rate)
        out.append(f"{t},{sp:.17g}")
        if done:
            break
    click.echo("\n".join(out))


@main.command()
@click.option("--stations", "n_stations", type=click.IntRange(1, 16), default=1, show_default=True)
@click.option("--ticks", type=int, default=1_000_000, show_default=True, help="Ticks per station.")
def bench(n_stations: int, ticks: int) -> None:
    """Benchmark the full pipeline (sine + PID + plant + logging at decimation 100).

    Reports achieved ticks/s per station and the realtime factor against the
    100 kHz target.
    """
    report = run_bench(n_stations, ticks)
    click.echo(json.dumps(report, indent=2))


def run_bench(n_stations: int, ticks: int) -> dict:
    """Build N synthetic closed-loop stations and measure the achieved loop rate."""
    import tempfile

    from .control import PidGains
    from .waveform import WaveformSegment

    tick_rate = cfg.DEFAULT_TICK_RATE_HZ
    stations = tuple(
        cfg.StationConfig(
            sensor_channels=(
                cfg.SensorChannelConfig(channel_id=0, quantity="force", fsr=10.0, noise_sigma=1e-4),
            )
        )
        for _ in range(n_stations)
    )
    machine = cfg.MachineConfig(tick_rate_hz=tick_rate, stations=stations)
    tests = [
        cfg.TestConfig(
            control_mode="closed_loop",
            control_variable="force",
            pid=PidGains(kp=0.5, ki=20.0, kd=1e-4),
            program=(
                WaveformSegment(kind="sine", amplitude=1.0, mean=2.0, frequency_hz=10.0, cycles=2**40),
            ),
            end_conditions=cfg.EndConditions(max_duration_ticks=max(ticks, 1)),
            log_decimation=100,
            rng_seed=i,
        )
        for i in range(n_stations)
    ]
    warmup()
    if ticks <= 0:
        return {
            "stations": n_stations,
            "ticks_executed": 0,
            "wall_seconds": 0.0,
            "ticks_per_second_per_station": 0.0,
            "aggregate_ticks_per_second": 0.0,
            "realtime_factor": 0.0,
            "tick_rate_hz": tick_rate,
            "jit": JIT_ENABLED,
            "per_station": [],
        }
    with tempfile.TemporaryDirectory(prefix="mtctl_bench_") as tmp:
        t0 = time.perf_counter()
        summary = run_supervisor(machine, tests, duration_ticks=ticks, out_dir=tmp, run_id="bench")
        wall = time.perf_counter() - t0
    total = summary["total_ticks"]
    per_station_rate = (total / n_stations) / wall if wall > 0 else 0.0
    per_station = [
        {
            "station": s["station"],
            "ticks": s["ticks"],
            "ticks_per_second": s["ticks"] / wall if wall > 0 else 0.0,
            "realtime_factor": (s["ticks"] / wall / tick_rate) if wall > 0 else 0.0,
        }
        for s in summary["stations"]
    ]
    return {
        "stations": n_stations,
        "ticks_executed": total,
        "wall_seconds": wall,
        "ticks_per_second_per_station": per_station_rate,
        "aggregate_ticks_per_second": per_station_rate * n_stations,
        "realtime_factor": per_station_rate / tick_rate,
        "tick_rate_hz": tick_rate,
        "jit": JIT_ENABLED,
        "per_station": per_station,
    }


@main.command()
@click.argument("log_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Write CSV here (conventionally station<N>_<runid>.csv); default stdout.")
def export(log_path: str, out_path: str | None) -> None:
    """Export a binary .mtlog file as lossless CSV."""
    from .acquisition import LogFormatError, export_csv

    try:
        text = export_csv(log_path)
    except LogFormatError as exc:
        click.echo(f"log error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    if out_path is None:
        click.echo(text, nl=False)
    else:
        Path(out_path).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out_path}")


@main.command()
@click.option("--port", type=int, default=8765, show_default=True)
@click.option("--tcp-port", type=int, default=None, help="Also serve the line-JSON TCP protocol.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Pre-configure stations from a config document.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Write .mtlog files for served runs.")
@click.option("--realtime-factor", type=float, default=1.0, show_default=True,
              help="Simulated-time pacing; 0 runs unthrottled.")
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(port: int, tcp_port: int | None, config_path: str | None, out_dir: str | None,
          realtime_factor: float, host: str) -> None:
    """Serve the WebSocket/TCP control and telemetry protocol (and the console UI)."""
    import uvicorn

    from .service import build_runtime, create_app

    machine = tests = None
    if config_path is not None:
        _, machine, tests = _load_config(config_path, None)
    runtime = build_runtime(
        machine=machine, tests=tests, out_dir=out_dir, realtime_factor=realtime_factor,
        tcp_port=tcp_port, host=host,
    )
    app = create_app(runtime)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
