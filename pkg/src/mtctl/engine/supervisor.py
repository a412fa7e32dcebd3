"""Multi-station supervisor: command dispatch and the batch run loop.

Stations share nothing; the supervisor advances them round-robin in batches.
Batching never changes per-station output (state is carried tick-exact), so a
station's log is byte-identical whether it runs solo or with 15 siblings.
Commands are applied only between batches - a batch boundary is a tick
boundary, so a command lands "within one tick" of simulated time.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from ..acquisition import LogWriter
from ..config import MachineConfig, TestConfig, validate
from .station import BatchResult, EngineError, Lifecycle, SafetyEvent, Station

COMMAND_KINDS = (
    "configure", "start", "stop", "hold", "resume", "estop", "set_gains", "set_limits",
)
DEFAULT_BATCH_TICKS = 65536


@dataclass(frozen=True)
class Command:
    kind: str
    station: int = 0  # ignored for estop (global)
    payload: Any = None
    seq: int = 0


@dataclass
class CommandResult:
    ok: bool
    code: Optional[str] = None
    detail: Any = None
    station: Optional[int] = None
    lifecycle: Optional[str] = None
    events: list[SafetyEvent] = field(default_factory=list)


class Supervisor:
    """Owns up to 16 stations and serializes all mutations behind one lock."""

    def __init__(self, tick_rate_hz: int = 100000, n_slots: int = 16):
        self.tick_rate_hz = tick_rate_hz
        self.stations = [Station(i) for i in range(n_slots)]
        self.lock = threading.RLock()
        self.status_listeners: list[Callable[[dict], None]] = []

    @classmethod
    def from_configs(
        cls, machine: MachineConfig, tests: Sequence[TestConfig]
    ) -> "Supervisor":
        violations = validate(machine, tests)
        if violations:
            raise EngineError("invalid configuration: " + "; ".join(violations))
        sup = cls(tick_rate_hz=machine.tick_rate_hz, n_slots=machine.station_count)
        for i, (st_cfg, t_cfg) in enumerate(zip(machine.stations, tests)):
            sup.stations[i].configure(st_cfg, t_cfg, machine.tick_rate_hz)
        return sup

    # -- status fan-out -----------------------------------------------------

    def _notify(self, station: Station) -> None:
        obj = station.status_obj()
        for cb in self.status_listeners:
            cb(obj)

    # -- command dispatch ---------------------------------------------------

    def apply_command(self, cmd: Command) -> CommandResult:
        """Execute one command; every (state, command) pair maps to a result."""
        with self.lock:
            return self._apply(cmd)

    def _apply(self, cmd: Command) -> CommandResult:
        if cmd.kind not in COMMAND_KINDS:
            return CommandResult(ok=False, code="unknown_command", detail=cmd.kind)
        if cmd.kind == "estop":
            events = []
            for st in self.stations:
                if st.lifecycle is not Lifecycle.FAULTED or st.fault is None or st.fault.kind != "estop":
                    events.append(st.trip_estop())
                    self._notify(st)
            return CommandResult(ok=True, events=events)
        if not 0 <= cmd.station < len(self.stations):
            return CommandResult(ok=False, code="bad_station", detail=cmd.station)
        st = self.stations[cmd.station]
        try:
            if cmd.kind == "configure":
                station_cfg, test_cfg = cmd.payload
                machine = MachineConfig(tick_rate_hz=self.tick_rate_hz, stations=(station_cfg,))
                violations = validate(machine, [test_cfg])
                if violations:
                    return CommandResult(
                        ok=False, code="validation", detail=violations, station=cmd.station,
                        lifecycle=st.lifecycle.value,
                    )
                st.configure(station_cfg, test_cfg, self.tick_rate_hz)
            elif cmd.kind == "start":
                st.start()
            elif cmd.kind == "stop":
                st.stop()
            elif cmd.kind == "hold":
                st.hold()
            elif cmd.kind == "resume":
                st.resume()
            elif cmd.kind == "set_gains":
                pid, ff = cmd.payload
                st.set_gains(pid=pid, feedforward=ff)
            elif cmd.kind == "set_limits":
                st.set_limits(cmd.payload)
        except EngineError as exc:
            return CommandResult(
                ok=False, code="illegal_transition", detail=str(exc),
                station=cmd.station, lifecycle=st.lifecycle.value,
            )
        self._notify(st)
        return CommandResult(ok=True, station=cmd.station, lifecycle=st.lifecycle.value)

    # -- batch execution ----------------------------------------------------

    def active_stations(self) -> list[Station]:
        return [s for s in self.stations if s.lifecycle in (Lifecycle.RUNNING, Lifecycle.HOLDING)]

    def advance(
        self, batch_ticks: int, sink: Optional[Callable[[int, BatchResult], None]] = None
    ) -> dict[int, BatchResult]:
        """Advance every active station by up to batch_ticks, round-robin."""
        results: dict[int, BatchResult] = {}
        with self.lock:
            for st in self.active_stations():
                res = st.run_ticks(batch_ticks)
                results[st.index] = res
                if sink is not None:
                    sink(st.index, res)
                if res.event is not None or res.status != 0:
                    self._notify(st)
        return results


def run_supervisor(
    machine: MachineConfig,
    tests: Sequence[TestConfig],
    duration_ticks: Optional[int] = None,
    out_dir: str | Path | None = None,
    run_id: str = "run",
    batch_ticks: int = DEFAULT_BATCH_TICKS,
) -> dict:
    """Run every configured station to completion/fault or duration_ticks.

    Writes one .mtlog per station when out_dir is given and returns the run
    summary. Per-station logs are byte-identical to solo runs of the same
    config and seed.
    """
    if machine.station_count == 0:
        return {
            "tick_rate_hz": machine.tick_rate_hz,
            "stations": [],
            "total_ticks": 0,
            "wall_seconds": 0.0,
            "ticks_per_second": 0.0,
        }
    sup = Supervisor.from_configs(machine, tests)
    writers: dict[int, LogWriter] = {}
    log_files: dict[int, str] = {}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for st in sup.stations:
            path = out / f"station{st.index}_{run_id}.mtlog"
            writers[st.index] = LogWriter(path, machine.tick_rate_hz)
            log_files[st.index] = str(path)
    events: list[SafetyEvent] = []

    def sink(idx: int, res: BatchResult) -> None:
        if idx in writers:
            writers[idx].append_arrays(idx, res.ticks, res.channels, res.raws, res.engs)
        if res.event is not None:
            events.append(res.event)

    for st in sup.stations:
        st.start()
    t0 = time.perf_counter()
    total_ticks = 0
    while True:
        active = sup.active_stations()
        if not active:
            break
        if duration_ticks is not None:
            active = [s for s in active if s.tick_count < duration_ticks]
            if not active:
                break
        for st in active:
            n = batch_ticks
            if duration_ticks is not None:
                n = min(n, duration_ticks - st.tick_count)
            res = st.run_ticks(n)
            sink(st.index, res)
            total_ticks += res.ticks_done
    wall = time.perf_counter() - t0
    for w in writers.values():
        w.close()
    stations_summary = []
    for st in sup.stations:
        stations_summary.append(
            {
                "station": st.index,
                "lifecycle": st.lifecycle.value,
                "ticks": st.tick_count,
                "total_cycles": st.total_cycles,
                "samples_logged": writers[st.index].records_written if st.index in writers else 0,
                "samples_dropped": 0,
                "fault": st.fault.to_obj() if st.fault else None,
                "log_file": log_files.get(st.index),
            }
        )
    return {
        "tick_rate_hz": machine.tick_rate_hz,
        "stations": stations_summary,
        "total_ticks": total_ticks,
        "wall_seconds": wall,
        "ticks_per_second": total_ticks / wall if wall > 0 else 0.0,
    }
