"""Per-station lifecycle state machine wrapped around the tick kernel."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..acquisition import Sample
from ..config import (
    ChannelLimit,
    StationConfig,
    TestConfig,
    control_channel_index,
)
from ..iodrivers import clamp
from ..plant import sensor_true_value, specimen_force
from . import kernel as kn
from . import packing


class Lifecycle(str, enum.Enum):
    IDLE = "Idle"
    CONFIGURED = "Configured"
    RUNNING = "Running"
    HOLDING = "Holding"
    COMPLETED = "Completed"
    FAULTED = "Faulted"


@dataclass(frozen=True)
class SafetyEvent:
    kind: str
    station: int
    tick: int
    channel_id: Optional[int] = None
    value: float = 0.0

    def to_obj(self) -> dict:
        return {
            "kind": self.kind,
            "station": self.station,
            "tick": self.tick,
            "channel_id": self.channel_id,
            "value": self.value,
        }


@dataclass
class BatchResult:
    """Outcome of one kernel batch: samples plus any terminal transition."""

    status: int
    ticks_done: int
    ticks: np.ndarray
    channels: np.ndarray
    raws: np.ndarray
    engs: np.ndarray
    event: Optional[SafetyEvent] = None


class EngineError(RuntimeError):
    pass


class Station:
    """One independently controlled channel; shares nothing with its siblings."""

    def __init__(self, index: int):
        self.index = index
        self.lifecycle = Lifecycle.IDLE
        self.station_cfg: StationConfig | None = None
        self.test_cfg: TestConfig | None = None
        self.tick_rate_hz = 0
        self.packed: packing.PackedStation | None = None
        self.fault: SafetyEvent | None = None
        self._digital: dict[str, bool] = {}

    # -- lifecycle ----------------------------------------------------------

    def configure(self, station_cfg: StationConfig, test_cfg: TestConfig, tick_rate_hz: int) -> None:
        if self.lifecycle not in (Lifecycle.IDLE, Lifecycle.COMPLETED, Lifecycle.FAULTED):
            raise EngineError(f"cannot configure station in state {self.lifecycle.value}")
        self.station_cfg = station_cfg
        self.test_cfg = test_cfg
        self.tick_rate_hz = tick_rate_hz
        self.packed = packing.pack_station(station_cfg, test_cfg, tick_rate_hz)
        self.fault = None
        self._digital = {d.name or f"din{i}": False for i, d in enumerate(station_cfg.digital_inputs)}
        self.lifecycle = Lifecycle.CONFIGURED

    def start(self) -> None:
        if self.lifecycle is not Lifecycle.CONFIGURED:
            raise EngineError("not configured")
        # the open/closed determination is made once here and cached for the run
        self.packed.CI[kn.CI_CLOSED_LOOP] = 1 if self.test_cfg.control_mode == "closed_loop" else 0
        self.lifecycle = Lifecycle.RUNNING

    def hold(self) -> None:
        if self.lifecycle is not Lifecycle.RUNNING:
            raise EngineError(f"cannot hold from {self.lifecycle.value}")
        self.packed.SI[kn.SI_HOLDING] = 1
        self.lifecycle = Lifecycle.HOLDING

    def resume(self) -> None:
        if self.lifecycle is not Lifecycle.HOLDING:
            raise EngineError(f"cannot resume from {self.lifecycle.value}")
        self._bumpless_resume()
        self.packed.SI[kn.SI_HOLDING] = 0
        self.lifecycle = Lifecycle.RUNNING

    def stop(self) -> None:
        if self.packed is not None:
            self.packed.SF[kn.SF_LAST_OUT] = 0.0
            self.packed.SI[kn.SI_HOLDING] = 0
        self.lifecycle = Lifecycle.IDLE

    def trip_estop(self) -> SafetyEvent:
        """Immediate e-stop: zero output, Faulted, one SafetyEvent."""
        tick = int(self.packed.SI[kn.SI_TICK]) if self.packed is not None else 0
        if self.packed is not None:
            self.packed.SF[kn.SF_LAST_OUT] = 0.0
            self.packed.SI[kn.SI_FAULT_KIND] = kn.F_ESTOP
            self.packed.SI[kn.SI_FAULT_TICK] = tick
        event = SafetyEvent(kind="estop", station=self.index, tick=tick)
        self.fault = event
        self.lifecycle = Lifecycle.FAULTED
        return event

    def _bumpless_resume(self) -> None:
        # re-seed the PID from the held output and the plant's present clean PV
        # (noise-free, unquantized) so the first resumed tick is continuous
        p = self.packed
        idx = control_channel_index(self.station_cfg, self.test_cfg)
        if idx >= 0:
            ch = self.station_cfg.sensor_channels[idx]
            force = specimen_force(
                float(p.SF[kn.SF_POS]), self.station_cfg.specimen, bool(p.SI[kn.SI_INTACT])
            )
            pv = sensor_true_value(
                ch.quantity, force, float(p.SF[kn.SF_POS]), self.station_cfg.specimen
            )
        else:
            pv = 0.0
        gains = self.test_cfg.pid
        p.SF[kn.SF_INTEG] = clamp(float(p.SF[kn.SF_LAST_OUT]), gains.out_min, gains.out_max)
        p.SF[kn.SF_PREV_PV] = pv
        p.SF[kn.SF_PREV_SP] = pv
        p.SI[kn.SI_PID_INIT] = 1

    # -- runtime tuning -----------------------------------------------------

    def set_gains(self, pid=None, feedforward=None) -> None:
        if self.packed is None:
            raise EngineError("not configured")
        import dataclasses

        if pid is not None:
            self.test_cfg = dataclasses.replace(self.test_cfg, pid=pid)
        if feedforward is not None:
            self.test_cfg = dataclasses.replace(self.test_cfg, feedforward=feedforward)
        p = self.packed
        p.CF[kn.CF_KP] = self.test_cfg.pid.kp
        p.CF[kn.CF_KI] = self.test_cfg.pid.ki
        p.CF[kn.CF_KD] = self.test_cfg.pid.kd
        p.CF[kn.CF_OUT_MIN] = self.test_cfg.pid.out_min
        p.CF[kn.CF_OUT_MAX] = self.test_cfg.pid.out_max
        p.CF[kn.CF_KFF_S] = self.test_cfg.feedforward.kff_s
        p.CF[kn.CF_KFF_V] = self.test_cfg.feedforward.kff_v

    def set_limits(self, limits: tuple[ChannelLimit, ...]) -> None:
        if self.packed is None:
            raise EngineError("not configured")
        import dataclasses

        self.test_cfg = dataclasses.replace(self.test_cfg, limits=limits)
        self.packed.LIMF, self.packed.LIMI = packing.pack_limits(self.station_cfg, self.test_cfg)
        self.packed.CI[kn.CI_N_LIMITS] = len(limits)

    def set_digital_input(self, name: str, value: bool) -> None:
        """Drive a configured digital input (scripted tests / external wiring)."""
        if self.station_cfg is None:
            raise EngineError("not configured")
        roles = {}
        for i, d in enumerate(self.station_cfg.digital_inputs):
            roles[d.name or f"din{i}"] = d.role
        if name not in roles:
            raise EngineError(f"no digital input named {name!r}")
        self._digital[name] = value
        estop = any(self._digital[n] and roles[n] == "estop" for n in roles)
        limitsw = any(self._digital[n] and roles[n] == "limit_switch" for n in roles)
        self.packed.SI[kn.SI_DIG_ESTOP] = 1 if estop else 0
        self.packed.SI[kn.SI_DIG_LIMIT] = 1 if limitsw else 0

    # -- execution ----------------------------------------------------------

    def run_ticks(self, n_ticks: int) -> BatchResult:
        """Advance up to n_ticks through the pipeline; commands never preempt a batch."""
        if self.lifecycle not in (Lifecycle.RUNNING, Lifecycle.HOLDING):
            raise EngineError(f"cannot tick station in state {self.lifecycle.value}")
        p = self.packed
        cap = p.log_capacity(n_ticks)
        l_t = np.empty(cap, np.uint64)
        l_ch = np.empty(cap, np.uint8)
        l_raw = np.empty(cap, np.int32)
        l_eng = np.empty(cap, np.float64)
        with np.errstate(over="ignore"):
            status, ticks_done, ln = kn.advance(
                n_ticks, p.CF, p.CI, p.SEGF, p.SEGI, p.SENF, p.SENI, p.LIMF, p.LIMI,
                p.SF, p.SI, p.RS, l_t, l_ch, l_raw, l_eng,
            )
        event = None
        if status == kn.X_FAULT:
            kind_code = int(p.SI[kn.SI_FAULT_KIND])
            ch = int(p.SI[kn.SI_FAULT_CH])
            event = SafetyEvent(
                kind=packing.FAULT_KIND_NAMES[kind_code],
                station=self.index,
                tick=int(p.SI[kn.SI_FAULT_TICK]),
                channel_id=None if ch < 0 else ch,
                value=float(p.SF[kn.SF_FAULT_VALUE]),
            )
            self.fault = event
            self.lifecycle = Lifecycle.FAULTED
        elif status == kn.X_DONE:
            self.lifecycle = Lifecycle.COMPLETED
        return BatchResult(
            status=int(status),
            ticks_done=int(ticks_done),
            ticks=l_t[:ln],
            channels=l_ch[:ln],
            raws=l_raw[:ln],
            engs=l_eng[:ln],
            event=event,
        )

    def tick(self) -> tuple[list[Sample], Optional[SafetyEvent]]:
        """Single pipeline tick; returns the decimated samples it emitted."""
        res = self.run_ticks(1)
        samples = [
            Sample(
                tick=int(res.ticks[i]),
                station=self.index,
                channel=int(res.channels[i]),
                raw=int(res.raws[i]),
                engineering=float(res.engs[i]),
            )
            for i in range(len(res.ticks))
        ]
        return samples, res.event

    # -- introspection ------------------------------------------------------

    @property
    def tick_count(self) -> int:
        return int(self.packed.SI[kn.SI_TICK]) if self.packed is not None else 0

    @property
    def total_cycles(self) -> int:
        return int(self.packed.SI[kn.SI_TOTAL_CYCLES]) if self.packed is not None else 0

    @property
    def last_output(self) -> float:
        return float(self.packed.SF[kn.SF_LAST_OUT]) if self.packed is not None else 0.0

    @property
    def generator_state(self):
        return packing.generator_state(self.packed)

    @property
    def control_state(self):
        return packing.control_state(self.packed)

    @property
    def adaptive_state(self):
        return packing.adaptive_state(self.packed)

    @property
    def plant_state(self):
        return packing.plant_state(self.packed)

    def status_obj(self) -> dict:
        return {
            "station": self.index,
            "lifecycle": self.lifecycle.value,
            "tick": self.tick_count,
            "fault": self.fault.to_obj() if self.fault else None,
        }
