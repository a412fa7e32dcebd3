"""Shared fixtures and run helpers."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from mtctl.config import (
    EndConditions,
    MachineConfig,
    SensorChannelConfig,
    StationConfig,
    TestConfig,
)
from mtctl.control import PidGains
from mtctl.engine import Station
from mtctl.waveform import WaveformSegment

settings.register_profile("ci", deadline=None, max_examples=50)
settings.load_profile("ci")

# the TestConfig dataclass is config, not a test class
TestConfig.__test__ = False

REPO_ROOT = Path(__file__).resolve().parents[1]
GOLDEN_PROTOCOL_DIR = REPO_ROOT / "docs" / "protocol" / "golden"


def make_station_cfg(noise: float = 0.0, **kw) -> StationConfig:
    channels = kw.pop(
        "sensor_channels",
        (SensorChannelConfig(channel_id=0, quantity="force", fsr=10.0, noise_sigma=noise),),
    )
    return StationConfig(sensor_channels=channels, **kw)


def make_test_cfg(program, **kw) -> TestConfig:
    kw.setdefault("log_decimation", 1)
    return TestConfig(program=tuple(program), **kw)


def sine_seg(amplitude=1.0, mean=0.0, frequency_hz=10.0, cycles=None, duration_ticks=None):
    return WaveformSegment(
        kind="sine",
        amplitude=amplitude,
        mean=mean,
        frequency_hz=frequency_hz,
        cycles=cycles,
        duration_ticks=duration_ticks,
    )


def collect_run(
    station_cfg: StationConfig,
    test_cfg: TestConfig,
    tick_rate_hz: int = 100000,
    max_ticks: int = 1_000_000,
    batch: int = 65536,
    index: int = 0,
):
    """Configure, start and run one station; returns (station, samples, event).

    samples is a dict channel -> (ticks, raws, engs) numpy arrays concatenated
    over the whole run.
    """
    st = Station(index)
    st.configure(station_cfg, test_cfg, tick_rate_hz)
    st.start()
    ticks_parts, ch_parts, raw_parts, eng_parts = [], [], [], []
    event = None
    while st.lifecycle.value in ("Running", "Holding") and st.tick_count < max_ticks:
        n = min(batch, max_ticks - st.tick_count)
        res = st.run_ticks(n)
        ticks_parts.append(res.ticks)
        ch_parts.append(res.channels)
        raw_parts.append(res.raws)
        eng_parts.append(res.engs)
        if res.event is not None:
            event = res.event
    ticks = np.concatenate(ticks_parts) if ticks_parts else np.empty(0, np.uint64)
    chans = np.concatenate(ch_parts) if ch_parts else np.empty(0, np.uint8)
    raws = np.concatenate(raw_parts) if raw_parts else np.empty(0, np.int32)
    engs = np.concatenate(eng_parts) if eng_parts else np.empty(0, np.float64)
    samples = {}
    for ch in np.unique(chans):
        mask = chans == ch
        samples[int(ch)] = (ticks[mask], raws[mask], engs[mask])
    return st, samples, event


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN_PROTOCOL_DIR
