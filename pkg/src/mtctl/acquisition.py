"""Sample records, decimation, binary/CSV logging and the engine->writer channel.

Binary log layout (little-endian, alignment-free):

  header: magic "MTLG" | version u16 | tick_rate_hz u32          (10 bytes)
  record: tick u64 | station u8 | channel u8 | pad u16=0 | raw i32 | engineering f64   (24 bytes)

Channels 0..253 are sensor channels (raw is the ADC code and engineering the
calibrated value); 254 is the setpoint pseudo-channel (raw fixed 0) and 255
the actuator command (raw = DAC code / PWM counts / rounded step rate).
Decimation keeps samples where tick % factor == 0 with no averaging, so
code-equality checks against the raw stream stay exact.
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

LOG_MAGIC = b"MTLG"
LOG_VERSION = 1
HEADER = struct.Struct("<4sHI")
RECORD = struct.Struct("<QBBHid")
RECORD_SIZE = RECORD.size  # 24
SETPOINT_CHANNEL = 254
ACTUATOR_CHANNEL = 255

RECORD_DTYPE = np.dtype(
    [
        ("tick", "<u8"),
        ("station", "u1"),
        ("channel", "u1"),
        ("pad", "<u2"),
        ("raw", "<i4"),
        ("engineering", "<f8"),
    ]
)
assert RECORD_DTYPE.itemsize == RECORD_SIZE


class LogFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Sample:
    tick: int
    station: int
    channel: int
    raw: int
    engineering: float


def write_record(sample: Sample) -> bytes:
    """Bit-exact 24-byte record."""
    return RECORD.pack(sample.tick, sample.station, sample.channel, 0, sample.raw, sample.engineering)


def read_record(data: bytes) -> Sample:
    tick, station, channel, _pad, raw, eng = RECORD.unpack(data)
    return Sample(tick=tick, station=station, channel=channel, raw=raw, engineering=eng)


def decimate(samples: Iterable[Sample], factor: int) -> Iterator[Sample]:
    """Keep samples where tick % factor == 0; selection, never averaging."""
    if factor < 1:
        raise ValueError("decimation factor must be >= 1")
    for s in samples:
        if s.tick % factor == 0:
            yield s


class LogWriter:
    """Sequential binary log writer for one station's run."""

    def __init__(self, path: str | Path, tick_rate_hz: int):
        self.path = Path(path)
        self._f = open(self.path, "wb")
        self._f.write(HEADER.pack(LOG_MAGIC, LOG_VERSION, tick_rate_hz))
        self.records_written = 0

    def append(self, sample: Sample) -> None:
        self._f.write(write_record(sample))
        self.records_written += 1

    def append_arrays(
        self,
        station: int,
        ticks: np.ndarray,
        channels: np.ndarray,
        raws: np.ndarray,
        engs: np.ndarray,
    ) -> None:
        """Bulk append; byte-identical to per-record append calls."""
        n = len(ticks)
        if n == 0:
            return
        block = np.empty(n, RECORD_DTYPE)
        block["tick"] = ticks
        block["station"] = station
        block["channel"] = channels
        block["pad"] = 0
        block["raw"] = raws
        block["engineering"] = engs
        self._f.write(block.tobytes())
        self.records_written += n

    def close(self) -> None:
        if not self._f.closed:
            self._f.close()

    def __enter__(self) -> "LogWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_log(path: str | Path) -> tuple[int, list[Sample]]:
    """Parse a .mtlog file into (tick_rate_hz, samples)."""
    tick_rate, arr = read_log_arrays(path)
    samples = [
        Sample(int(r["tick"]), int(r["station"]), int(r["channel"]), int(r["raw"]), float(r["engineering"]))
        for r in arr
    ]
    return tick_rate, samples


def read_log_arrays(path: str | Path) -> tuple[int, np.ndarray]:
    """Bulk variant: (tick_rate_hz, structured array with RECORD_DTYPE fields)."""
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise LogFormatError(f"{path}: truncated header")
    magic, version, tick_rate = HEADER.unpack_from(data, 0)
    if magic != LOG_MAGIC:
        raise LogFormatError(f"{path}: bad magic {magic!r}")
    if version != LOG_VERSION:
        raise LogFormatError(f"{path}: unsupported version {version}")
    body = len(data) - HEADER.size
    if body % RECORD_SIZE != 0:
        raise LogFormatError(f"{path}: body size {body} is not a multiple of {RECORD_SIZE}")
    arr = np.frombuffer(data, RECORD_DTYPE, offset=HEADER.size)
    return tick_rate, arr


CSV_HEADER = "tick,station,channel,raw,engineering"


def samples_to_csv(samples: Iterable[Sample]) -> str:
    """CSV with engineering values at 17 significant digits (round-trip exact)."""
    lines = [CSV_HEADER]
    for s in samples:
        lines.append(f"{s.tick},{s.station},{s.channel},{s.raw},{s.engineering:.17g}")
    return "\n".join(lines) + "\n"


def export_csv(log_path: str | Path) -> str:
    _, samples = read_log(log_path)
    return samples_to_csv(samples)


def parse_csv(text: str) -> list[Sample]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise LogFormatError("missing or bad CSV header")
    out = []
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != 5:
            raise LogFormatError(f"line {i}: expected 5 fields, got {len(parts)}")
        out.append(
            Sample(
                tick=int(parts[0]),
                station=int(parts[1]),
                channel=int(parts[2]),
                raw=int(parts[3]),
                engineering=float(parts[4]),
            )
        )
    return out


def write_log(path: str | Path, tick_rate_hz: int, samples: Iterable[Sample]) -> None:
    with LogWriter(path, tick_rate_hz) as w:
        for s in samples:
            w.append(s)


class BoundedSampleChannel:
    """Bounded SPSC channel between a station's engine context and its log writer.

    push_block never blocks: records that do not fit are dropped and counted,
    so samples_emitted == samples_accepted + dropped exactly.
    """

    def __init__(self, capacity_records: int):
        if capacity_records < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity_records
        self._blocks: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
        self._count = 0
        self.dropped = 0
        self._lock = threading.Lock()

    def push_block(
        self, ticks: np.ndarray, channels: np.ndarray, raws: np.ndarray, engs: np.ndarray
    ) -> int:
        """Queue up to capacity; returns how many records were accepted."""
        n = len(ticks)
        with self._lock:
            room = self.capacity - self._count
            take = n if n <= room else room
            if take > 0:
                self._blocks.append((ticks[:take], channels[:take], raws[:take], engs[:take]))
                self._count += take
            self.dropped += n - take
            return take

    def drain(self) -> list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
        with self._lock:
            blocks = self._blocks
            self._blocks = []
            self._count = 0
            return blocks

    @property
    def queued(self) -> int:
        with self._lock:
            return self._count
