"""Network boundary: command channel + streaming telemetry over WebSocket/TCP.

The command path and the bulk-data path are isolated the way the controller
hardware splits configuration from DMA traffic: commands are acknowledged
individually (exactly one ack or err per command, echoing seq), while
telemetry fans out through per-subscription bounded buffers that drop oldest
frames under backpressure and report the drop count in the next frame. A slow
chart client can never delay a command ack or an engine tick.

Transports: WebSocket at /ws (JSON messages) and an optional line-delimited
JSON TCP listener with the identical message vocabulary. A static bearer
token (MTCTL_TOKEN) gates commands when set; GET /health stays open.
Message schemas are documented in docs/protocol.md with golden examples.
"""

from __future__ import annotations

import asyncio
import json
import os
import queue
import threading
import time
from collections import deque
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Any

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from . import config as cfg
from .acquisition import ACTUATOR_CHANNEL, SETPOINT_CHANNEL, BoundedSampleChannel, LogWriter
from .control import FfGains, PidGains
from .engine import Command, Lifecycle, Supervisor
from .engine.kernel import warmup

COMMAND_TYPES = ("configure", "start", "stop", "hold", "resume", "estop", "set_gains", "set_limits")
FRAME_VALUES_MAX = 256
SUB_BUFFER_VALUES = 8192
LOG_CHANNEL_CAPACITY = 1 << 20


class Subscription:
    """Per-client, per-(station, channel) bounded telemetry buffer."""

    def __init__(self, station: int, channel: int, decimation: int):
        self.station = station
        self.channel = channel
        self.decimation = decimation
        self.buf: deque[tuple[int, float]] = deque()
        self.dropped = 0
        self.lock = threading.Lock()

    def offer(self, ticks, values) -> None:
        with self.lock:
            for t, v in zip(ticks, values):
                if t % self.decimation == 0:
                    if len(self.buf) >= SUB_BUFFER_VALUES:
                        self.buf.popleft()
                        self.dropped += 1
                    self.buf.append((int(t), float(v)))

    def take_frames(self) -> list[dict]:
        """Drain pending values into frames of consecutive ticks (<= 256 values)."""
        frames: list[dict] = []
        with self.lock:
            while self.buf:
                t0, v0 = self.buf.popleft()
                ticks = [t0]
                values = [v0]
                while self.buf and len(values) < FRAME_VALUES_MAX:
                    t, v = self.buf[0]
                    if t != ticks[-1] + self.decimation:
                        break
                    self.buf.popleft()
                    ticks.append(t)
                    values.append(v)
                frame = {
                    "type": "samples",
                    "station": self.station,
                    "channel": self.channel,
                    "t0_tick": t0,
                    "decimation": self.decimation,
                    "values": values,
                }
                if self.dropped:
                    frame["dropped"] = self.dropped
                    self.dropped = 0
                frames.append(frame)
        return frames


class TelemetryHub:
    """Fans engine sample blocks and status changes out to subscriptions."""

    def __init__(self) -> None:
        self._subs: set[Subscription] = set()
        self._lock = threading.Lock()
        self._status: dict[int, tuple[int, dict]] = {}
        self._version = 0

    def subscribe(self, sub: Subscription) -> None:
        with self._lock:
            self._subs.add(sub)

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            self._subs.discard(sub)

    def publish_samples(self, station: int, ticks, channels, raws, engs) -> None:
        with self._lock:
            subs = [s for s in self._subs if s.station == station]
        for sub in subs:
            mask = channels == sub.channel
            if mask.any():
                sub.offer(ticks[mask], engs[mask])

    def publish_status(self, obj: dict) -> None:
        with self._lock:
            self._version += 1
            self._status[obj["station"]] = (self._version, dict(obj))

    def status_since(self, version: int) -> tuple[int, list[dict]]:
        with self._lock:
            out = [dict(o) for v, o in sorted(self._status.values(), key=lambda x: x[0]) if v > version]
            return self._version, out


class Runtime:
    """Engine thread + supervisor + telemetry hub + optional file logging."""

    def __init__(
        self,
        supervisor: Supervisor,
        out_dir: str | None = None,
        realtime_factor: float = 1.0,
        tcp_port: int | None = None,
        host: str = "127.0.0.1",
    ):
        self.supervisor = supervisor
        self.hub = TelemetryHub()
        self.out_dir = out_dir
        self.realtime_factor = realtime_factor
        self.tcp_port = tcp_port
        self.host = host
        self.token = os.environ.get("MTCTL_TOKEN")
        self.commands: "queue.Queue[tuple[Command, Any]]" = queue.Queue()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._writer_thread: threading.Thread | None = None
        self._anchors: dict[int, tuple[float, int]] = {}
        self._channels: dict[int, BoundedSampleChannel] = {}
        self._writers: dict[int, LogWriter] = {}
        supervisor.status_listeners.append(self.hub.publish_status)
        for st in supervisor.stations:
            self.hub.publish_status(st.status_obj())

    # -- command path -------------------------------------------------------

    def submit(self, cmd: Command) -> "queue.Queue[Any]":
        """Enqueue a command for the engine thread; returns a one-shot reply queue."""
        reply: "queue.Queue[Any]" = queue.Queue(maxsize=1)
        self.commands.put((cmd, reply))
        return reply

    # -- engine thread ------------------------------------------------------

    def start(self) -> None:
        warmup()
        self._stop.clear()
        self._thread = threading.Thread(target=self._engine_loop, name="mtctl-engine", daemon=True)
        self._thread.start()
        if self.out_dir is not None:
            self._writer_thread = threading.Thread(
                target=self._writer_loop, name="mtctl-writer", daemon=True
            )
            self._writer_thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
        if self._writer_thread is not None:
            self._writer_thread.join(timeout=5)
        self._drain_writers()
        for w in self._writers.values():
            w.close()

    def _drain_commands(self) -> None:
        while True:
            try:
                cmd, reply = self.commands.get_nowait()
            except queue.Empty:
                return
            result = self.supervisor.apply_command(cmd)
            try:
                reply.put_nowait(result)
            except queue.Full:  # pragma: no cover - one-shot queue
                pass

    def _engine_loop(self) -> None:
        sup = self.supervisor
        rate = sup.tick_rate_hz
        rtf = self.realtime_factor
        batch = max(1, rate // 100) if rtf > 0 else 65536
        while not self._stop.is_set():
            self._drain_commands()
            advanced = 0
            now = time.perf_counter()
            for st in sup.active_stations():
                if st.index not in self._anchors:
                    self._anchors[st.index] = (now, st.tick_count)
                    if self.out_dir is not None and st.index not in self._writers:
                        path = Path(self.out_dir) / f"station{st.index}_serve_{int(time.time())}.mtlog"
                        Path(self.out_dir).mkdir(parents=True, exist_ok=True)
                        self._writers[st.index] = LogWriter(path, rate)
                        self._channels[st.index] = BoundedSampleChannel(LOG_CHANNEL_CAPACITY)
                n = batch
                if rtf > 0:
                    wall0, tick0 = self._anchors[st.index]
                    target = tick0 + int((now - wall0) * rate * rtf)
                    n = min(batch, target - st.tick_count)
                if n <= 0:
                    continue
                res = st.run_ticks(n)
                advanced += res.ticks_done
                self.hub.publish_samples(st.index, res.ticks, res.channels, res.raws, res.engs)
                ch = self._channels.get(st.index)
                if ch is not None:
                    ch.push_block(res.ticks, res.channels, res.raws, res.engs)
                if res.event is not None or res.status != 0:
                    self.hub.publish_status(st.status_obj())
            for idx in list(self._anchors):
                if self.supervisor.stations[idx].lifecycle not in (Lifecycle.RUNNING, Lifecycle.HOLDING):
                    del self._anchors[idx]
            if advanced == 0:
                # idle: block briefly on the queue so commands wake us immediately
                try:
                    cmd, reply = self.commands.get(timeout=0.002)
                except queue.Empty:
                    continue
                result = self.supervisor.apply_command(cmd)
                reply.put_nowait(result)

    def _writer_loop(self) -> None:
        while not self._stop.is_set():
            self._drain_writers()
            time.sleep(0.05)

    def _drain_writers(self) -> None:
        for idx, ch in list(self._channels.items()):
            writer = self._writers.get(idx)
            for ticks, chans, raws, engs in ch.drain():
                if writer is not None:
                    writer.append_arrays(idx, ticks, chans, raws, engs)


def build_runtime(
    machine: cfg.MachineConfig | None = None,
    tests: list[cfg.TestConfig] | None = None,
    out_dir: str | None = None,
    realtime_factor: float = 1.0,
    tcp_port: int | None = None,
    host: str = "127.0.0.1",
) -> Runtime:
    if machine is not None:
        sup = Supervisor.from_configs(machine, tests)
    else:
        sup = Supervisor()
    return Runtime(
        sup, out_dir=out_dir, realtime_factor=realtime_factor, tcp_port=tcp_port, host=host
    )


# ---------------------------------------------------------------------------
# message handling (shared by WebSocket and TCP sessions)


class Session:
    """One client connection: auth state, subscriptions, reply plumbing."""

    def __init__(self, runtime: Runtime):
        self.runtime = runtime
        self.authed = runtime.token is None
        self.subs: dict[tuple[int, int], Subscription] = {}
        self.status_version = 0

    def close(self) -> None:
        for sub in self.subs.values():
            self.runtime.hub.unsubscribe(sub)
        self.subs.clear()


def _err(seq: Any, code: str, detail: Any = None) -> dict:
    out = {"type": "err", "seq": seq, "code": code}
    if detail is not None:
        out["detail"] = detail
    return out


def _parse_gains(payload: dict) -> tuple[PidGains | None, FfGains | None]:
    pid = None
    ff = None
    pid_keys = {"kp", "ki", "kd", "out_min", "out_max"}
    ff_keys = {"kff_s", "kff_v"}
    if pid_keys & payload.keys():
        pid = PidGains(
            kp=float(payload.get("kp", 0.0)),
            ki=float(payload.get("ki", 0.0)),
            kd=float(payload.get("kd", 0.0)),
            out_min=float(payload.get("out_min", -1.0)),
            out_max=float(payload.get("out_max", 1.0)),
        )
    if ff_keys & payload.keys():
        ff = FfGains(
            kff_s=float(payload.get("kff_s", 0.0)), kff_v=float(payload.get("kff_v", 0.0))
        )
    return pid, ff


async def handle_message(session: Session, msg: Any) -> list[dict]:
    """Validate and route one client message; always returns the replies to send."""
    if not isinstance(msg, dict) or not isinstance(msg.get("type"), str):
        return [_err(None, "unknown_type")]
    seq = msg.get("seq")
    mtype = msg["type"]

    if mtype == "auth":
        if session.runtime.token is None or msg.get("token") == session.runtime.token:
            session.authed = True
            return [{"type": "ack", "seq": seq}]
        return [_err(seq, "unauthorized")]
    if not session.authed:
        return [_err(seq, "unauthorized")]

    runtime = session.runtime
    sup = runtime.supervisor

    if mtype in ("subscribe", "unsubscribe"):
        station = msg.get("station")
        channel = msg.get("channel")
        if not isinstance(station, int) or not 0 <= station < len(sup.stations):
            return [_err(seq, "bad_station", station)]
        if not isinstance(channel, int):
            return [_err(seq, "bad_channel", channel)]
        if mtype == "unsubscribe":
            sub = session.subs.pop((station, channel), None)
            if sub is not None:
                runtime.hub.unsubscribe(sub)
            return [{"type": "ack", "seq": seq}]
        st = sup.stations[station]
        if st.station_cfg is None:
            return [_err(seq, "bad_station", "station not configured")]
        valid_channels = {ch.channel_id for ch in st.station_cfg.sensor_channels}
        valid_channels |= {SETPOINT_CHANNEL, ACTUATOR_CHANNEL}
        if channel not in valid_channels:
            return [_err(seq, "bad_channel", channel)]
        log_decim = st.test_cfg.log_decimation
        decimation = msg.get("decimation", log_decim)
        if (
            not isinstance(decimation, int)
            or decimation < log_decim
            or decimation % log_decim != 0
        ):
            return [
                _err(seq, "bad_decimation", f"must be a multiple of the station's log_decimation {log_decim}")
            ]
        sub = Subscription(station, channel, decimation)
        old = session.subs.pop((station, channel), None)
        if old is not None:
            runtime.hub.unsubscribe(old)
        session.subs[(station, channel)] = sub
        runtime.hub.subscribe(sub)
        return [{"type": "ack", "seq": seq}]

    if mtype not in COMMAND_TYPES:
        return [_err(seq, "unknown_type", mtype)]

    station = msg.get("station", 0)
    if mtype != "estop" and (not isinstance(station, int) or not 0 <= station < len(sup.stations)):
        return [_err(seq, "bad_station", station)]

    payload: Any = None
    if mtype == "configure":
        body = msg.get("payload")
        if not isinstance(body, dict) or "station" not in body or "test" not in body:
            return [_err(seq, "bad_payload", "configure payload needs 'station' and 'test'")]
        violations: list[str] = []
        try:
            station_cfg = cfg.parse_station(body["station"], "station", violations)
            test_cfg = cfg.parse_test(body["test"], "test", violations)
        except cfg.ConfigError as exc:
            return [_err(seq, "validation", [str(exc)])]
        if violations:
            return [_err(seq, "validation", violations)]
        payload = (station_cfg, test_cfg)
    elif mtype == "set_gains":
        body = msg.get("payload")
        if not isinstance(body, dict):
            return [_err(seq, "bad_payload", "set_gains payload must be an object")]
        try:
            payload = _parse_gains(body)
        except (TypeError, ValueError) as exc:
            return [_err(seq, "bad_payload", str(exc))]
    elif mtype == "set_limits":
        body = msg.get("payload")
        if not isinstance(body, dict) or not isinstance(body.get("limits"), list):
            return [_err(seq, "bad_payload", "set_limits payload needs a 'limits' array")]
        try:
            limits = tuple(
                cfg.ChannelLimit(
                    channel_id=int(l["channel_id"]), min=float(l["min"]), max=float(l["max"])
                )
                for l in body["limits"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            return [_err(seq, "bad_payload", str(exc))]
        payload = limits

    cmd = Command(kind=mtype, station=station if isinstance(station, int) else 0, payload=payload, seq=seq or 0)
    reply_q = runtime.submit(cmd)
    loop = asyncio.get_running_loop()
    try:
        result = await loop.run_in_executor(None, lambda: reply_q.get(timeout=10.0))
    except queue.Empty:  # pragma: no cover - engine thread wedged
        return [_err(seq, "timeout")]
    reply = {"type": "ack", "seq": seq} if result.ok else _err(seq, result.code or "error", result.detail)
    if result.station is not None:
        reply["station"] = result.station
    if result.lifecycle is not None:
        reply["lifecycle"] = result.lifecycle
    return [reply]


def session_flush(session: Session) -> list[dict]:
    """Pending telemetry for one client: status changes first, then sample frames."""
    version, statuses = session.runtime.hub.status_since(session.status_version)
    session.status_version = version
    out: list[dict] = [dict(s, type="status") for s in statuses]
    for sub in list(session.subs.values()):
        out.extend(sub.take_frames())
    return out


# ---------------------------------------------------------------------------
# transports


def create_app(runtime: Runtime) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        runtime.start()
        tcp_server = None
        if runtime.tcp_port is not None:
            tcp_server = await asyncio.start_server(
                lambda r, w: _tcp_session(runtime, r, w), runtime.host, runtime.tcp_port
            )
        yield
        if tcp_server is not None:
            tcp_server.close()
            await tcp_server.wait_closed()
        runtime.stop()

    app = FastAPI(lifespan=lifespan)

    @app.get("/health")
    async def health() -> dict:
        return {"ok": True, "stations": len(runtime.supervisor.stations)}

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket) -> None:
        await ws.accept()
        session = Session(runtime)
        token = ws.query_params.get("token")
        if token is not None and runtime.token is not None and token == runtime.token:
            session.authed = True

        async def flusher() -> None:
            while True:
                for frame in session_flush(session):
                    await ws.send_text(json.dumps(frame))
                await asyncio.sleep(0.05)

        flush_task = asyncio.create_task(flusher())
        try:
            while True:
                text = await ws.receive_text()
                try:
                    msg = json.loads(text)
                except json.JSONDecodeError:
                    msg = None
                for reply in await handle_message(session, msg):
                    await ws.send_text(json.dumps(reply))
        except WebSocketDisconnect:
            pass
        finally:
            flush_task.cancel()
            session.close()

    dist = os.environ.get(
        "MTCTL_CONSOLE_DIST", str(Path(__file__).resolve().parents[2] / "frontend" / "dist")
    )
    if Path(dist).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=dist, html=True), name="console")

    return app


async def _tcp_session(runtime: Runtime, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
    """Line-delimited JSON with the same message vocabulary as /ws."""
    session = Session(runtime)

    async def flusher() -> None:
        while True:
            for frame in session_flush(session):
                writer.write((json.dumps(frame) + "\n").encode())
            await writer.drain()
            await asyncio.sleep(0.05)

    flush_task = asyncio.create_task(flusher())
    try:
        while True:
            line = await reader.readline()
            if not line:
                break
            try:
                msg = json.loads(line)
            except json.JSONDecodeError:
                msg = None
            for reply in await handle_message(session, msg):
                writer.write((json.dumps(reply) + "\n").encode())
            await writer.drain()
    except (ConnectionResetError, asyncio.IncompleteReadError):  # pragma: no cover
        pass
    finally:
        flush_task.cancel()
        session.close()
        writer.close()
