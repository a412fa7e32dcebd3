// ConsoleClient: one WebSocket to the controller, seq bookkeeping, pending
// acks for button disabling, and fan-out of telemetry to registered handlers.
// The console holds no truth: on (re)connect every view is rebuilt from the
// status frames the server pushes for all stations.

import {
  Ack,
  Err,
  GainsPayload,
  SamplesFrame,
  ServerMessage,
  StatusFrame,
  commands,
  parseServerMessage,
} from "./protocol.js";

export type CommandReply = Ack | Err;

// minimal WebSocket surface so tests can drive the client with `ws` under node;
// handler params stay `any` for assignability from both DOM and ws sockets
export interface WsLike {
  send(data: string): void;
  close(): void;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onopen: ((ev: any) => void) | null;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onclose: ((ev: any) => void) | null;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onmessage: ((ev: any) => void) | null;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onerror: ((ev: any) => void) | null;
}

export type WsFactory = (url: string) => WsLike;

export interface ClientEvents {
  status?: (frame: StatusFrame) => void;
  samples?: (frame: SamplesFrame) => void;
  connection?: (connected: boolean) => void;
  protocolError?: (err: Err) => void;
}

interface Pending {
  resolve: (reply: CommandReply) => void;
  reject: (err: Error) => void;
  timer: ReturnType<typeof setTimeout>;
}

export class ConsoleClient {
  private ws: WsLike | null = null;
  private seq = 0;
  private pending = new Map<number, Pending>();
  private events: ClientEvents;
  private factory: WsFactory;
  private url: string;
  private token: string | null;
  readonly timeoutMs: number;
  connected = false;

  constructor(
    url: string,
    events: ClientEvents,
    factory: WsFactory,
    token: string | null = null,
    timeoutMs = 10000,
  ) {
    this.url = url;
    this.events = events;
    this.factory = factory;
    this.token = token;
    this.timeoutMs = timeoutMs;
  }

  connect(): Promise<void> {
    return new Promise((resolve, reject) => {
      const url = this.token ? `${this.url}?token=${encodeURIComponent(this.token)}` : this.url;
      const ws = this.factory(url);
      this.ws = ws;
      ws.onopen = () => {
        this.connected = true;
        this.events.connection?.(true);
        resolve();
      };
      ws.onerror = () => {
        if (!this.connected) reject(new Error("connect failed"));
      };
      ws.onclose = () => {
        this.connected = false;
        this.events.connection?.(false);
        for (const [, p] of this.pending) {
          clearTimeout(p.timer);
          p.reject(new Error("connection closed"));
        }
        this.pending.clear();
      };
      ws.onmessage = (ev) => {
        const msg = parseServerMessage(String(ev.data));
        if (msg === null) {
          console.warn("malformed frame ignored");
          return;
        }
        this.dispatch(msg);
      };
    });
  }

  close(): void {
    this.ws?.close();
  }

  get pendingCount(): number {
    return this.pending.size;
  }

  private dispatch(msg: ServerMessage): void {
    switch (msg.type) {
      case "status":
        this.events.status?.(msg);
        return;
      case "samples":
        this.events.samples?.(msg);
        return;
      case "ack":
      case "err": {
        const seq = msg.seq;
        const p = seq === null ? undefined : this.pending.get(seq as number);
        if (p) {
          this.pending.delete(seq as number);
          clearTimeout(p.timer);
          p.resolve(msg);
        }
        if (msg.type === "err") this.events.protocolError?.(msg);
        return;
      }
    }
  }

  private sendRaw(obj: { seq: number }): Promise<CommandReply> {
    return new Promise((resolve, reject) => {
      if (!this.ws || !this.connected) {
        reject(new Error("not connected"));
        return;
      }
      const timer = setTimeout(() => {
        this.pending.delete(obj.seq);
        reject(new Error(`command ${obj.seq} timed out`));
      }, this.timeoutMs);
      this.pending.set(obj.seq, { resolve, reject, timer });
      this.ws.send(JSON.stringify(obj));
    });
  }

  nextSeq(): number {
    this.seq += 1;
    return this.seq;
  }

  auth(token: string): Promise<CommandReply> {
    return this.sendRaw(commands.auth(this.nextSeq(), token));
  }

  configure(station: number, payload: unknown): Promise<CommandReply> {
    return this.sendRaw(commands.configure(this.nextSeq(), station, payload));
  }

  start(station: number): Promise<CommandReply> {
    return this.sendRaw(commands.start(this.nextSeq(), station));
  }

  stop(station: number): Promise<CommandReply> {
    return this.sendRaw(commands.stop(this.nextSeq(), station));
  }

  hold(station: number): Promise<CommandReply> {
    return this.sendRaw(commands.hold(this.nextSeq(), station));
  }

  resume(station: number): Promise<CommandReply> {
    return this.sendRaw(commands.resume(this.nextSeq(), station));
  }

  // e-stop bypasses all pending-command gating: always sendable
  estop(): Promise<CommandReply> {
    return this.sendRaw(commands.estop(this.nextSeq()));
  }

  setGains(station: number, payload: GainsPayload): Promise<CommandReply> {
    return this.sendRaw(commands.setGains(this.nextSeq(), station, payload));
  }

  subscribe(station: number, channel: number, decimation: number): Promise<CommandReply> {
    return this.sendRaw(commands.subscribe(this.nextSeq(), station, channel, decimation));
  }

  unsubscribe(station: number, channel: number): Promise<CommandReply> {
    return this.sendRaw(commands.unsubscribe(this.nextSeq(), station, channel));
  }
}
