// Wire protocol: JSON messages over one WebSocket (or line-JSON TCP).
// Every command carries a seq and receives exactly one ack/err echoing it;
// telemetry (status/samples) flows independently.

export type Lifecycle =
  | "Idle"
  | "Configured"
  | "Running"
  | "Holding"
  | "Completed"
  | "Faulted";

export interface FaultInfo {
  kind: string;
  station: number;
  tick: number;
  channel_id: number | null;
  value: number;
}

export interface StatusFrame {
  type: "status";
  station: number;
  lifecycle: Lifecycle;
  tick: number;
  fault: FaultInfo | null;
}

export interface SamplesFrame {
  type: "samples";
  station: number;
  channel: number;
  t0_tick: number;
  decimation: number;
  values: number[];
  dropped?: number;
}

export interface Ack {
  type: "ack";
  seq: number;
  station?: number;
  lifecycle?: Lifecycle;
}

export interface Err {
  type: "err";
  seq: number | null;
  code: string;
  detail?: unknown;
  station?: number;
  lifecycle?: Lifecycle;
}

export type ServerMessage = StatusFrame | SamplesFrame | Ack | Err;

export interface GainsPayload {
  kp?: number;
  ki?: number;
  kd?: number;
  out_min?: number;
  out_max?: number;
  kff_s?: number;
  kff_v?: number;
}

export const SETPOINT_CHANNEL = 254;
export const ACTUATOR_CHANNEL = 255;

// Command builders: each UI action maps to exactly one documented message.
export const commands = {
  auth: (seq: number, token: string) => ({ type: "auth", token, seq }),
  configure: (seq: number, station: number, payload: unknown) => ({
    type: "configure",
    station,
    seq,
    payload,
  }),
  start: (seq: number, station: number) => ({ type: "start", station, seq }),
  stop: (seq: number, station: number) => ({ type: "stop", station, seq }),
  hold: (seq: number, station: number) => ({ type: "hold", station, seq }),
  resume: (seq: number, station: number) => ({ type: "resume", station, seq }),
  estop: (seq: number) => ({ type: "estop", seq }),
  setGains: (seq: number, station: number, payload: GainsPayload) => ({
    type: "set_gains",
    station,
    seq,
    payload,
  }),
  subscribe: (seq: number, station: number, channel: number, decimation: number) => ({
    type: "subscribe",
    station,
    channel,
    decimation,
    seq,
  }),
  unsubscribe: (seq: number, station: number, channel: number) => ({
    type: "unsubscribe",
    station,
    channel,
    seq,
  }),
} as const;

export function parseServerMessage(text: string): ServerMessage | null {
  let obj: unknown;
  try {
    obj = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null) return null;
  const msg = obj as Record<string, unknown>;
  switch (msg.type) {
    case "status":
      if (typeof msg.station === "number" && typeof msg.lifecycle === "string") {
        return msg as unknown as StatusFrame;
      }
      return null;
    case "samples":
      if (
        typeof msg.station === "number" &&
        typeof msg.channel === "number" &&
        typeof msg.t0_tick === "number" &&
        typeof msg.decimation === "number" &&
        Array.isArray(msg.values)
      ) {
        return msg as unknown as SamplesFrame;
      }
      return null;
    case "ack":
      return msg as unknown as Ack;
    case "err":
      return msg as unknown as Err;
    default:
      return null;
  }
}
