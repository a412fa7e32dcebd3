// Per-station view state: lifecycle badge, fault banner, chart rings.
// Pure state + reducers; DOM rendering lives in app.ts so tests can drive
// this under node without a browser.

import { FaultInfo, Lifecycle, SETPOINT_CHANNEL, SamplesFrame, StatusFrame } from "./protocol.js";
import { SampleRing } from "./ring.js";

export const CHART_WINDOW_SECONDS = 10;

export interface GainsDraft {
  kp: number;
  ki: number;
  kd: number;
}

export class StationView {
  readonly station: number;
  lifecycle: Lifecycle = "Idle";
  tick = 0;
  fault: FaultInfo | null = null;
  // ring per subscribed channel; SETPOINT_CHANNEL carries the command trace
  readonly rings = new Map<number, SampleRing>();
  gains: GainsDraft = { kp: 0, ki: 0, kd: 0 };
  private windowTicks: number;

  constructor(station: number, tickRateHz = 100000) {
    this.station = station;
    this.windowTicks = CHART_WINDOW_SECONDS * tickRateHz;
  }

  ring(channel: number): SampleRing {
    let r = this.rings.get(channel);
    if (!r) {
      r = new SampleRing(this.windowTicks);
      this.rings.set(channel, r);
    }
    return r;
  }

  applyStatus(frame: StatusFrame): void {
    this.lifecycle = frame.lifecycle;
    this.tick = frame.tick;
    this.fault = frame.fault;
  }

  applySamples(frame: SamplesFrame): boolean {
    return this.ring(frame.channel).ingest(
      frame.t0_tick,
      frame.decimation,
      frame.values,
      frame.dropped,
    );
  }

  // seconds of chart currently buffered on the primary PV channel
  chartSpanSeconds(channel: number, tickRateHz = 100000): number {
    const r = this.rings.get(channel);
    return r ? r.spanTicks / tickRateHz : 0;
  }

  get setpointRing(): SampleRing {
    return this.ring(SETPOINT_CHANNEL);
  }

  resetOnReconnect(): void {
    // truth is rebuilt from status frames; stale chart data would mislead
    for (const r of this.rings.values()) r.clear();
  }
}

export function lifecycleBadgeClass(lc: Lifecycle): string {
  switch (lc) {
    case "Running":
      return "badge running";
    case "Holding":
      return "badge holding";
    case "Faulted":
      return "badge faulted";
    case "Completed":
      return "badge completed";
    case "Configured":
      return "badge configured";
    default:
      return "badge idle";
  }
}
