// Chart ring buffer: the last windowTicks of one (station, channel) stream.
// Points arrive as frames of values at t0 + i*decimation; a frame's `dropped`
// count becomes a gap marker so charts never interpolate across lost data.

export interface ChartPoint {
  tick: number;
  value: number;
  gapBefore: boolean;
}

export class SampleRing {
  readonly windowTicks: number;
  private points: ChartPoint[] = [];
  private lastTick = -1;
  private pendingGap = false;
  droppedTotal = 0;
  discardedFrames = 0;

  constructor(windowTicks: number) {
    this.windowTicks = windowTicks;
  }

  ingest(t0: number, decimation: number, values: number[], dropped?: number): boolean {
    if (t0 <= this.lastTick) {
      this.discardedFrames += 1; // monotonicity guard: stale frame
      return false;
    }
    if (dropped && dropped > 0) {
      this.droppedTotal += dropped;
      this.pendingGap = true;
    }
    // non-contiguous frames also render as a gap
    if (this.lastTick >= 0 && t0 !== this.lastTick + decimation) {
      this.pendingGap = true;
    }
    for (let i = 0; i < values.length; i++) {
      this.points.push({
        tick: t0 + i * decimation,
        value: values[i],
        gapBefore: i === 0 && this.pendingGap,
      });
    }
    if (values.length > 0) {
      this.pendingGap = false;
      this.lastTick = t0 + (values.length - 1) * decimation;
      const cutoff = this.lastTick - this.windowTicks;
      let drop = 0;
      while (drop < this.points.length && this.points[drop].tick < cutoff) drop++;
      if (drop > 0) this.points.splice(0, drop);
    }
    return true;
  }

  get latestTick(): number {
    return this.lastTick;
  }

  get spanTicks(): number {
    if (this.points.length < 2) return 0;
    return this.points[this.points.length - 1].tick - this.points[0].tick;
  }

  get size(): number {
    return this.points.length;
  }

  snapshot(): readonly ChartPoint[] {
    return this.points;
  }

  clear(): void {
    this.points = [];
    this.lastTick = -1;
    this.pendingGap = false;
  }
}
