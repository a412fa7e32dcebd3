// Hand-rolled canvas strip chart: PV vs setpoint over the last 10 s.
// Decimated engineering values only; gaps (dropped frames) break the stroke
// and draw a hatch marker instead of interpolating.

import { ChartPoint } from "./ring.js";

export interface Series {
  points: readonly ChartPoint[];
  color: string;
  label: string;
}

export class StripChart {
  private ctx: CanvasRenderingContext2D;
  private canvas: HTMLCanvasElement;

  constructor(canvas: HTMLCanvasElement) {
    this.canvas = canvas;
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("no 2d context");
    this.ctx = ctx;
  }

  draw(series: Series[], windowTicks: number, tickRateHz: number): void {
    const { ctx, canvas } = this;
    const w = canvas.width;
    const h = canvas.height;
    ctx.clearRect(0, 0, w, h);
    ctx.fillStyle = "#10151c";
    ctx.fillRect(0, 0, w, h);

    let tEnd = 0;
    let lo = Infinity;
    let hi = -Infinity;
    for (const s of series) {
      for (const p of s.points) {
        if (p.tick > tEnd) tEnd = p.tick;
        if (p.value < lo) lo = p.value;
        if (p.value > hi) hi = p.value;
      }
    }
    if (!isFinite(lo) || !isFinite(hi)) return;
    if (hi - lo < 1e-9) {
      hi += 0.5;
      lo -= 0.5;
    }
    const pad = (hi - lo) * 0.08;
    hi += pad;
    lo -= pad;
    const t0 = tEnd - windowTicks;

    const x = (tick: number) => ((tick - t0) / windowTicks) * w;
    const y = (v: number) => h - ((v - lo) / (hi - lo)) * h;

    // horizontal grid + labels
    ctx.strokeStyle = "#2a3442";
    ctx.fillStyle = "#8ba0b8";
    ctx.font = "10px monospace";
    ctx.lineWidth = 1;
    for (let i = 0; i <= 4; i++) {
      const gy = (h * i) / 4;
      ctx.beginPath();
      ctx.moveTo(0, gy);
      ctx.lineTo(w, gy);
      ctx.stroke();
      const val = hi - ((hi - lo) * i) / 4;
      ctx.fillText(val.toPrecision(4), 4, gy + 10);
    }
    // seconds axis
    const seconds = windowTicks / tickRateHz;
    for (let sMark = 0; sMark <= seconds; sMark += 2) {
      const gx = (sMark / seconds) * w;
      ctx.fillText(`-${(seconds - sMark).toFixed(0)}s`, gx + 2, h - 4);
    }

    for (const s of series) {
      ctx.strokeStyle = s.color;
      ctx.lineWidth = 1.5;
      ctx.beginPath();
      let penDown = false;
      for (const p of s.points) {
        if (p.gapBefore) {
          penDown = false;
          // gap marker: short vertical hatch at the resume point
          ctx.stroke();
          ctx.save();
          ctx.strokeStyle = "#e0b341";
          ctx.beginPath();
          ctx.moveTo(x(p.tick), 0);
          ctx.lineTo(x(p.tick), h);
          ctx.setLineDash([2, 6]);
          ctx.stroke();
          ctx.restore();
          ctx.beginPath();
        }
        if (!penDown) {
          ctx.moveTo(x(p.tick), y(p.value));
          penDown = true;
        } else {
          ctx.lineTo(x(p.tick), y(p.value));
        }
      }
      ctx.stroke();
    }

    // legend
    let lx = w - 10;
    ctx.textAlign = "right";
    for (const s of [...series].reverse()) {
      ctx.fillStyle = s.color;
      ctx.fillText(s.label, lx, 12);
      lx -= ctx.measureText(s.label).width + 16;
    }
    ctx.textAlign = "left";
  }
}
