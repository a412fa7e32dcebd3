// Operator console: station grid, start/hold/resume/stop, live strip charts,
// gain editor, and an always-live e-stop. The DOM document and WebSocket
// factory are injected so the whole app runs under jsdom in tests.

import { StripChart } from "./chart.js";
import { CommandReply, ConsoleClient, WsFactory } from "./client.js";
import { ACTUATOR_CHANNEL, Err, SETPOINT_CHANNEL } from "./protocol.js";
import { CHART_WINDOW_SECONDS, StationView, lifecycleBadgeClass } from "./station.js";

const N_STATIONS = 16;
const TICK_RATE = 100000;
const DEFAULT_DECIMATION = 1000;

const DEFAULT_CONFIG_PAYLOAD = {
  station: {
    actuator_kind: "dac_servo",
    sensor_channels: [
      { channel_id: 0, quantity: "force", fsr: 10.0, noise_sigma: 1e-4 },
      { channel_id: 1, quantity: "displacement", fsr: 5.0 },
    ],
  },
  test: {
    control_mode: "closed_loop",
    control_variable: "force",
    pid: { kp: 0.5, ki: 20.0 },
    program: [
      { kind: "sine", amplitude: 1.0, mean: 2.0, frequency_hz: 5.0, cycles: 1000000 },
    ],
    log_decimation: 100,
  },
};

export interface ConsoleApp {
  client: ConsoleClient;
  stations: StationView[];
  selected: () => number;
  select: (i: number) => void;
  pvChannel: () => number;
  dispose: () => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function mountConsole(
  doc: Document,
  root: HTMLElement,
  wsFactory: WsFactory,
  url: string,
  token: string | null = null,
): ConsoleApp {
  const stations: StationView[] = [];
  for (let i = 0; i < N_STATIONS; i++) stations.push(new StationView(i, TICK_RATE));
  let selectedStation = 0;
  let pvChannel = 0;

  // ---- layout -------------------------------------------------------------
  root.innerHTML = "";
  const header = el(doc, "header");
  const connDot = el(doc, "span", "conn-dot", "disconnected");
  const title = el(doc, "h1", undefined, "mtctl operator console");
  const estopBtn = el(doc, "button", "estop", "E-STOP");
  estopBtn.id = "estop";
  header.append(title, connDot, estopBtn);

  const grid = el(doc, "div", "grid");
  grid.id = "station-grid";
  const cards: {
    badge: HTMLSpanElement;
    tickLabel: HTMLSpanElement;
    banner: HTMLDivElement;
    buttons: Record<string, HTMLButtonElement>;
  }[] = [];

  const detail = el(doc, "section", "detail");
  const detailTitle = el(doc, "h2", undefined, "station 0");
  const canvas = el(doc, "canvas");
  canvas.id = "chart";
  canvas.width = 860;
  canvas.height = 280;
  // headless DOMs (jsdom) have no 2d context; charts degrade to data-only rings
  const headless =
    typeof navigator !== "undefined" && /jsdom/i.test(navigator.userAgent ?? "");
  let chart: StripChart | null = null;
  if (!headless) {
    try {
      chart = new StripChart(canvas);
    } catch {
      chart = null;
    }
  }

  const gainsForm = el(doc, "div", "gains");
  const gainInputs: Record<string, HTMLInputElement> = {};
  for (const g of ["kp", "ki", "kd"]) {
    const label = el(doc, "label", undefined, g);
    const input = el(doc, "input");
    input.id = `gain-${g}`;
    input.value = "0";
    gainInputs[g] = input;
    label.append(input);
    gainsForm.append(label);
  }
  const applyGains = el(doc, "button", undefined, "Apply gains");
  applyGains.id = "apply-gains";
  gainsForm.append(applyGains);

  const configBox = el(doc, "div", "config");
  const configText = el(doc, "textarea");
  configText.id = "config-json";
  configText.rows = 10;
  configText.value = JSON.stringify(DEFAULT_CONFIG_PAYLOAD, null, 2);
  const configureBtn = el(doc, "button", undefined, "Configure station");
  configureBtn.id = "configure";
  configBox.append(configText, configureBtn);

  const toasts = el(doc, "div", "toasts");
  toasts.id = "toasts";

  detail.append(detailTitle, canvas, gainsForm, configBox);
  root.append(header, grid, detail, toasts);

  function toast(text: string): void {
    const t = el(doc, "div", "toast", text);
    toasts.append(t);
    setTimeout(() => t.remove(), 8000);
  }

  function errText(e: Err): string {
    const detailStr = e.detail === undefined ? "" : `: ${JSON.stringify(e.detail)}`;
    return `${e.code}${detailStr}`;
  }

  // ---- per-station cards ----------------------------------------------------
  for (let i = 0; i < N_STATIONS; i++) {
    const card = el(doc, "div", "card");
    card.id = `station-${i}`;
    const head = el(doc, "div", "card-head");
    const name = el(doc, "span", "name", `S${i}`);
    const badge = el(doc, "span", "badge idle", "Idle");
    const tickLabel = el(doc, "span", "tick", "t=0");
    head.append(name, badge, tickLabel);
    const banner = el(doc, "div", "fault-banner");
    banner.hidden = true;
    const row = el(doc, "div", "btn-row");
    const buttons: Record<string, HTMLButtonElement> = {};
    for (const kind of ["start", "hold", "resume", "stop"]) {
      const b = el(doc, "button", undefined, kind);
      b.id = `${kind}-${i}`;
      buttons[kind] = b;
      row.append(b);
    }
    card.append(head, banner, row);
    const idx = i;
    card.addEventListener("click", (ev) => {
      // button presses act on the station; only card body clicks select it
      if ((ev.target as HTMLElement).tagName === "BUTTON") return;
      select(idx);
    });
    grid.append(card);
    cards.push({ badge, tickLabel, banner, buttons });
  }

  function renderStatus(i: number): void {
    const sv = stations[i];
    const c = cards[i];
    c.badge.className = lifecycleBadgeClass(sv.lifecycle);
    c.badge.textContent = sv.lifecycle;
    c.tickLabel.textContent = `t=${sv.tick}`;
    if (sv.fault) {
      c.banner.hidden = false;
      c.banner.textContent = `${sv.fault.kind}${
        sv.fault.channel_id !== null ? ` ch${sv.fault.channel_id}` : ""
      } @ tick ${sv.fault.tick}`;
      c.banner.className = "fault-banner active";
    } else {
      c.banner.hidden = true;
      c.banner.textContent = "";
      c.banner.className = "fault-banner";
    }
  }

  // ---- client ---------------------------------------------------------------
  const client = new ConsoleClient(
    url,
    {
      status: (frame) => {
        stations[frame.station].applyStatus(frame);
        renderStatus(frame.station);
      },
      samples: (frame) => {
        stations[frame.station].applySamples(frame);
      },
      connection: (up) => {
        connDot.textContent = up ? "connected" : "disconnected";
        connDot.className = up ? "conn-dot up" : "conn-dot";
        if (!up) for (const sv of stations) sv.resetOnReconnect();
      },
      protocolError: (e) => toast(errText(e)),
    },
    wsFactory,
    token,
  );

  // a button disables itself until its command acks; e-stop never disables
  function guarded(btn: HTMLButtonElement, fn: () => Promise<CommandReply>): void {
    btn.addEventListener("click", () => {
      btn.disabled = true;
      fn()
        .catch((e: Error) => toast(e.message))
        .finally(() => {
          btn.disabled = false;
        });
    });
  }

  for (let i = 0; i < N_STATIONS; i++) {
    const idx = i;
    guarded(cards[i].buttons.start, () => client.start(idx));
    guarded(cards[i].buttons.hold, () => client.hold(idx));
    guarded(cards[i].buttons.resume, () => client.resume(idx));
    guarded(cards[i].buttons.stop, () => client.stop(idx));
  }
  estopBtn.addEventListener("click", () => {
    // bypasses the disable logic: the e-stop is always live
    client.estop().catch((e: Error) => toast(e.message));
  });
  guarded(configureBtn, async () => {
    let payload: unknown;
    try {
      payload = JSON.parse(configText.value);
    } catch (e) {
      toast(`config JSON: ${(e as Error).message}`);
      throw e;
    }
    const reply = await client.configure(selectedStation, payload);
    if (reply.type === "ack") {
      await subscribeSelected();
    }
    return reply;
  });
  guarded(applyGains, () =>
    client.setGains(selectedStation, {
      kp: Number(gainInputs.kp.value),
      ki: Number(gainInputs.ki.value),
      kd: Number(gainInputs.kd.value),
    }),
  );

  async function subscribeSelected(): Promise<void> {
    await client.subscribe(selectedStation, pvChannel, DEFAULT_DECIMATION).catch(() => undefined);
    await client
      .subscribe(selectedStation, SETPOINT_CHANNEL, DEFAULT_DECIMATION)
      .catch(() => undefined);
  }

  function select(i: number): void {
    selectedStation = i;
    detailTitle.textContent = `station ${i}`;
    void subscribeSelected();
  }

  const redraw = setInterval(() => {
    if (!chart) return;
    const sv = stations[selectedStation];
    chart.draw(
      [
        { points: sv.ring(pvChannel).snapshot(), color: "#53b1fd", label: `pv ch${pvChannel}` },
        { points: sv.setpointRing.snapshot(), color: "#f97066", label: "setpoint" },
      ],
      CHART_WINDOW_SECONDS * TICK_RATE,
      TICK_RATE,
    );
  }, 100);

  return {
    client,
    stations,
    selected: () => selectedStation,
    select,
    pvChannel: () => pvChannel,
    dispose: () => {
      clearInterval(redraw);
      client.close();
    },
  };
}
