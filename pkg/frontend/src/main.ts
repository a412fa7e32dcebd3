// Browser entry point: wire the console to the server that served this page.

import { mountConsole } from "./app.js";

function wsUrl(): string {
  const proto = location.protocol === "https:" ? "wss" : "ws";
  return `${proto}://${location.host}/ws`;
}

window.addEventListener("load", () => {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app root");
  const token = new URLSearchParams(location.search).get("token");
  const app = mountConsole(
    document,
    root,
    (url) => new WebSocket(url),
    wsUrl(),
    token,
  );
  void app.client.connect().catch((e) => console.error("connect failed", e));
});
