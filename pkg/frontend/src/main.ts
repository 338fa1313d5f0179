/** Bootstrap: pick a model, wire the renderer, poll for remote changes. */

import { Client } from "./api.js";
import { App } from "./controller.js";
import { renderApp } from "./render.js";

const POLL_MS = 3000;

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const apiBase = params.get("api") ?? "http://127.0.0.1:8760";
  const client = new Client(apiBase);
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app container");

  const models = await client.listModels();
  if (!models.length) {
    root.textContent =
      "No models loaded. Start the service with --models-dir or POST /models.";
    return;
  }
  const requested = params.get("model");
  const modelId = models.some((m) => m.id === requested)
    ? (requested as string)
    : models[0].id;

  const app = new App(client, modelId, () => renderApp(root, app));
  await app.init();

  window.setInterval(() => {
    app.pollVersion().catch(() => {
      /* transient poll failures are fine */
    });
  }, POLL_MS);
}

boot().catch((error) => {
  const root = document.getElementById("app");
  if (root) root.textContent = `Failed to start: ${error}`;
});
