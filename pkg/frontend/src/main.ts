/** Browser entry point. Wires SessionFlow to the DOM.
 *
 * Kept free of logic worth testing; everything it calls lives in the
 * pure modules (api/state/render), which the test suite covers without
 * a DOM. Session id persists in localStorage so a reload resumes the
 * same session at the server's cursor.
 */

import { ApiClient } from "./api.js";
import { renderDone, renderError, renderStart, renderStimulus } from "./render.js";
import { SessionFlow } from "./state.js";

const STORAGE_KEY = "dialref.session.v1";

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (root === null) throw new Error("missing #app container");

  const probe = new ApiClient("");
  const config = await probe.getConfig();
  const api = new ApiClient(config.api_base);
  const flow = new SessionFlow(api);

  function paint(): void {
    const phase = flow.phase;
    if (phase.kind === "start") {
      root!.innerHTML = renderStart(config.modes);
    } else if (phase.kind === "active") {
      root!.innerHTML = renderStimulus(phase.stimulus, flow.selection.list());
    } else if (phase.kind === "done") {
      localStorage.removeItem(STORAGE_KEY);
      root!.innerHTML = renderDone(phase.completionCode);
    } else {
      root!.innerHTML = renderError(phase.message);
    }
  }

  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement | null;
    const tile = target?.closest<HTMLElement>("button.tile");
    if (tile?.dataset.imageId && flow.phase.kind === "active") {
      flow.selection.toggle(tile.dataset.imageId, flow.phase.stimulus.multi_select);
      paint();
      return;
    }
    if (target?.closest("#submit") && flow.canSubmit()) {
      void flow.submit().then(paint, (err) => {
        root!.innerHTML = renderError(String(err));
      });
    }
  });

  root.addEventListener("submit", (event) => {
    const form = event.target as HTMLElement | null;
    if (form?.id !== "start-form") return;
    event.preventDefault();
    const participant = (document.getElementById("participant") as HTMLInputElement).value.trim();
    const mode = (document.getElementById("mode") as HTMLSelectElement).value;
    if (!participant) return;
    void flow
      .start(mode as "independent" | "holistic", participant)
      .then(() => {
        if (flow.sessionId !== null) localStorage.setItem(STORAGE_KEY, flow.sessionId);
        paint();
      })
      .catch((err) => {
        root!.innerHTML = renderError(String(err));
      });
  });

  const saved = localStorage.getItem(STORAGE_KEY);
  if (saved !== null) {
    const resumed = await flow.resume(saved);
    if (!resumed) localStorage.removeItem(STORAGE_KEY);
  }
  paint();
}

void boot().catch((err) => {
  const root = document.getElementById("app");
  if (root !== null) root.innerHTML = renderError(String(err));
});
