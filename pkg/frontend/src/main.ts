// Bootstrap: wires the flow, rendering, dashboard, and keyboard input.

import { createApi } from "./api.js";
import { renderDashboard } from "./dashboard.js";
import { StudyFlow } from "./state.js";
import type { Birads } from "./types.js";
import { BIRADS_SCORES } from "./types.js";
import { renderApp } from "./view.js";

export function bootstrap(root: HTMLElement, baseUrl = ""): StudyFlow {
  const api = createApi(baseUrl);
  const flow = new StudyFlow(api);
  const caseRoot = document.createElement("div");
  caseRoot.id = "case-root";
  const dashRoot = document.createElement("div");
  dashRoot.id = "dashboard-root";
  root.appendChild(caseRoot);
  root.appendChild(dashRoot);

  const handlers = {
    onChoose: (score: Birads) => flow.choose(score),
    onSubmit: () => void flow.submit(),
    onBeginStageTwo: () => void flow.beginStageTwo(),
    onShowDashboard: () => {
      if (flow.state.sessionId) {
        api.metrics(flow.state.sessionId)
          .then((m) => renderDashboard(dashRoot, m))
          .catch((err) => {
            dashRoot.textContent = `metrics unavailable: ${String(err)}`;
          });
      }
    },
  };

  flow.onChange((state) => renderApp(caseRoot, state, handlers));

  // keyboard-only completion: digits 1-6 pick a score, Enter submits or
  // advances between stages / to the dashboard
  const onKey = (ev: KeyboardEvent) => {
    const idx = Number.parseInt(ev.key, 10) - 1;
    if (idx >= 0 && idx < BIRADS_SCORES.length) {
      flow.choose(BIRADS_SCORES[idx]);
    } else if (ev.key === "Enter") {
      if (flow.state.phase === "reading") void flow.submit();
      else if (flow.state.phase === "stage-done") void flow.beginStageTwo();
      else if (flow.state.phase === "session-done") handlers.onShowDashboard();
    }
  };
  document.addEventListener("keydown", onKey);
  flow.dispose = () => document.removeEventListener("keydown", onKey);

  renderApp(caseRoot, flow.state, handlers);
  return flow;
}

declare global {
  interface Window {
    studyFlow?: StudyFlow;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const root = document.getElementById("app") as HTMLElement;
  const flow = bootstrap(root);
  window.studyFlow = flow;
  const params = new URLSearchParams(window.location.search);
  const resume = params.get("session");
  const reader = params.get("reader") ?? "reader-1";
  const seed = Number.parseInt(params.get("seed") ?? "0", 10);
  if (resume) {
    void flow.resume(resume);
  } else {
    void flow.start(reader, seed);
  }
}
