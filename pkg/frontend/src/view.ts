// DOM rendering. Stage-1 packets arrive without AI fields by service
// contract; the render path additionally never creates the panel
// container unless the packet carries them.

import type { ViewState } from "./state.js";
import type { AiPrediction, Birads } from "./types.js";
import { BIRADS_SCORES } from "./types.js";

export function renderApp(root: HTMLElement, state: ViewState,
                          handlers: {
                            onChoose: (score: Birads) => void;
                            onSubmit: () => void;
                            onBeginStageTwo: () => void;
                            onShowDashboard: () => void;
                          }): void {
  root.textContent = "";
  const { packet, phase } = state;

  if (phase === "idle") {
    root.appendChild(el("p", {}, "Start a session to begin."));
    return;
  }
  if (phase === "error") {
    root.appendChild(el("p", { class: "error" }, `Service error: ${state.lastError}`));
    return;
  }
  if (phase === "stage-done") {
    const btn = el("button", { id: "begin-stage2", "data-testid": "begin-stage2" },
                   "Begin stage 2 (AI-assisted)") as HTMLButtonElement;
    btn.addEventListener("click", handlers.onBeginStageTwo);
    root.appendChild(el("p", {}, "Stage 1 complete."));
    root.appendChild(btn);
    return;
  }
  if (phase === "session-done") {
    const btn = el("button", { id: "show-dashboard", "data-testid": "show-dashboard" },
                   "Show dashboard") as HTMLButtonElement;
    btn.addEventListener("click", handlers.onShowDashboard);
    root.appendChild(el("p", {}, "Both stages complete."));
    root.appendChild(btn);
    return;
  }
  if (!packet || !packet.case_id) return;

  const header = el("div", { class: "case-header" },
                    `Stage ${state.stage} — case ${(packet.index ?? 0) + 1} of ${packet.total}`);
  root.appendChild(header);

  const img = el("img", {
    class: "case-image", id: "case-image",
    src: packet.image_url ?? "", alt: `case ${packet.case_id}`,
  });
  root.appendChild(img);

  if (packet.aux) {
    const aux = el("div", { class: "aux-panel", "data-testid": "aux-panel" });
    aux.appendChild(el("div", {}, `Device: ${packet.aux.device}`));
    aux.appendChild(el("div", {},
      `Lesion area: [${packet.aux.lesion_area.map((v) => v.toFixed(2)).join(", ")}]`));
    aux.appendChild(el("div", { class: "small" }, packet.aux.note));
    root.appendChild(aux);
  }

  if (packet.ai) {
    root.appendChild(renderAiPanel(packet.ai));
  }

  root.appendChild(renderScoreButtons(state, handlers.onChoose));

  const submit = el("button", {
    id: "submit-read", "data-testid": "submit-read",
  }, "Submit") as HTMLButtonElement;
  submit.disabled = state.pendingScore === null;
  submit.addEventListener("click", handlers.onSubmit);
  root.appendChild(submit);

  if (state.lastError) {
    root.appendChild(el("p", { class: "error inline" }, state.lastError));
  }
}

export function renderAiPanel(ai: AiPrediction): HTMLElement {
  const panel = el("div", { class: "ai-panel", "data-testid": "ai-panel" });
  panel.appendChild(el("h3", {}, "AI assessment"));
  panel.appendChild(el("div", { class: "ai-phat", "data-testid": "ai-phat" },
                       `Malignancy probability: ${(ai.p_hat * 100).toFixed(1)}%`));
  const view = ai.views[0];
  if (view) {
    const table = el("table", { class: "trace" });
    table.appendChild(row("general model", view.y_base.toFixed(3), ""));
    for (const [kind, read] of Object.entries(view.experts)) {
      table.appendChild(row(
        `${kind.toUpperCase()} expert`,
        read.selected && read.y !== undefined ? read.y.toFixed(3) : "—",
        read.selected ? `selected (c=${read.c.toFixed(2)})` : `not selected (c=${read.c.toFixed(2)})`,
        read.selected ? "expert-selected" : "expert-unselected",
        kind,
      ));
    }
    table.appendChild(row("combined", view.y_combined.toFixed(3), ""));
    panel.appendChild(table);
  }
  return panel;
}

function row(label: string, value: string, note: string, cls = "", kind = ""): HTMLElement {
  const tr = el("tr", { class: cls || "trace-row" });
  if (kind) tr.setAttribute("data-expert", kind);
  tr.appendChild(el("td", {}, label));
  tr.appendChild(el("td", {}, value));
  tr.appendChild(el("td", {}, note));
  return tr;
}

export function renderScoreButtons(state: ViewState,
                                   onChoose: (score: Birads) => void): HTMLElement {
  const box = el("div", { class: "score-buttons", role: "radiogroup" });
  for (const score of BIRADS_SCORES) {
    const btn = el("button", {
      class: state.pendingScore === score ? "score selected" : "score",
      "data-score": score,
    }, `BI-RADS ${score}`) as HTMLButtonElement;
    btn.addEventListener("click", () => onChoose(score));
    box.appendChild(btn);
  }
  return box;
}

export function el(tag: string, attrs: Record<string, string> = {},
                   text?: string): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text !== undefined) node.textContent = text;
  return node;
}
