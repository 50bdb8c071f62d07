// Session dashboard: verbatim display of the service's metrics JSON.
// Raw values ride along in data-value attributes so tests can assert
// byte-for-byte equality with the parsed service response.

import type { SessionMetrics, StageMetrics } from "./types.js";
import { el } from "./view.js";

function pct(value: number | null): string {
  if (value === null) return "n/a";
  return `${(value * 100).toFixed(1)}%`;
}

function metricCell(value: number | null, testid: string): HTMLElement {
  const cell = el("td", { "data-testid": testid }, pct(value));
  cell.setAttribute("data-value", value === null ? "null" : String(value));
  return cell;
}

function stageRow(label: string, m: StageMetrics, prefix: string): HTMLElement {
  const tr = el("tr", {});
  tr.appendChild(el("td", {}, label));
  tr.appendChild(metricCell(m.sensitivity, `${prefix}-sens`));
  tr.appendChild(metricCell(m.specificity, `${prefix}-spec`));
  tr.appendChild(el("td", {}, String(m.n_reads)));
  return tr;
}

export function renderDashboard(root: HTMLElement, metrics: SessionMetrics,
                                rocUrl: string | null = null): void {
  root.textContent = "";
  root.appendChild(el("h2", {}, "Session dashboard"));
  if (metrics.error) {
    root.appendChild(el("p", { class: "error" }, metrics.error));
    return;
  }
  const table = el("table", { class: "metrics", "data-testid": "metrics-table" });
  const head = el("tr", {});
  for (const h of ["", "sensitivity", "specificity", "reads"]) {
    head.appendChild(el("th", {}, h));
  }
  table.appendChild(head);
  if (metrics.stage1) table.appendChild(stageRow("Stage 1", metrics.stage1, "stage1"));
  if (metrics.stage2) table.appendChild(stageRow("Stage 2 (AI-assisted)", metrics.stage2, "stage2"));
  if (metrics.delta) {
    const tr = el("tr", { class: "delta-row" });
    tr.appendChild(el("td", {}, "Stage 2 − Stage 1"));
    tr.appendChild(metricCell(metrics.delta.sensitivity, "delta-sens"));
    tr.appendChild(metricCell(metrics.delta.specificity, "delta-spec"));
    tr.appendChild(el("td", {}, ""));
    table.appendChild(tr);
  }
  root.appendChild(table);
  if (rocUrl) {
    root.appendChild(el("object", { data: rocUrl, type: "image/svg+xml",
                                    class: "roc-context" }));
  }
}
