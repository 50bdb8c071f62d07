// Dashboard: numbers must equal the service metrics JSON after parsing;
// the UI never recomputes clinical values.

import { beforeEach, describe, expect, it } from "vitest";

import { bootstrap } from "../src/main.js";
import { renderDashboard } from "../src/dashboard.js";
import type { SessionMetrics } from "../src/types.js";
import { MockService, makeFixture } from "./mock_service.js";

let service: MockService;
let root: HTMLElement;

function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}

const flows: { dispose: () => void }[] = [];

beforeEach(() => {
  for (const f of flows.splice(0)) f.dispose();
  document.body.innerHTML = '<div id="root"></div>';
  root = document.getElementById("root") as HTMLElement;
  service = new MockService(makeFixture(20));
  service.install();
});

function track<T extends { dispose: () => void }>(flow: T): T {
  flows.push(flow);
  return flow;
}

describe("dashboard", () => {
  it("renders exactly the served metrics values", async () => {
    const flow = track(bootstrap(root));
    await flow.start("reader-1", 11);
    await flush();
    while (flow.state.phase === "reading") {
      (document.querySelector('[data-score="4B"]') as HTMLButtonElement).click();
      await flush();
      (document.querySelector("#submit-read") as HTMLButtonElement).click();
      await flush();
    }
    (document.querySelector("#begin-stage2") as HTMLButtonElement).click();
    await flush();
    let i = 0;
    while (flow.state.phase === "reading") {
      const score = i++ % 2 ? "5" : "2";
      (document.querySelector(`[data-score="${score}"]`) as HTMLButtonElement).click();
      await flush();
      (document.querySelector("#submit-read") as HTMLButtonElement).click();
      await flush();
    }
    (document.querySelector("#show-dashboard") as HTMLButtonElement).click();
    await flush();

    const served = service.metricsServed as SessionMetrics;
    expect(served.stage1).toBeTruthy();
    const read = (testid: string) =>
      document.querySelector(`[data-testid="${testid}"]`)!.getAttribute("data-value");
    // parsed-value equality with the wire JSON, no recomputation drift
    expect(Number(read("stage1-sens"))).toBe(served.stage1!.sensitivity);
    expect(Number(read("stage1-spec"))).toBe(served.stage1!.specificity);
    expect(Number(read("stage2-sens"))).toBe(served.stage2!.sensitivity);
    expect(Number(read("stage2-spec"))).toBe(served.stage2!.specificity);
    expect(Number(read("delta-sens"))).toBe(served.delta!.sensitivity);
    expect(Number(read("delta-spec"))).toBe(served.delta!.specificity);
  });

  it("renders 100% / 0% for the unit metrics example", () => {
    const metrics: SessionMetrics = {
      session_id: "s", reader_id: "r", total_cases: 4,
      stage1: { stage: 1, n_reads: 4, sensitivity: 1.0, specificity: 0.0 },
    };
    renderDashboard(root, metrics);
    const sens = document.querySelector('[data-testid="stage1-sens"]')!;
    const spec = document.querySelector('[data-testid="stage1-spec"]')!;
    expect(sens.textContent).toBe("100.0%");
    expect(spec.textContent).toBe("0.0%");
  });

  it("shows delta exactly as served, including sign", () => {
    const metrics: SessionMetrics = {
      session_id: "s", reader_id: "r", total_cases: 4,
      stage1: { stage: 1, n_reads: 4, sensitivity: 0.9, specificity: 0.5 },
      stage2: { stage: 2, n_reads: 4, sensitivity: 0.9, specificity: 0.75 },
      delta: { sensitivity: 0.0, specificity: 0.25 },
    };
    renderDashboard(root, metrics);
    const cell = document.querySelector('[data-testid="delta-spec"]')!;
    expect(cell.getAttribute("data-value")).toBe("0.25");
    expect(cell.textContent).toBe("25.0%");
  });

  it("handles partial sessions: only stage 1 present", () => {
    const metrics: SessionMetrics = {
      session_id: "s", reader_id: "r", total_cases: 10,
      stage1: { stage: 1, n_reads: 10, sensitivity: 0.8, specificity: 0.6 },
    };
    renderDashboard(root, metrics);
    expect(document.querySelector('[data-testid="stage1-sens"]')).not.toBeNull();
    expect(document.querySelector('[data-testid="stage2-sens"]')).toBeNull();
    expect(document.querySelector('[data-testid="delta-sens"]')).toBeNull();
  });

  it("never issues non-metrics requests while rendering the dashboard", async () => {
    const flow = track(bootstrap(root));
    await flow.start("reader-1", 12);
    await flush();
    const before = service.requests.length;
    // direct render path with a canned response: zero network traffic
    renderDashboard(root, {
      session_id: "s", reader_id: "r", total_cases: 1,
      stage1: { stage: 1, n_reads: 1, sensitivity: 1, specificity: null },
    });
    expect(service.requests.length).toBe(before);
  });
});
