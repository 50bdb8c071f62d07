// Thin typed client over the study service HTTP API. The UI never
// computes clinical numbers itself; everything comes from these calls.

import type { Birads, CasePacket, SessionInfo, SessionMetrics, SessionState } from "./types.js";

export class ApiError extends Error {
  status: number;
  constructor(status: number, detail: string) {
    super(detail);
    this.status = status;
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, init);
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export interface StudyApi {
  createSession(readerId: string, seed: number): Promise<SessionInfo>;
  sessionState(sessionId: string): Promise<SessionState>;
  nextCase(sessionId: string, stage: number): Promise<CasePacket>;
  submitRead(sessionId: string, caseId: string, stage: number, birads: Birads): Promise<void>;
  metrics(sessionId: string): Promise<SessionMetrics>;
}

export function createApi(baseUrl = ""): StudyApi {
  return {
    createSession: (readerId, seed) =>
      request<SessionInfo>(`${baseUrl}/sessions`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ reader_id: readerId, seed }),
      }),
    sessionState: (sessionId) =>
      request<SessionState>(`${baseUrl}/sessions/${sessionId}`),
    nextCase: (sessionId, stage) =>
      request<CasePacket>(`${baseUrl}/sessions/${sessionId}/next?stage=${stage}`),
    submitRead: async (sessionId, caseId, stage, birads) => {
      await request(`${baseUrl}/sessions/${sessionId}/reads`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ case_id: caseId, stage, birads }),
      });
    },
    metrics: (sessionId) =>
      request<SessionMetrics>(`${baseUrl}/sessions/${sessionId}/metrics`),
  };
}
