// Session flow state machine. All authoritative state lives on the
// service; this object only tracks the packet currently on screen and
// the not-yet-submitted score.

import type { StudyApi } from "./api.js";
import { ApiError } from "./api.js";
import type { Birads, CasePacket } from "./types.js";

export type Phase = "idle" | "reading" | "stage-done" | "session-done" | "error";

export interface ViewState {
  phase: Phase;
  sessionId: string | null;
  stage: 1 | 2;
  packet: CasePacket | null;
  pendingScore: Birads | null;
  lastError: string | null;
}

export type Listener = (state: ViewState) => void;

export class StudyFlow {
  private api: StudyApi;
  private listeners: Listener[] = [];
  /** Unhooks global listeners; assigned by the bootstrapper. */
  dispose: () => void = () => undefined;
  state: ViewState = {
    phase: "idle",
    sessionId: null,
    stage: 1,
    packet: null,
    pendingScore: null,
    lastError: null,
  };

  constructor(api: StudyApi) {
    this.api = api;
  }

  onChange(listener: Listener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const l of this.listeners) l(this.state);
  }

  private set(partial: Partial<ViewState>): void {
    this.state = { ...this.state, ...partial };
    this.emit();
  }

  async start(readerId: string, seed: number): Promise<void> {
    const info = await this.api.createSession(readerId, seed);
    this.set({ sessionId: info.session_id, stage: 1, phase: "reading" });
    await this.advance();
  }

  /** Re-attach to an existing session (page refresh): the service knows
   *  exactly where we were. */
  async resume(sessionId: string): Promise<void> {
    const state = await this.api.sessionState(sessionId);
    const stage: 1 | 2 = state.stage1_done >= state.total ? 2 : 1;
    this.set({ sessionId, stage, phase: "reading" });
    await this.advance();
  }

  async advance(): Promise<void> {
    if (!this.state.sessionId) return;
    try {
      const packet = await this.api.nextCase(this.state.sessionId, this.state.stage);
      if (packet.done) {
        if (this.state.stage === 1) {
          this.set({ stage: 2, packet: null, phase: "stage-done", pendingScore: null });
        } else {
          this.set({ packet: null, phase: "session-done", pendingScore: null });
        }
        return;
      }
      this.set({ packet, pendingScore: null, phase: "reading", lastError: null });
    } catch (err) {
      this.set({ phase: "error", lastError: describe(err) });
    }
  }

  async beginStageTwo(): Promise<void> {
    if (this.state.phase !== "stage-done") return;
    this.set({ phase: "reading" });
    await this.advance();
  }

  choose(score: Birads): void {
    if (this.state.phase !== "reading") return;
    this.set({ pendingScore: score });
  }

  async submit(): Promise<void> {
    const { sessionId, packet, pendingScore, stage } = this.state;
    if (!sessionId || !packet || !packet.case_id || !pendingScore) return;
    try {
      await this.api.submitRead(sessionId, packet.case_id, stage, pendingScore);
      await this.advance();
    } catch (err) {
      // keep position: surface the rejection and stay on the same case
      this.set({ lastError: describe(err) });
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `${err.status}: ${err.message}`;
  return err instanceof Error ? err.message : String(err);
}
