/** Session flow state, kept free of DOM so it can be tested directly. */

import type {
  ActiveStimulus,
  SessionInfo,
  Stimulus,
  SubmitPayload,
  SubmitResult,
} from "./types.js";

/** What the flow needs from a client; ApiClient satisfies it. */
export interface SessionApi {
  createSession(mode: string, participantId: string, maxItems?: number): Promise<SessionInfo>;
  getSession(sessionId: string): Promise<SessionInfo>;
  nextStimulus(sessionId: string): Promise<Stimulus>;
  submitResponse(sessionId: string, payload: SubmitPayload): Promise<SubmitResult>;
}

export type Phase =
  | { kind: "start" }
  | { kind: "active"; stimulus: ActiveStimulus }
  | { kind: "done"; completionCode: string }
  | { kind: "error"; message: string };

/** Current selection; single-select replaces, multi-select toggles. */
export class Selection {
  private chosen = new Set<string>();

  toggle(imageId: string, multiSelect: boolean): void {
    if (multiSelect) {
      if (this.chosen.has(imageId)) this.chosen.delete(imageId);
      else this.chosen.add(imageId);
      return;
    }
    const wasChosen = this.chosen.has(imageId);
    this.chosen.clear();
    if (!wasChosen) this.chosen.add(imageId);
  }

  has(imageId: string): boolean {
    return this.chosen.has(imageId);
  }

  list(): string[] {
    return [...this.chosen].sort();
  }

  get size(): number {
    return this.chosen.size;
  }

  clear(): void {
    this.chosen.clear();
  }
}

/** Drives one session: create or resume, fetch stimuli, submit answers.
 *
 * The flow never invents content: what it exposes in `phase` is exactly
 * what the server's last response carried.
 */
export class SessionFlow {
  phase: Phase = { kind: "start" };
  readonly selection = new Selection();
  sessionId: string | null = null;
  private shownAt = 0;

  constructor(
    private readonly api: SessionApi,
    private readonly now: () => number = () => Date.now(),
  ) {}

  async start(mode: string, participantId: string, maxItems?: number): Promise<void> {
    const session = await this.api.createSession(mode, participantId, maxItems);
    this.sessionId = session.session_id;
    await this.advance();
  }

  /** Resume a stored session at the server's cursor. False = gone. */
  async resume(sessionId: string): Promise<boolean> {
    try {
      await this.api.getSession(sessionId);
    } catch {
      return false;
    }
    this.sessionId = sessionId;
    await this.advance();
    return true;
  }

  async advance(): Promise<void> {
    if (this.sessionId === null) throw new Error("no session");
    const stimulus = await this.api.nextStimulus(this.sessionId);
    this.selection.clear();
    if (stimulus.done) {
      this.phase = { kind: "done", completionCode: stimulus.completion_code };
    } else {
      this.phase = { kind: "active", stimulus };
      this.shownAt = this.now();
    }
  }

  canSubmit(): boolean {
    return this.phase.kind === "active" && this.selection.size > 0;
  }

  async submit(): Promise<void> {
    if (this.phase.kind !== "active" || this.sessionId === null) {
      throw new Error("nothing to submit");
    }
    const payload: SubmitPayload = {
      item_id: this.phase.stimulus.item_id,
      selected_image_ids: this.selection.list(),
      latency_ms: Math.max(0, Math.round(this.now() - this.shownAt)),
    };
    const result = await this.api.submitResponse(this.sessionId, payload);
    if (result.completed && result.completion_code) {
      this.phase = { kind: "done", completionCode: result.completion_code };
      this.selection.clear();
    } else {
      await this.advance();
    }
  }
}
