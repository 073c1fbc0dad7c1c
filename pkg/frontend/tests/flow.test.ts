import { describe, expect, it } from "vitest";

import { ApiError } from "../src/api.js";
import { SessionFlow, type SessionApi } from "../src/state.js";
import type {
  ActiveStimulus,
  SessionInfo,
  Stimulus,
  SubmitPayload,
  SubmitResult,
} from "../src/types.js";

function makeItem(i: number, nItems: number, multi = false): ActiveStimulus {
  const shared = {
    done: false as const,
    item_id: `d1:m${i}`,
    index: i,
    n_items: nItems,
    candidates: [
      { image_id: "img-a", uri: "/images/a.jpg" },
      { image_id: "img-b", uri: "/images/b.jpg" },
    ],
  };
  if (multi) {
    return {
      ...shared,
      mode: "holistic",
      utterances: [{ index: 0, speaker: "A", text: `turn ${i}` }],
      mention: { utterance_index: 0, span: [0, 4], surface: "turn" },
      multi_select: true,
    };
  }
  return {
    ...shared,
    mode: "independent",
    description: `item ${i}`,
    multi_select: false,
  };
}

/** In-memory stand-in for the service, with its cursor and replay rules. */
class FakeServer implements SessionApi {
  cursor = 0;
  nextCalls = 0;
  readonly payloads: SubmitPayload[] = [];
  private readonly answered = new Map<string, string>();

  constructor(
    private readonly items: ActiveStimulus[],
    private readonly code = "DR-fake0000",
  ) {}

  private info(): SessionInfo {
    return {
      session_id: "s1",
      mode: this.items[0]?.mode ?? "independent",
      participant_id: "p1",
      dialogue_id: null,
      n_items: this.items.length,
      cursor: this.cursor,
      completed: this.cursor >= this.items.length,
    };
  }

  async createSession(): Promise<SessionInfo> {
    return this.info();
  }

  async getSession(sessionId: string): Promise<SessionInfo> {
    if (sessionId !== "s1") throw new ApiError(404, "unknown session");
    return this.info();
  }

  async nextStimulus(): Promise<Stimulus> {
    this.nextCalls += 1;
    if (this.cursor >= this.items.length) {
      return { done: true, completion_code: this.code };
    }
    return this.items[this.cursor]!;
  }

  async submitResponse(
    _sessionId: string,
    payload: SubmitPayload,
  ): Promise<SubmitResult> {
    this.payloads.push(payload);
    const key = [...payload.selected_image_ids].sort().join("|");
    const prior = this.answered.get(payload.item_id);
    if (prior !== undefined) {
      if (prior !== key) throw new ApiError(409, "selection differs");
      const completed = this.cursor >= this.items.length;
      return {
        cursor: this.cursor,
        completed,
        replayed: true,
        completion_code: completed ? this.code : null,
      };
    }
    const current = this.items[this.cursor];
    if (current === undefined || current.item_id !== payload.item_id) {
      throw new ApiError(409, "out-of-order response");
    }
    this.answered.set(payload.item_id, key);
    this.cursor += 1;
    const completed = this.cursor >= this.items.length;
    return {
      cursor: this.cursor,
      completed,
      replayed: false,
      completion_code: completed ? this.code : null,
    };
  }
}

function fixedClock(step = 250): () => number {
  let t = 1000;
  return () => {
    t += step;
    return t;
  };
}

describe("SessionFlow", () => {
  it("runs a session start to completion code", async () => {
    const server = new FakeServer([makeItem(0, 2), makeItem(1, 2)]);
    const flow = new SessionFlow(server, fixedClock());

    await flow.start("independent", "p1");
    expect(flow.phase).toMatchObject({ kind: "active" });
    expect(flow.canSubmit()).toBe(false);

    flow.selection.toggle("img-a", false);
    expect(flow.canSubmit()).toBe(true);
    await flow.submit();
    expect(flow.phase).toMatchObject({
      kind: "active",
      stimulus: { item_id: "d1:m1" },
    });
    expect(flow.selection.size).toBe(0);

    flow.selection.toggle("img-b", false);
    await flow.submit();
    expect(flow.phase).toEqual({ kind: "done", completionCode: "DR-fake0000" });
    // completion came from the submit result, not an extra /next round-trip
    expect(server.nextCalls).toBe(2);
    expect(server.payloads.map((p) => p.selected_image_ids)).toEqual([
      ["img-a"],
      ["img-b"],
    ]);
    expect(server.payloads.map((p) => p.latency_ms)).toEqual([250, 250]);
  });

  it("sends multi-selections sorted", async () => {
    const server = new FakeServer([makeItem(0, 1, true)]);
    const flow = new SessionFlow(server, fixedClock());
    await flow.start("holistic", "p1");
    flow.selection.toggle("img-b", true);
    flow.selection.toggle("img-a", true);
    await flow.submit();
    expect(server.payloads[0]!.selected_image_ids).toEqual(["img-a", "img-b"]);
    expect(flow.phase.kind).toBe("done");
  });

  it("resumes at the server cursor", async () => {
    const server = new FakeServer([makeItem(0, 2), makeItem(1, 2)]);
    const first = new SessionFlow(server, fixedClock());
    await first.start("independent", "p1");
    first.selection.toggle("img-a", false);
    await first.submit();

    const revived = new SessionFlow(server, fixedClock());
    expect(await revived.resume("s1")).toBe(true);
    expect(revived.phase).toMatchObject({
      kind: "active",
      stimulus: { item_id: "d1:m1" },
    });
  });

  it("reports a dead session id instead of starting", async () => {
    const server = new FakeServer([makeItem(0, 1)]);
    const flow = new SessionFlow(server, fixedClock());
    expect(await flow.resume("gone")).toBe(false);
    expect(flow.phase).toEqual({ kind: "start" });
  });

  it("treats a replayed acknowledgement like a fresh one", async () => {
    // simulates a submit whose first response was lost in transit: the
    // server had recorded it, so the resend is acknowledged as a replay
    const server = new FakeServer([makeItem(0, 2), makeItem(1, 2)]);
    const flow = new SessionFlow(server, fixedClock());
    await flow.start("independent", "p1");
    flow.selection.toggle("img-a", false);
    await server.submitResponse("s1", {
      item_id: "d1:m0",
      selected_image_ids: ["img-a"],
      latency_ms: 10,
    });
    await flow.submit();
    expect(server.payloads[1]).toMatchObject({ item_id: "d1:m0" });
    expect(flow.phase).toMatchObject({
      kind: "active",
      stimulus: { item_id: "d1:m1" },
    });
  });

  it("refuses to submit outside an active item", async () => {
    const server = new FakeServer([makeItem(0, 1)]);
    const flow = new SessionFlow(server, fixedClock());
    await expect(flow.submit()).rejects.toThrow("nothing to submit");
  });
});
