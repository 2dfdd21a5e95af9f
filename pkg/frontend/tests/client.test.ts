import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { DiscussionClient, type SocketLike } from "../src/client.js";
import { renderedSeqs } from "../src/state.js";

class FakeSocket implements SocketLike {
  sent: string[] = [];
  closed = false;
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev?: { code?: number; reason?: string }) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
  }

  // test-side controls
  open(): void {
    this.onopen?.();
  }

  frame(payload: Record<string, unknown>): void {
    this.onmessage?.({ data: JSON.stringify(payload) });
  }

  drop(): void {
    this.onclose?.({ code: 1006 });
  }
}

function makeClient(overrides: Partial<ConstructorParameters<typeof DiscussionClient>[0]> = {}) {
  const sockets: FakeSocket[] = [];
  const client = new DiscussionClient({
    url: "ws://example.test/ws",
    sessionId: "sess-1",
    token: "tok-1",
    connect: () => {
      const sock = new FakeSocket();
      sockets.push(sock);
      return sock;
    },
    retryDelayMs: 10,
    maxRetries: 3,
    ...overrides,
  });
  return { client, sockets };
}

const joined = {
  type: "joined",
  participant_id: "P1",
  topic: "t",
  duration_ms: 60_000,
};

beforeEach(() => {
  vi.useFakeTimers();
});

afterEach(() => {
  vi.useRealTimers();
});

describe("handshake", () => {
  it("sends the join frame as the first frame after open", () => {
    const { client, sockets } = makeClient();
    client.start();
    expect(client.state.connection).toBe("connecting");
    expect(sockets).toHaveLength(1);
    sockets[0]!.open();
    expect(sockets[0]!.sent).toEqual([
      '{"type":"join","session_id":"sess-1","token":"tok-1"}',
    ]);
    sockets[0]!.frame(joined);
    expect(client.state.connection).toBe("joined");
    expect(client.state.participantId).toBe("P1");
  });

  it("does not retry when the token is rejected", () => {
    const { client, sockets } = makeClient();
    client.start();
    sockets[0]!.open();
    sockets[0]!.frame({ type: "error", code: "token_invalid", message: "unknown session or token" });
    sockets[0]!.drop();
    vi.runAllTimers();
    expect(client.state.connection).toBe("failed");
    expect(client.state.lastError?.code).toBe("token_invalid");
    expect(sockets).toHaveLength(1);
  });

  it("does not retry when the token is already in use", () => {
    const { client, sockets } = makeClient();
    client.start();
    sockets[0]!.open();
    sockets[0]!.frame({ type: "error", code: "token_reused", message: "P1 is already connected" });
    sockets[0]!.drop();
    vi.runAllTimers();
    expect(client.state.connection).toBe("failed");
    expect(sockets).toHaveLength(1);
  });
});

describe("reconnect and resume", () => {
  it("reconnects after an unexpected drop and absorbs the replay without duplicates", () => {
    const { client, sockets } = makeClient();
    client.start();
    sockets[0]!.open();
    sockets[0]!.frame(joined);
    sockets[0]!.frame({ type: "post", seq: 1, ts_ms: 100, author: "P1", text: "one" });
    sockets[0]!.frame({ type: "post", seq: 2, ts_ms: 200, author: "P2", text: "two" });
    expect(renderedSeqs(client.state)).toEqual([1, 2]);

    sockets[0]!.drop();
    expect(client.state.connection).toBe("reconnecting");
    vi.advanceTimersByTime(10);
    expect(sockets).toHaveLength(2);

    const resumed = sockets[1]!;
    resumed.open();
    expect(resumed.sent[0]).toBe('{"type":"join","session_id":"sess-1","token":"tok-1"}');
    resumed.frame(joined);
    // server replays the full history, including what arrived while away
    resumed.frame({ type: "post", seq: 1, ts_ms: 100, author: "P1", text: "one" });
    resumed.frame({ type: "post", seq: 2, ts_ms: 200, author: "P2", text: "two" });
    resumed.frame({ type: "post", seq: 3, ts_ms: 300, author: "P3", text: "missed this" });
    resumed.frame({ type: "post", seq: 4, ts_ms: 400, author: "P1", text: "live again" });

    expect(client.state.connection).toBe("joined");
    expect(renderedSeqs(client.state)).toEqual([1, 2, 3, 4]);
    expect(client.state.messages.map((m) => m.text)).toEqual([
      "one",
      "two",
      "missed this",
      "live again",
    ]);
    expect(client.state.integrityBroken).toBe(false);
  });

  it("gives up after the retry budget and reports failure", () => {
    const { client, sockets } = makeClient({ maxRetries: 2 });
    client.start();
    sockets[0]!.open();
    sockets[0]!.frame(joined);
    sockets[0]!.drop();
    vi.runAllTimers(); // retry 1 connects, never opens
    sockets[1]!.drop();
    vi.runAllTimers(); // retry 2
    sockets[2]!.drop();
    vi.runAllTimers();
    expect(sockets).toHaveLength(3);
    expect(client.state.connection).toBe("failed");
  });

  it("backs off exponentially between attempts", () => {
    const { client, sockets } = makeClient({ retryDelayMs: 100, maxRetries: 3 });
    client.start();
    sockets[0]!.open();
    sockets[0]!.frame(joined);

    sockets[0]!.drop();
    vi.advanceTimersByTime(99);
    expect(sockets).toHaveLength(1);
    vi.advanceTimersByTime(1); // 100ms
    expect(sockets).toHaveLength(2);

    sockets[1]!.drop();
    vi.advanceTimersByTime(199);
    expect(sockets).toHaveLength(2);
    vi.advanceTimersByTime(1); // 200ms
    expect(sockets).toHaveLength(3);
  });

  it("a successful rejoin resets the retry budget", () => {
    const { client, sockets } = makeClient({ maxRetries: 1 });
    client.start();
    sockets[0]!.open();
    sockets[0]!.frame(joined);
    sockets[0]!.drop();
    vi.runAllTimers();
    sockets[1]!.open();
    sockets[1]!.frame(joined); // budget restored here
    sockets[1]!.drop();
    vi.runAllTimers();
    expect(sockets).toHaveLength(3); // a second reconnect was still allowed
  });

  it("an intentional stop closes without reconnecting", () => {
    const { client, sockets } = makeClient();
    client.start();
    sockets[0]!.open();
    sockets[0]!.frame(joined);
    client.stop();
    vi.runAllTimers();
    expect(client.state.connection).toBe("closed");
    expect(sockets[0]!.closed).toBe(true);
    expect(sockets).toHaveLength(1);
  });
});

describe("outbound frames", () => {
  it("sends posts over the live socket", () => {
    const { client, sockets } = makeClient();
    client.start();
    sockets[0]!.open();
    sockets[0]!.frame(joined);
    client.post("hello there");
    expect(sockets[0]!.sent.at(-1)).toBe('{"type":"post","text":"hello there"}');
  });

  it("validates survey answers before sending", () => {
    const { client, sockets } = makeClient();
    client.start();
    sockets[0]!.open();
    sockets[0]!.frame(joined);
    expect(() => client.submitSurvey([7, 6])).toThrow();
    expect(() => client.submitSurvey([7, 6, null])).toThrow();
    expect(() => client.submitSurvey([7, 6, 8])).toThrow();
    expect(() => client.submitSurvey([7, 6, 4.5])).toThrow();
    client.submitSurvey([7, 6, 5]);
    expect(client.state.survey.stage).toBe("submitting");
    expect(sockets[0]!.sent.at(-1)).toBe('{"type":"survey","answers":[7,6,5]}');
  });

  it("tracks per-question answers chosen in the form", () => {
    const { client } = makeClient();
    client.setAnswer(0, 7);
    client.setAnswer(2, 5);
    expect(client.state.survey.answers).toEqual([7, null, 5]);
  });
});
