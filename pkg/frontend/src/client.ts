/**
 * Connection driver. Owns one ClientViewState, feeds it parsed server
 * envelopes, and handles the lifecycle the pure reducer cannot see:
 * joining, reconnecting with backoff, and intentional shutdown.
 *
 * The socket is injected so the browser build passes the native WebSocket
 * and tests pass the "ws" package; both expose the onopen/onmessage/onclose
 * property style used here.
 */

import { joinFrame, parseServerEnvelope, postFrame, surveyFrame } from "./protocol.js";
import type { ClientViewState } from "./state.js";
import { applyEnvelope, initialState } from "./state.js";

// Handler params are deliberately loose: the browser WebSocket and the
// "ws" package disagree on event types, and we only ever read .data.
export interface SocketLike {
  send(data: string): void;
  close(code?: number, reason?: string): void;
  onopen: ((ev: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
  onclose: ((ev: any) => void) | null;
  onerror: ((ev: any) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientOptions {
  url: string; // ws endpoint, e.g. ws://host:port/ws
  sessionId: string;
  token: string;
  connect: SocketFactory;
  onChange?: (state: ClientViewState) => void;
  maxRetries?: number;
  retryDelayMs?: number;
}

// Join rejections that retrying cannot fix.
const FATAL_CODES = new Set(["token_invalid", "token_reused", "unknown_session"]);

export class DiscussionClient {
  state: ClientViewState = initialState();

  private socket: SocketLike | null = null;
  private stopped = false;
  private fatal = false;
  private retries = 0;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private readonly maxRetries: number;
  private readonly retryDelayMs: number;

  constructor(private readonly opts: ClientOptions) {
    this.maxRetries = opts.maxRetries ?? 5;
    this.retryDelayMs = opts.retryDelayMs ?? 200;
  }

  start(): void {
    if (this.socket) return;
    this.setConnection("connecting");
    this.open();
  }

  stop(): void {
    this.stopped = true;
    if (this.retryTimer !== null) clearTimeout(this.retryTimer);
    this.retryTimer = null;
    const sock = this.socket;
    this.socket = null;
    if (sock) {
      sock.onclose = null;
      sock.close();
    }
    this.setConnection("closed");
  }

  post(text: string): void {
    this.socket?.send(postFrame(text));
  }

  submitSurvey(answers: readonly (number | null)[]): void {
    if (answers.length !== 3 || answers.some((a) => !Number.isInteger(a) || a! < 1 || a! > 7)) {
      throw new Error("survey needs three answers between 1 and 7");
    }
    const triple = answers as [number, number, number];
    this.state = {
      ...this.state,
      survey: { ...this.state.survey, stage: "submitting", error: null },
    };
    this.notify();
    this.socket?.send(surveyFrame(triple));
  }

  setAnswer(index: number, score: number): void {
    const answers = [...this.state.survey.answers] as (number | null)[];
    answers[index] = score;
    this.state = {
      ...this.state,
      survey: {
        ...this.state.survey,
        answers: answers as [number | null, number | null, number | null],
      },
    };
    this.notify();
  }

  private open(): void {
    const sock = this.opts.connect(this.opts.url);
    this.socket = sock;
    sock.onopen = () => {
      sock.send(joinFrame(this.opts.sessionId, this.opts.token));
    };
    sock.onmessage = (ev) => this.handleFrame(ev.data);
    sock.onerror = () => {
      // A close event follows; retries are scheduled there.
    };
    sock.onclose = () => {
      if (this.socket !== sock) return; // superseded
      this.socket = null;
      this.scheduleRetry();
    };
  }

  private handleFrame(data: unknown): void {
    const raw = typeof data === "string" ? data : String(data);
    const envelope = parseServerEnvelope(raw);
    if (envelope.type === "joined") this.retries = 0;
    if (envelope.type === "error" && FATAL_CODES.has(envelope.code)) {
      this.fatal = true;
    }
    this.state = applyEnvelope(this.state, envelope);
    this.notify();
  }

  private scheduleRetry(): void {
    if (this.stopped) return;
    if (this.fatal || this.retries >= this.maxRetries) {
      this.setConnection("failed");
      return;
    }
    this.setConnection("reconnecting");
    const delay = this.retryDelayMs * 2 ** this.retries;
    this.retries += 1;
    this.retryTimer = setTimeout(() => {
      this.retryTimer = null;
      if (!this.stopped) this.open();
    }, delay);
  }

  private setConnection(connection: ClientViewState["connection"]): void {
    this.state = { ...this.state, connection };
    this.notify();
  }

  private notify(): void {
    this.opts.onChange?.(this.state);
  }
}
