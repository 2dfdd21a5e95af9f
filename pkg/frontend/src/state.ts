/**
 * Client view state: a pure reducer over server envelopes.
 *
 * The message list mirrors the server sequence exactly. Replayed envelopes
 * (after a resume) are verified against what we already rendered and then
 * dropped; a sequence gap flags the state as broken so the connection layer
 * can heal it with a fresh replay instead of rendering a lie.
 */

import type { Hat, PhaseName, ServerEnvelope } from "./protocol.js";

export type ConnectionStatus =
  | "idle"
  | "connecting"
  | "joined"
  | "reconnecting"
  | "closed"
  | "failed";

export type MessageKind = "participant" | "facilitator" | "system";

export interface Message {
  seq: number;
  ts_ms: number;
  author: string;
  text: string;
  hat: Hat | null;
  kind: MessageKind;
}

export type SurveyStage = "hidden" | "open" | "submitting" | "done" | "duplicate";

export interface SurveyState {
  stage: SurveyStage;
  answers: [number | null, number | null, number | null];
  error: string | null;
}

export interface ClientViewState {
  connection: ConnectionStatus;
  participantId: string | null;
  topic: string | null;
  durationMs: number | null;
  messages: Message[];
  phase: PhaseName;
  lastTsMs: number; // latest server timestamp seen; drives the countdown
  sessionEnded: boolean;
  survey: SurveyState;
  lastError: { code: string; message: string } | null;
  integrityBroken: boolean;
}

export function initialState(): ClientViewState {
  return {
    connection: "idle",
    participantId: null,
    topic: null,
    durationMs: null,
    messages: [],
    phase: "divergent",
    lastTsMs: 0,
    sessionEnded: false,
    survey: { stage: "hidden", answers: [null, null, null], error: null },
    lastError: null,
    integrityBroken: false,
  };
}

function messageFrom(envelope: ServerEnvelope): Message | null {
  if (envelope.type === "post") {
    return {
      seq: envelope.seq,
      ts_ms: envelope.ts_ms,
      author: envelope.author,
      text: envelope.text,
      hat: null,
      kind: envelope.author === "SYSTEM" ? "system" : "participant",
    };
  }
  if (envelope.type === "facilitator") {
    return {
      seq: envelope.seq,
      ts_ms: envelope.ts_ms,
      author: "FACILITATOR",
      text: envelope.text,
      hat: envelope.hat,
      kind: "facilitator",
    };
  }
  return null;
}

/** Append-or-verify: duplicates must match what we already hold. */
function withMessage(state: ClientViewState, incoming: Message): ClientViewState {
  const last = state.messages.length > 0 ? state.messages[state.messages.length - 1]!.seq : 0;
  if (incoming.seq === last + 1) {
    return {
      ...state,
      messages: [...state.messages, incoming],
      lastTsMs: Math.max(state.lastTsMs, incoming.ts_ms),
    };
  }
  if (incoming.seq <= last) {
    const held = state.messages[incoming.seq - 1];
    if (held && held.text === incoming.text && held.author === incoming.author) {
      return state; // replay of something already rendered
    }
    return { ...state, integrityBroken: true };
  }
  return { ...state, integrityBroken: true }; // gap: seq jumped past last+1
}

export function applyEnvelope(state: ClientViewState, envelope: ServerEnvelope): ClientViewState {
  switch (envelope.type) {
    case "joined":
      return {
        ...state,
        connection: "joined",
        participantId: envelope.participant_id,
        topic: envelope.topic,
        durationMs: envelope.duration_ms,
        lastError: null,
      };
    case "post":
    case "facilitator": {
      const message = messageFrom(envelope);
      return message ? withMessage(state, message) : state;
    }
    case "phase":
      return {
        ...state,
        phase: envelope.phase,
        lastTsMs: Math.max(state.lastTsMs, envelope.ts_ms),
      };
    case "session_end":
      return {
        ...state,
        sessionEnded: true,
        lastTsMs: Math.max(state.lastTsMs, envelope.ts_ms),
        survey:
          state.survey.stage === "hidden" ? { ...state.survey, stage: "open" } : state.survey,
      };
    case "survey_ack":
      return { ...state, survey: { ...state.survey, stage: "done", error: null } };
    case "error":
      if (envelope.code === "duplicate_response") {
        return {
          ...state,
          survey: { ...state.survey, stage: "duplicate", error: envelope.message },
        };
      }
      if (state.survey.stage === "submitting") {
        return {
          ...state,
          survey: { ...state.survey, stage: "open", error: envelope.message },
          lastError: { code: envelope.code, message: envelope.message },
        };
      }
      return { ...state, lastError: { code: envelope.code, message: envelope.message } };
    default:
      return state;
  }
}

/** Seqs currently rendered, for integrity checks: must always be 1..k. */
export function renderedSeqs(state: ClientViewState): number[] {
  return state.messages.map((m) => m.seq);
}

export function remainingMs(state: ClientViewState): number {
  if (state.durationMs === null) return 0;
  return Math.max(0, state.durationMs - state.lastTsMs);
}
