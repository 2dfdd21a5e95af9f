/**
 * Wire protocol: one compact JSON object per WebSocket text frame.
 *
 * Client to server: join, post, survey.
 * Server to client: joined, post, facilitator, phase, session_end,
 * survey_ack, error. Anything else is a protocol defect and throws,
 * because silently ignoring frames is how transcripts drift.
 */

export type Hat = "white" | "red" | "black" | "yellow" | "green" | "blue";
export type PhaseName = "divergent" | "convergent" | "closed";

export const HATS: readonly Hat[] = ["white", "red", "black", "yellow", "green", "blue"];

export interface JoinedEnvelope {
  type: "joined";
  participant_id: string;
  topic: string;
  duration_ms: number;
}

export interface PostEnvelope {
  type: "post";
  seq: number;
  ts_ms: number;
  author: string;
  text: string;
}

export interface FacilitatorEnvelope {
  type: "facilitator";
  seq: number;
  ts_ms: number;
  hat: Hat | null;
  text: string;
}

export interface PhaseEnvelope {
  type: "phase";
  phase: PhaseName;
  ts_ms: number;
}

export interface SessionEndEnvelope {
  type: "session_end";
  ts_ms: number;
}

export interface SurveyAckEnvelope {
  type: "survey_ack";
}

export interface ErrorEnvelope {
  type: "error";
  code: string;
  message: string;
}

export type ServerEnvelope =
  | JoinedEnvelope
  | PostEnvelope
  | FacilitatorEnvelope
  | PhaseEnvelope
  | SessionEndEnvelope
  | SurveyAckEnvelope
  | ErrorEnvelope;

export class ProtocolError extends Error {}

function asObject(raw: string): Record<string, unknown> {
  let parsed: unknown;
  try {
    parsed = JSON.parse(raw);
  } catch {
    throw new ProtocolError(`frame is not valid JSON: ${raw.slice(0, 80)}`);
  }
  if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
    throw new ProtocolError("frame must be a JSON object");
  }
  return parsed as Record<string, unknown>;
}

function need(payload: Record<string, unknown>, key: string, kind: "string" | "number"): void {
  if (typeof payload[key] !== kind) {
    throw new ProtocolError(`${String(payload.type)} envelope needs ${kind} ${key}`);
  }
}

export function parseServerEnvelope(raw: string): ServerEnvelope {
  const payload = asObject(raw);
  switch (payload.type) {
    case "joined":
      need(payload, "participant_id", "string");
      need(payload, "topic", "string");
      need(payload, "duration_ms", "number");
      return payload as unknown as JoinedEnvelope;
    case "post":
      need(payload, "seq", "number");
      need(payload, "ts_ms", "number");
      need(payload, "author", "string");
      need(payload, "text", "string");
      return payload as unknown as PostEnvelope;
    case "facilitator": {
      need(payload, "seq", "number");
      need(payload, "ts_ms", "number");
      need(payload, "text", "string");
      const hat = payload.hat;
      if (hat !== null && !HATS.includes(hat as Hat)) {
        throw new ProtocolError(`unknown hat ${String(hat)}`);
      }
      return payload as unknown as FacilitatorEnvelope;
    }
    case "phase":
      need(payload, "ts_ms", "number");
      if (!["divergent", "convergent", "closed"].includes(payload.phase as string)) {
        throw new ProtocolError(`unknown phase ${String(payload.phase)}`);
      }
      return payload as unknown as PhaseEnvelope;
    case "session_end":
      need(payload, "ts_ms", "number");
      return payload as unknown as SessionEndEnvelope;
    case "survey_ack":
      return { type: "survey_ack" };
    case "error":
      need(payload, "code", "string");
      need(payload, "message", "string");
      return payload as unknown as ErrorEnvelope;
    default:
      throw new ProtocolError(`unknown envelope type ${String(payload.type)}`);
  }
}

// -- client to server frames ------------------------------------------------

export function joinFrame(sessionId: string, token: string): string {
  return JSON.stringify({ type: "join", session_id: sessionId, token });
}

export function postFrame(text: string): string {
  return JSON.stringify({ type: "post", text });
}

export function surveyFrame(answers: [number, number, number]): string {
  return JSON.stringify({ type: "survey", answers });
}
