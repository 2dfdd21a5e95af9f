/**
 * Pure rendering: state in, HTML strings out. No DOM access here, so every
 * visual decision is unit-testable; main.ts only swaps innerHTML.
 */

import type { Hat } from "./protocol.js";
import type { ClientViewState, Message, SurveyState } from "./state.js";
import { remainingMs } from "./state.js";

export interface Badge {
  label: string;
  color: string; // badge background
  fg: string; // text color on the badge
}

// The six role colors; null hat (fixed-message facilitator) gets a neutral badge.
export const HAT_BADGES: Record<Hat, Badge> = {
  white: { label: "White", color: "#f5f5f5", fg: "#333333" },
  red: { label: "Red", color: "#e53935", fg: "#ffffff" },
  black: { label: "Black", color: "#212121", fg: "#ffffff" },
  yellow: { label: "Yellow", color: "#fdd835", fg: "#333333" },
  green: { label: "Green", color: "#43a047", fg: "#ffffff" },
  blue: { label: "Blue", color: "#1e88e5", fg: "#ffffff" },
};

export const NEUTRAL_BADGE: Badge = { label: "Facilitator", color: "#9e9e9e", fg: "#ffffff" };

export function badgeFor(hat: Hat | null): Badge {
  return hat === null ? NEUTRAL_BADGE : HAT_BADGES[hat];
}

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

function messageRow(message: Message, self: string | null): string {
  if (message.kind === "system") {
    return `<li class="msg system" data-seq="${message.seq}">${escapeHtml(message.text)}</li>`;
  }
  if (message.kind === "facilitator") {
    const badge = badgeFor(message.hat);
    return (
      `<li class="msg facilitator" data-seq="${message.seq}">` +
      `<span class="badge" style="background:${badge.color};color:${badge.fg}">` +
      `${badge.label}</span> ${escapeHtml(message.text)}</li>`
    );
  }
  const mine = message.author === self ? " mine" : "";
  return (
    `<li class="msg participant${mine}" data-seq="${message.seq}">` +
    `<span class="author">${escapeHtml(message.author)}</span> ` +
    `${escapeHtml(message.text)}</li>`
  );
}

export function renderMessageList(state: ClientViewState): string {
  const rows = state.messages.map((m) => messageRow(m, state.participantId));
  return `<ol class="messages">${rows.join("")}</ol>`;
}

const PHASE_TEXT = {
  divergent: "Divergent phase: generate ideas",
  convergent: "Convergent phase: work toward one decision",
  closed: "Session ended",
} as const;

export function renderPhaseBanner(state: ClientViewState): string {
  return `<div class="phase phase-${state.phase}">${PHASE_TEXT[state.phase]}</div>`;
}

export function formatRemaining(ms: number): string {
  const clamped = Math.max(0, ms);
  const minutes = Math.floor(clamped / 60_000);
  const seconds = Math.floor((clamped % 60_000) / 1000);
  return `${String(minutes).padStart(2, "0")}:${String(seconds).padStart(2, "0")}`;
}

export function renderTimer(state: ClientViewState): string {
  return `<span class="timer">${formatRemaining(remainingMs(state))}</span>`;
}

// -- survey -------------------------------------------------------------------

export type AnchorScale = Record<number, string>;

export const SATISFACTION_ANCHORS: AnchorScale = {
  7: "Very Satisfied",
  6: "Satisfied",
  5: "Somewhat Satisfied",
  4: "Neutral",
  3: "Somewhat Unsatisfied",
  2: "Unsatisfied",
  1: "Very Unsatisfied",
};

export const AGREEMENT_ANCHORS: AnchorScale = {
  7: "Strongly Agree",
  6: "Agree",
  5: "Somewhat Agree",
  4: "Neutral",
  3: "Somewhat Disagree",
  2: "Disagree",
  1: "Strongly Disagree",
};

export interface SurveyQuestion {
  id: "q_experience" | "q_facilitator" | "q_consensus";
  prompt: string;
  anchors: AnchorScale;
}

// Order matters: answers are transmitted in this order.
export const SURVEY_QUESTIONS: readonly SurveyQuestion[] = [
  {
    id: "q_experience",
    prompt: "How would you rate the user experience of the platform?",
    anchors: SATISFACTION_ANCHORS,
  },
  {
    id: "q_facilitator",
    prompt:
      "How would you rate the extent to which the facilitator in the discussion " +
      "helped consensus decision-making?",
    anchors: AGREEMENT_ANCHORS,
  },
  {
    id: "q_consensus",
    prompt: "Do you agree with the consensus reached in this discussion?",
    anchors: AGREEMENT_ANCHORS,
  },
];

export function anchorLabel(questionId: SurveyQuestion["id"], score: number): string {
  const question = SURVEY_QUESTIONS.find((q) => q.id === questionId);
  if (!question) throw new Error(`unknown question ${questionId}`);
  const label = question.anchors[score];
  if (!label) throw new Error(`score ${score} is outside the 1..7 scale`);
  return label;
}

export function surveyComplete(survey: SurveyState): boolean {
  return survey.answers.every((a) => a !== null && a >= 1 && a <= 7);
}

export function renderSurvey(survey: SurveyState): string {
  if (survey.stage === "hidden") return "";
  if (survey.stage === "done") {
    return `<div class="survey done">Thank you, your answers were recorded.</div>`;
  }
  if (survey.stage === "duplicate") {
    return `<div class="survey duplicate">A response was already recorded for you.</div>`;
  }
  const items = SURVEY_QUESTIONS.map((question, index) => {
    const chosen = survey.answers[index];
    const options = [7, 6, 5, 4, 3, 2, 1]
      .map((score) => {
        const checked = chosen === score ? " checked" : "";
        return (
          `<label><input type="radio" name="${question.id}" value="${score}"${checked}>` +
          ` ${score} &mdash; ${escapeHtml(question.anchors[score] ?? "")}</label>`
        );
      })
      .join("");
    return `<fieldset data-question="${question.id}"><legend>${escapeHtml(
      question.prompt,
    )}</legend>${options}</fieldset>`;
  }).join("");
  const disabled = surveyComplete(survey) && survey.stage !== "submitting" ? "" : " disabled";
  const error = survey.error ? `<p class="survey-error">${escapeHtml(survey.error)}</p>` : "";
  return `<form class="survey">${items}${error}<button type="submit"${disabled}>Submit</button></form>`;
}
