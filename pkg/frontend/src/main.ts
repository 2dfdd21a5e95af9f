/**
 * Browser entry point: wires the connection driver and the pure renderers
 * to the DOM. Everything interesting lives in client.ts / state.ts /
 * render.ts; this file only shuffles innerHTML and form events.
 */

import { DiscussionClient } from "./client.js";
import type { ClientViewState } from "./state.js";
import { renderMessageList, renderPhaseBanner, renderSurvey, renderTimer, surveyComplete } from "./render.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

let client: DiscussionClient | null = null;

function render(state: ClientViewState): void {
  el("status").textContent = state.connection;
  el("phase").innerHTML = renderPhaseBanner(state);
  el("timer").innerHTML = renderTimer(state);
  el("messages").innerHTML = renderMessageList(state);
  el("survey").innerHTML = renderSurvey(state.survey);
  el("who").textContent = state.participantId ? `You are ${state.participantId}` : "";
  el("topic").textContent = state.topic ?? "";
  el("join-error").textContent =
    state.connection === "failed" && state.lastError ? state.lastError.message : "";

  const input = el<HTMLInputElement>("compose-text");
  const canPost = state.connection === "joined" && !state.sessionEnded;
  input.disabled = !canPost;
  el<HTMLButtonElement>("compose-send").disabled = !canPost;

  const list = el("messages");
  list.scrollTop = list.scrollHeight;

  if (state.integrityBroken) {
    el("status").textContent = "out of sync, reload the page";
  }
}

function join(): void {
  const sessionId = el<HTMLInputElement>("join-session").value.trim();
  const token = el<HTMLInputElement>("join-token").value.trim();
  if (!sessionId || !token) return;
  client?.stop();
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  client = new DiscussionClient({
    url: `${scheme}://${location.host}/ws`,
    sessionId,
    token,
    connect: (url) => new WebSocket(url),
    onChange: render,
  });
  client.start();
}

function sendPost(): void {
  const input = el<HTMLInputElement>("compose-text");
  const text = input.value.trim();
  if (!text || !client) return;
  client.post(text);
  input.value = "";
}

document.addEventListener("DOMContentLoaded", () => {
  el("join-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    join();
  });
  el("compose-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    sendPost();
  });
  const survey = el("survey");
  survey.addEventListener("change", (ev) => {
    const target = ev.target as HTMLInputElement;
    if (!client || target.type !== "radio") return;
    const fieldset = target.closest("fieldset");
    const question = fieldset?.dataset.question;
    const index = ["q_experience", "q_facilitator", "q_consensus"].indexOf(question ?? "");
    if (index >= 0) client.setAnswer(index, Number(target.value));
  });
  survey.addEventListener("submit", (ev) => {
    ev.preventDefault();
    if (client && surveyComplete(client.state.survey)) {
      client.submitSurvey(client.state.survey.answers);
    }
  });
});
