"""Wire protocol: one compact JSON object per text frame, UTF-8.

Client to server:  join, post, survey.
Server to client:  joined, post, facilitator, phase, session_end, error,
                   and a survey_ack confirming a stored survey.

Envelope builders keep the field layout in one place so the service, the
replay snapshot, and the tests cannot drift apart.
"""

from __future__ import annotations

import json
from typing import Any

from .model import FACILITATOR, Phase, Post, PtfaError, TopicId

CLIENT_TYPES = ("join", "post", "survey")


class BadEnvelope(PtfaError):
    code = "bad_envelope"


def encode(envelope: dict[str, Any]) -> str:
    return json.dumps(envelope, ensure_ascii=False, separators=(",", ":"))


def joined_envelope(participant_id: str, topic: TopicId, duration_ms: int) -> dict[str, Any]:
    return {
        "type": "joined",
        "participant_id": participant_id,
        "topic": topic.prompt_text,
        "duration_ms": duration_ms,
    }


def post_envelope(post: Post) -> dict[str, Any]:
    return {
        "type": "post",
        "seq": post.seq,
        "ts_ms": post.ts_ms,
        "author": post.author,
        "text": post.text,
    }


def facilitator_envelope(post: Post) -> dict[str, Any]:
    return {
        "type": "facilitator",
        "seq": post.seq,
        "ts_ms": post.ts_ms,
        "hat": post.hat.value if post.hat is not None else None,
        "text": post.text,
    }


def envelope_for_post(post: Post) -> dict[str, Any]:
    if post.author == FACILITATOR:
        return facilitator_envelope(post)
    return post_envelope(post)


def phase_envelope(phase: Phase, ts_ms: int) -> dict[str, Any]:
    return {"type": "phase", "phase": phase.value, "ts_ms": ts_ms}


def session_end_envelope(ts_ms: int) -> dict[str, Any]:
    return {"type": "session_end", "ts_ms": ts_ms}


def survey_ack_envelope() -> dict[str, Any]:
    return {"type": "survey_ack"}


def error_envelope(code: str, message: str) -> dict[str, Any]:
    return {"type": "error", "code": code, "message": message}


def parse_client_envelope(raw: str | bytes) -> dict[str, Any]:
    """Decode and shape-check one client frame; BadEnvelope on any defect."""
    try:
        payload = json.loads(raw)
    except (ValueError, UnicodeDecodeError) as exc:
        raise BadEnvelope(f"frame is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise BadEnvelope("frame must be a JSON object")
    kind = payload.get("type")
    if kind not in CLIENT_TYPES:
        raise BadEnvelope(f"unknown envelope type {kind!r}")
    if kind == "join":
        for key in ("session_id", "token"):
            if not isinstance(payload.get(key), str) or not payload[key]:
                raise BadEnvelope(f"join requires a non-empty string {key}")
    elif kind == "post":
        if not isinstance(payload.get("text"), str):
            raise BadEnvelope("post requires a string text")
    else:
        answers = payload.get("answers")
        if (
            not isinstance(answers, list)
            or len(answers) != 3
            or any(isinstance(a, bool) or not isinstance(a, int) for a in answers)
        ):
            raise BadEnvelope("survey requires answers: a list of exactly 3 integers")
    return payload
