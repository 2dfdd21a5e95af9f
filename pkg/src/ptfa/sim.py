"""Scripted end-to-end simulation: one full session, no humans, no network.

A script is JSON-lines. Two line shapes:

    {"offset_ms": 12000, "participant": 0, "text": "I vote for hiking"}
    {"llm": "Green hat thinking: what about a cooking class?"}

Post lines are submitted at their offsets through the same room code the live
service uses. "llm" lines feed the scripted provider in order, one per hat
evaluation, so facilitator behavior is fully scripted too; with no llm lines
every evaluation abstains. Identical inputs produce byte-identical exports;
the clock scale only compresses wall time and never shifts a timestamp.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

from .config import AppConfig
from .engine import default_baseline_schedule
from .gateway import ScriptedProvider
from .model import FacilitationModel, Session, is_sentinel_text
from .room import SessionRoom
from .scheduler import ScriptEntry, SimClock, TickReport, run_session
from .storage import SessionStore

DEFAULT_GROUP_SIZE = 3


class BadScript(Exception):
    """Script rejected; carries the offset (or line) of the first bad entry."""

    def __init__(self, message: str, *, line: int | None = None, offset_ms: int | None = None):
        self.line = line
        self.offset_ms = offset_ms
        parts = []
        if line is not None:
            parts.append(f"line {line}")
        if offset_ms is not None:
            parts.append(f"offset {offset_ms} ms")
        where = ", ".join(parts)
        super().__init__(f"{where}: {message}" if where else message)


@dataclass(frozen=True)
class ParticipantScript:
    posts: tuple[tuple[int, int, str], ...]  # (offset_ms, participant_index, text)
    llm_lines: tuple[str, ...]


def parse_script(text: str) -> ParticipantScript:
    """Parse script lines; shape errors only (limits need the config)."""
    posts: list[tuple[int, int, str]] = []
    llm_lines: list[str] = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except ValueError as exc:
            raise BadScript(f"not valid JSON: {exc}", line=number) from exc
        if not isinstance(payload, dict):
            raise BadScript("each line must be a JSON object", line=number)
        if "llm" in payload:
            if set(payload) != {"llm"} or not isinstance(payload["llm"], str):
                raise BadScript('llm lines must be exactly {"llm": "<text>"}', line=number)
            llm_lines.append(payload["llm"])
            continue
        if set(payload) != {"offset_ms", "participant", "text"}:
            raise BadScript(
                "post lines need exactly offset_ms, participant, text", line=number
            )
        offset, index, body = payload["offset_ms"], payload["participant"], payload["text"]
        if not isinstance(offset, int) or isinstance(offset, bool) or offset < 0:
            raise BadScript("offset_ms must be a non-negative integer", line=number)
        if not isinstance(index, int) or isinstance(index, bool) or index < 0:
            raise BadScript("participant must be a non-negative integer", line=number, offset_ms=offset)
        if not isinstance(body, str):
            raise BadScript("text must be a string", line=number, offset_ms=offset)
        posts.append((offset, index, body))
    return ParticipantScript(posts=tuple(posts), llm_lines=tuple(llm_lines))


def load_script(path: str | Path) -> ParticipantScript:
    return parse_script(Path(path).read_text(encoding="utf-8"))


def validate_script(script: ParticipantScript, duration_ms: int, group_size: int) -> None:
    """Reject entries the session itself would reject, before it starts."""
    for offset, index, text in script.posts:
        if offset >= duration_ms:
            raise BadScript(
                f"post at {offset} ms is not inside the {duration_ms} ms session",
                offset_ms=offset,
            )
        if index >= group_size:
            raise BadScript(
                f"participant {index} does not exist in a group of {group_size}",
                offset_ms=offset,
            )
        if not text.strip():
            raise BadScript("post text is empty", offset_ms=offset)
        if is_sentinel_text(text):
            raise BadScript(
                "post text equals the abstention sentinel and would be rejected",
                offset_ms=offset,
            )


def derive_session_id(
    script: ParticipantScript, model: FacilitationModel, topic_id: int, cfg: AppConfig
) -> str:
    """Stable id over everything that shapes the transcript (scale excluded)."""
    digest = hashlib.sha256()
    digest.update(model.value.encode())
    digest.update(str(topic_id).encode())
    sched = cfg.scheduler
    for value in (
        sched.tick_interval_ms,
        sched.session_duration_ms,
        sched.phase_boundary_ms,
        sched.inactivity_threshold_ms,
        sched.min_intervention_gap_ms,
    ):
        digest.update(str(value).encode())
    for offset, index, text in script.posts:
        digest.update(f"{offset}|{index}|{text}\n".encode())
    for line in script.llm_lines:
        digest.update(f"llm|{line}\n".encode())
    return "sim-" + digest.hexdigest()[:12]


@dataclass(frozen=True)
class SimResult:
    session_id: str
    export_path: Path
    ticks_path: Path
    reports: tuple[TickReport, ...]
    wall_seconds: float


def simulate(
    script: ParticipantScript,
    cfg: AppConfig,
    model: FacilitationModel,
    out_dir: str | Path,
    *,
    scale: float | None = None,
    topic_id: int = 0,
    group_size: int = DEFAULT_GROUP_SIZE,
) -> SimResult:
    """Run one scripted session to completion and write export + tick log."""
    sched = cfg.scheduler
    if topic_id not in cfg.topics:
        raise BadScript(f"unknown topic {topic_id}")
    validate_script(script, sched.session_duration_ms, group_size)
    if model is FacilitationModel.MODEL0:
        try:
            default_baseline_schedule().validate_for(sched.session_duration_ms)
        except ValueError as exc:
            raise BadScript(str(exc)) from None

    session_id = derive_session_id(script, model, topic_id, cfg)
    store = SessionStore(out_dir)
    store.create_session(session_id, topic_id, model.value, group_size)
    session = Session(
        session_id=session_id,
        topic=cfg.topics[topic_id],
        model=model,
        group_size=group_size,
        duration_ms=sched.session_duration_ms,
        phase_boundary_ms=sched.phase_boundary_ms,
    )
    room = SessionRoom(session, sched, store)
    for _ in range(group_size):
        room.add_participant()

    if model is FacilitationModel.MODEL1:
        if script.llm_lines:
            provider = ScriptedProvider(list(script.llm_lines))
        elif cfg.provider.kind == "scripted" and cfg.provider.script:
            provider = ScriptedProvider(list(cfg.provider.script))
        else:
            provider = ScriptedProvider(["Good"])  # silent facilitator
    else:
        provider = None

    clock = SimClock(scale if scale is not None else sched.clock_scale)
    entries: list[ScriptEntry] = [
        (offset, f"P{index + 1}", text) for offset, index, text in script.posts
    ]
    room.start(clock.now_ms())
    started = time.monotonic()
    reports = list(run_session(room, provider, clock, registry=cfg.hats, script=entries))
    wall = time.monotonic() - started

    ticks_path = Path(out_dir) / f"ticks_{session_id}.jsonl"
    ticks_path.write_text(
        "".join(report.to_json_line() + "\n" for report in reports), encoding="utf-8"
    )
    store.close()
    return SimResult(
        session_id=session_id,
        export_path=store.session_path(session_id),
        ticks_path=ticks_path,
        reports=tuple(reports),
        wall_seconds=wall,
    )
