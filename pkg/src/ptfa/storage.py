"""Durable append-only storage of posts, lifecycle events, and surveys.

Layout under one root directory:

    session_<id>.jsonl   one dataset record per line, seq order (the export)
    survey_<id>.jsonl    one survey response per line
    index.json           session metadata and lifecycle status

Every record is flushed and fsynced before the append call returns, so an
acknowledged write survives a hard kill. The stored session file is already
the export format, which makes repeated exports trivially byte-stable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterator

from .model import FACILITATOR, FacilitationModel, Hat, Phase, Post, SurveyResponse

RECORD_FIELDS = (
    "session_id",
    "seq",
    "ts_ms",
    "author_id",
    "hat",
    "phase",
    "model",
    "topic_id",
    "text",
)

_PHASES = {p.value for p in Phase}
_HATS = {h.value for h in Hat}
_MODELS = {m.value for m in FacilitationModel}


class StorageError(Exception):
    pass


class StorageUnavailable(StorageError):
    """The backing store cannot take writes; the session must pause."""


class StorageConflict(StorageError):
    """A (session, seq) key was written twice."""


class UnknownSession(StorageError):
    pass


class SessionNotClosed(StorageError):
    """Export and surveys are only available once the session is closed."""


class DuplicateResponse(StorageError):
    """One survey response per (session, participant)."""


@dataclass(frozen=True)
class DatasetRecord:
    """One exported transcript line; field-for-field equal to the stored Post."""

    session_id: str
    seq: int
    ts_ms: int
    author_id: str
    hat: str | None
    phase: str
    model: str
    topic_id: int
    text: str

    def to_json_line(self) -> str:
        payload = {name: getattr(self, name) for name in RECORD_FIELDS}
        return json.dumps(payload, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, payload: object) -> "DatasetRecord":
        """Strictly validate one parsed line against the dataset schema."""
        if not isinstance(payload, dict):
            raise ValueError("record is not a JSON object")
        missing = [k for k in RECORD_FIELDS if k not in payload]
        extra = [k for k in payload if k not in RECORD_FIELDS]
        if missing or extra:
            raise ValueError(f"missing fields {missing}, unexpected fields {extra}")
        if not isinstance(payload["session_id"], str) or not payload["session_id"]:
            raise ValueError("session_id must be a non-empty string")
        for int_field in ("seq", "ts_ms", "topic_id"):
            if not isinstance(payload[int_field], int) or isinstance(payload[int_field], bool):
                raise ValueError(f"{int_field} must be an integer")
        if payload["seq"] < 1:
            raise ValueError("seq starts at 1")
        if payload["ts_ms"] < 0:
            raise ValueError("ts_ms must be non-negative")
        if not isinstance(payload["author_id"], str) or not payload["author_id"]:
            raise ValueError("author_id must be a non-empty string")
        hat = payload["hat"]
        if hat is not None and hat not in _HATS:
            raise ValueError(f"unknown hat {hat!r}")
        if payload["phase"] not in _PHASES:
            raise ValueError(f"unknown phase {payload['phase']!r}")
        if payload["model"] not in _MODELS:
            raise ValueError(f"unknown model {payload['model']!r}")
        if not isinstance(payload["text"], str) or not payload["text"]:
            raise ValueError("text must be a non-empty string")
        hat_expected = payload["author_id"] == FACILITATOR and payload["model"] == "1"
        if (hat is not None) != hat_expected:
            raise ValueError(
                "hat must be present exactly on facilitator records of hat-model sessions"
            )
        return cls(**payload)

    @classmethod
    def from_json_line(cls, line: str) -> "DatasetRecord":
        return cls.from_json(json.loads(line))


def record_for(post: Post, model: FacilitationModel, topic_id: int) -> DatasetRecord:
    return DatasetRecord(
        session_id=post.session_id,
        seq=post.seq,
        ts_ms=post.ts_ms,
        author_id=post.author,
        hat=post.hat.value if post.hat is not None else None,
        phase=post.phase.value,
        model=model.value,
        topic_id=topic_id,
        text=post.text,
    )


def parse_dataset(data: bytes) -> list[DatasetRecord]:
    """Parse an export stream; raises ValueError with the 1-based line number."""
    records = []
    for number, line in enumerate(data.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(DatasetRecord.from_json_line(line))
        except (ValueError, KeyError) as exc:
            raise ValueError(f"line {number}: {exc}") from exc
    return records


@dataclass
class SessionMeta:
    session_id: str
    topic_id: int
    model: str
    group_size: int
    status: str  # pending | live | closed
    participants: list[str]


class SessionStore:
    """Filesystem store; one writer per session (callers serialize)."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageUnavailable(f"cannot create {self.root}: {exc}") from exc
        self._index: dict[str, SessionMeta] = {}
        self._handles: dict[str, IO[bytes]] = {}
        self._last_seq: dict[str, int] = {}
        self._load_index()

    # -- index ---------------------------------------------------------------

    def _index_path(self) -> Path:
        return self.root / "index.json"

    def _load_index(self) -> None:
        path = self._index_path()
        if not path.exists():
            return
        raw = json.loads(path.read_text(encoding="utf-8"))
        for session_id, meta in raw.items():
            self._index[session_id] = SessionMeta(session_id=session_id, **meta)
            self._last_seq[session_id] = self._scan_last_seq(session_id)

    def _write_index(self) -> None:
        payload = {
            meta.session_id: {
                "topic_id": meta.topic_id,
                "model": meta.model,
                "group_size": meta.group_size,
                "status": meta.status,
                "participants": meta.participants,
            }
            for meta in self._index.values()
        }
        tmp = self._index_path().with_suffix(".json.tmp")
        with open(tmp, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, ensure_ascii=False, indent=1)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, self._index_path())

    def _scan_last_seq(self, session_id: str) -> int:
        path = self.session_path(session_id)
        last = 0
        if path.exists():
            with open(path, "rb") as handle:
                for line in handle:
                    if line.strip():
                        last = json.loads(line)["seq"]
        return last

    # -- sessions ------------------------------------------------------------

    def session_path(self, session_id: str) -> Path:
        return self.root / f"session_{session_id}.jsonl"

    def survey_path(self, session_id: str) -> Path:
        return self.root / f"survey_{session_id}.jsonl"

    def create_session(
        self, session_id: str, topic_id: int, model: str, group_size: int
    ) -> None:
        if session_id in self._index:
            raise StorageConflict(f"session {session_id} already exists")
        self._index[session_id] = SessionMeta(
            session_id=session_id,
            topic_id=topic_id,
            model=model,
            group_size=group_size,
            status="pending",
            participants=[],
        )
        self._last_seq[session_id] = 0
        self._write_index()

    def update_session(
        self, session_id: str, *, status: str | None = None, participants: list[str] | None = None
    ) -> None:
        meta = self._require(session_id)
        if status is not None:
            meta.status = status
        if participants is not None:
            meta.participants = list(participants)
        self._write_index()

    def meta(self, session_id: str) -> SessionMeta:
        return self._require(session_id)

    def sessions(self) -> list[SessionMeta]:
        return list(self._index.values())

    def _require(self, session_id: str) -> SessionMeta:
        if session_id not in self._index:
            raise UnknownSession(session_id)
        return self._index[session_id]

    def recover(self) -> list[str]:
        """Close out sessions that were live when the process died.

        Their transcripts stay exportable; live connections did not survive,
        so the sessions cannot resume.
        """
        recovered = []
        for meta in self._index.values():
            if meta.status in ("pending", "live"):
                meta.status = "closed"
                recovered.append(meta.session_id)
        if recovered:
            self._write_index()
        return recovered

    # -- records -------------------------------------------------------------

    def persist_record(self, record: DatasetRecord) -> None:
        """Append one record; durable (fsynced) before returning."""
        meta = self._require(record.session_id)
        if record.seq <= self._last_seq.get(record.session_id, 0):
            raise StorageConflict(
                f"seq {record.seq} already written for session {record.session_id}"
            )
        line = record.to_json_line() + "\n"
        try:
            handle = self._handles.get(record.session_id)
            if handle is None:
                handle = open(self.session_path(record.session_id), "ab")
                self._handles[record.session_id] = handle
            handle.write(line.encode("utf-8"))
            handle.flush()
            os.fsync(handle.fileno())
        except OSError as exc:
            raise StorageUnavailable(str(exc)) from exc
        self._last_seq[record.session_id] = record.seq
        del meta  # existence check only

    def iter_records(self, session_id: str) -> Iterator[DatasetRecord]:
        self._require(session_id)
        path = self.session_path(session_id)
        if not path.exists():
            return
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                yield DatasetRecord.from_json_line(line)

    def export_dataset(self, session_id: str) -> bytes:
        """Raw bytes of the session log; only once the session is closed."""
        meta = self._require(session_id)
        if meta.status != "closed":
            raise SessionNotClosed(session_id)
        path = self.session_path(session_id)
        return path.read_bytes() if path.exists() else b""

    # -- surveys -------------------------------------------------------------

    def persist_survey(self, response: SurveyResponse) -> None:
        self._require(response.session_id)
        if response.participant_id in self.survey_participants(response.session_id):
            raise DuplicateResponse(
                f"{response.participant_id} already answered for {response.session_id}"
            )
        payload = {
            "participant_id": response.participant_id,
            "q_experience": response.q_experience,
            "q_facilitator": response.q_facilitator,
            "q_consensus": response.q_consensus,
        }
        line = json.dumps(payload, ensure_ascii=False, separators=(",", ":")) + "\n"
        try:
            with open(self.survey_path(response.session_id), "ab") as handle:
                handle.write(line.encode("utf-8"))
                handle.flush()
                os.fsync(handle.fileno())
        except OSError as exc:
            raise StorageUnavailable(str(exc)) from exc

    def survey_participants(self, session_id: str) -> set[str]:
        path = self.survey_path(session_id)
        if not path.exists():
            return set()
        return {
            json.loads(line)["participant_id"]
            for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        }

    def export_surveys(self, session_id: str) -> bytes:
        meta = self._require(session_id)
        if meta.status != "closed":
            raise SessionNotClosed(session_id)
        path = self.survey_path(session_id)
        return path.read_bytes() if path.exists() else b""

    def close(self) -> None:
        for handle in self._handles.values():
            handle.close()
        self._handles.clear()
