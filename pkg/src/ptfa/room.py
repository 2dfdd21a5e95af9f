"""Single-writer session room.

The room owns all mutation of one session: participant posts, facilitator
posts, lifecycle announcements, and survey intake. Every mutation happens
under one re-entrant lock, is persisted before any broadcast, and is then
fanned out to subscribers as protocol envelopes. Subscribers get envelopes in
transcript order; a late subscriber replays the full envelope history first,
which is what makes reconnection gapless.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable

from .engine import BaselineSchedule, default_baseline_schedule, transcript_window
from .model import (
    FACILITATOR,
    SYSTEM,
    FacilitationModel,
    Hat,
    Phase,
    Post,
    PtfaError,
    Session,
    SurveyResponse,
)
from .protocol import (
    envelope_for_post,
    phase_envelope,
    session_end_envelope,
)
from .scheduler import SchedulerConfig
from .storage import DuplicateResponse, SessionNotClosed, SessionStore, record_for

CONVERGENT_ANNOUNCEMENT = (
    "Halfway point: the discussion now moves from generating ideas to "
    "converging on one decision."
)
SESSION_END_ANNOUNCEMENT = (
    "The session has ended. Thank you for participating; please complete "
    "the short survey."
)


class NotLive(PtfaError):
    code = "not_live"


class NotJoined(PtfaError):
    code = "not_joined"


class RoomStatus(str, Enum):
    PENDING = "pending"
    LIVE = "live"
    CLOSED = "closed"


@dataclass(frozen=True)
class TickView:
    """Immutable snapshot a tick evaluates against, taken under the lock."""

    window: tuple[Post, ...]
    last_activity_ts: int
    facilitator_ts: tuple[int, ...]
    facilitator_hats: tuple[Hat, ...]


Subscriber = Callable[[dict[str, Any]], None]


class SessionRoom:
    """Serializes one session's writes and fans out its envelope stream."""

    def __init__(
        self,
        session: Session,
        cfg: SchedulerConfig,
        store: SessionStore | None = None,
        schedule: BaselineSchedule | None = None,
    ):
        self.session = session
        self.cfg = cfg
        self.store = store
        self.schedule = schedule or default_baseline_schedule()
        # Only the fixed-message facilitator runs the schedule, so only that
        # model constrains the session length.
        if session.model is FacilitationModel.MODEL0:
            self.schedule.validate_for(cfg.session_duration_ms)
        self.lock = threading.RLock()
        self.status = RoomStatus.PENDING
        self.baseline_sent: set[int] = set()
        self.last_activity_ts = 0
        self._facilitator_ts: list[int] = []
        self._facilitator_hats: list[Hat] = []
        self._replay: list[dict[str, Any]] = []
        self._subscribers: dict[int, Subscriber] = {}
        self._next_subscriber = 1
        self._surveyed: set[str] = set()

    # -- lifecycle -------------------------------------------------------------

    @property
    def started_at_ms(self) -> int:
        return self.session.started_at_ms

    def elapsed_ms(self, now_ms: int) -> int:
        return self.session.elapsed_ms(now_ms)

    def add_participant(self) -> str:
        """Seat the next participant; ids are P1..Pn in join order."""
        with self.lock:
            if self.status is RoomStatus.CLOSED:
                raise NotLive("session already closed")
            if len(self.session.participants) >= self.session.group_size:
                raise NotLive("session already full")
            participant_id = f"P{len(self.session.participants) + 1}"
            self.session.participants.append(participant_id)
            if self.store is not None:
                self.store.update_session(
                    self.session.session_id, participants=self.session.participants
                )
            return participant_id

    @property
    def is_full(self) -> bool:
        with self.lock:
            return len(self.session.participants) >= self.session.group_size

    def start(self, now_ms: int) -> None:
        with self.lock:
            if self.status is not RoomStatus.PENDING:
                raise NotLive(f"cannot start a {self.status.value} session")
            self.session.started_at_ms = now_ms
            self.status = RoomStatus.LIVE
            if self.store is not None:
                self.store.update_session(self.session.session_id, status="live")

    def announce_convergent(self, now_ms: int) -> None:
        with self.lock:
            post = self._append(SYSTEM, None, CONVERGENT_ANNOUNCEMENT, now_ms)
            self.session.advance_phase(Phase.CONVERGENT)
            self._publish(phase_envelope(Phase.CONVERGENT, post.ts_ms))

    def end(self, now_ms: int) -> None:
        """Post the closing announcement and close; safe to call twice."""
        with self.lock:
            if self.status is RoomStatus.CLOSED:
                return
            post = self._append(SYSTEM, None, SESSION_END_ANNOUNCEMENT, now_ms)
            self.session.advance_phase(Phase.CLOSED)
            self.status = RoomStatus.CLOSED
            if self.store is not None:
                self.store.update_session(self.session.session_id, status="closed")
            self._publish(phase_envelope(Phase.CLOSED, post.ts_ms))
            self._publish(session_end_envelope(post.ts_ms))

    # -- posting ---------------------------------------------------------------

    def submit_post(self, participant_id: str, text: str, now_ms: int) -> Post:
        with self.lock:
            if self.status is RoomStatus.PENDING:
                raise NotLive("session has not started")
            if participant_id not in self.session.participants:
                raise NotJoined(f"{participant_id} is not in this session")
            post = self._append(participant_id, None, text, now_ms)
            self.last_activity_ts = post.ts_ms
            return post

    def append_facilitator(self, hat: Hat | None, text: str, now_ms: int) -> Post:
        with self.lock:
            post = self._append(FACILITATOR, hat, text, now_ms)
            self.last_activity_ts = post.ts_ms
            self._facilitator_ts.append(post.ts_ms)
            if hat is not None:
                self._facilitator_hats.append(hat)
            return post

    def _append(self, author: str, hat: Hat | None, text: str, now_ms: int) -> Post:
        """Append + persist + broadcast one post; rolls back if not durable."""
        post = self.session.append_post(author, hat, text, now_ms)
        if self.store is not None:
            try:
                self.store.persist_record(
                    record_for(post, self.session.model, self.session.topic.id)
                )
            except Exception:
                self.session.posts.pop()
                self.session.seq_counter -= 1
                raise
        self._publish(envelope_for_post(post))
        return post

    # -- ticks -----------------------------------------------------------------

    def tick_view(self) -> TickView:
        with self.lock:
            return TickView(
                window=tuple(transcript_window(self.session.posts)),
                last_activity_ts=self.last_activity_ts,
                facilitator_ts=tuple(self._facilitator_ts),
                facilitator_hats=tuple(self._facilitator_hats),
            )

    # -- surveys ---------------------------------------------------------------

    def submit_survey(
        self, participant_id: str, q_experience: int, q_facilitator: int, q_consensus: int
    ) -> SurveyResponse:
        with self.lock:
            if self.status is not RoomStatus.CLOSED:
                raise SessionNotClosed("the survey opens when the session closes")
            if participant_id not in self.session.participants:
                raise NotJoined(f"{participant_id} was not in this session")
            if participant_id in self._surveyed:
                raise DuplicateResponse(f"{participant_id} already answered")
            response = SurveyResponse(
                session_id=self.session.session_id,
                participant_id=participant_id,
                q_experience=q_experience,
                q_facilitator=q_facilitator,
                q_consensus=q_consensus,
            )
            if self.store is not None:
                self.store.persist_survey(response)
            self._surveyed.add(participant_id)
            return response

    # -- fan-out ---------------------------------------------------------------

    def subscribe(self, callback: Subscriber) -> tuple[list[dict[str, Any]], int]:
        """Register for future envelopes; returns (history so far, handle)."""
        with self.lock:
            handle = self._next_subscriber
            self._next_subscriber += 1
            self._subscribers[handle] = callback
            return list(self._replay), handle

    def unsubscribe(self, handle: int) -> None:
        with self.lock:
            self._subscribers.pop(handle, None)

    def _publish(self, envelope: dict[str, Any]) -> None:
        # Caller holds the lock, so envelope order == transcript order.
        self._replay.append(envelope)
        for callback in list(self._subscribers.values()):
            try:
                callback(envelope)
            except Exception:
                continue  # a dying connection must not poison the broadcast
