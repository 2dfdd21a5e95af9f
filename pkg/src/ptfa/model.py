"""Domain types for timed group-discussion sessions.

Everything that touches a transcript goes through ``Session.append_post`` so the
ordering, hat-attribution and sentinel invariants are enforced in one place.
Timestamps are stored as milliseconds since session start, never wall time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

FACILITATOR = "FACILITATOR"
SYSTEM = "SYSTEM"

MAX_POST_CHARS = 4000
DEFAULT_SESSION_DURATION_MS = 1_200_000
DEFAULT_GROUP_SIZE = 3
DEFAULT_PHASE_BOUNDARY_MS = 600_000


class Hat(str, Enum):
    WHITE = "white"
    RED = "red"
    BLACK = "black"
    YELLOW = "yellow"
    GREEN = "green"
    BLUE = "blue"


class Phase(str, Enum):
    DIVERGENT = "divergent"
    CONVERGENT = "convergent"
    CLOSED = "closed"


class FacilitationModel(str, Enum):
    MODEL0 = "0"  # three fixed timed messages
    MODEL1 = "1"  # six hat agents on a decision loop


@dataclass(frozen=True)
class TopicId:
    id: int
    prompt_text: str


TOPICS: dict[int, TopicId] = {
    0: TopicId(0, "Please decide one activity that you would like to do together"),
    1: TopicId(1, "Please decide one film that you would like to watch together"),
}


# 7-point verbal scales; index 7 is the most positive anchor, index 1 the most
# negative. Keys 1..7 map each numeric answer to its label.
AGREEMENT_ANCHORS: dict[int, str] = {
    7: "Strongly Agree",
    6: "Agree",
    5: "Somewhat Agree",
    4: "Neutral",
    3: "Somewhat Disagree",
    2: "Disagree",
    1: "Strongly Disagree",
}

SATISFACTION_ANCHORS: dict[int, str] = {
    7: "Very Satisfied",
    6: "Satisfied",
    5: "Somewhat Satisfied",
    4: "Neutral",
    3: "Somewhat Unsatisfied",
    2: "Unsatisfied",
    1: "Very Unsatisfied",
}

SURVEY_QUESTIONS: dict[str, tuple[str, dict[int, str]]] = {
    "q_experience": (
        "How would you rate the user experience of the platform?",
        SATISFACTION_ANCHORS,
    ),
    "q_facilitator": (
        "How would you rate the extent to which the facilitator in the discussion "
        "helped consensus decision-making?",
        AGREEMENT_ANCHORS,
    ),
    "q_consensus": (
        "Do you agree with the consensus reached in this discussion?",
        AGREEMENT_ANCHORS,
    ),
}


class PtfaError(Exception):
    """Base class for domain errors; ``code`` is the wire-level error code."""

    code = "error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.__doc__ or self.code)


class SessionClosed(PtfaError):
    """The session is closed and accepts no further posts."""

    code = "session_closed"


class EmptyText(PtfaError):
    """Post text is empty after trimming."""

    code = "empty_text"


class OversizeText(PtfaError):
    """Post text exceeds the maximum length; rejected, never truncated."""

    code = "oversize_text"


class HatMismatch(PtfaError):
    """Hat attribution does not fit the author/model combination."""

    code = "hat_mismatch"


class SentinelText(PtfaError):
    """Post text equals the abstention sentinel and may not be persisted."""

    code = "sentinel_text"


class ClockRegression(PtfaError):
    """The clock moved backwards relative to the transcript."""

    code = "clock_regression"


class OutOfRangeAnswer(PtfaError):
    """A survey answer falls outside the 1..7 scale."""

    code = "out_of_range_answer"


def phase_at(elapsed_ms: int, boundary_ms: int, duration_ms: int) -> Phase:
    """Phase in force at a given offset: half-open intervals, closed at the end."""
    if elapsed_ms < boundary_ms:
        return Phase.DIVERGENT
    if elapsed_ms < duration_ms:
        return Phase.CONVERGENT
    return Phase.CLOSED


def is_sentinel_text(text: str) -> bool:
    """True iff the text is the abstention sentinel.

    Normalization: trim whitespace, drop at most one trailing period, compare
    case-insensitively against "good". Anything longer is a real message.
    """
    t = text.strip()
    if t.endswith("."):
        t = t[:-1].strip()
    return t.lower() == "good"


@dataclass(frozen=True)
class Post:
    session_id: str
    seq: int
    ts_ms: int
    author: str  # "P1".."Pn", FACILITATOR or SYSTEM
    hat: Hat | None
    phase: Phase
    text: str


@dataclass
class Session:
    """One timed discussion room and its ordered transcript."""

    session_id: str
    topic: TopicId
    model: FacilitationModel
    group_size: int = DEFAULT_GROUP_SIZE
    participants: list[str] = field(default_factory=list)
    started_at_ms: int = 0
    duration_ms: int = DEFAULT_SESSION_DURATION_MS
    phase_boundary_ms: int = DEFAULT_PHASE_BOUNDARY_MS
    phase: Phase = Phase.DIVERGENT
    seq_counter: int = 0
    posts: list[Post] = field(default_factory=list)

    def elapsed_ms(self, now_ms: int) -> int:
        return now_ms - self.started_at_ms

    def phase_of(self, elapsed_ms: int) -> Phase:
        return phase_at(elapsed_ms, self.phase_boundary_ms, self.duration_ms)

    def advance_phase(self, phase: Phase) -> None:
        """Move the lifecycle marker forward; never backwards."""
        order = [Phase.DIVERGENT, Phase.CONVERGENT, Phase.CLOSED]
        if order.index(phase) < order.index(self.phase):
            raise ValueError(f"phase cannot go back from {self.phase} to {phase}")
        self.phase = phase

    def append_post(self, author: str, hat: Hat | None, text: str, now_ms: int) -> Post:
        """Validate and append one transcript entry, assigning the next seq.

        ``now_ms`` is an absolute reading of the session's clock; the stored
        timestamp is the offset from session start. The post's phase is derived
        from that offset, not from the lifecycle marker, so boundary posts are
        always stamped consistently with the phase function.
        """
        if self.phase is Phase.CLOSED:
            raise SessionClosed(f"session {self.session_id} is closed")
        trimmed = text.strip()
        if not trimmed:
            raise EmptyText("post text is empty after trimming")
        if len(text) > MAX_POST_CHARS:
            raise OversizeText(
                f"post text is {len(text)} chars; limit is {MAX_POST_CHARS}"
            )
        facilitator_hat = author == FACILITATOR and self.model is FacilitationModel.MODEL1
        if facilitator_hat and hat is None:
            raise HatMismatch("hat-model facilitator posts must carry a hat")
        if not facilitator_hat and hat is not None:
            raise HatMismatch(f"author {author} may not carry a hat")
        if is_sentinel_text(trimmed):
            raise SentinelText("sentinel text never enters the transcript")
        ts_ms = self.elapsed_ms(now_ms)
        if ts_ms < 0:
            raise ClockRegression(f"clock reads {ts_ms} ms before session start")
        if self.posts and ts_ms < self.posts[-1].ts_ms:
            raise ClockRegression(
                f"clock went back: {ts_ms} ms after {self.posts[-1].ts_ms} ms"
            )
        self.seq_counter += 1
        post = Post(
            session_id=self.session_id,
            seq=self.seq_counter,
            ts_ms=ts_ms,
            author=author,
            hat=hat,
            phase=self.phase_of(ts_ms),
            text=trimmed,
        )
        self.posts.append(post)
        return post


@dataclass(frozen=True)
class SurveyResponse:
    session_id: str
    participant_id: str
    q_experience: int
    q_facilitator: int
    q_consensus: int

    def __post_init__(self):
        for name in ("q_experience", "q_facilitator", "q_consensus"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or not 1 <= value <= 7:
                raise OutOfRangeAnswer(f"{name}={value!r} is not on the 1..7 scale")
