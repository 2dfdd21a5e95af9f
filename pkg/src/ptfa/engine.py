"""Facilitation engine: six hat agents plus the timed baseline facilitator.

Each hat agent owns a macro prompt (role, background, objectives) and a set of
situational templates that seed its micro-level guidance. On every decision
tick an agent either proposes an intervention or abstains by answering with
the sentinel word, which is filtered before anything reaches the transcript.
Hat arbitration is phase-priority based with an anti-domination rule so no
single hat monopolizes the room.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .gateway import (
    DEFAULT_TEMPERATURE,
    DEFAULT_TIMEOUT_MS,
    CompletionRequest,
    ContextOverflow,
    GatewayError,
    Provider,
    serialized_context_chars,
    MAX_CONTEXT_CHARS,
    MAX_CONTEXT_POSTS,
)
from .model import Hat, Phase, Post, is_sentinel_text

SENTINEL = "Good"
MAX_INTERVENTION_CHARS = 500

# Hats are always evaluated in this order so a shared scripted provider is
# consumed identically on every run.
HAT_ORDER = (Hat.WHITE, Hat.RED, Hat.BLACK, Hat.YELLOW, Hat.GREEN, Hat.BLUE)


@dataclass(frozen=True)
class HatAgentConfig:
    hat: Hat
    role_name: str
    macro_prompt: str
    situational_templates: tuple[str, ...]
    divergent_priority: int  # 1 = first pick while ideas are being generated
    convergent_priority: int  # 1 = first pick while consensus is forming
    temperature: float = DEFAULT_TEMPERATURE

    def priority(self, phase: Phase) -> int:
        return self.divergent_priority if phase is Phase.DIVERGENT else self.convergent_priority


@dataclass(frozen=True)
class HatDecision:
    """Outcome of one hat's evaluation on one tick: a reply or an abstention."""

    hat: Hat
    text: str | None  # None means Abstain
    latency_ms: int = 0
    cause: str = ""  # abstention reason, for the tick log

    @property
    def responded(self) -> bool:
        return self.text is not None


@dataclass(frozen=True)
class BaselineSchedule:
    """The fixed three-message facilitator: (offset_ms, text) entries."""

    entries: tuple[tuple[int, str], ...]

    def __post_init__(self):
        if len(self.entries) != 3:
            raise ValueError(f"baseline schedule needs exactly 3 entries, got {len(self.entries)}")
        offsets = [offset for offset, _ in self.entries]
        if sorted(set(offsets)) != offsets:
            raise ValueError("baseline offsets must be strictly increasing")

    def validate_for(self, duration_ms: int) -> None:
        last = self.entries[-1][0]
        if last >= duration_ms:
            raise ValueError(f"baseline offset {last} ms is past the {duration_ms} ms session")


BASELINE_MESSAGES: tuple[tuple[int, str], ...] = (
    (
        0,
        "Hi all, our goal today is to reach a consensus on the question posed at "
        "the end of the discussion. Please start by generating ideas.",
    ),
    (
        600_000,
        "You have already discussed it for 10 mins. This is a good time for you "
        "to reconsider the ideas that you have already had.",
    ),
    (
        1_020_000,
        "There are only 3 minutes left, if you haven’t reached a consensus "
        "yet, please make a decision as soon as possible.",
    ),
)


def default_baseline_schedule() -> BaselineSchedule:
    return BaselineSchedule(entries=BASELINE_MESSAGES)


_SHARED_OBJECTIVES = (
    "You are one of six facilitator roles supporting a small group holding a "
    "timed, text-only discussion. The group must reach a consensus decision on "
    "the stated question before time runs out. Guide the participants toward "
    "consensus, keep the discussion balanced so every voice is heard, and keep "
    "contributions structured and on-topic. Speak directly to the participants "
    "in plain language. Keep any intervention concise and relevant to what was "
    "just said."
)

_HAT_DEFS: tuple[tuple[Hat, str, str, tuple[str, ...], int, int], ...] = (
    (
        Hat.WHITE,
        "White Hat (Facts and Information)",
        "Your role is objective thinking: focus solely on data and facts, without "
        "interpretation, to ground the conversation in reality. Intervene when the "
        "discussion needs objective information or when participants make "
        "unsupported statements.",
        (
            "Could you clarify the exact figures or facts related to this issue? "
            "Here's what we know so far: [insert relevant data].",
        ),
        4,
        3,
    ),
    (
        Hat.RED,
        "Red Hat (Emotions and Intuition)",
        "Your role is feelings and gut reactions: allow emotion to be expressed "
        "without justification. Offer a short, intuitive perspective when the "
        "conversation touches on personal feelings.",
        (
            "This feels like an emotional moment. How are we feeling about this "
            "issue right now?",
        ),
        3,
        5,
    ),
    (
        Hat.BLACK,
        "Black Hat (Critical Thinking and Risk)",
        "Your role is the critical, cautious perspective: identify potential "
        "risks, weaknesses, and flaws the group might be overlooking, so negative "
        "outcomes are considered before a decision is made.",
        (
            "Have we considered the potential downsides? Here's a risk we might "
            "be overlooking: [insert risk].",
        ),
        5,
        2,
    ),
    (
        Hat.YELLOW,
        "Yellow Hat (Optimism and Benefits)",
        "Your role is optimism and positive thinking: offer a constructive view "
        "by highlighting the benefits and potential advantages of ideas, "
        "especially when the discussion needs a boost of optimism.",
        (
            "Looking at the bright side, this idea offers some exciting "
            "opportunities we shouldn’t overlook.",
        ),
        2,
        4,
    ),
    (
        Hat.GREEN,
        "Green Hat (Creativity and Alternatives)",
        "Your role is creative and innovative thinking: bring in new ideas or "
        "alternative approaches when the conversation stalls or could benefit "
        "from novel solutions.",
        (
            "What if we approached this from a different angle? Here’s an "
            "idea to consider: [insert new idea].",
        ),
        1,
        6,
    ),
    (
        Hat.BLUE,
        "Blue Hat (Process and Control)",
        "Your role is managing the thinking process itself: provide structure and "
        "direction, organize the conversation, and make sure the discussion stays "
        "on track and all perspectives are considered.",
        (
            "It seems like we’re getting off track. Maybe we should focus on "
            "this key point: [insert key point].",
        ),
        6,
        1,
    ),
)


def default_hat_registry() -> dict[Hat, HatAgentConfig]:
    registry = {}
    for hat, role_name, role_text, templates, div_rank, conv_rank in _HAT_DEFS:
        registry[hat] = HatAgentConfig(
            hat=hat,
            role_name=role_name,
            macro_prompt=f"{role_name}. {role_text}\n\n{_SHARED_OBJECTIVES}",
            situational_templates=templates,
            divergent_priority=div_rank,
            convergent_priority=conv_rank,
        )
    return registry


def validate_registry(registry: Mapping[Hat, HatAgentConfig]) -> None:
    """All six hats exactly once; per-phase priorities form a permutation of 1..6."""
    if set(registry) != set(Hat):
        missing = set(Hat) - set(registry)
        raise ValueError(f"hat registry must contain all six hats; missing {missing}")
    for attr in ("divergent_priority", "convergent_priority"):
        ranks = sorted(getattr(cfg, attr) for cfg in registry.values())
        if ranks != [1, 2, 3, 4, 5, 6]:
            raise ValueError(f"{attr} ranks must be a permutation of 1..6, got {ranks}")


HAT_REGISTRY = default_hat_registry()
validate_registry(HAT_REGISTRY)


def is_sentinel(text: str) -> bool:
    """True iff the reply is the abstention token (trimmed, case-insensitive,
    optional trailing period)."""
    return is_sentinel_text(text)


def transcript_window(posts: Sequence[Post]) -> list[Post]:
    """Most recent posts that fit the context budget (count and characters)."""
    window: list[Post] = []
    chars = 0
    for post in reversed(posts):
        cost = len(post.author) + len(post.text) + 2
        if len(window) + 1 > MAX_CONTEXT_POSTS or chars + cost > MAX_CONTEXT_CHARS:
            break
        window.append(post)
        chars += cost
    window.reverse()
    return window


_PHASE_DIRECTIVES = {
    Phase.DIVERGENT: (
        "The discussion is in its divergent stage: encourage broad idea "
        "generation and make sure quieter participants get to contribute."
    ),
    Phase.CONVERGENT: (
        "The discussion is in its convergent stage: help the group narrow down "
        "the existing ideas and settle on one consensus decision. Do not ask "
        "for brand-new ideas at this point."
    ),
}

_REENGAGE_DIRECTIVE = (
    "The conversation has gone quiet. Re-engage the participants with a "
    "targeted suggestion or a request to elaborate on an earlier point."
)


def assemble_prompt(
    cfg: HatAgentConfig,
    window: Sequence[Post],
    phase: Phase,
    elapsed_ms: int,
    remaining_ms: int,
    *,
    inactive: bool = False,
    max_output_chars: int = MAX_INTERVENTION_CHARS,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
) -> CompletionRequest:
    """Build the completion request for one hat on one tick.

    System prompt layering: macro role prompt, then the phase directive, a
    time-awareness clause, the abstention rule, and the hat's situational
    templates as micro guidance (plus a re-engagement directive on quiet
    ticks). Transcript messages keep their anonymous speaker labels.
    """
    if phase is Phase.CLOSED:
        raise ValueError("no prompts are assembled after the session closes")
    elapsed_min = elapsed_ms // 60_000
    total_min = (elapsed_ms + remaining_ms) // 60_000
    remaining_min = remaining_ms // 60_000
    parts = [
        cfg.macro_prompt,
        _PHASE_DIRECTIVES[phase],
        f"Time check: elapsed {elapsed_min} of {total_min} minutes; "
        f"{remaining_min} minutes remain.",
        f'If the conversation is progressing well and no intervention is needed '
        f'from your role right now, reply with exactly "{SENTINEL}" and nothing '
        f"else. Otherwise reply with your intervention only, at most "
        f"{max_output_chars} characters.",
        "Situational examples of how your role intervenes:\n"
        + "\n".join(f"- {template}" for template in cfg.situational_templates),
    ]
    if inactive:
        parts.append(_REENGAGE_DIRECTIVE)
    messages = [(post.author, post.text) for post in window]
    context_chars = serialized_context_chars(messages)
    if len(messages) > MAX_CONTEXT_POSTS or context_chars > MAX_CONTEXT_CHARS:
        # transcript_window() keeps callers inside the budget; reaching this
        # means the caller bypassed it
        raise ContextOverflow(f"window of {len(messages)} posts / {context_chars} chars")
    return CompletionRequest(
        system_prompt="\n\n".join(parts),
        messages=messages,
        max_output_chars=max_output_chars,
        temperature=cfg.temperature,
        timeout_ms=timeout_ms,
    )


_SENTENCE_ENDS = ".!?"
_CLOSERS = "\"')]’”"


def truncate_to_sentence(text: str, limit: int) -> str:
    """Cap text at ``limit`` chars, cutting at the last whole sentence.

    Falls back to a hard cut when a single sentence overruns the cap.
    """
    if len(text) <= limit:
        return text
    head = text[:limit]
    best = -1
    for i, ch in enumerate(head):
        if ch in _SENTENCE_ENDS:
            end = i + 1
            while end < len(head) and head[end] in _CLOSERS:
                end += 1
            best = end
    if best > 0:
        return head[:best].rstrip()
    return head.rstrip()


def evaluate_hat(
    cfg: HatAgentConfig,
    window: Sequence[Post],
    phase: Phase,
    elapsed_ms: int,
    remaining_ms: int,
    provider: Provider,
    *,
    inactive: bool = False,
    max_output_chars: int = MAX_INTERVENTION_CHARS,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
) -> HatDecision:
    """Ask one hat whether to intervene; every failure folds to Abstain."""
    try:
        request = assemble_prompt(
            cfg,
            window,
            phase,
            elapsed_ms,
            remaining_ms,
            inactive=inactive,
            max_output_chars=max_output_chars,
            timeout_ms=timeout_ms,
        )
        result = provider.complete(request)
    except GatewayError as exc:
        return HatDecision(hat=cfg.hat, text=None, cause=f"{type(exc).__name__}: {exc}")
    text = result.text.strip()
    if not text:
        return HatDecision(hat=cfg.hat, text=None, latency_ms=result.latency_ms, cause="empty")
    if is_sentinel(text):
        return HatDecision(hat=cfg.hat, text=None, latency_ms=result.latency_ms, cause="sentinel")
    return HatDecision(
        hat=cfg.hat,
        text=truncate_to_sentence(text, max_output_chars),
        latency_ms=result.latency_ms,
    )


def select_intervention(
    decisions: Sequence[HatDecision],
    phase: Phase,
    history: Sequence[Hat],
    registry: Mapping[Hat, HatAgentConfig] = HAT_REGISTRY,
) -> tuple[Hat, str] | None:
    """Pick at most one intervention from this tick's decisions.

    Among responders the hat with the best phase priority wins, except that a
    hat behind either of the last two facilitator posts yields to every hat
    that is not (it still wins if every responder is equally over-exposed).
    Pure function: identical inputs always select identically.
    """
    seen: set[Hat] = set()
    for decision in decisions:
        if decision.hat in seen:
            raise ValueError(f"duplicate decision for {decision.hat}")
        seen.add(decision.hat)
    responders = [d for d in decisions if d.responded]
    if not responders:
        return None
    recent = set(history[-2:])
    chosen = min(
        responders,
        key=lambda d: (d.hat in recent, registry[d.hat].priority(phase)),
    )
    assert chosen.text is not None
    return chosen.hat, chosen.text


def baseline_message(
    schedule: BaselineSchedule, elapsed_ms: int, already_sent: set[int]
) -> str | None:
    """First unsent schedule entry that is due; marks it sent."""
    for index, (offset_ms, text) in enumerate(schedule.entries):
        if index not in already_sent and offset_ms <= elapsed_ms:
            already_sent.add(index)
            return text
    return None
