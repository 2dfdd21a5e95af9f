"""Session clock, decision ticks, and the single-writer session loop.

A session is driven by one loop that wakes every tick interval, in order:
session end check, phase announcement, then one facilitation decision
(baseline schedule for model "0", hat evaluation for model "1"). All mutation
goes through the room, so live traffic and the loop serialize on its lock.

Clocks are injectable. SimClock derives timestamps from the virtual timeline
and only *paces* wall time by clock_scale, so a scaled run produces the exact
timestamps of an unscaled one.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterator, Protocol, Sequence

from .engine import (
    HAT_ORDER,
    HAT_REGISTRY,
    HatAgentConfig,
    HatDecision,
    baseline_message,
    evaluate_hat,
    select_intervention,
)
from .gateway import Provider
from .model import ClockRegression, FacilitationModel, Hat, Phase, phase_at

if TYPE_CHECKING:
    from .room import SessionRoom

TICK_DEADLINE_MARGIN_MS = 2_000


@dataclass(frozen=True)
class SchedulerConfig:
    tick_interval_ms: int = 30_000
    session_duration_ms: int = 1_200_000
    phase_boundary_ms: int = 600_000
    inactivity_threshold_ms: int = 90_000
    min_intervention_gap_ms: int = 60_000
    clock_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.tick_interval_ms <= 0:
            raise ValueError("tick_interval_ms must be positive")
        if not 0 < self.phase_boundary_ms < self.session_duration_ms:
            raise ValueError("phase boundary must fall inside the session")
        if self.clock_scale <= 0:
            raise ValueError("clock_scale must be positive")
        if self.inactivity_threshold_ms <= 0 or self.min_intervention_gap_ms <= 0:
            raise ValueError("thresholds must be positive")


def phase_of(elapsed_ms: int, cfg: SchedulerConfig) -> Phase:
    return phase_at(elapsed_ms, cfg.phase_boundary_ms, cfg.session_duration_ms)


class TickAction(str, Enum):
    NONE = "none"
    BASELINE_POSTED = "baseline_posted"
    HAT_POSTED = "hat_posted"
    INACTIVITY_PROMPT = "inactivity_prompt"
    PHASE_ANNOUNCED = "phase_announced"
    SESSION_ENDED = "session_ended"


@dataclass(frozen=True)
class TickReport:
    """One line of the tick log; tick_index = elapsed_ms // tick_interval_ms."""

    tick_index: int
    elapsed_ms: int
    phase: Phase
    action: TickAction
    hat: Hat | None
    inactivity: bool

    def to_json_line(self) -> str:
        payload = {
            "tick_index": self.tick_index,
            "elapsed_ms": self.elapsed_ms,
            "phase": self.phase.value,
            "action": self.action.value,
            "hat": self.hat.value if self.hat is not None else None,
            "inactivity": self.inactivity,
        }
        return json.dumps(payload, separators=(",", ":"))


def detect_inactivity(last_activity_ts: int, elapsed_ms: int, cfg: SchedulerConfig) -> bool:
    """True when the gap since the last non-system post reached the threshold."""
    return elapsed_ms - last_activity_ts >= cfg.inactivity_threshold_ms


def rate_gate(
    facilitator_ts: Sequence[int], elapsed_ms: int, cfg: SchedulerConfig, inactive: bool
) -> bool:
    """May the facilitator post now? Inactivity waives the minimum gap."""
    if inactive:
        return True
    if not facilitator_ts:
        return True
    return elapsed_ms - facilitator_ts[-1] >= cfg.min_intervention_gap_ms


class Clock(Protocol):
    def now_ms(self) -> int:
        """Milliseconds since session start."""

    def sleep_until_ms(self, target_ms: int) -> None:
        """Block until now_ms() >= target_ms."""


class SystemClock:
    """Wall clock, zeroed at construction, monotonic source."""

    def __init__(self) -> None:
        self._origin = time.monotonic()

    def now_ms(self) -> int:
        return int((time.monotonic() - self._origin) * 1000)

    def sleep_until_ms(self, target_ms: int) -> None:
        while True:
            remaining = target_ms - self.now_ms()
            if remaining <= 0:
                return
            time.sleep(remaining / 1000)


class SimClock:
    """Virtual timeline paced by clock_scale.

    now_ms() reports the virtual time, which advances in exact jumps on
    sleep_until_ms; the scale only shortens the real wait. Timestamps are
    therefore identical across scales.
    """

    def __init__(self, scale: float = 1.0):
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.scale = scale
        self._now_ms = 0
        self._lock = threading.Lock()

    def now_ms(self) -> int:
        with self._lock:
            return self._now_ms

    def sleep_until_ms(self, target_ms: int) -> None:
        with self._lock:
            delta = target_ms - self._now_ms
            if delta <= 0:
                return
        time.sleep(delta / 1000 / self.scale)
        with self._lock:
            if target_ms > self._now_ms:
                self._now_ms = target_ms


def run_tick(
    room: "SessionRoom",
    provider: Provider | None,
    clock: Clock,
    registry: dict[Hat, HatAgentConfig] = HAT_REGISTRY,
) -> TickReport:
    """One decision tick. Returns what happened; ends the session when due."""
    cfg = room.cfg
    with room.lock:
        # Read under the lock so end/announce timestamps cannot be older
        # than a post that slipped in just before the lock was taken.
        now = clock.now_ms()
        elapsed = room.elapsed_ms(now)
        tick_index = elapsed // cfg.tick_interval_ms
        if elapsed >= cfg.session_duration_ms:
            room.end(now)
            return TickReport(
                tick_index, elapsed, Phase.CLOSED, TickAction.SESSION_ENDED, None, False
            )
        announced = False
        if room.session.phase is Phase.DIVERGENT and phase_of(elapsed, cfg) is Phase.CONVERGENT:
            room.announce_convergent(now)
            announced = True
        phase = room.session.phase
        if room.session.model is FacilitationModel.MODEL0:
            text = baseline_message(room.schedule, elapsed, room.baseline_sent)
            if text is not None:
                room.append_facilitator(None, text, clock.now_ms())
                return TickReport(
                    tick_index, elapsed, phase, TickAction.BASELINE_POSTED, None, False
                )
            action = TickAction.PHASE_ANNOUNCED if announced else TickAction.NONE
            return TickReport(tick_index, elapsed, phase, action, None, False)
        view = room.tick_view()

    # Model "1": evaluate hats outside the lock so live posts keep flowing.
    inactive = detect_inactivity(view.last_activity_ts, elapsed, cfg)
    if not rate_gate(view.facilitator_ts, elapsed, cfg, inactive):
        action = TickAction.PHASE_ANNOUNCED if announced else TickAction.NONE
        return TickReport(tick_index, elapsed, phase, action, None, inactive)

    if provider is None:
        raise ValueError("hat-model sessions require a provider")
    remaining = cfg.session_duration_ms - elapsed
    deadline = now + max(cfg.tick_interval_ms - TICK_DEADLINE_MARGIN_MS, 1_000)
    decisions: list[HatDecision] = []
    for hat in HAT_ORDER:
        budget = deadline - clock.now_ms()
        if budget <= 0:
            decisions.append(HatDecision(hat=hat, text=None, latency_ms=0, cause="deadline"))
            continue
        decisions.append(
            evaluate_hat(
                registry[hat],
                view.window,
                phase,
                elapsed,
                remaining,
                provider,
                inactive=inactive,
                timeout_ms=budget,
            )
        )
    selected = select_intervention(decisions, phase, view.facilitator_hats, registry)
    if selected is not None:
        hat, text = selected
        with room.lock:
            if room.session.phase is not Phase.CLOSED:
                room.append_facilitator(hat, text, clock.now_ms())
                return TickReport(tick_index, elapsed, phase, TickAction.HAT_POSTED, hat, inactive)
    if announced:
        action = TickAction.PHASE_ANNOUNCED
    elif inactive:
        action = TickAction.INACTIVITY_PROMPT
    else:
        action = TickAction.NONE
    return TickReport(tick_index, elapsed, phase, action, None, inactive)


ScriptEntry = tuple[int, str, str]  # (offset_ms, participant_id, text)


def run_session(
    room: "SessionRoom",
    provider: Provider | None,
    clock: Clock,
    registry: dict[Hat, HatAgentConfig] = HAT_REGISTRY,
    script: Sequence[ScriptEntry] = (),
) -> Iterator[TickReport]:
    """Drive a live session to completion, yielding one report per tick.

    Scripted posts (offsets relative to session start) are submitted at their
    due times; a post due exactly at a tick boundary lands before that tick's
    decision. Ends by yielding the session-end report.
    """
    cfg = room.cfg
    start = room.started_at_ms
    entries = sorted(enumerate(script), key=lambda item: (item[1][0], item[0]))
    cursor = 0
    tick = 0
    prev_now = clock.now_ms()
    while True:
        target = tick * cfg.tick_interval_ms
        while cursor < len(entries) and entries[cursor][1][0] <= target:
            offset, participant_id, text = entries[cursor][1]
            cursor += 1
            clock.sleep_until_ms(start + offset)
            room.submit_post(participant_id, text, clock.now_ms())
        clock.sleep_until_ms(start + target)
        now = clock.now_ms()
        if now < prev_now:
            raise ClockRegression(f"clock moved from {prev_now} back to {now}")
        prev_now = now
        report = run_tick(room, provider, clock, registry)
        yield report
        if report.action is TickAction.SESSION_ENDED:
            return
        # Never re-run an index; skip any ticks lost to wake latency.
        tick = max(tick + 1, (clock.now_ms() - start) // cfg.tick_interval_ms + 1)
