from __future__ import annotations

import pytest

from ptfa.config import default_config
from ptfa.model import TOPICS, FacilitationModel, Session
from ptfa.room import SessionRoom
from ptfa.scheduler import SchedulerConfig
from ptfa.storage import SessionStore

# High enough that a full simulated session sleeps for microseconds.
FAST_SCALE = 2_000_000.0

# Verdict lines from the acceptance suite; echoed after the run because
# pytest's capture would otherwise swallow them on success.
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def app_config():
    return default_config()


def make_session(
    session_id: str = "s-test",
    model: FacilitationModel = FacilitationModel.MODEL1,
    group_size: int = 3,
    duration_ms: int = 1_200_000,
    boundary_ms: int = 600_000,
) -> Session:
    session = Session(
        session_id=session_id,
        topic=TOPICS[0],
        model=model,
        group_size=group_size,
        duration_ms=duration_ms,
        phase_boundary_ms=boundary_ms,
    )
    session.participants.extend(f"P{i + 1}" for i in range(group_size))
    return session


def make_room(
    tmp_path=None,
    session_id: str = "s-test",
    model: FacilitationModel = FacilitationModel.MODEL1,
    cfg: SchedulerConfig | None = None,
    group_size: int = 3,
) -> SessionRoom:
    cfg = cfg or SchedulerConfig()
    session = make_session(
        session_id=session_id,
        model=model,
        group_size=group_size,
        duration_ms=cfg.session_duration_ms,
        boundary_ms=cfg.phase_boundary_ms,
    )
    store = None
    if tmp_path is not None:
        store = SessionStore(tmp_path)
        store.create_session(session_id, 0, model.value, group_size)
    return SessionRoom(session, cfg, store)
