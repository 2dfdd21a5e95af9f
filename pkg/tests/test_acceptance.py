"""End-to-end acceptance checks, one test per guaranteed property.

Every expected value here is stated independently: message texts, priority
tables, and metric counts are literals in this file, never imported from the
code under test. Each test prints a single verdict line, so a plain run reads
as a checklist.
"""

from __future__ import annotations

import json
import random
import subprocess
import sys
import threading
import time
from contextlib import contextmanager, suppress
from pathlib import Path

import httpx
import pytest
from click.testing import CliRunner
from conftest import FAST_SCALE, record_acceptance
from websockets.sync.client import connect as ws_connect

from ptfa.cli import main as cli_main
from ptfa.config import default_config
from ptfa.engine import HatDecision, select_intervention
from ptfa.gateway import CompletionResult, ScriptedProvider
from ptfa.metrics import compute_metrics
from ptfa.model import TOPICS, FacilitationModel, Hat, Phase, Session
from ptfa.room import SessionRoom
from ptfa.scheduler import SchedulerConfig, SimClock, TickAction, run_session
from ptfa.sim import parse_script, simulate
from ptfa.storage import SessionStore, parse_dataset

GOLDEN_DIR = Path(__file__).parent / "golden"

WORDS = ("idea", "option", "maybe", "we", "should", "try", "plan", "vote", "think", "agree")


@contextmanager
def verdict(name: str):
    started = time.monotonic()
    try:
        yield
    except BaseException:
        line = f"ACCEPTANCE {name}: FAIL ({time.monotonic() - started:.1f}s)"
        print(line)
        record_acceptance(line)
        raise
    line = f"ACCEPTANCE {name}: PASS ({time.monotonic() - started:.1f}s)"
    print(line)
    record_acceptance(line)


class CallScriptedProvider:
    """Replies by call index: overrides win, otherwise cycle the base list."""

    provider_id = "call-scripted"

    def __init__(self, base: list[str], overrides: dict[int, str] | None = None):
        self.base = base
        self.overrides = overrides or {}
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, req) -> CompletionResult:
        with self._lock:
            index = self.calls
            self.calls += 1
        text = self.overrides.get(index, self.base[index % len(self.base)])
        return CompletionResult(text=text, latency_ms=0, provider_id=self.provider_id)


def random_post_script(rng: random.Random, max_posts: int = 40) -> list[tuple[int, str, str]]:
    return [
        (
            rng.randrange(0, 1_199_000),
            f"P{rng.randint(1, 3)}",
            " ".join(rng.choices(WORDS, k=rng.randint(1, 10))),
        )
        for _ in range(rng.randint(0, max_posts))
    ]


def random_provider_lines(rng: random.Random, count: int, respond_p: float) -> list[str]:
    lines = []
    for _ in range(count):
        if rng.random() < respond_p:
            lines.append("Let us " + " ".join(rng.choices(WORDS, k=4)) + ".")
        else:
            lines.append("Good")
    return lines


def drive_session(store, session_id, model, provider, script):
    """Run one full session on the virtual clock; returns its whole history."""
    cfg = SchedulerConfig()
    if store is not None:
        store.create_session(session_id, 0, model.value, 3)
    session = Session(
        session_id=session_id,
        topic=TOPICS[0],
        model=model,
        group_size=3,
        duration_ms=cfg.session_duration_ms,
        phase_boundary_ms=cfg.phase_boundary_ms,
    )
    session.participants.extend(["P1", "P2", "P3"])
    room = SessionRoom(session, cfg, store)
    envelopes: list[dict] = []
    room.subscribe(envelopes.append)
    clock = SimClock(FAST_SCALE)
    room.start(0)
    reports = list(run_session(room, provider, clock, script=script))
    return session, reports, envelopes


# -- 1: the fixed facilitator posts its three messages on time --------------------


def test_baseline_schedule_fidelity(tmp_path):
    expected = [
        (
            0,
            "Hi all, our goal today is to reach a consensus on the question posed "
            "at the end of the discussion. Please start by generating ideas.",
        ),
        (
            600_000,
            "You have already discussed it for 10 mins. This is a good time for "
            "you to reconsider the ideas that you have already had.",
        ),
        (
            1_020_000,
            "There are only 3 minutes left, if you haven’t reached a consensus "
            "yet, please make a decision as soon as possible.",
        ),
    ]
    with verdict("baseline-schedule-fidelity"):
        started = time.monotonic()
        result = simulate(
            parse_script(""),
            default_config(),
            FacilitationModel.MODEL0,
            tmp_path,
            scale=100,
        )
        runtime = time.monotonic() - started
        records = [json.loads(l) for l in result.export_path.read_text().splitlines()]
        facilitator = [r for r in records if r["author_id"] == "FACILITATOR"]
        assert len(facilitator) == 3
        for record, (offset, text) in zip(facilitator, expected):
            assert abs(record["ts_ms"] - offset) <= 30_000
            assert record["text"] == text
            assert record["hat"] is None
            assert record["model"] == "0"
        assert runtime < 30.0, f"took {runtime:.1f}s"


# -- 2: forty decision ticks, then the end-of-session report ----------------------


def test_tick_count_fidelity(tmp_path):
    with verdict("tick-count-fidelity"):
        started = time.monotonic()
        result = simulate(
            parse_script(""),
            default_config(),
            FacilitationModel.MODEL1,
            tmp_path,
            scale=FAST_SCALE,
        )
        runtime = time.monotonic() - started
        reports = result.reports
        assert len(reports) == 41
        assert all(r.action is not TickAction.SESSION_ENDED for r in reports[:40])
        assert reports[40].action is TickAction.SESSION_ENDED
        assert [r.tick_index for r in reports] == list(range(41))
        assert runtime < 30.0, f"took {runtime:.1f}s"


# -- 3: the abstention sentinel never reaches the transcript ----------------------


def test_sentinel_suppression(tmp_path):
    with verdict("sentinel-suppression"):
        store = SessionStore(tmp_path)
        sentinel_only = CallScriptedProvider(["Good", " good. ", "GOOD"])
        session, _, envelopes = drive_session(
            store, "all-sentinel", FacilitationModel.MODEL1, sentinel_only, []
        )
        data = store.export_dataset("all-sentinel")
        records = [json.loads(l) for l in data.decode().splitlines()]
        assert [r for r in records if r["author_id"] == "FACILITATOR"] == []
        assert [e for e in envelopes if e["type"] == "facilitator"] == []

        one_reply = CallScriptedProvider(
            ["Good", " good. ", "GOOD"],
            overrides={37: "We should weigh a second option before deciding."},
        )
        session, _, _ = drive_session(
            store, "one-reply", FacilitationModel.MODEL1, one_reply, []
        )
        records = [
            json.loads(l)
            for l in store.export_dataset("one-reply").decode().splitlines()
        ]
        facilitator = [r for r in records if r["author_id"] == "FACILITATOR"]
        assert len(facilitator) == 1
        assert facilitator[0]["text"] == "We should weigh a second option before deciding."
        store.close()


# -- 4: phase announcements fire once and stamped phases match the clock ----------


def phase_for_ts(ts_ms: int) -> str:
    if ts_ms < 600_000:
        return "divergent"
    if ts_ms < 1_200_000:
        return "convergent"
    return "closed"


def test_phase_machine(tmp_path):
    with verdict("phase-machine"):
        store = SessionStore(tmp_path)
        rng = random.Random(41)
        for trial in range(20):
            provider = ScriptedProvider(random_provider_lines(rng, 240, 0.25))
            script = random_post_script(rng)
            session_id = f"phase-{trial}"
            _, _, envelopes = drive_session(
                store, session_id, FacilitationModel.MODEL1, provider, script
            )

            phases = [e for e in envelopes if e["type"] == "phase"]
            assert [p["phase"] for p in phases] == ["convergent", "closed"], session_id
            assert abs(phases[0]["ts_ms"] - 600_000) <= 30_000
            assert abs(phases[1]["ts_ms"] - 1_200_000) <= 30_000
            ends = [e for e in envelopes if e["type"] == "session_end"]
            assert len(ends) == 1

            for record in parse_dataset(store.export_dataset(session_id)):
                assert record.phase == phase_for_ts(record.ts_ms), record
        store.close()


# -- 5: interventions respect the spacing rule unless the room went quiet ---------


def test_rate_gate():
    with verdict("rate-gate"):
        rng = random.Random(43)
        pairs_checked = 0
        violations = []
        for trial in range(100):
            provider = ScriptedProvider(random_provider_lines(rng, 260, 0.85))
            script = random_post_script(rng, max_posts=12)
            session, reports, _ = drive_session(
                None, f"gate-{trial}", FacilitationModel.MODEL1, provider, script
            )
            by_index = {r.tick_index: r for r in reports}
            hat_posts = [p for p in session.posts if p.author == "FACILITATOR"]
            for earlier, later in zip(hat_posts, hat_posts[1:]):
                pairs_checked += 1
                gap = later.ts_ms - earlier.ts_ms
                if gap < 60_000 and not by_index[later.ts_ms // 30_000].inactivity:
                    violations.append((trial, earlier.ts_ms, later.ts_ms))
        assert pairs_checked > 200, "property would be vacuous"
        assert violations == []


# -- 6: selection agrees with a brute-force restatement of the rules --------------

DIVERGENT_RANK = {"green": 1, "yellow": 2, "red": 3, "white": 4, "black": 5, "blue": 6}
CONVERGENT_RANK = {"blue": 1, "black": 2, "white": 3, "yellow": 4, "red": 5, "green": 6}


def brute_force_selection(decisions, phase, history):
    rank = DIVERGENT_RANK if phase is Phase.DIVERGENT else CONVERGENT_RANK
    responders = [d for d in decisions if d.text is not None]
    if not responders:
        return None
    recent = set(history[-2:])
    fresh = [d for d in responders if d.hat not in recent]
    pool = fresh if fresh else responders
    best = pool[0]
    for candidate in pool[1:]:
        if rank[candidate.hat.value] < rank[best.hat.value]:
            best = candidate
    return best.hat, best.text


def test_selection_policy_oracle():
    with verdict("selection-policy-oracle"):
        rng = random.Random(47)
        disagreements = 0
        for _ in range(1_000):
            hats = list(Hat)
            rng.shuffle(hats)
            decisions = [
                HatDecision(
                    hat=hat,
                    text=(
                        " ".join(rng.choices(WORDS, k=3)) if rng.random() < 0.5 else None
                    ),
                )
                for hat in hats[: rng.randint(1, 6)]
            ]
            phase = rng.choice([Phase.DIVERGENT, Phase.CONVERGENT])
            history = [rng.choice(list(Hat)) for _ in range(rng.randint(0, 5))]
            if select_intervention(decisions, phase, history) != brute_force_selection(
                decisions, phase, history
            ):
                disagreements += 1
        assert disagreements == 0


# -- 7: identical inputs give byte-identical exports -------------------------------

DETERMINISM_SCRIPT = """\
{"offset_ms": 4000, "participant": 0, "text": "Let us start with a list."}
{"offset_ms": 65000, "participant": 1, "text": "I can add two more options."}
{"offset_ms": 640000, "participant": 2, "text": "Time to pick one."}
{"llm": "Good"}
{"llm": "Good"}
{"llm": "What benefits would each option bring?"}
{"llm": "Good"}
{"llm": "Good"}
{"llm": "Good"}
"""


def test_determinism(tmp_path):
    with verdict("determinism"):
        script_path = tmp_path / "script.jsonl"
        script_path.write_text(DETERMINISM_SCRIPT, encoding="utf-8")
        runner = CliRunner()
        outputs = []
        for name in ("first", "second"):
            out_dir = tmp_path / name
            result = runner.invoke(
                cli_main,
                [
                    "simulate",
                    str(script_path),
                    "--scale",
                    str(FAST_SCALE),
                    "--out",
                    str(out_dir),
                ],
            )
            assert result.exit_code == 0, result.output
            exports = list(out_dir.glob("session_*.jsonl"))
            ticks = list(out_dir.glob("ticks_*.jsonl"))
            assert len(exports) == 1 and len(ticks) == 1
            outputs.append((exports[0].read_bytes(), ticks[0].read_bytes()))
        assert outputs[0][0] == outputs[1][0], "dataset exports differ"
        assert outputs[0][1] == outputs[1][1], "tick logs differ"


# -- 8: what the export says is exactly what the room remembers -------------------


def test_export_round_trip(tmp_path):
    with verdict("export-round-trip"):
        store = SessionStore(tmp_path)
        rng = random.Random(53)
        for trial in range(50):
            model = rng.choice([FacilitationModel.MODEL0, FacilitationModel.MODEL1])
            if model is FacilitationModel.MODEL1:
                provider = ScriptedProvider(random_provider_lines(rng, 250, 0.4))
            else:
                provider = None
            session_id = f"trip-{trial}"
            session, _, _ = drive_session(
                store, session_id, model, provider, random_post_script(rng)
            )
            records = parse_dataset(store.export_dataset(session_id))
            assert len(records) == len(session.posts)
            for record, post in zip(records, session.posts):
                assert record.session_id == session.session_id
                assert record.seq == post.seq
                assert record.ts_ms == post.ts_ms
                assert record.author_id == post.author
                assert record.hat == (post.hat.value if post.hat is not None else None)
                assert record.phase == post.phase.value
                assert record.model == model.value
                assert record.topic_id == 0
                assert record.text == post.text
                assert (record.hat is not None) == (
                    record.author_id == "FACILITATOR" and record.model == "1"
                )
        store.close()


# -- 9: metrics equal the hand-counted oracle and add up over any split -----------


def test_metrics_oracle(tmp_path):
    with verdict("metrics-oracle"):
        metrics = compute_metrics([GOLDEN_DIR / "golden_transcript.jsonl"])
        expected = json.loads((GOLDEN_DIR / "golden_metrics.json").read_text())
        assert metrics.as_dict() == expected

        rng = random.Random(59)
        paths = []
        for index in range(20):
            session_id = f"m{index}"
            lines = []
            ts = 0
            for seq in range(1, rng.randint(3, 25)):
                ts += rng.randrange(0, 50_000)
                roll = rng.random()
                if roll < 0.25:
                    author, hat = "FACILITATOR", rng.choice(list(DIVERGENT_RANK))
                elif roll < 0.35:
                    author, hat = "SYSTEM", None
                else:
                    author, hat = f"P{rng.randint(1, 3)}", None
                lines.append(
                    json.dumps(
                        {
                            "session_id": session_id,
                            "seq": seq,
                            "ts_ms": ts,
                            "author_id": author,
                            "hat": hat,
                            "phase": phase_for_ts(ts),
                            "model": "1",
                            "topic_id": 0,
                            "text": " ".join(rng.choices(WORDS, k=rng.randint(1, 8))),
                        },
                        separators=(",", ":"),
                    )
                )
            path = tmp_path / f"session_{session_id}.jsonl"
            path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
            paths.append(path)

        whole = compute_metrics(paths).as_dict()
        for seed in range(5):
            shuffler = random.Random(seed)
            shuffled = list(paths)
            shuffler.shuffle(shuffled)
            cut_points = sorted(
                shuffler.sample(range(1, len(shuffled)), shuffler.randint(1, 4))
            )
            merged = None
            start = 0
            for cut in cut_points + [len(shuffled)]:
                part = compute_metrics(shuffled[start:cut])
                merged = part if merged is None else merged.merge(part)
                start = cut
            assert merged is not None
            assert merged.as_dict() == whole


# -- live-service helpers ----------------------------------------------------------


def write_service_config(path: Path, data_dir: Path, *, duration: int, tick: int) -> None:
    path.write_text(
        json.dumps(
            {
                "service": {"host": "127.0.0.1", "port": 0, "data_dir": str(data_dir)},
                "scheduler": {
                    "tick_interval_ms": tick,
                    "session_duration_ms": duration,
                    "phase_boundary_ms": duration // 2,
                    "inactivity_threshold_ms": duration,
                    "min_intervention_gap_ms": duration,
                },
                "provider": {"kind": "scripted", "script": ["Good"]},
            }
        ),
        encoding="utf-8",
    )


def start_server(config_path: Path, env: dict) -> tuple[subprocess.Popen, str]:
    proc = subprocess.Popen(
        [sys.executable, "-m", "ptfa.cli", "serve", "--config", str(config_path)],
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
        text=True,
        env=env,
    )
    banner = []
    base_url = None
    assert proc.stdout is not None
    for line in proc.stdout:
        banner.append(line)
        if "listening on " in line:
            base_url = line.split("listening on ", 1)[1].strip()
            break
    if base_url is None:
        proc.kill()
        raise AssertionError(f"server never became ready: {''.join(banner)}")

    def drain(stream):
        for _ in stream:
            pass

    threading.Thread(target=drain, args=(proc.stdout,), daemon=True).start()

    deadline = time.monotonic() + 15
    while time.monotonic() < deadline:
        try:
            if httpx.get(base_url + "/healthz", timeout=2.0).status_code == 200:
                return proc, base_url
        except httpx.TransportError:
            time.sleep(0.05)
    proc.kill()
    raise AssertionError("server bound its port but /healthz never answered")


def ws_join(base_url: str, session_id: str, token: str):
    ws = ws_connect(base_url.replace("http://", "ws://") + "/ws")
    ws.send(json.dumps({"type": "join", "session_id": session_id, "token": token}))
    joined = json.loads(ws.recv(timeout=10))
    assert joined["type"] == "joined", joined
    return ws, joined


def recv_until_type(ws, kind: str, limit: int = 500) -> dict:
    for _ in range(limit):
        envelope = json.loads(ws.recv(timeout=30))
        if envelope["type"] == kind:
            return envelope
    raise AssertionError(f"no {kind} envelope in {limit} frames")


ADMIN = "acceptance-admin-token"


def admin_env():
    import os

    env = dict(os.environ)
    env["PTFA_ADMIN_TOKEN"] = ADMIN
    env["PYTHONUNBUFFERED"] = "1"
    return env


# -- 10: a post acknowledged to its author survives a hard kill -------------------


def test_crash_durability(tmp_path):
    with verdict("crash-durability"):
        env = admin_env()
        survived = 0
        for trial in range(10):
            trial_dir = tmp_path / f"trial{trial}"
            trial_dir.mkdir()
            config_path = trial_dir / "config.json"
            write_service_config(
                config_path, trial_dir / "data", duration=600_000, tick=10_000
            )

            proc, base_url = start_server(config_path, env)
            sockets = []
            try:
                created = httpx.post(
                    base_url + "/sessions",
                    json={"model": "1"},
                    headers={"x-admin-token": ADMIN},
                    timeout=10.0,
                ).json()
                sid, tokens = created["session_id"], created["tokens"]
                for token in tokens:
                    ws, _ = ws_join(base_url, sid, token)
                    sockets.append(ws)
                marker = f"must survive the crash {trial}"
                sockets[0].send(json.dumps({"type": "post", "text": marker}))
                ack = recv_until_type(sockets[0], "post")
                assert ack["text"] == marker
            finally:
                proc.kill()
                proc.wait()
                for ws in sockets:
                    with suppress(Exception):
                        ws.close()

            proc2, base_url2 = start_server(config_path, env)
            try:
                export = httpx.get(f"{base_url2}/sessions/{sid}/export", timeout=10.0)
                assert export.status_code == 200, export.text
                texts = [json.loads(l)["text"] for l in export.text.splitlines()]
                if marker in texts:
                    survived += 1
            finally:
                proc2.kill()
                proc2.wait()
        assert survived == 10, f"only {survived}/10 posts survived"


# -- 11: every member sees the same stream in the same order ----------------------


def test_ordering_consistency(tmp_path):
    with verdict("ordering-consistency"):
        env = admin_env()
        config_path = tmp_path / "config.json"
        write_service_config(config_path, tmp_path / "data", duration=8_000, tick=500)
        proc, base_url = start_server(config_path, env)
        sockets: list = []
        try:
            created = httpx.post(
                base_url + "/sessions",
                json={"model": "1"},
                headers={"x-admin-token": ADMIN},
                timeout=10.0,
            ).json()
            sid, tokens = created["session_id"], created["tokens"]
            sockets.extend(ws_join(base_url, sid, token)[0] for token in tokens)

            streams: list[list[dict]] = [[], [], []]
            collector_errors: list[Exception] = []

            def collect(index: int) -> None:
                try:
                    while True:
                        envelope = json.loads(sockets[index].recv(timeout=30))
                        streams[index].append(envelope)
                        if envelope["type"] == "session_end":
                            return
                except Exception as exc:  # surfaced after join()
                    collector_errors.append(exc)

            barrier = threading.Barrier(3)

            def blast(index: int) -> None:
                barrier.wait()
                for n in range(70):
                    sockets[index].send(
                        json.dumps(
                            {"type": "post", "text": f"client {index} message {n}"}
                        )
                    )
                    time.sleep(0.002)

            collectors = [
                threading.Thread(target=collect, args=(i,), daemon=True) for i in range(3)
            ]
            senders = [
                threading.Thread(target=blast, args=(i,), daemon=True) for i in range(3)
            ]
            for thread in collectors + senders:
                thread.start()
            for thread in senders:
                thread.join(timeout=30)
            for thread in collectors:
                thread.join(timeout=40)
                assert not thread.is_alive(), "collector never saw session_end"
            assert collector_errors == [], collector_errors

            sequences = [[e["seq"] for e in stream if "seq" in e] for stream in streams]
            assert sequences[0] == sequences[1] == sequences[2]
            assert sequences[0] == list(range(1, len(sequences[0]) + 1))
            member_posts = [
                e
                for e in streams[0]
                if e["type"] == "post" and e["author"].startswith("P")
            ]
            assert len(member_posts) >= 200
            errors = [e for e in streams[0] if e["type"] == "error"]
            assert errors == []
        finally:
            proc.kill()
            proc.wait()
            for ws in sockets:
                with suppress(Exception):
                    ws.close()
