"""Offline metrics over exported transcript files.

Counting rules, fixed and documented:
  - a word is a maximal run of non-whitespace characters (str.split);
  - system lifecycle records are excluded from every count, so the numbers
    describe the discussion itself (participants plus facilitator);
  - an intervention is a hat-attributed facilitator post (model "1");
    inter-intervention gaps are measured between consecutive interventions
    of the same session.

All counters are additive, so metrics over a set of files equal the
field-wise sum of per-file metrics regardless of file order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .model import FACILITATOR, SYSTEM
from .storage import DatasetRecord


class SchemaViolation(Exception):
    """A dataset file does not conform to the record schema."""

    def __init__(self, path: str, line: int, reason: str):
        self.path = path
        self.line = line
        self.reason = reason
        super().__init__(f"{path}:{line}: {reason}")


def word_count(text: str) -> int:
    return len(text.split())


@dataclass
class TranscriptMetrics:
    total_posts: int = 0
    total_words: int = 0
    facilitator_posts: int = 0
    facilitator_words: int = 0
    posts_per_hat: dict[str, int] = field(default_factory=dict)
    words_per_participant: dict[str, int] = field(default_factory=dict)
    interventions_per_phase: dict[str, int] = field(default_factory=dict)
    intervention_gap_count: int = 0
    intervention_gap_sum_ms: int = 0
    intervention_gap_max_ms: int = 0

    @property
    def mean_intervention_gap_ms(self) -> float:
        if self.intervention_gap_count == 0:
            return 0.0
        return self.intervention_gap_sum_ms / self.intervention_gap_count

    @property
    def max_intervention_gap_ms(self) -> int:
        return self.intervention_gap_max_ms

    def merge(self, other: "TranscriptMetrics") -> "TranscriptMetrics":
        """Field-wise sum; the additivity property in executable form."""
        merged = TranscriptMetrics(
            total_posts=self.total_posts + other.total_posts,
            total_words=self.total_words + other.total_words,
            facilitator_posts=self.facilitator_posts + other.facilitator_posts,
            facilitator_words=self.facilitator_words + other.facilitator_words,
            posts_per_hat=_merge_counts(self.posts_per_hat, other.posts_per_hat),
            words_per_participant=_merge_counts(
                self.words_per_participant, other.words_per_participant
            ),
            interventions_per_phase=_merge_counts(
                self.interventions_per_phase, other.interventions_per_phase
            ),
            intervention_gap_count=self.intervention_gap_count + other.intervention_gap_count,
            intervention_gap_sum_ms=self.intervention_gap_sum_ms + other.intervention_gap_sum_ms,
            intervention_gap_max_ms=max(
                self.intervention_gap_max_ms, other.intervention_gap_max_ms
            ),
        )
        return merged

    def as_dict(self) -> dict:
        return {
            "total_posts": self.total_posts,
            "total_words": self.total_words,
            "facilitator_posts": self.facilitator_posts,
            "facilitator_words": self.facilitator_words,
            "posts_per_hat": dict(sorted(self.posts_per_hat.items())),
            "words_per_participant": dict(sorted(self.words_per_participant.items())),
            "interventions_per_phase": dict(sorted(self.interventions_per_phase.items())),
            "intervention_gap_count": self.intervention_gap_count,
            "mean_intervention_gap_ms": self.mean_intervention_gap_ms,
            "max_intervention_gap_ms": self.max_intervention_gap_ms,
        }


def _merge_counts(a: dict[str, int], b: dict[str, int]) -> dict[str, int]:
    out = dict(a)
    for key, value in b.items():
        out[key] = out.get(key, 0) + value
    return out


def metrics_for_records(records: Sequence[DatasetRecord]) -> TranscriptMetrics:
    """Metrics over one parsed record stream (typically one session export)."""
    m = TranscriptMetrics()
    last_intervention_ts: dict[str, int] = {}
    for record in records:
        if record.author_id == SYSTEM:
            continue
        words = word_count(record.text)
        m.total_posts += 1
        m.total_words += words
        m.words_per_participant[record.author_id] = (
            m.words_per_participant.get(record.author_id, 0) + words
        )
        if record.author_id != FACILITATOR:
            continue
        m.facilitator_posts += 1
        m.facilitator_words += words
        if record.hat is None:
            continue
        m.posts_per_hat[record.hat] = m.posts_per_hat.get(record.hat, 0) + 1
        m.interventions_per_phase[record.phase] = (
            m.interventions_per_phase.get(record.phase, 0) + 1
        )
        previous = last_intervention_ts.get(record.session_id)
        if previous is not None:
            gap = record.ts_ms - previous
            m.intervention_gap_count += 1
            m.intervention_gap_sum_ms += gap
            m.intervention_gap_max_ms = max(m.intervention_gap_max_ms, gap)
        last_intervention_ts[record.session_id] = record.ts_ms
    return m


def parse_dataset_file(path: str | Path) -> list[DatasetRecord]:
    """Strict parse of one export file; SchemaViolation carries the line."""
    records: list[DatasetRecord] = []
    last_seq: dict[str, int] = {}
    last_ts: dict[str, int] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise SchemaViolation(str(path), 0, f"not UTF-8: {exc}") from exc
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = DatasetRecord.from_json_line(line)
        except (ValueError, KeyError) as exc:
            raise SchemaViolation(str(path), number, str(exc)) from exc
        if record.seq <= last_seq.get(record.session_id, 0):
            raise SchemaViolation(
                str(path), number, f"seq {record.seq} is not increasing within the session"
            )
        if record.ts_ms < last_ts.get(record.session_id, 0):
            raise SchemaViolation(str(path), number, "ts_ms decreases within the session")
        last_seq[record.session_id] = record.seq
        last_ts[record.session_id] = record.ts_ms
        records.append(record)
    return records


def compute_metrics(paths: Iterable[str | Path]) -> TranscriptMetrics:
    """Pure function of the input file bytes; file order is irrelevant."""
    total = TranscriptMetrics()
    for path in paths:
        total = total.merge(metrics_for_records(parse_dataset_file(path)))
    return total


def render_json(metrics: TranscriptMetrics) -> str:
    return json.dumps(metrics.as_dict(), indent=2, sort_keys=False)


def render_table(metrics: TranscriptMetrics) -> str:
    """Aligned two-column table carrying exactly the JSON numbers."""
    rows: list[tuple[str, str]] = [
        ("total_posts", str(metrics.total_posts)),
        ("total_words", str(metrics.total_words)),
        ("facilitator_posts", str(metrics.facilitator_posts)),
        ("facilitator_words", str(metrics.facilitator_words)),
    ]
    for hat, count in sorted(metrics.posts_per_hat.items()):
        rows.append((f"posts_per_hat.{hat}", str(count)))
    for author, count in sorted(metrics.words_per_participant.items()):
        rows.append((f"words_per_participant.{author}", str(count)))
    for phase, count in sorted(metrics.interventions_per_phase.items()):
        rows.append((f"interventions_per_phase.{phase}", str(count)))
    rows.append(("intervention_gap_count", str(metrics.intervention_gap_count)))
    rows.append(("mean_intervention_gap_ms", f"{metrics.mean_intervention_gap_ms:g}"))
    rows.append(("max_intervention_gap_ms", str(metrics.max_intervention_gap_ms)))
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name.ljust(width)}  {value}" for name, value in rows)
