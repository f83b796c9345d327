"""Event-log and catalog ingestion.

The event log is a tab-separated text format, one interaction per line:

    student_id <TAB> video_id <TAB> action <TAB> wall_time <TAB> position
    <TAB> new_position <TAB> new_speed

``action`` is one of LOAD, PLAY, PAUSE, SEEK, SPEED, STOP.  ``wall_time`` is
decimal seconds on a shared clock.  ``position``/``new_position`` are seconds
into the video; ``new_speed`` is a positive playback-rate multiplier.  Fields
that do not apply to an action are left empty.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Iterator

WEEK_SECONDS = 7 * 86400.0

#: Which optional fields each action is required to carry.
_NEEDS_POSITION = {"PLAY", "PAUSE", "SEEK", "SPEED", "STOP"}
_NEEDS_NEW_POSITION = {"SEEK"}
_NEEDS_SPEED = {"SPEED"}


class Action(str, Enum):
    """Player actions recognized by the pipeline."""

    LOAD = "LOAD"
    PLAY = "PLAY"
    PAUSE = "PAUSE"
    SEEK = "SEEK"
    SPEED = "SPEED"
    STOP = "STOP"


class DataFormatError(ValueError):
    """An input file violates its documented format."""


class ParseError(DataFormatError):
    """Raised in strict mode on the first malformed event line."""


class CatalogError(DataFormatError):
    """Raised when the video catalog is malformed or incomplete."""


class OutcomeError(DataFormatError):
    """Raised when the outcomes file is malformed or inconsistent."""


@dataclass(slots=True)
class VideoEvent:
    """One logged player interaction."""

    student_id: str
    video_id: str
    action: Action
    wall_time: float
    position: float | None = None
    new_position: float | None = None
    new_speed: float | None = None


@dataclass(slots=True)
class CatalogEntry:
    video_id: str
    duration_s: float
    week: int
    title: str = ""


@dataclass
class VideoCatalog:
    """Course videos keyed by id, each assigned to a course week."""

    entries: dict[str, CatalogEntry]

    def __contains__(self, video_id: str) -> bool:
        return video_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def n_weeks(self) -> int:
        return max(e.week for e in self.entries.values())

    def duration(self, video_id: str) -> float:
        return self.entries[video_id].duration_s

    def videos_in_week(self, week: int) -> list[str]:
        """Video ids assigned to ``week``, in sorted order."""
        return sorted(v for v, e in self.entries.items() if e.week == week)


@dataclass(slots=True)
class OutcomeRecord:
    """Course outcome for one student."""

    student_id: str
    final_grade: float
    passed: bool
    last_active_week: int

    def dropped_by(self, week: int) -> bool:
        """True when the student has no activity in any week after ``week``."""
        return self.last_active_week <= week


@dataclass
class ParseReport:
    """Accounting for one parse run: every input line is accepted or rejected."""

    accepted: int = 0
    rejected: int = 0
    reasons: dict[str, int] = field(default_factory=dict)
    first_errors: list[tuple[int, str]] = field(default_factory=list)

    def reject(self, line_no: int, reason: str) -> None:
        self.rejected += 1
        self.reasons[reason] = self.reasons.get(reason, 0) + 1
        if len(self.first_errors) < 10:
            self.first_errors.append((line_no, reason))

    @property
    def total(self) -> int:
        return self.accepted + self.rejected


def _parse_float(raw: str, what: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ValueError(f"bad {what}") from None
    if math.isnan(value) or math.isinf(value):
        raise ValueError(f"bad {what}")
    return value


def _parse_line(fields: list[str]) -> VideoEvent:
    """Validate one split line; raises ValueError with a short reason."""
    if len(fields) != 7:
        raise ValueError("wrong field count")
    sid, vid, code, wall_raw, pos_raw, npos_raw, speed_raw = fields
    if not sid or not vid:
        raise ValueError("empty id")
    try:
        action = Action(code)
    except ValueError:
        raise ValueError("unknown action") from None
    wall = _parse_float(wall_raw, "wall time")

    pos = npos = speed = None
    if code in _NEEDS_POSITION:
        if not pos_raw:
            raise ValueError("missing position")
        pos = _parse_float(pos_raw, "position")
        if pos < 0:
            raise ValueError("negative position")
    elif pos_raw:
        raise ValueError("unexpected position")

    if code in _NEEDS_NEW_POSITION:
        if not npos_raw:
            raise ValueError("missing new position")
        npos = _parse_float(npos_raw, "new position")
        if npos < 0:
            raise ValueError("negative position")
    elif npos_raw:
        raise ValueError("unexpected new position")

    if code in _NEEDS_SPEED:
        if not speed_raw:
            raise ValueError("missing speed")
        speed = _parse_float(speed_raw, "speed")
        if speed <= 0:
            raise ValueError("nonpositive speed")
    elif speed_raw:
        raise ValueError("unexpected speed")

    return VideoEvent(sid, vid, action, wall, pos, npos, speed)


def _iter_text(stream: IO[str] | IO[bytes] | Iterable[str]) -> Iterator[str]:
    for line in stream:
        if isinstance(line, bytes):
            yield line.decode("utf-8")
        else:
            yield line


def parse_event_log(
    stream: IO[str] | IO[bytes] | Iterable[str],
    *,
    strict: bool = False,
    catalog: VideoCatalog | None = None,
) -> tuple[list[VideoEvent], ParseReport]:
    """Parse an event log into validated events.

    Malformed lines are dropped and counted per reason in the report; with
    ``strict=True`` the first malformed line raises :class:`ParseError`
    instead.  When a catalog is given, events for unknown videos are dropped
    (counted, never fatal) and positions are clamped to the video duration.

    Returns:
        ``(events, report)`` where events are grouped by student id and
        sorted by wall time within each student (ties keep input order).
        ``report.accepted + report.rejected`` equals the input line count.
    """
    events: list[VideoEvent] = []
    report = ParseReport()
    for line_no, line in enumerate(_iter_text(stream), start=1):
        line = line.rstrip("\n").rstrip("\r")
        if not line:
            report.reject(line_no, "empty line")
            if strict:
                raise ParseError(f"line {line_no}: empty line")
            continue
        try:
            event = _parse_line(line.split("\t"))
        except ValueError as exc:
            report.reject(line_no, str(exc))
            if strict:
                raise ParseError(f"line {line_no}: {exc}") from None
            continue
        if catalog is not None:
            if event.video_id not in catalog:
                report.reject(line_no, "unknown video id")
                continue
            duration = catalog.duration(event.video_id)
            if event.position is not None:
                event.position = min(event.position, duration)
            if event.new_position is not None:
                event.new_position = min(event.new_position, duration)
        events.append(event)
        report.accepted += 1
    events.sort(key=lambda e: (e.student_id, e.wall_time))
    return events, report


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(value)


def serialize_event(event: VideoEvent) -> str:
    """Render one event as a log line (inverse of parsing)."""
    return "\t".join(
        (
            event.student_id,
            event.video_id,
            event.action.value,
            repr(event.wall_time),
            _fmt(event.position),
            _fmt(event.new_position),
            _fmt(event.new_speed),
        )
    )


def events_to_lines(events: Iterable[VideoEvent]) -> Iterator[str]:
    for event in events:
        yield serialize_event(event) + "\n"


def group_by_student(events: Iterable[VideoEvent]) -> dict[str, list[VideoEvent]]:
    """Bucket events per student, preserving their relative order."""
    grouped: dict[str, list[VideoEvent]] = {}
    for event in events:
        grouped.setdefault(event.student_id, []).append(event)
    return grouped


def week_of(wall_time: float, course_start: float) -> int:
    """1-based course week containing ``wall_time``."""
    return int(math.floor((wall_time - course_start) / WEEK_SECONDS)) + 1


def student_active_weeks(
    events: Iterable[VideoEvent], course_start: float
) -> dict[str, set[int]]:
    """Set of course weeks in which each student has at least one event."""
    active: dict[str, set[int]] = {}
    for event in events:
        active.setdefault(event.student_id, set()).add(
            week_of(event.wall_time, course_start)
        )
    return active


# ---------------------------------------------------------------------------
# Catalog and outcome files
# ---------------------------------------------------------------------------

_CATALOG_HEADER = ["video_id", "duration_s", "week", "title"]
_OUTCOME_HEADER = ["student_id", "final_grade", "passed", "last_active_week"]


def load_catalog(stream: IO[str] | Iterable[str]) -> VideoCatalog:
    """Load the video catalog CSV (header: video_id,duration_s,week,title).

    Enforces positive durations, integer weeks >= 1, unique ids, and that
    every week from 1 to the maximum has at least one video.
    """
    reader = csv.reader(_iter_text(stream))
    try:
        header = next(reader)
    except StopIteration:
        raise CatalogError("empty catalog") from None
    if header != _CATALOG_HEADER:
        raise CatalogError(f"bad catalog header: {header!r}")
    entries: dict[str, CatalogEntry] = {}
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise CatalogError(f"row {row_no}: wrong field count")
        vid, dur_raw, week_raw, title = row
        if vid in entries:
            raise CatalogError(f"row {row_no}: duplicate video id {vid!r}")
        try:
            duration = float(dur_raw)
            week = int(week_raw)
        except ValueError:
            raise CatalogError(f"row {row_no}: bad number") from None
        if duration <= 0:
            raise CatalogError(f"row {row_no}: nonpositive duration")
        if week < 1:
            raise CatalogError(f"row {row_no}: week must be >= 1")
        entries[vid] = CatalogEntry(vid, duration, week, title)
    if not entries:
        raise CatalogError("catalog has no videos")
    catalog = VideoCatalog(entries)
    weeks = {e.week for e in entries.values()}
    missing = sorted(set(range(1, catalog.n_weeks + 1)) - weeks)
    if missing:
        raise CatalogError(f"weeks without videos: {missing}")
    return catalog


def write_catalog(stream: IO[str], catalog: VideoCatalog) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(_CATALOG_HEADER)
    for vid in sorted(catalog.entries):
        e = catalog.entries[vid]
        writer.writerow([e.video_id, repr(e.duration_s), e.week, e.title])


def load_outcomes(
    stream: IO[str] | Iterable[str], *, pass_threshold: float = 0.8
) -> dict[str, OutcomeRecord]:
    """Load outcomes CSV keyed by student id.

    Validates grades in [0, 1], last_active_week >= 0, and that the stored
    pass flag agrees with ``final_grade >= pass_threshold``.
    """
    reader = csv.reader(_iter_text(stream))
    try:
        header = next(reader)
    except StopIteration:
        raise OutcomeError("empty outcomes file") from None
    if header != _OUTCOME_HEADER:
        raise OutcomeError(f"bad outcomes header: {header!r}")
    records: dict[str, OutcomeRecord] = {}
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise OutcomeError(f"row {row_no}: wrong field count")
        sid, grade_raw, passed_raw, law_raw = row
        if sid in records:
            raise OutcomeError(f"row {row_no}: duplicate student id {sid!r}")
        try:
            grade = float(grade_raw)
            passed = bool(int(passed_raw))
            last_active = int(law_raw)
        except ValueError:
            raise OutcomeError(f"row {row_no}: bad number") from None
        if not 0.0 <= grade <= 1.0:
            raise OutcomeError(f"row {row_no}: grade outside [0, 1]")
        if last_active < 0:
            raise OutcomeError(f"row {row_no}: negative last_active_week")
        if passed != (grade >= pass_threshold):
            raise OutcomeError(
                f"row {row_no}: pass flag inconsistent with grade "
                f"{grade} at threshold {pass_threshold}"
            )
        records[sid] = OutcomeRecord(sid, grade, passed, last_active)
    return records


def write_outcomes(stream: IO[str], records: Iterable[OutcomeRecord]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(_OUTCOME_HEADER)
    for rec in records:
        writer.writerow(
            [rec.student_id, repr(rec.final_grade), int(rec.passed), rec.last_active_week]
        )
