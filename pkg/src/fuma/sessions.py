"""Sessionizing: turn per-student event streams into per-video watch records.

A session is a contiguous run of events by one student on one video.  It is
closed by a Stop, by any Load, by an event on another video, or by an
inactivity gap longer than ``session_gap``.  Coverage accrues between a Play
and the next position-bearing event, as half-open in-video intervals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .events import Action, VideoCatalog, VideoEvent, WEEK_SECONDS, group_by_student

DEFAULT_SESSION_GAP = 1800.0
DEFAULT_COMPLETION_THRESHOLD = 0.95
DEFAULT_REWATCH_THRESHOLD = 0.5


def merge_intervals(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Union of half-open intervals as a sorted disjoint list."""
    cleaned = sorted((a, b) for a, b in intervals if b > a)
    merged: list[tuple[float, float]] = []
    for a, b in cleaned:
        if merged and a <= merged[-1][1]:
            prev_a, prev_b = merged[-1]
            merged[-1] = (prev_a, max(prev_b, b))
        else:
            merged.append((a, b))
    return merged


def interval_total(intervals: list[tuple[float, float]]) -> float:
    return sum(b - a for a, b in merge_intervals(intervals))


def coverage_fraction(intervals: list[tuple[float, float]], duration: float) -> float:
    if duration <= 0:
        raise ValueError("duration must be positive")
    return min(1.0, interval_total(intervals) / duration)


def _contains(intervals: list[tuple[float, float]], point: float) -> bool:
    return any(a <= point < b for a, b in intervals)


@dataclass(slots=True)
class WatchSession:
    """One session on one video: boundaries plus what happened inside."""

    start_wall: float
    end_wall: float
    pauses: list[float] = field(default_factory=list)
    seeks: list[float] = field(default_factory=list)
    speedup_time: float = 0.0
    action_counts: dict[str, int] = field(default_factory=dict)

    @property
    def wall_duration(self) -> float:
        return self.end_wall - self.start_wall


@dataclass(slots=True)
class WatchRecord:
    """Everything known about one (student, video) pair at a week cutoff."""

    student_id: str
    video_id: str
    sessions: list[WatchSession]
    covered: list[tuple[float, float]]
    coverage: float
    rewatch_count: int
    watched: bool
    interrupted: bool
    completed_ever: bool


class _Open:
    """Mutable state of the session currently in progress."""

    __slots__ = (
        "video_id", "start_wall", "last_wall", "playing", "play_pos",
        "speed", "pause_open", "pauses", "seeks", "speedup", "counts",
        "segments", "is_rewatch",
    )

    def __init__(self, video_id: str, wall: float) -> None:
        self.video_id = video_id
        self.start_wall = wall
        self.last_wall = wall
        self.playing = False
        self.play_pos = 0.0
        self.speed = 1.0
        self.pause_open: float | None = None
        self.pauses: list[float] = []
        self.seeks: list[float] = []
        self.speedup = 0.0
        self.counts: dict[str, int] = {}
        self.segments: list[tuple[float, float]] = []
        self.is_rewatch = False


class _VideoAgg:
    """Per-video accumulator across sessions."""

    __slots__ = ("covered", "rewatch_count", "sessions", "completed_ever", "plays")

    def __init__(self) -> None:
        self.covered: list[tuple[float, float]] = []
        self.rewatch_count = 0
        self.sessions: list[WatchSession] = []
        self.completed_ever = False
        self.plays = 0


def build_watch_records(
    events: list[VideoEvent],
    catalog: VideoCatalog,
    week_cutoff: int,
    *,
    course_start: float = 0.0,
    session_gap: float = DEFAULT_SESSION_GAP,
    completion_threshold: float = DEFAULT_COMPLETION_THRESHOLD,
    rewatch_threshold: float = DEFAULT_REWATCH_THRESHOLD,
) -> dict[tuple[str, str], WatchRecord]:
    """Sessionize everything logged before the end of ``week_cutoff``.

    Returns records keyed by (student_id, video_id).  Only events on catalog
    videos with wall_time below the cutoff boundary are considered.  A video
    counts as watched once it has a Play; it is interrupted when no session
    ever ended with cumulative coverage >= ``completion_threshold``.
    """
    if week_cutoff < 1:
        raise ValueError("week_cutoff must be >= 1")
    cutoff_end = course_start + week_cutoff * WEEK_SECONDS
    records: dict[tuple[str, str], WatchRecord] = {}

    for sid, stream in group_by_student(events).items():
        aggs: dict[str, _VideoAgg] = {}
        open_s: _Open | None = None

        def agg_for(video_id: str) -> _VideoAgg:
            if video_id not in aggs:
                aggs[video_id] = _VideoAgg()
            return aggs[video_id]

        def finalize(sess: _Open, end_wall: float) -> None:
            agg = agg_for(sess.video_id)
            agg.sessions.append(
                WatchSession(
                    start_wall=sess.start_wall,
                    end_wall=end_wall,
                    pauses=sess.pauses,
                    seeks=sess.seeks,
                    speedup_time=sess.speedup,
                    action_counts=sess.counts,
                )
            )
            # A session counts as one rewatch at most, however many of its
            # plays landed inside previously covered content.
            if sess.is_rewatch:
                agg.rewatch_count += 1
            agg.covered = merge_intervals(agg.covered + sess.segments)
            duration = catalog.duration(sess.video_id)
            if coverage_fraction(agg.covered, duration) >= completion_threshold:
                agg.completed_ever = True

        def close_at_boundary(sess: _Open, next_wall: float | None) -> None:
            # A dangling play is closed at the next event on any video or at
            # the gap limit, whichever comes first, extrapolating position at
            # the current playback rate.  A pending pause is a de-facto stop.
            limit = sess.last_wall + session_gap
            close_wall = limit if next_wall is None else min(next_wall, limit)
            if sess.playing:
                if sess.speed > 1.0:
                    sess.speedup += max(0.0, close_wall - sess.last_wall)
                duration = catalog.duration(sess.video_id)
                end_pos = min(
                    sess.play_pos + (close_wall - sess.last_wall) * sess.speed,
                    duration,
                )
                if end_pos > sess.play_pos:
                    sess.segments.append((sess.play_pos, end_pos))
                finalize(sess, close_wall)
            else:
                finalize(sess, sess.last_wall)

        for event in stream:
            if event.wall_time >= cutoff_end:
                continue
            if open_s is not None and (
                event.video_id != open_s.video_id
                or event.action is Action.LOAD
                or event.wall_time - open_s.last_wall > session_gap
            ):
                close_at_boundary(open_s, event.wall_time)
                open_s = None
            if open_s is None:
                agg = agg_for(event.video_id)
                duration = catalog.duration(event.video_id)
                open_s = _Open(event.video_id, event.wall_time)
                if agg.covered and (
                    coverage_fraction(agg.covered, duration) > rewatch_threshold
                ):
                    open_s.is_rewatch = True

            sess = open_s
            agg = agg_for(event.video_id)
            duration = catalog.duration(event.video_id)
            if sess.playing and sess.speed > 1.0:
                sess.speedup += event.wall_time - sess.last_wall
            sess.counts[event.action.value] = sess.counts.get(event.action.value, 0) + 1

            if event.action is Action.PLAY:
                pos = min(event.position or 0.0, duration)
                if sess.pause_open is not None:
                    sess.pauses.append(event.wall_time - sess.pause_open)
                    sess.pause_open = None
                if sess.playing and pos > sess.play_pos:
                    # Play while playing: repair by closing the open segment.
                    sess.segments.append((sess.play_pos, pos))
                if agg.covered and _contains(agg.covered, pos):
                    sess.is_rewatch = True
                sess.playing = True
                sess.play_pos = pos
                agg.plays += 1
            elif event.action is Action.PAUSE:
                pos = min(event.position or 0.0, duration)
                if sess.playing and pos > sess.play_pos:
                    sess.segments.append((sess.play_pos, pos))
                sess.playing = False
                sess.pause_open = event.wall_time
            elif event.action is Action.SEEK:
                pos = min(event.position or 0.0, duration)
                new_pos = min(event.new_position or 0.0, duration)
                sess.seeks.append((event.new_position or 0.0) - (event.position or 0.0))
                if sess.playing:
                    if pos > sess.play_pos:
                        sess.segments.append((sess.play_pos, pos))
                    sess.play_pos = new_pos
            elif event.action is Action.SPEED:
                pos = min(event.position or 0.0, duration)
                if sess.playing:
                    if pos > sess.play_pos:
                        sess.segments.append((sess.play_pos, pos))
                    sess.play_pos = pos
                sess.speed = event.new_speed or 1.0
            elif event.action is Action.STOP:
                pos = min(event.position or 0.0, duration)
                if sess.playing and pos > sess.play_pos:
                    sess.segments.append((sess.play_pos, pos))
                sess.playing = False
                sess.pause_open = None
                sess.last_wall = event.wall_time
                finalize(sess, event.wall_time)
                open_s = None
                continue

            sess.last_wall = event.wall_time

        if open_s is not None:
            close_at_boundary(open_s, None)

        for vid, agg in aggs.items():
            if not agg.sessions:
                continue
            duration = catalog.duration(vid)
            watched = agg.plays > 0
            records[(sid, vid)] = WatchRecord(
                student_id=sid,
                video_id=vid,
                sessions=agg.sessions,
                covered=agg.covered,
                coverage=coverage_fraction(agg.covered, duration),
                rewatch_count=agg.rewatch_count,
                watched=watched,
                interrupted=watched and not agg.completed_ever,
                completed_ever=agg.completed_ever,
            )

    return records
