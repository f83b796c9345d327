"""The 21 per-student interaction features and their normalization.

All features are cumulative from the course start to a week cutoff.
Frequencies are events per active hour, where active time is the summed wall
duration of the student's sessions.  Spread statistics are sample standard
deviations (n - 1); means over empty sets and SDs over fewer than two items
are zero.  ``seek_len_mean`` is the only feature that may be negative
(backward seeks carry negative lengths).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from typing import IO, Iterable, Iterator

import numpy as np

from .events import VideoCatalog
from .sessions import WatchRecord

FEATURE_NAMES: tuple[str, ...] = (
    "freq_play",
    "freq_pause",
    "freq_seek_back",
    "freq_seek_fwd",
    "freq_speed_change",
    "freq_stop",
    "freq_all",
    "count_all",
    "n_videos_watched",
    "prop_rewatched",
    "rewatch_mean",
    "rewatch_sd",
    "prop_interrupted",
    "weekly_coverage_mean",
    "weekly_coverage_sd",
    "pause_dur_mean",
    "pause_dur_sd",
    "seek_len_mean",
    "seek_len_sd",
    "speedup_mean",
    "speedup_sd",
)

N_FEATURES = len(FEATURE_NAMES)


@dataclass(slots=True)
class FeatureVector:
    """One student's features at a week cutoff, in canonical order."""

    freq_play: float = 0.0
    freq_pause: float = 0.0
    freq_seek_back: float = 0.0
    freq_seek_fwd: float = 0.0
    freq_speed_change: float = 0.0
    freq_stop: float = 0.0
    freq_all: float = 0.0
    count_all: float = 0.0
    n_videos_watched: float = 0.0
    prop_rewatched: float = 0.0
    rewatch_mean: float = 0.0
    rewatch_sd: float = 0.0
    prop_interrupted: float = 0.0
    weekly_coverage_mean: float = 0.0
    weekly_coverage_sd: float = 0.0
    pause_dur_mean: float = 0.0
    pause_dur_sd: float = 0.0
    seek_len_mean: float = 0.0
    seek_len_sd: float = 0.0
    speedup_mean: float = 0.0
    speedup_sd: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values: np.ndarray) -> "FeatureVector":
        if len(values) != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} values, got {len(values)}")
        return cls(**{n: float(v) for n, v in zip(FEATURE_NAMES, values)})


assert tuple(f.name for f in fields(FeatureVector)) == FEATURE_NAMES


def _mean(xs: list[float]) -> float:
    return float(np.mean(xs)) if xs else 0.0


def _sample_sd(xs: list[float]) -> float:
    if len(xs) < 2:
        return 0.0
    return float(np.std(xs, ddof=1))


def extract_features(
    records: Iterable[WatchRecord],
    catalog: VideoCatalog,
    week_cutoff: int,
) -> FeatureVector:
    """Compute the feature vector for one student's watch records.

    ``records`` must all belong to the same student and come from a
    sessionizer run at the same ``week_cutoff``.  A student with no records
    gets the all-zero vector.
    """
    if week_cutoff < 1:
        raise ValueError("week_cutoff must be >= 1")
    records = list(records)

    counts = {"LOAD": 0, "PLAY": 0, "PAUSE": 0, "SEEK": 0, "SPEED": 0, "STOP": 0}
    active_seconds = 0.0
    pauses: list[float] = []
    seeks: list[float] = []
    rewatch_counts: list[float] = []
    speedups: list[float] = []
    n_watched = 0
    n_rewatched = 0
    n_interrupted = 0
    coverage_by_video: dict[str, float] = {}

    for rec in records:
        coverage_by_video[rec.video_id] = rec.coverage
        video_speedup = 0.0
        for sess in rec.sessions:
            active_seconds += sess.wall_duration
            pauses.extend(sess.pauses)
            seeks.extend(sess.seeks)
            video_speedup += sess.speedup_time
            for code, n in sess.action_counts.items():
                counts[code] = counts.get(code, 0) + n
        if rec.watched:
            n_watched += 1
            rewatch_counts.append(float(rec.rewatch_count))
            speedups.append(video_speedup)
            if rec.rewatch_count >= 1:
                n_rewatched += 1
            if rec.interrupted:
                n_interrupted += 1

    count_all = sum(counts.values())
    n_back = sum(1 for s in seeks if s < 0)
    n_fwd = len(seeks) - n_back  # zero-length seeks count as forward
    active_hours = active_seconds / 3600.0

    def per_hour(n: int) -> float:
        return n / active_hours if active_hours > 0 else 0.0

    weekly = []
    for week in range(1, week_cutoff + 1):
        vids = catalog.videos_in_week(week)
        if vids:
            weekly.append(
                sum(coverage_by_video.get(v, 0.0) for v in vids) / len(vids)
            )
        else:
            weekly.append(0.0)

    return FeatureVector(
        freq_play=per_hour(counts["PLAY"]),
        freq_pause=per_hour(counts["PAUSE"]),
        freq_seek_back=per_hour(n_back),
        freq_seek_fwd=per_hour(n_fwd),
        freq_speed_change=per_hour(counts["SPEED"]),
        freq_stop=per_hour(counts["STOP"]),
        freq_all=per_hour(count_all),
        count_all=float(count_all),
        n_videos_watched=float(n_watched),
        prop_rewatched=n_rewatched / n_watched if n_watched else 0.0,
        rewatch_mean=_mean(rewatch_counts),
        rewatch_sd=_sample_sd(rewatch_counts),
        prop_interrupted=n_interrupted / n_watched if n_watched else 0.0,
        weekly_coverage_mean=_mean(weekly),
        weekly_coverage_sd=_sample_sd(weekly),
        pause_dur_mean=_mean(pauses),
        pause_dur_sd=_sample_sd(pauses),
        seek_len_mean=_mean(seeks),
        seek_len_sd=_sample_sd(seeks),
        speedup_mean=_mean(speedups),
        speedup_sd=_sample_sd(speedups),
    )


def extract_feature_matrix(
    student_ids: list[str],
    records: dict[tuple[str, str], WatchRecord],
    catalog: VideoCatalog,
    week_cutoff: int,
) -> np.ndarray:
    """Stack per-student feature vectors into an (n_students, 21) matrix."""
    by_student: dict[str, list[WatchRecord]] = {sid: [] for sid in student_ids}
    for (sid, _vid), rec in records.items():
        if sid in by_student:
            by_student[sid].append(rec)
    rows = [
        extract_features(by_student[sid], catalog, week_cutoff).as_array()
        for sid in student_ids
    ]
    return np.vstack(rows) if rows else np.empty((0, N_FEATURES))


@dataclass
class NormalizationParams:
    """Per-feature z-scoring parameters, fit on training data only."""

    mean: np.ndarray
    sd: np.ndarray

    def to_lists(self) -> dict[str, list[float]]:
        return {"mean": self.mean.tolist(), "sd": self.sd.tolist()}

    @classmethod
    def from_lists(cls, data: dict[str, list[float]]) -> "NormalizationParams":
        return cls(np.asarray(data["mean"], dtype=float), np.asarray(data["sd"], dtype=float))


def fit_normalizer(matrix: np.ndarray) -> NormalizationParams:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise ValueError("need at least 2 rows to fit a normalizer")
    return NormalizationParams(
        mean=matrix.mean(axis=0), sd=matrix.std(axis=0, ddof=1)
    )


def apply_normalizer(matrix: np.ndarray, params: NormalizationParams) -> np.ndarray:
    """Z-score columns; constant features (sd == 0) map to 0."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape[1] != params.mean.shape[0]:
        raise ValueError("column count does not match normalizer")
    sd = np.where(params.sd > 0, params.sd, 1.0)
    z = (matrix - params.mean) / sd
    z[:, params.sd == 0] = 0.0
    return z


# ---------------------------------------------------------------------------
# Feature CSV (student_id first, then the canonical 21 columns)
# ---------------------------------------------------------------------------


def write_feature_matrix(
    stream: IO[str], student_ids: list[str], matrix: np.ndarray
) -> None:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (len(student_ids), N_FEATURES):
        raise ValueError("matrix shape does not match ids / feature count")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["student_id", *FEATURE_NAMES])
    for sid, row in zip(student_ids, matrix):
        writer.writerow([sid, *[repr(float(v)) for v in row]])


def read_feature_matrix(
    stream: IO[str] | Iterator[str],
) -> tuple[list[str], np.ndarray]:
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty feature file") from None
    if header != ["student_id", *FEATURE_NAMES]:
        raise ValueError("feature file header does not match canonical features")
    ids: list[str] = []
    rows: list[list[float]] = []
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != N_FEATURES + 1:
            raise ValueError(f"row {row_no}: wrong field count")
        ids.append(row[0])
        try:
            rows.append([float(v) for v in row[1:]])
        except ValueError:
            raise ValueError(f"row {row_no}: bad number") from None
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate student ids in feature file")
    matrix = np.array(rows, dtype=float) if rows else np.empty((0, N_FEATURES))
    return ids, matrix
