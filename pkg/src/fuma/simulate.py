"""Synthetic cohort generator.

Students are drawn from archetypes whose knobs control how they watch:
videos per active week, pause rate and length, seek propensity and length,
speed-change propensity, interruption probability, rewatch probability, a
grade distribution, and a weekly dropout hazard.  Each student is generated
from an independently derived seed (seed splitting), so output does not
depend on generation order; wall times and positions are quantized to
milliseconds so the serialized log is byte-identical across runs.

Final grades are a 0.5/0.5 convex mix of the archetype grade draw and the
student's realized mean weekly coverage, which forces outcomes to correlate
with engagement.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO

import numpy as np
from scipy.stats import poisson

from .events import (
    Action,
    CatalogEntry,
    OutcomeRecord,
    VideoCatalog,
    VideoEvent,
    WEEK_SECONDS,
)
from .sessions import merge_intervals

#: Feature gaps deliberately planted between the default archetypes, as
#: (feature, direction) with +1 meaning higher for the stronger cohort.
PLANTED_EFFECTS: tuple[tuple[str, int], ...] = (
    ("n_videos_watched", 1),
    ("prop_rewatched", 1),
    ("weekly_coverage_mean", 1),
    ("pause_dur_mean", 1),
    ("freq_all", 1),
)

_PAUSE_SIGMA = 0.5
_SEEK_SIGMA = 0.4


@dataclass(slots=True)
class Knob:
    """Mean/SD of a per-student generative parameter."""

    mean: float
    sd: float

    def draw(self, rng: np.random.Generator, lo: float, hi: float) -> float:
        return float(np.clip(rng.normal(self.mean, self.sd), lo, hi))


@dataclass(slots=True)
class ArchetypeSpec:
    """Generative profile of one student archetype."""

    name: str
    videos_per_week: Knob
    pause_rate: Knob
    pause_len: Knob
    seek_rate: Knob
    seek_fwd_prob: float
    seek_len: Knob
    speed_change_prob: float
    fast_speed: float
    interrupt_prob: float
    rewatch_prob: float
    grade: Knob
    dropout_hazard: float


@dataclass
class CohortConfig:
    archetypes: list[ArchetypeSpec]
    weights: list[float]
    n_students: int
    catalog: VideoCatalog
    weeks: int
    pass_threshold: float = 0.8
    course_start: float = 0.0
    seed: int = 0
    # Weight of realized weekly coverage in the final grade; the remainder
    # comes from the archetype grade draw.  0 severs the behavior-outcome
    # link entirely (useful for null-cohort checks).
    coverage_weight: float = 0.5

    def __post_init__(self) -> None:
        if len(self.archetypes) != len(self.weights) or not self.archetypes:
            raise ValueError("archetypes and weights must align and be non-empty")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        if self.n_students < 1:
            raise ValueError("n_students must be >= 1")
        if self.weeks < 1 or self.catalog.n_weeks < self.weeks:
            raise ValueError("weeks must be >= 1 and covered by the catalog")
        if not 0.0 <= self.coverage_weight <= 1.0:
            raise ValueError("coverage_weight must be in [0, 1]")


@dataclass
class Cohort:
    """Generated artifacts: log events, outcomes, and planted truth."""

    events: list[VideoEvent] | None
    outcomes: dict[str, OutcomeRecord]
    truth: dict[str, str]
    config: CohortConfig


def default_catalog(n_videos: int = 33, weeks: int = 6) -> VideoCatalog:
    """Deterministic synthetic catalog with videos spread over the weeks."""
    if n_videos < weeks:
        raise ValueError("need at least one video per week")
    entries: dict[str, CatalogEntry] = {}
    for i in range(n_videos):
        vid = f"v{i + 1:03d}"
        week = (i * weeks) // n_videos + 1
        duration = 240.0 + 60.0 * (i % 7)
        entries[vid] = CatalogEntry(vid, duration, week, f"Lecture {i + 1}")
    return VideoCatalog(entries)


def _spread(strong: float, weak: float, s: float, lo: float, hi: float) -> tuple[float, float]:
    if s == 1.0:
        # Exact identity, so calibrated values survive bit-for-bit.
        return (float(np.clip(strong, lo, hi)), float(np.clip(weak, lo, hi)))
    mid = (strong + weak) / 2.0
    return (
        float(np.clip(mid + s * (strong - mid), lo, hi)),
        float(np.clip(mid + s * (weak - mid), lo, hi)),
    )


def default_archetypes(separation: float = 1.0) -> tuple[list[ArchetypeSpec], list[float]]:
    """The stock Engaged/Disengaged pair.

    ``separation`` scales every knob-mean gap around its midpoint: 0 makes
    the archetypes literally identical, so cohorts drawn at 0 carry no
    planted structure at all; larger values pull the means further apart.
    At 1.0 every knob takes its calibrated value exactly.
    """
    s = separation
    vids_e, vids_d = _spread(6.0, 1.3, s, 0.3, 12.0)
    prate_e, prate_d = _spread(6.0, 0.5, s, 0.05, 12.0)
    plen_e, plen_d = _spread(35.0, 12.0, s, 2.0, 600.0)
    srate_e, srate_d = _spread(3.2, 0.8, s, 0.05, 10.0)
    slen_e, slen_d = _spread(22.0, 40.0, s, 3.0, 90.0)
    sfwd_e, sfwd_d = _spread(0.25, 0.85, s, 0.02, 0.98)
    spchg_e, spchg_d = _spread(0.06, 0.30, s, 0.01, 0.95)
    fast_e, fast_d = _spread(1.25, 1.6, s, 1.05, 2.5)
    intr_e, intr_d = _spread(0.05, 0.55, s, 0.01, 0.95)
    rew_e, rew_d = _spread(0.28, 0.03, s, 0.005, 0.9)
    grade_e, grade_d = _spread(0.68, 0.30, s, 0.02, 0.98)
    haz_e, haz_d = _spread(0.06, 0.42, s, 0.0, 0.95)
    # Per-student spreads converge at 0 too; without this the two archetypes
    # would stay distinguishable by variance alone.  Past 1.0 they stay at
    # their calibrated values: only the mean gaps keep widening.
    v = min(s, 1.0)
    vsd_e, vsd_d = _spread(1.0, 0.7, v, 0.1, 4.0)
    psd_e, psd_d = _spread(1.2, 0.3, v, 0.05, 4.0)
    plsd_e, plsd_d = _spread(8.0, 4.0, v, 0.5, 60.0)
    ssd_e, ssd_d = _spread(0.8, 0.4, v, 0.05, 4.0)
    slsd_e, slsd_d = _spread(6.0, 12.0, v, 0.5, 40.0)
    gsd_e, gsd_d = _spread(0.20, 0.18, v, 0.02, 0.45)
    engaged = ArchetypeSpec(
        name="Engaged",
        videos_per_week=Knob(vids_e, vsd_e),
        pause_rate=Knob(prate_e, psd_e),
        pause_len=Knob(plen_e, plsd_e),
        seek_rate=Knob(srate_e, ssd_e),
        seek_fwd_prob=sfwd_e,
        seek_len=Knob(slen_e, slsd_e),
        speed_change_prob=spchg_e,
        fast_speed=fast_e,
        interrupt_prob=intr_e,
        rewatch_prob=rew_e,
        grade=Knob(grade_e, gsd_e),
        dropout_hazard=haz_e,
    )
    disengaged = ArchetypeSpec(
        name="Disengaged",
        videos_per_week=Knob(vids_d, vsd_d),
        pause_rate=Knob(prate_d, psd_d),
        pause_len=Knob(plen_d, plsd_d),
        seek_rate=Knob(srate_d, ssd_d),
        seek_fwd_prob=sfwd_d,
        seek_len=Knob(slen_d, slsd_d),
        speed_change_prob=spchg_d,
        fast_speed=fast_d,
        interrupt_prob=intr_d,
        rewatch_prob=rew_d,
        grade=Knob(grade_d, gsd_d),
        dropout_hazard=haz_d,
    )
    return [engaged, disengaged], [0.45, 0.55]


def default_config(
    n_students: int,
    seed: int,
    separation: float = 1.0,
    weeks: int = 6,
    n_videos: int = 33,
) -> CohortConfig:
    archetypes, weights = default_archetypes(separation)
    return CohortConfig(
        archetypes=archetypes,
        weights=weights,
        n_students=n_students,
        catalog=default_catalog(n_videos, weeks),
        weeks=weeks,
        seed=seed,
    )


class _Emitter:
    """Collects one student's raw event tuples with a strictly rising clock."""

    __slots__ = ("rows", "last_wall")

    def __init__(self) -> None:
        self.rows: list[tuple] = []
        self.last_wall = -math.inf

    def emit(
        self,
        sid: str,
        vid: str,
        action: Action,
        wall: float,
        pos: float | None = None,
        npos: float | None = None,
        speed: float | None = None,
    ) -> float:
        wall = round(wall, 3)
        if wall <= self.last_wall:
            wall = round(self.last_wall + 0.001, 3)
        self.last_wall = wall
        self.rows.append((
            sid, vid, action, wall,
            None if pos is None else round(pos, 3),
            None if npos is None else round(npos, 3),
            None if speed is None else round(speed, 2),
        ))
        return wall


def _lognormal(rng: np.random.Generator, mean: float, sigma: float) -> float:
    return float(rng.lognormal(math.log(mean) - sigma**2 / 2.0, sigma))


def _first_watch(
    em: _Emitter,
    rng: np.random.Generator,
    sid: str,
    vid: str,
    duration: float,
    start: float,
    draws: dict[str, float],
    spec: ArchetypeSpec,
    interrupted: bool,
) -> tuple[float, list[tuple[float, float]]]:
    """Emit one first-watch session; returns (end wall, covered intervals).

    Completed watches run position 0 to the full duration with backward
    re-check seeks only, so coverage is exactly 1.  Interrupted watches stop
    at 25-85% and may skip ahead, keeping coverage strictly below the
    completion threshold.
    """
    end_target = duration if not interrupted else round(
        rng.uniform(0.25, 0.85) * duration, 3
    )
    t = em.emit(sid, vid, Action.LOAD, start)
    t = em.emit(sid, vid, Action.PLAY, t + rng.uniform(0.5, 3.0), 0.0)

    incidents: list[tuple[float, str]] = []
    for _ in range(int(rng.poisson(draws["pause_rate"]))):
        incidents.append((rng.uniform(0.05, 0.92) * end_target, "pause"))
    for _ in range(int(rng.poisson(draws["seek_rate"]))):
        incidents.append((rng.uniform(0.05, 0.92) * end_target, "seek"))
    if rng.random() < spec.speed_change_prob:
        incidents.append((rng.uniform(0.15, 0.55) * end_target, "speed"))
    incidents.sort(key=lambda x: x[0])

    covered: list[tuple[float, float]] = []
    cur = 0.0
    speed = 1.0
    for q, kind in incidents:
        q = round(q, 3)
        if q <= cur + 0.5 or q >= end_target - 0.5:
            continue
        t += (q - cur) / speed
        covered.append((cur, q))
        cur = q
        if kind == "pause":
            t = em.emit(sid, vid, Action.PAUSE, t, q)
            gap = min(_lognormal(rng, draws["pause_len"], _PAUSE_SIGMA), 1500.0)
            t = em.emit(sid, vid, Action.PLAY, t + max(gap, 0.5), q)
        elif kind == "seek":
            length = max(_lognormal(rng, draws["seek_len"], _SEEK_SIGMA), 2.0)
            forward = interrupted and rng.random() < spec.seek_fwd_prob
            if forward:
                new = min(q + length, (q + end_target) / 2.0)
            else:
                new = max(q - length, 0.0)
            new = round(new, 3)
            t = em.emit(sid, vid, Action.SEEK, t, q, new)
            cur = new
        else:
            t = em.emit(sid, vid, Action.SPEED, t, q, None, spec.fast_speed)
            speed = spec.fast_speed
    if end_target > cur:
        t += (end_target - cur) / speed
        covered.append((cur, end_target))
    t = em.emit(sid, vid, Action.STOP, t, end_target)
    return t, merge_intervals(covered)


def _rewatch(
    em: _Emitter,
    rng: np.random.Generator,
    sid: str,
    vid: str,
    covered: list[tuple[float, float]],
    start: float,
) -> float | None:
    """Replay a sub-interval of already-covered content (coverage unchanged)."""
    spans = merge_intervals(covered)
    if not spans:
        return None
    lo, hi = max(spans, key=lambda ab: ab[1] - ab[0])
    span = hi - lo
    if span < 20.0:
        return None
    a = round(lo + rng.uniform(0.0, 0.5) * span, 3)
    b = round(min(a + rng.uniform(0.15, 0.35) * span, hi - 0.001), 3)
    if b <= a + 1.0:
        return None
    t = em.emit(sid, vid, Action.LOAD, start)
    t = em.emit(sid, vid, Action.PLAY, t + rng.uniform(0.5, 2.0), a)
    t = em.emit(sid, vid, Action.STOP, t + (b - a), b)
    return t


def _simulate_student(
    sid: str,
    spec: ArchetypeSpec,
    config: CohortConfig,
    rng: np.random.Generator,
) -> tuple[list[tuple], OutcomeRecord]:
    draws = {
        "videos_rate": spec.videos_per_week.draw(rng, 0.2, 15.0),
        "pause_rate": spec.pause_rate.draw(rng, 0.0, 15.0),
        "pause_len": spec.pause_len.draw(rng, 1.0, 900.0),
        "seek_rate": spec.seek_rate.draw(rng, 0.0, 12.0),
        "seek_len": spec.seek_len.draw(rng, 2.0, 150.0),
    }
    grade_draw = spec.grade.draw(rng, 0.0, 1.0)

    last_week = 1
    for _ in range(config.weeks - 1):
        if rng.random() < spec.dropout_hazard:
            break
        last_week += 1

    em = _Emitter()
    covered: dict[str, list[tuple[float, float]]] = {}
    watched_weeks: dict[str, int] = {}

    for week in range(1, last_week + 1):
        week_start = config.course_start + (week - 1) * WEEK_SECONDS
        cursor = week_start + rng.uniform(4.0, 40.0) * 3600.0
        available = [
            v for v in config.catalog.videos_in_week(week) if v not in covered
        ]
        n_new = min(max(1, int(rng.poisson(draws["videos_rate"]))), len(available))
        picks = [available[i] for i in rng.choice(len(available), n_new, replace=False)]
        for vid in sorted(picks):
            interrupted = rng.random() < spec.interrupt_prob
            end, segs = _first_watch(
                em, rng, sid, vid, config.catalog.duration(vid), cursor,
                draws, spec, interrupted,
            )
            covered[vid] = segs
            watched_weeks[vid] = week
            cursor = end + rng.uniform(900.0, 5400.0)
        if week >= 2:
            # Every previously watched video gets an independent chance of a
            # re-view each week; this keeps P(ever rewatched) analytic.
            candidates = sorted(
                v for v, w in watched_weeks.items() if w < week
            )
            for vid in candidates:
                if rng.random() < spec.rewatch_prob:
                    end = _rewatch(em, rng, sid, vid, covered[vid], cursor)
                    if end is not None:
                        cursor = end + rng.uniform(600.0, 3600.0)

    weekly_cov = []
    for week in range(1, config.weeks + 1):
        vids = config.catalog.videos_in_week(week)
        total = sum(
            min(1.0, sum(b - a for a, b in covered.get(v, [])) / config.catalog.duration(v))
            for v in vids
        )
        weekly_cov.append(total / len(vids))
    cov_score = float(np.mean(weekly_cov))
    w = config.coverage_weight
    grade = round(min(1.0, max(0.0, (1.0 - w) * grade_draw + w * cov_score)), 6)

    outcome = OutcomeRecord(
        student_id=sid,
        final_grade=grade,
        passed=grade >= config.pass_threshold,
        last_active_week=last_week,
    )
    return em.rows, outcome


def generate_cohort(config: CohortConfig, keep_events: bool = True) -> Cohort:
    """Generate a full cohort; deterministic given ``config.seed``.

    With ``keep_events=False`` the event list is dropped (outcomes and truth
    are still exact), which keeps large calibration runs cheap.
    """
    children = np.random.SeedSequence(config.seed).spawn(config.n_students)
    cum_weights = np.cumsum(config.weights)
    events: list[VideoEvent] | None = [] if keep_events else None
    outcomes: dict[str, OutcomeRecord] = {}
    truth: dict[str, str] = {}

    for i in range(config.n_students):
        rng = np.random.default_rng(children[i])
        sid = f"s{i + 1:05d}"
        arch = config.archetypes[int(np.searchsorted(cum_weights, rng.random()))]
        rows, outcome = _simulate_student(sid, arch, config, rng)
        outcomes[sid] = outcome
        truth[sid] = arch.name
        if events is not None:
            events.extend(
                VideoEvent(r[0], r[1], r[2], r[3], r[4], r[5], r[6]) for r in rows
            )

    return Cohort(events=events, outcomes=outcomes, truth=truth, config=config)


def feature_targets(
    spec: ArchetypeSpec, catalog: VideoCatalog, weeks: int
) -> dict[str, tuple[float, float]]:
    """Archetype-level (target mean, generator SD) for directly planted
    features, assuming no dropout and features at cutoff = ``weeks``.

    The SDs combine the knob SD with realization noise, so realized features
    should land within 3 SDs for virtually all students.
    """
    per_week = [len(catalog.videos_in_week(w)) for w in range(1, weeks + 1)]

    # The weekly new-video count is min(max(1, Poisson(r)), available) with a
    # per-student rate r ~ clip(N(mean, sd), 0.2, 15).  Integrate over r by
    # quadrature; the floor and cap saturate hard near the edges, so plugging
    # in the mean rate would mis-center the low-rate archetypes.
    zs = np.linspace(-4.0, 4.0, 81)
    qw = np.exp(-zs**2 / 2.0)
    qw /= qw.sum()
    rates = np.clip(
        spec.videos_per_week.mean + spec.videos_per_week.sd * zs, 0.2, 15.0
    )
    ks = np.arange(0, 200)
    # Exact pmf of the total watched count: per week the count is
    # min(max(1, Poisson(r)), available); weeks are independent given the
    # per-student rate r, so convolve the week pmfs and mix over r.
    total_pmf = np.zeros(sum(per_week) + 1)
    week_m = np.zeros((len(rates), weeks))
    for i, r in enumerate(rates):
        pmf = poisson.pmf(ks, r)
        conv = np.array([1.0])
        for w, n_avail in enumerate(per_week):
            wk = np.zeros(n_avail + 1)
            for k, pk in zip(ks, pmf):
                wk[min(max(int(k), 1), n_avail)] += pk
            week_m[i, w] = float((np.arange(n_avail + 1) * wk).sum())
            conv = np.convolve(conv, wk)
        total_pmf[: len(conv)] += qw[i] * conv
    support = np.arange(len(total_pmf))
    n_watched_mean = float((total_pmf * support).sum())
    count_var = float((total_pmf * (support - n_watched_mean) ** 2).sum())
    # The count distribution is skewed by the floor and the weekly cap, so a
    # symmetric 3-SD band around the mean must reach the exact 0.2/99.8
    # percentiles to hold the promised coverage.
    cdf = np.cumsum(total_pmf)
    q_lo = float(support[np.searchsorted(cdf, 0.002)])
    q_hi = float(support[np.searchsorted(cdf, 0.998)])
    n_watched_sd = max(
        math.sqrt(count_var),
        (q_hi - n_watched_mean) / 3.0,
        (n_watched_mean - q_lo) / 3.0,
    )

    mean_cov_watched = (1 - spec.interrupt_prob) * 0.999 + spec.interrupt_prob * 0.55
    frac = support / float(sum(per_week))
    cov_vals = frac * mean_cov_watched
    cov_mean = float((total_pmf * cov_vals).sum())
    cov_var = float((total_pmf * (cov_vals - cov_mean) ** 2).sum())
    cov_sd = max(
        math.sqrt(cov_var),
        (float(np.interp(0.998, cdf, cov_vals)) - cov_mean) / 3.0,
        (cov_mean - float(np.interp(0.002, cdf, cov_vals))) / 3.0,
    ) + 0.04

    # A video first watched in week w gets an independent rewatch chance in
    # each of the remaining weeks-w weeks.
    p = spec.rewatch_prob
    rew_by_week = [
        1.0 - (1.0 - p) ** (weeks - w) for w in range(1, weeks + 1)
    ]
    weights = (qw[:, None] * week_m).sum(axis=0)
    rew_mean = float(np.average(rew_by_week, weights=weights))
    rew_sd = math.sqrt(rew_mean * (1 - rew_mean) / max(n_watched_mean, 1.0)) + 0.06

    # A student's pause-length mean averages ~rate*videos lognormal draws;
    # students with low pause-rate draws average very few, so size the
    # realization term for the thin end of the rate distribution.
    low_rate = max(spec.pause_rate.mean - 2.0 * spec.pause_rate.sd, 0.3)
    pause_sd = spec.pause_len.sd + 0.6 * spec.pause_len.mean / math.sqrt(
        max(low_rate * n_watched_mean, 1.0)
    )

    intr_sd = math.sqrt(
        spec.interrupt_prob * (1 - spec.interrupt_prob) / max(n_watched_mean, 1.0)
    ) + 0.03

    return {
        "n_videos_watched": (n_watched_mean, n_watched_sd + 0.5),
        "weekly_coverage_mean": (cov_mean, cov_sd),
        "prop_rewatched": (rew_mean, rew_sd),
        "pause_dur_mean": (spec.pause_len.mean, pause_sd),
        "prop_interrupted": (spec.interrupt_prob, intr_sd),
    }


def write_truth(stream: IO[str], truth: dict[str, str]) -> None:
    stream.write("student_id,archetype\n")
    for sid in sorted(truth):
        stream.write(f"{sid},{truth[sid]}\n")


def load_truth(stream: IO[str]) -> dict[str, str]:
    lines = iter(stream)
    header = next(lines, "").strip()
    if header != "student_id,archetype":
        raise ValueError(f"bad truth header: {header!r}")
    truth: dict[str, str] = {}
    for raw in lines:
        line = raw.strip()
        if not line:
            continue
        sid, _, label = line.partition(",")
        if not sid or not label:
            raise ValueError(f"bad truth row: {line!r}")
        truth[sid] = label
    return truth


# ---------------------------------------------------------------------------
# Config file round trip
# ---------------------------------------------------------------------------

_KNOB_FIELDS = (
    "videos_per_week", "pause_rate", "pause_len", "seek_rate", "seek_len", "grade",
)
_SCALAR_FIELDS = (
    "seek_fwd_prob", "speed_change_prob", "fast_speed", "interrupt_prob",
    "rewatch_prob", "dropout_hazard",
)


def config_to_dict(config: CohortConfig) -> dict:
    archetypes = []
    for a in config.archetypes:
        entry: dict = {"name": a.name}
        for f in _KNOB_FIELDS:
            knob: Knob = getattr(a, f)
            entry[f] = [knob.mean, knob.sd]
        for f in _SCALAR_FIELDS:
            entry[f] = getattr(a, f)
        archetypes.append(entry)
    return {
        "n_students": config.n_students,
        "weeks": config.weeks,
        "pass_threshold": config.pass_threshold,
        "course_start": config.course_start,
        "seed": config.seed,
        "coverage_weight": config.coverage_weight,
        "weights": list(config.weights),
        "archetypes": archetypes,
        "catalog_spec": {"n_videos": len(config.catalog), "weeks": config.catalog.n_weeks},
    }


def config_from_dict(data: dict) -> CohortConfig:
    try:
        archetypes = []
        for entry in data["archetypes"]:
            kwargs: dict = {"name": str(entry["name"])}
            for f in _KNOB_FIELDS:
                mean, sd = entry[f]
                kwargs[f] = Knob(float(mean), float(sd))
            for f in _SCALAR_FIELDS:
                kwargs[f] = float(entry[f])
            archetypes.append(ArchetypeSpec(**kwargs))
        spec = data.get("catalog_spec", {})
        catalog = default_catalog(
            int(spec.get("n_videos", 33)), int(spec.get("weeks", data["weeks"]))
        )
        return CohortConfig(
            archetypes=archetypes,
            weights=[float(w) for w in data["weights"]],
            n_students=int(data["n_students"]),
            catalog=catalog,
            weeks=int(data["weeks"]),
            pass_threshold=float(data.get("pass_threshold", 0.8)),
            course_start=float(data.get("course_start", 0.0)),
            seed=int(data.get("seed", 0)),
            coverage_weight=float(data.get("coverage_weight", 0.5)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed cohort config: {exc}") from None


def load_cohort_config(stream: IO[str]) -> CohortConfig:
    try:
        data = json.load(stream)
    except json.JSONDecodeError as exc:
        raise ValueError(f"cohort config is not valid JSON: {exc}") from None
    return config_from_dict(data)
