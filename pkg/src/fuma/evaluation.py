"""Model evaluation: nested cross-validation and week-sliced cohort analysis.

Outer folds hold out students; inner folds on the remaining students pick the
cluster count and rule-mining thresholds.  Held-out students never influence
normalization, clustering, or mining, so per-fold artifacts are reproducible
functions of the training rows alone.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .classify import classify
from .clustering import (
    ClusterModel,
    GAParams,
    ga_kmeans,
    label_clusters,
    model_to_dict,
    nearest_clusters,
    select_k,
)
from .events import OutcomeRecord, VideoCatalog, VideoEvent, week_of
from .features import (
    FEATURE_NAMES,
    apply_normalizer,
    extract_feature_matrix,
    fit_normalizer,
)
from .rules import EmptyRuleSetError, MiningParams, mine_rules
from .sessions import build_watch_records
from .stats import (
    StatsResult,
    anova_one_way,
    chi_square_proportions,
    holm_bonferroni,
    wilcoxon_rank_sum,
)

DEFAULT_PARAM_GRID: dict[str, list] = {
    "k": [2, 3],
    "min_support_frac": [0.1, 0.2],
}

#: GA settings used inside cross-validation; lighter than the search defaults
#: because the inner loop runs the clusterer dozens of times.
CV_GA_PARAMS = {"population_size": 20, "generations": 40}


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Split ``range(n)`` into ``folds`` near-equal disjoint test index sets.

    The split depends only on ``n``, ``folds`` and ``seed`` - never on data
    values - which is what makes the no-leakage property checkable.
    """
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n < folds:
        raise ValueError("more folds than rows")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    return [np.sort(part) for part in np.array_split(order, folds)]


def cohen_kappa(truth, predicted) -> float:
    """Cohen's kappa for two equal-length label sequences."""
    if len(truth) != len(predicted):
        raise ValueError("length mismatch")
    n = len(truth)
    if n == 0:
        return 0.0
    labels = sorted(set(truth) | set(predicted), key=str)
    index = {lab: i for i, lab in enumerate(labels)}
    table = np.zeros((len(labels), len(labels)))
    for t, p in zip(truth, predicted):
        table[index[t], index[p]] += 1
    po = np.trace(table) / n
    pe = float((table.sum(axis=1) * table.sum(axis=0)).sum()) / (n * n)
    if pe == 1.0:
        return 1.0 if po == 1.0 else 0.0
    return float((po - pe) / (1 - pe))


@dataclass(slots=True)
class FeatureEffect:
    """Effect of one feature on the High/Low split."""

    feature: str
    cohens_d: float
    direction: int
    p_value: float
    adjusted_p: float


def rank_discriminative_features(
    matrix: np.ndarray, assignment: np.ndarray, high_cluster: int
) -> list[FeatureEffect]:
    """Rank features by |Cohen's d| between the High cluster and the other.

    Only defined for 2-cluster assignments.  Direction is the sign of
    mean(High) - mean(Low).  Rank-sum p-values are Holm-adjusted across all
    features; features constant in both clusters get d = 0 and rank last.
    """
    matrix = np.asarray(matrix, dtype=float)
    assignment = np.asarray(assignment)
    clusters = np.unique(assignment)
    if len(clusters) != 2:
        raise ValueError("feature ranking is defined for exactly 2 clusters")
    if high_cluster not in clusters:
        raise ValueError("high_cluster not present in assignment")
    high = matrix[assignment == high_cluster]
    low = matrix[assignment != high_cluster]

    effects: list[tuple[str, float, int, float]] = []
    for i, name in enumerate(FEATURE_NAMES):
        a, b = high[:, i], low[:, i]
        diff = float(a.mean() - b.mean())
        pooled_var = (
            (len(a) - 1) * a.var(ddof=1) + (len(b) - 1) * b.var(ddof=1)
        ) / (len(a) + len(b) - 2)
        if pooled_var > 0:
            d = diff / math.sqrt(pooled_var)
        elif diff == 0.0:
            d = 0.0
        else:
            d = math.copysign(math.inf, diff)
        if np.ptp(a) == 0 and np.ptp(b) == 0 and diff == 0.0:
            p = 1.0
        else:
            p = wilcoxon_rank_sum(a, b).p_value
        direction = 0 if diff == 0 else (1 if diff > 0 else -1)
        effects.append((name, float(d), direction, p))

    adjusted = holm_bonferroni([e[3] for e in effects])
    ranked = [
        FeatureEffect(name, d, direction, p, adj)
        for (name, d, direction, p), adj in zip(effects, adjusted)
    ]
    order = {name: i for i, name in enumerate(FEATURE_NAMES)}
    ranked.sort(key=lambda e: (-abs(e.cohens_d), order[e.feature]))
    return ranked


# ---------------------------------------------------------------------------
# Nested cross-validation
# ---------------------------------------------------------------------------


@dataclass
class FoldResult:
    fold: int
    chosen_params: dict
    accuracy_proxy: float
    accuracy_truth: float | None
    kappa: float
    confusion: dict[tuple, int]
    n_test: int
    n_unclassified: int
    model_dict: dict


@dataclass
class CVReport:
    folds: list[FoldResult]
    n_students: int
    seed: int
    param_grid: dict[str, list]
    mean_accuracy_proxy: float = 0.0
    sd_accuracy_proxy: float = 0.0
    mean_accuracy_truth: float | None = None
    sd_accuracy_truth: float | None = None
    mean_kappa: float = 0.0

    def __post_init__(self) -> None:
        proxy = [f.accuracy_proxy for f in self.folds]
        self.mean_accuracy_proxy = float(np.mean(proxy))
        self.sd_accuracy_proxy = float(np.std(proxy, ddof=1)) if len(proxy) > 1 else 0.0
        truths = [f.accuracy_truth for f in self.folds if f.accuracy_truth is not None]
        if truths:
            self.mean_accuracy_truth = float(np.mean(truths))
            self.sd_accuracy_truth = (
                float(np.std(truths, ddof=1)) if len(truths) > 1 else 0.0
            )
        self.mean_kappa = float(np.mean([f.kappa for f in self.folds]))

    def summary(self) -> str:
        lines = [
            f"Nested cross-validation over {len(self.folds)} folds "
            f"({self.n_students} students, seed {self.seed})",
            f"  agreement with nearest-centroid assignment: "
            f"{self.mean_accuracy_proxy:.3f} (sd {self.sd_accuracy_proxy:.3f}), "
            f"mean kappa {self.mean_kappa:.3f}",
        ]
        if self.mean_accuracy_truth is not None:
            lines.append(
                f"  agreement with generator archetypes:       "
                f"{self.mean_accuracy_truth:.3f} (sd {self.sd_accuracy_truth:.3f})"
            )
        for f in self.folds:
            truth = (
                f", truth {f.accuracy_truth:.3f}" if f.accuracy_truth is not None else ""
            )
            lines.append(
                f"  fold {f.fold}: params {f.chosen_params}, "
                f"proxy {f.accuracy_proxy:.3f}{truth}, "
                f"unclassified {f.n_unclassified}/{f.n_test}"
            )
        return "\n".join(lines)


def _grid_combos(param_grid: dict[str, list]) -> list[dict]:
    keys = list(param_grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*param_grid.values())]


def _mining_params(combo: dict) -> MiningParams:
    fields = {
        k: combo[k]
        for k in ("min_support_frac", "min_confidence_improvement", "max_len", "max_branching")
        if k in combo
    }
    return MiningParams(**fields)


def _train_candidate(
    train_matrix: np.ndarray,
    combo: dict,
    seed: int,
    ga_overrides: dict,
) -> tuple:
    """Fit normalizer + clustering + rulesets on one training matrix."""
    norm = fit_normalizer(train_matrix)
    z = apply_normalizer(train_matrix, norm)
    ga = GAParams(seed=seed, **ga_overrides)
    clustering = ga_kmeans(z, int(combo.get("k", 2)), ga)
    mining = _mining_params(combo)
    rulesets = [
        mine_rules(train_matrix, clustering.assignment, c, mining)
        for c in range(clustering.k)
    ]
    return norm, clustering, rulesets


def _rule_predictions(
    matrix: np.ndarray, model: ClusterModel
) -> list[int | None]:
    return [
        classify(row, model).assigned_cluster for row in np.atleast_2d(matrix)
    ]


def _bare_model(norm, clustering, rulesets) -> ClusterModel:
    """Model wrapper for inner-CV scoring, before outcomes are attached.

    Labels are rank placeholders in cluster order; inner scoring only reads
    assigned_cluster, never the outcome ranking.
    """
    return ClusterModel(
        k=clustering.k,
        centroids=clustering.centroids,
        cluster_sizes=[int(n) for n in clustering.sizes()],
        labels=[f"rank{c + 1}" for c in range(clustering.k)],
        outcome_summary=[],
        normalization=norm,
        rulesets=rulesets,
    )


def nested_cv(
    matrix: np.ndarray,
    student_ids: list[str],
    outcomes: dict[str, OutcomeRecord],
    *,
    folds: int = 10,
    seed: int,
    week_cutoff: int,
    param_grid: dict[str, list] | None = None,
    inner_folds: int = 3,
    ga_overrides: dict | None = None,
    truth: dict[str, str] | None = None,
) -> CVReport:
    """Nested cross-validation of the full discovery-plus-rules pipeline.

    For each outer fold, inner folds over the training students score every
    parameter combination (agreement between rule-based classification and
    nearest-centroid assignment of inner-validation students); the best combo
    retrains on all training students and classifies the held-out fold.
    ``truth`` (student id -> archetype) additionally scores accuracy against
    planted labels via a train-majority cluster-to-archetype mapping.
    """
    matrix = np.asarray(matrix, dtype=float)
    n = matrix.shape[0]
    if n != len(student_ids):
        raise ValueError("matrix rows and student ids disagree")
    combos = _grid_combos(param_grid or DEFAULT_PARAM_GRID)
    if not combos:
        raise ValueError("empty parameter grid")
    ga_overrides = dict(CV_GA_PARAMS if ga_overrides is None else ga_overrides)

    outer = fold_indices(n, folds, seed)
    fold_seeds = np.random.SeedSequence(seed).generate_state(2 * folds + 1)
    results: list[FoldResult] = []

    for f, test_idx in enumerate(outer):
        train_idx = np.setdiff1d(np.arange(n), test_idx)
        train_matrix = matrix[train_idx]
        inner_seed = int(fold_seeds[2 * f])
        final_seed = int(fold_seeds[2 * f + 1])

        # Inner selection: score each combo across inner folds.
        inner = fold_indices(len(train_idx), inner_folds, inner_seed)
        combo_scores: list[float] = []
        for c_i, combo in enumerate(combos):
            agreements: list[float] = []
            for g_i, val_rel in enumerate(inner):
                fit_rel = np.setdiff1d(np.arange(len(train_idx)), val_rel)
                try:
                    norm, clustering, rulesets = _train_candidate(
                        train_matrix[fit_rel], combo,
                        inner_seed + 1000 * c_i + g_i, ga_overrides,
                    )
                except (EmptyRuleSetError, ValueError):
                    agreements = []
                    break
                inner_model = _bare_model(norm, clustering, rulesets)
                val_matrix = train_matrix[val_rel]
                predicted = _rule_predictions(val_matrix, inner_model)
                proxy = nearest_clusters(
                    apply_normalizer(val_matrix, norm), clustering.centroids
                )
                agreements.append(
                    float(np.mean([p == t for p, t in zip(predicted, proxy)]))
                )
            combo_scores.append(float(np.mean(agreements)) if agreements else -1.0)

        # Retrain on the full training fold, best combo first.
        combo_order = sorted(
            range(len(combos)), key=lambda i: (-combo_scores[i], i)
        )
        model: ClusterModel | None = None
        chosen: dict = {}
        for c_i in combo_order:
            if combo_scores[c_i] < 0:
                continue
            try:
                norm, clustering, rulesets = _train_candidate(
                    train_matrix, combos[c_i], final_seed, ga_overrides
                )
            except (EmptyRuleSetError, ValueError):
                continue
            train_ids = [student_ids[i] for i in train_idx]
            model = label_clusters(
                clustering, train_ids, outcomes, week_cutoff, norm,
                params={"cv_combo": combos[c_i]},
            )
            model.rulesets = rulesets
            chosen = combos[c_i]
            break
        if model is None:
            raise EmptyRuleSetError(
                f"fold {f}: no parameter combination produced rules"
            )

        test_matrix = matrix[test_idx]
        predicted = _rule_predictions(test_matrix, model)
        proxy = nearest_clusters(
            apply_normalizer(test_matrix, model.normalization), model.centroids
        )
        acc_proxy = float(np.mean([p == t for p, t in zip(predicted, proxy)]))
        classified = [(p, t) for p, t in zip(predicted, proxy) if p is not None]
        kappa = (
            cohen_kappa([t for _, t in classified], [p for p, _ in classified])
            if classified
            else 0.0
        )
        confusion: dict[tuple, int] = {}
        for p, t in zip(predicted, proxy):
            key = (int(t), -1 if p is None else int(p))
            confusion[key] = confusion.get(key, 0) + 1

        acc_truth: float | None = None
        if truth is not None:
            mapping: dict[int, str] = {}
            for c in range(model.k):
                members = [
                    truth[student_ids[i]]
                    for i, a in zip(train_idx, clustering.assignment)
                    if a == c
                ]
                counts: dict[str, int] = {}
                for m in members:
                    counts[m] = counts.get(m, 0) + 1
                mapping[c] = min(
                    counts, key=lambda lab: (-counts[lab], lab)
                )
            hits = [
                mapping.get(p) == truth[student_ids[i]] if p is not None else False
                for i, p in zip(test_idx, predicted)
            ]
            acc_truth = float(np.mean(hits))

        results.append(
            FoldResult(
                fold=f,
                chosen_params=chosen,
                accuracy_proxy=acc_proxy,
                accuracy_truth=acc_truth,
                kappa=kappa,
                confusion=confusion,
                n_test=len(test_idx),
                n_unclassified=sum(1 for p in predicted if p is None),
                model_dict=model_to_dict(model),
            )
        )

    return CVReport(
        folds=results,
        n_students=n,
        seed=seed,
        param_grid=dict(param_grid or DEFAULT_PARAM_GRID),
    )


# ---------------------------------------------------------------------------
# Week-sliced cohort analysis
# ---------------------------------------------------------------------------


@dataclass
class WeekAnalysis:
    """Full pipeline output at one week cutoff."""

    week_cutoff: int
    student_ids: list[str]
    k_table: list
    k_star: int
    model: ClusterModel
    assignment: np.ndarray
    grade_anova: StatsResult
    pass_chi2: StatsResult | None
    dropout_chi2: StatsResult | None
    top_features: list[FeatureEffect] = field(default_factory=list)


def count_active_by_week(
    events: list[VideoEvent], course_start: float, n_weeks: int
) -> list[int]:
    """Students with at least one event, per course week 1..n_weeks."""
    active: list[set[str]] = [set() for _ in range(n_weeks)]
    for e in events:
        w = week_of(e.wall_time, course_start)
        if 1 <= w <= n_weeks:
            active[w - 1].add(e.student_id)
    return [len(s) for s in active]


def analyze_week_slice(
    events: list[VideoEvent],
    catalog: VideoCatalog,
    outcomes: dict[str, OutcomeRecord],
    week_cutoff: int,
    *,
    seed: int,
    course_start: float = 0.0,
    k_range: tuple[int, ...] = (2, 3, 4, 5, 6),
    ga_params: dict | None = None,
    mining: MiningParams | None = None,
    jobs: int = 1,
) -> WeekAnalysis:
    """Run discovery, labeling, mining, and outcome statistics at one cutoff.

    The cohort is every student with at least one event before the cutoff.
    The three outcome tests (grade ANOVA across clusters, chi-square on pass
    and on dropout proportions) are Holm-adjusted as one family.
    """
    records = build_watch_records(events, catalog, week_cutoff, course_start=course_start)
    student_ids = sorted({sid for sid, _ in records})
    if len(student_ids) < max(k_range) * 2:
        raise ValueError("too few active students for the requested k range")
    missing = [s for s in student_ids if s not in outcomes]
    if missing:
        raise ValueError(f"outcomes missing for {len(missing)} students")

    raw = extract_feature_matrix(student_ids, records, catalog, week_cutoff)
    norm = fit_normalizer(raw)
    z = apply_normalizer(raw, norm)
    ga = GAParams(seed=seed, **(ga_params or {}))
    selection = select_k(z, k_range, ga, jobs=jobs)
    clustering = selection.clusterings[selection.k]
    model = label_clusters(
        clustering, student_ids, outcomes, week_cutoff, norm,
        params={"seed": seed, "k_range": list(k_range), "votes": selection.votes},
    )
    model.rulesets = [
        mine_rules(raw, clustering.assignment, c, mining or MiningParams())
        for c in range(clustering.k)
    ]

    groups = [
        np.array([
            outcomes[s].final_grade
            for s, a in zip(student_ids, clustering.assignment)
            if a == c
        ])
        for c in range(clustering.k)
    ]
    grade = anova_one_way(groups)

    pass_chi2 = dropout_chi2 = None
    if clustering.k == 2:
        def split_counts(flag) -> list[list[float]]:
            table = [[0.0, 0.0], [0.0, 0.0]]
            for s, a in zip(student_ids, clustering.assignment):
                table[int(a)][0 if flag(outcomes[s]) else 1] += 1
            return table

        try:
            pass_chi2 = chi_square_proportions(split_counts(lambda o: o.passed))
        except ValueError:
            pass_chi2 = None
        try:
            dropout_chi2 = chi_square_proportions(
                split_counts(lambda o: o.dropped_by(week_cutoff))
            )
        except ValueError:
            dropout_chi2 = None

    family = [grade] + [t for t in (pass_chi2, dropout_chi2) if t is not None]
    adjusted = holm_bonferroni([t.p_value for t in family])
    for t, adj in zip(family, adjusted):
        t.adjusted_p = adj

    top_features: list[FeatureEffect] = []
    if clustering.k == 2:
        top_features = rank_discriminative_features(
            raw, clustering.assignment, model.high_cluster
        )

    return WeekAnalysis(
        week_cutoff=week_cutoff,
        student_ids=student_ids,
        k_table=selection.table,
        k_star=selection.k,
        model=model,
        assignment=clustering.assignment,
        grade_anova=grade,
        pass_chi2=pass_chi2,
        dropout_chi2=dropout_chi2,
        top_features=top_features,
    )
