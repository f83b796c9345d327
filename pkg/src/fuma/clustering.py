"""Behavior discovery: GA-driven k-means, validity indices, cluster labeling.

The clusterer evolves whole assignment vectors: each generation applies
fitness-proportional selection (fitness decreasing in total within-cluster
variation), per-gene mutation, and one full k-means pass (recompute centroids,
reassign each point to its nearest).  The best two individuals survive
unchanged, so the population best never regresses.  Everything is
deterministic given the seed.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .events import OutcomeRecord
from .features import FEATURE_NAMES, NormalizationParams
from .rules import AssociationRule, Condition, RuleSet

MODEL_FORMAT = "fuma-model"
MODEL_VERSION = 1


@dataclass(slots=True)
class GAParams:
    """Knobs for the genetic k-means search."""

    seed: int
    population_size: int = 30
    generations: int = 100
    mutation_prob: float = 0.05
    elitism_count: int = 2

    def __post_init__(self) -> None:
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must be in [0, 1]")
        if not 0 <= self.elitism_count < self.population_size:
            raise ValueError("elitism_count must be in [0, population_size)")


@dataclass
class Clustering:
    """A hard partition of the rows of a matrix."""

    k: int
    assignment: np.ndarray
    centroids: np.ndarray
    twcv: float

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)


def compute_twcv(matrix: np.ndarray, assignment: np.ndarray, k: int) -> float:
    """Total within-cluster variation: summed squared distance to centroids."""
    total = 0.0
    for c in range(k):
        members = matrix[assignment == c]
        if len(members):
            total += float(((members - members.mean(axis=0)) ** 2).sum())
    return total


def _centroids_of(matrix: np.ndarray, assignment: np.ndarray, k: int) -> np.ndarray:
    centroids = np.zeros((k, matrix.shape[1]))
    for c in range(k):
        members = matrix[assignment == c]
        if len(members):
            centroids[c] = members.mean(axis=0)
    return centroids


def _repair_empty(matrix: np.ndarray, assignment: np.ndarray, k: int) -> None:
    """Give every empty cluster the point farthest from its own centroid.

    Only points in clusters of size >= 2 may move; ties break at the lowest
    row index.  In-place, deterministic.
    """
    counts = np.bincount(assignment, minlength=k)
    while (counts == 0).any():
        empty = int(np.argmax(counts == 0))
        centroids = _centroids_of(matrix, assignment, k)
        dist = ((matrix - centroids[assignment]) ** 2).sum(axis=1)
        dist[counts[assignment] < 2] = -np.inf
        mover = int(np.argmax(dist))
        counts[assignment[mover]] -= 1
        assignment[mover] = empty
        counts[empty] = 1


def _kmeans_pass(matrix: np.ndarray, assignment: np.ndarray, k: int) -> np.ndarray:
    """One Lloyd step: recompute centroids, reassign to nearest, keep valid."""
    _repair_empty(matrix, assignment, k)
    centroids = _centroids_of(matrix, assignment, k)
    dists = ((matrix[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    new_assignment = dists.argmin(axis=1).astype(np.int64)
    _repair_empty(matrix, new_assignment, k)
    return new_assignment


def ga_kmeans(matrix: np.ndarray, k: int, params: GAParams) -> Clustering:
    """Search for the minimum-TWCV partition of ``matrix`` into ``k`` clusters.

    Returns the best partition ever seen, with centroids equal to the final
    cluster means.  Same seed, same result.
    """
    matrix = np.asarray(matrix, dtype=float)
    n = matrix.shape[0]
    if matrix.ndim != 2:
        raise ValueError("matrix must be 2-dimensional")
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n rows, got k={k}, n={n}")

    rng = np.random.default_rng(params.seed)
    pop = rng.integers(0, k, size=(params.population_size, n), dtype=np.int64)
    for i in range(params.population_size):
        _repair_empty(matrix, pop[i], k)
    scores = np.array([compute_twcv(matrix, ind, k) for ind in pop])

    best_idx = int(scores.argmin())
    best_assignment = pop[best_idx].copy()
    best_twcv = float(scores[best_idx])

    for _ in range(params.generations):
        order = np.argsort(scores, kind="stable")
        elites = pop[order[: params.elitism_count]].copy()

        fitness = (scores.max() - scores) + 1e-12
        probs = fitness / fitness.sum()
        n_offspring = params.population_size - params.elitism_count
        draws = rng.random(n_offspring)
        chosen = np.searchsorted(np.cumsum(probs), draws)
        offspring = pop[np.minimum(chosen, params.population_size - 1)].copy()

        mutate = rng.random(offspring.shape) < params.mutation_prob
        offspring[mutate] = rng.integers(0, k, size=int(mutate.sum()), dtype=np.int64)

        for i in range(n_offspring):
            offspring[i] = _kmeans_pass(matrix, offspring[i], k)

        pop = np.vstack([elites, offspring])
        scores = np.array([compute_twcv(matrix, ind, k) for ind in pop])
        gen_best = int(scores.argmin())
        if scores[gen_best] < best_twcv:
            best_twcv = float(scores[gen_best])
            best_assignment = pop[gen_best].copy()

    centroids = _centroids_of(matrix, best_assignment, k)
    return Clustering(k=k, assignment=best_assignment, centroids=centroids, twcv=best_twcv)


def lloyd_kmeans(
    matrix: np.ndarray, k: int, seed: int, max_iter: int = 100
) -> Clustering:
    """Plain single-restart k-means from a random point initialization."""
    matrix = np.asarray(matrix, dtype=float)
    n = matrix.shape[0]
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n rows, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    centroids = matrix[rng.choice(n, size=k, replace=False)].copy()
    assignment = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        dists = ((matrix[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assignment = dists.argmin(axis=1).astype(np.int64)
        _repair_empty(matrix, new_assignment, k)
        if (new_assignment == assignment).all():
            break
        assignment = new_assignment
        centroids = _centroids_of(matrix, assignment, k)
    return Clustering(
        k=k,
        assignment=assignment,
        centroids=_centroids_of(matrix, assignment, k),
        twcv=compute_twcv(matrix, assignment, k),
    )


def nearest_clusters(matrix: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Index of the nearest centroid for each row."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    dists = ((matrix[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return dists.argmin(axis=1).astype(np.int64)


# ---------------------------------------------------------------------------
# Validity indices (computed on the same matrix the clusterer saw)
# ---------------------------------------------------------------------------


def silhouette_index(matrix: np.ndarray, assignment: np.ndarray) -> float:
    """Mean silhouette width; singleton-cluster points contribute 0."""
    matrix = np.asarray(matrix, dtype=float)
    assignment = np.asarray(assignment)
    n = matrix.shape[0]
    labels = np.unique(assignment)
    if len(labels) < 2:
        raise ValueError("silhouette needs at least 2 clusters")
    dmat = squareform(pdist(matrix))
    widths = np.zeros(n)
    for i in range(n):
        own = assignment == assignment[i]
        n_own = int(own.sum())
        if n_own <= 1:
            continue
        a = dmat[i, own].sum() / (n_own - 1)
        b = min(
            dmat[i, assignment == other].mean()
            for other in labels
            if other != assignment[i]
        )
        denom = max(a, b)
        widths[i] = (b - a) / denom if denom > 0 else 0.0
    return float(widths.mean())


def calinski_harabasz_index(matrix: np.ndarray, assignment: np.ndarray) -> float:
    """Between/within variance ratio; +inf when within variance is zero."""
    matrix = np.asarray(matrix, dtype=float)
    assignment = np.asarray(assignment)
    n = matrix.shape[0]
    labels = np.unique(assignment)
    k = len(labels)
    if k < 2:
        raise ValueError("index needs at least 2 clusters")
    if n == k:
        return math.inf
    grand = matrix.mean(axis=0)
    ssb = ssw = 0.0
    for c in labels:
        members = matrix[assignment == c]
        centroid = members.mean(axis=0)
        ssb += len(members) * float(((centroid - grand) ** 2).sum())
        ssw += float(((members - centroid) ** 2).sum())
    if ssw == 0:
        return math.inf
    return (ssb / (k - 1)) / (ssw / (n - k))


def c_index(matrix: np.ndarray, assignment: np.ndarray) -> float:
    """C-index: 0 is best.  Compares the within-cluster pairwise-distance sum
    against the tightest and loosest sums achievable with that many pairs."""
    matrix = np.asarray(matrix, dtype=float)
    assignment = np.asarray(assignment)
    condensed = pdist(matrix)
    n = matrix.shape[0]
    within: list[float] = []
    idx = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            if assignment[i] == assignment[j]:
                within.append(float(condensed[idx]))
            idx += 1
    n_w = len(within)
    if n_w == 0:
        return 0.0
    ordered = np.sort(condensed)
    s = float(np.sum(within))
    s_min = float(ordered[:n_w].sum())
    s_max = float(ordered[-n_w:].sum())
    if s_max == s_min:
        return 0.0
    return (s - s_min) / (s_max - s_min)


@dataclass(slots=True)
class KIndexRow:
    """Validity-index scores for one candidate k."""

    k: int
    twcv: float
    silhouette: float
    calinski_harabasz: float
    c_index: float


@dataclass
class KSelection:
    k: int
    table: list[KIndexRow]
    votes: dict[str, int]
    clusterings: dict[int, Clustering]


def _seed_for_k(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


def _evaluate_k(args: tuple[np.ndarray, int, GAParams]) -> tuple[KIndexRow, Clustering]:
    matrix, k, params = args
    clustering = ga_kmeans(matrix, k, params)
    row = KIndexRow(
        k=k,
        twcv=clustering.twcv,
        silhouette=silhouette_index(matrix, clustering.assignment),
        calinski_harabasz=calinski_harabasz_index(matrix, clustering.assignment),
        c_index=c_index(matrix, clustering.assignment),
    )
    return row, clustering


def select_k(
    matrix: np.ndarray,
    k_range: Iterable[int],
    params: GAParams,
    jobs: int = 1,
) -> KSelection:
    """Cluster at every k in range and pick k by majority vote of the indices.

    Silhouette and Calinski-Harabasz vote for their maximum, the C-index for
    its minimum; every tie (within an index or in the vote) resolves to the
    smallest k.  Each k runs with an independently derived seed.
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValueError("empty k range")
    if ks[0] < 2:
        raise ValueError("k must be >= 2")
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape[0] < ks[-1]:
        raise ValueError("more clusters requested than rows available")

    tasks = [(matrix, k, replace(params, seed=_seed_for_k(params.seed, k))) for k in ks]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_evaluate_k, tasks))
    else:
        results = [_evaluate_k(t) for t in tasks]

    table = [row for row, _ in results]
    clusterings = {row.k: clustering for row, clustering in results}

    def argbest(values: list[float], maximize: bool) -> int:
        best = max(values) if maximize else min(values)
        for k, v in zip(ks, values):
            if v == best:
                return k
        raise AssertionError("unreachable")

    votes = {
        "silhouette": argbest([r.silhouette for r in table], True),
        "calinski_harabasz": argbest([r.calinski_harabasz for r in table], True),
        "c_index": argbest([r.c_index for r in table], False),
    }
    tally: dict[int, int] = {}
    for k in votes.values():
        tally[k] = tally.get(k, 0) + 1
    top = max(tally.values())
    k_star = min(k for k, c in tally.items() if c == top)
    return KSelection(k=k_star, table=table, votes=votes, clusterings=clusterings)


# ---------------------------------------------------------------------------
# Labeled cluster model
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class ClusterOutcomes:
    """Outcome summary for one cluster at the model's week cutoff."""

    n: int
    mean_grade: float
    pass_rate: float
    dropout_rate: float


@dataclass
class ClusterModel:
    """Everything needed to score and explain new students."""

    k: int
    centroids: np.ndarray
    cluster_sizes: list[int]
    labels: list[str]
    outcome_summary: list[ClusterOutcomes]
    normalization: NormalizationParams | None = None
    rulesets: list[RuleSet] = field(default_factory=list)
    week_cutoff: int | None = None
    tie_broken: bool = False
    params: dict = field(default_factory=dict)

    @property
    def high_cluster(self) -> int:
        if "High" in self.labels:
            return self.labels.index("High")
        return self.labels.index("rank1")

    @property
    def low_cluster(self) -> int:
        if "Low" in self.labels:
            return self.labels.index("Low")
        # Generalized: the worst-ranked cluster (labels are rank1..rankK).
        return self.labels.index(f"rank{self.k}")


class ModelFormatError(ValueError):
    """A model file is unreadable, has the wrong version, or is inconsistent."""


def label_clusters(
    clustering: Clustering,
    student_ids: Sequence[str],
    outcomes: dict[str, OutcomeRecord],
    week_cutoff: int,
    normalization: NormalizationParams | None = None,
    params: dict | None = None,
) -> ClusterModel:
    """Rank clusters by mean final grade and label them.

    Two clusters get High/Low; more get rank1..rankK (rank1 best).  Grade
    ties break by higher pass rate, then lower cluster index, and are flagged
    on the model.  Dropout is "no activity in any week after the cutoff".
    """
    if len(student_ids) != len(clustering.assignment):
        raise ValueError("student ids do not match assignment length")
    missing = [s for s in student_ids if s not in outcomes]
    if missing:
        raise ValueError(f"outcomes missing for {len(missing)} students")

    summaries: list[ClusterOutcomes] = []
    for c in range(clustering.k):
        members = [s for s, a in zip(student_ids, clustering.assignment) if a == c]
        if not members:
            raise ValueError(f"cluster {c} is empty")
        grades = [outcomes[s].final_grade for s in members]
        summaries.append(
            ClusterOutcomes(
                n=len(members),
                mean_grade=float(np.mean(grades)),
                pass_rate=float(np.mean([outcomes[s].passed for s in members])),
                dropout_rate=float(
                    np.mean([outcomes[s].dropped_by(week_cutoff) for s in members])
                ),
            )
        )

    order = sorted(
        range(clustering.k),
        key=lambda c: (-summaries[c].mean_grade, -summaries[c].pass_rate, c),
    )
    tie = any(
        summaries[order[i]].mean_grade == summaries[order[i + 1]].mean_grade
        for i in range(len(order) - 1)
    )
    labels = [""] * clustering.k
    for rank, c in enumerate(order):
        if clustering.k == 2:
            labels[c] = "High" if rank == 0 else "Low"
        else:
            labels[c] = f"rank{rank + 1}"

    return ClusterModel(
        k=clustering.k,
        centroids=np.asarray(clustering.centroids, dtype=float),
        cluster_sizes=[int(n) for n in clustering.sizes()],
        labels=labels,
        outcome_summary=summaries,
        normalization=normalization,
        week_cutoff=week_cutoff,
        tie_broken=tie,
        params=dict(params or {}),
    )


def model_to_dict(model: ClusterModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "k": model.k,
        "feature_names": list(FEATURE_NAMES),
        "normalization": model.normalization.to_lists() if model.normalization else None,
        "centroids": model.centroids.tolist(),
        "cluster_sizes": model.cluster_sizes,
        "labels": model.labels,
        "outcome_summary": [
            {
                "n": s.n,
                "mean_grade": s.mean_grade,
                "pass_rate": s.pass_rate,
                "dropout_rate": s.dropout_rate,
            }
            for s in model.outcome_summary
        ],
        "week_cutoff": model.week_cutoff,
        "tie_broken": model.tie_broken,
        "rulesets": [
            {
                "cluster": rs.cluster,
                "confidence_sum": rs.confidence_sum,
                "rules": [
                    {
                        "id": r.rule_id,
                        "conditions": [
                            {"feature": c.feature, "op": c.op, "threshold": c.threshold}
                            for c in r.conditions
                        ],
                        "support": r.support,
                        "confidence": r.confidence,
                    }
                    for r in rs.rules
                ],
            }
            for rs in model.rulesets
        ],
        "params": model.params,
    }


def model_from_dict(data: dict) -> ClusterModel:
    if not isinstance(data, dict) or data.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a model file")
    if data.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {data.get('version')!r}")
    if data.get("feature_names") != list(FEATURE_NAMES):
        raise ModelFormatError("model feature set does not match this build")
    try:
        rulesets = []
        for rs in data["rulesets"]:
            rules = []
            seen: set[tuple] = set()
            for r in rs["rules"]:
                conditions = tuple(
                    Condition(c["feature"], c["op"], float(c["threshold"]))
                    for c in r["conditions"]
                )
                key = (frozenset(conditions), rs["cluster"])
                if key in seen:
                    raise ModelFormatError("duplicate rule in model file")
                seen.add(key)
                rules.append(
                    AssociationRule(
                        conditions=conditions,
                        consequent=int(rs["cluster"]),
                        support=int(r["support"]),
                        confidence=float(r["confidence"]),
                        rule_id=str(r["id"]),
                    )
                )
            rulesets.append(
                RuleSet(
                    cluster=int(rs["cluster"]),
                    rules=rules,
                    confidence_sum=float(rs["confidence_sum"]),
                )
            )
        norm = data.get("normalization")
        model = ClusterModel(
            k=int(data["k"]),
            centroids=np.asarray(data["centroids"], dtype=float),
            cluster_sizes=[int(n) for n in data["cluster_sizes"]],
            labels=[str(x) for x in data["labels"]],
            outcome_summary=[
                ClusterOutcomes(
                    n=int(s["n"]),
                    mean_grade=float(s["mean_grade"]),
                    pass_rate=float(s["pass_rate"]),
                    dropout_rate=float(s["dropout_rate"]),
                )
                for s in data["outcome_summary"]
            ],
            normalization=NormalizationParams.from_lists(norm) if norm else None,
            rulesets=rulesets,
            week_cutoff=data.get("week_cutoff"),
            tie_broken=bool(data.get("tie_broken", False)),
            params=dict(data.get("params", {})),
        )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from None
    if len(model.labels) != model.k or len(model.cluster_sizes) != model.k:
        raise ModelFormatError("model field lengths disagree with k")
    return model


def save_model(stream: IO[str], model: ClusterModel) -> None:
    payload = json.dumps(model_to_dict(model), indent=2, sort_keys=False)
    stream.write(payload + "\n")


def load_model(stream: IO[str]) -> ClusterModel:
    try:
        data = json.load(stream)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc}") from None
    return model_from_dict(data)
