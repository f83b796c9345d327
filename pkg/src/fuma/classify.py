"""Online classification of students against mined rulesets.

A student's membership score for a cluster is the confidence-weighted
fraction of that cluster's rules they satisfy: with satisfied flags ``T_i``
and rule confidences ``C_i``,

    score = sum(T_i * C_i) / sum(C_i)

over every rule of the cluster.  The student is assigned to the cluster with
the highest score; a student satisfying no rule anywhere stays unclassified.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import ClusterModel
from .features import FEATURE_NAMES, FeatureVector
from .rules import AssociationRule, RuleSet, rule_matches

INCREASE = "increase"
DECREASE = "decrease"


@dataclass(slots=True)
class MembershipScore:
    """Score of one student against one cluster's ruleset."""

    cluster: int
    score: float
    satisfied: tuple[bool, ...]
    confidence_sum: float


@dataclass(slots=True)
class ClassificationResult:
    student_id: str
    assigned_cluster: int | None
    assigned_label: str | None
    scores: tuple[MembershipScore, ...]
    matched_rule_ids: tuple[str, ...]
    violated_high_rule_ids: tuple[str, ...]
    ambiguous: bool


@dataclass(slots=True)
class Intervention:
    """One actionable nudge derived from a violated High-cluster rule."""

    feature: str
    direction: str
    threshold: float
    source_rule_id: str
    confidence: float
    message_template: str

    def render(self) -> str:
        return self.message_template.format(threshold=f"{self.threshold:g}")


def membership_score(ruleset: RuleSet, vector) -> MembershipScore:
    """Score one vector against one cluster's rules.

    The denominator is the summed confidence of all rules in the set, so the
    score lies in [0, 1] and flipping any satisfied flag to True never lowers
    it.
    """
    satisfied = tuple(rule_matches(r, vector) for r in ruleset.rules)
    total = float(sum(r.confidence for r in ruleset.rules))
    if total <= 0:
        raise ValueError("ruleset has no positive confidence mass")
    hit = sum(r.confidence for r, ok in zip(ruleset.rules, satisfied) if ok)
    return MembershipScore(
        cluster=ruleset.cluster,
        score=float(hit / total),
        satisfied=satisfied,
        confidence_sum=total,
    )


def classify(
    vector,
    model: ClusterModel,
    student_id: str = "",
    min_action_count: float = 0.0,
) -> ClassificationResult:
    """Assign a student to the best-scoring cluster of the model.

    Exact score ties go to the larger training cluster (then the lower
    index) and set the ambiguity flag.  A student whose scores are all zero,
    or whose ``count_all`` falls below ``min_action_count``, is unclassified.
    """
    if not model.rulesets:
        raise ValueError("model has no rulesets")
    values = (
        vector.as_array() if isinstance(vector, FeatureVector)
        else np.asarray(vector, dtype=float)
    )
    scores = tuple(membership_score(rs, values) for rs in model.rulesets)

    count_all = float(values[FEATURE_NAMES.index("count_all")])
    if count_all < min_action_count:
        return ClassificationResult(
            student_id, None, None, scores, (), (), ambiguous=False
        )

    best = max(s.score for s in scores)
    if best == 0.0:
        return ClassificationResult(
            student_id, None, None, scores, (), (), ambiguous=False
        )
    tied = [s.cluster for s in scores if s.score == best]
    ambiguous = len(tied) > 1
    assigned = min(tied, key=lambda c: (-model.cluster_sizes[c], c))

    matched: tuple[str, ...] = ()
    violated: tuple[str, ...] = ()
    high = model.high_cluster
    for ruleset, s in zip(model.rulesets, scores):
        if s.cluster == assigned:
            matched = tuple(
                r.rule_id for r, ok in zip(ruleset.rules, s.satisfied) if ok
            )
        if s.cluster == high:
            violated = tuple(
                r.rule_id for r, ok in zip(ruleset.rules, s.satisfied) if not ok
            )
    return ClassificationResult(
        student_id=student_id,
        assigned_cluster=assigned,
        assigned_label=model.labels[assigned],
        scores=scores,
        matched_rule_ids=matched,
        violated_high_rule_ids=violated,
        ambiguous=ambiguous,
    )


def _first_violated_condition(rule: AssociationRule, values: np.ndarray):
    for cond in rule.conditions:
        if not cond.matches(values[FEATURE_NAMES.index(cond.feature)]):
            return cond
    return None


def suggest_interventions(
    result: ClassificationResult, model: ClusterModel, vector
) -> list[Intervention]:
    """Turn violated High-cluster rules into per-feature nudges.

    Only students assigned to the Low cluster get interventions.  Each
    violated High rule contributes its first violated condition; duplicates
    per feature keep the highest-confidence source rule.  A violated
    ``(f > t)`` asks to increase f above t, a violated ``(f <= t)`` to
    decrease it to at most t.
    """
    if result.assigned_cluster is None:
        return []
    if result.assigned_cluster != model.low_cluster:
        return []
    values = (
        vector.as_array() if isinstance(vector, FeatureVector)
        else np.asarray(vector, dtype=float)
    )
    high_rules = {
        r.rule_id: r
        for rs in model.rulesets
        if rs.cluster == model.high_cluster
        for r in rs.rules
    }
    picked: dict[str, Intervention] = {}
    for rule_id in result.violated_high_rule_ids:
        rule = high_rules[rule_id]
        cond = _first_violated_condition(rule, values)
        if cond is None:
            continue
        if cond.op == ">":
            direction = INCREASE
            template = f"Increase {cond.feature} above {{threshold}}"
        else:
            direction = DECREASE
            template = f"Decrease {cond.feature} to at most {{threshold}}"
        candidate = Intervention(
            feature=cond.feature,
            direction=direction,
            threshold=cond.threshold,
            source_rule_id=rule.rule_id,
            confidence=rule.confidence,
            message_template=template,
        )
        current = picked.get(cond.feature)
        if current is None or candidate.confidence > current.confidence:
            picked[cond.feature] = candidate
    return sorted(picked.values(), key=lambda iv: (-iv.confidence, iv.source_rule_id))
