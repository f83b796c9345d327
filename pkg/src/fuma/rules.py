"""Class-association rule mining over raw feature values.

Rules have the form ``(f1 <= t1) AND (f2 > t2) ... -> cluster c``.  They are
grown greedily, confidence-first: starting from the empty condition list,
each node tries every threshold condition (midpoints between consecutive
distinct values of a feature among the rows reaching the node), keeps the
``max_branching`` best that clear the support floor and improve confidence by
at least ``min_confidence_improvement``, and recurses to ``max_len``.  Every
path of length >= 1 becomes a rule; duplicates and dominated rules (a
condition-subset rule at least as confident and supported) are pruned.

Thresholds stay in raw feature units so rules read directly as behavior.
``(f <= t)`` is satisfied at ``t``; ``(f > t)`` is not.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import FEATURE_NAMES, FeatureVector

OP_LE = "<="
OP_GT = ">"
_FEATURE_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}


class EmptyRuleSetError(ValueError):
    """No rule clears the support floor; the caller must relax parameters."""


@dataclass(frozen=True, slots=True)
class Condition:
    """One threshold test on a named feature."""

    feature: str
    op: str
    threshold: float

    def __post_init__(self) -> None:
        if self.feature not in _FEATURE_INDEX:
            raise ValueError(f"unknown feature {self.feature!r}")
        if self.op not in (OP_LE, OP_GT):
            raise ValueError(f"unknown operator {self.op!r}")

    def matches(self, value: float) -> bool:
        if self.op == OP_LE:
            return value <= self.threshold
        return value > self.threshold

    def sort_key(self) -> tuple[int, float, int]:
        return (_FEATURE_INDEX[self.feature], self.threshold, 0 if self.op == OP_LE else 1)

    def __str__(self) -> str:
        return f"({self.feature} {self.op} {self.threshold:g})"


@dataclass(slots=True)
class AssociationRule:
    """Conjunction of conditions predicting one cluster."""

    conditions: tuple[Condition, ...]
    consequent: int
    support: int
    confidence: float
    rule_id: str = ""

    def condition_set(self) -> frozenset[Condition]:
        return frozenset(self.conditions)

    def __str__(self) -> str:
        lhs = " AND ".join(str(c) for c in self.conditions)
        return (
            f"{lhs} -> cluster {self.consequent} "
            f"(support={self.support}, confidence={self.confidence:.3f})"
        )


@dataclass
class RuleSet:
    """All mined rules for one cluster, deterministically ordered."""

    cluster: int
    rules: list[AssociationRule]
    confidence_sum: float = 0.0

    def __post_init__(self) -> None:
        if not self.rules:
            raise EmptyRuleSetError(f"no rules for cluster {self.cluster}")
        if self.confidence_sum == 0.0:
            self.confidence_sum = float(sum(r.confidence for r in self.rules))


@dataclass(slots=True)
class MiningParams:
    min_support_frac: float = 0.1
    min_confidence_improvement: float = 0.01
    max_len: int = 3
    max_branching: int = 3

    def __post_init__(self) -> None:
        if not 0.0 < self.min_support_frac <= 1.0:
            raise ValueError("min_support_frac must be in (0, 1]")
        if self.min_confidence_improvement < 0:
            raise ValueError("min_confidence_improvement must be >= 0")
        if self.max_len < 1 or self.max_branching < 1:
            raise ValueError("max_len and max_branching must be >= 1")


def _vector_values(vector) -> np.ndarray:
    if isinstance(vector, FeatureVector):
        return vector.as_array()
    arr = np.asarray(vector, dtype=float)
    if arr.shape != (len(FEATURE_NAMES),):
        raise ValueError("vector must have one value per canonical feature")
    return arr


def rule_matches(rule: AssociationRule, vector) -> bool:
    """True when every condition of the rule holds for the vector."""
    values = _vector_values(vector)
    return all(c.matches(values[_FEATURE_INDEX[c.feature]]) for c in rule.conditions)


def _match_mask(conditions: tuple[Condition, ...], matrix: np.ndarray) -> np.ndarray:
    mask = np.ones(matrix.shape[0], dtype=bool)
    for c in conditions:
        col = matrix[:, _FEATURE_INDEX[c.feature]]
        mask &= (col <= c.threshold) if c.op == OP_LE else (col > c.threshold)
    return mask


def rule_stats(
    rule: AssociationRule, matrix: np.ndarray, assignment: np.ndarray
) -> tuple[int, float]:
    """Recompute (support, confidence) of a rule on a labeled dataset."""
    matrix = np.asarray(matrix, dtype=float)
    assignment = np.asarray(assignment)
    mask = _match_mask(rule.conditions, matrix)
    support = int(mask.sum())
    if support == 0:
        raise ValueError("rule matches no rows; confidence undefined")
    confidence = float((assignment[mask] == rule.consequent).mean())
    return support, confidence


@dataclass(slots=True)
class _Node:
    conditions: tuple[Condition, ...]
    rows: np.ndarray  # indices into the training matrix
    confidence: float
    blocked: frozenset[Condition] = field(default_factory=frozenset)


def _candidate_conditions(
    matrix: np.ndarray,
    target_mask: np.ndarray,
    node: _Node,
    support_floor: float,
    min_improvement: float,
) -> list[tuple[float, Condition, int]]:
    """Score all single-condition extensions of a node.

    Returns (confidence, condition, support) triples that clear the support
    floor and improve on the node's confidence; sorted best-first.  Among
    equal confidences the broader (higher-support) candidate wins, so the
    tree prefers rules with reach over interchangeable narrow ones; remaining
    ties break by canonical feature order, lower threshold, <= before >.
    """
    rows = node.rows
    y = target_mask[rows]
    total_t = int(y.sum())
    out: list[tuple[float, Condition, int]] = []
    for fi, fname in enumerate(FEATURE_NAMES):
        v = matrix[rows, fi]
        order = np.argsort(v, kind="stable")
        v_sorted = v[order]
        y_sorted = y[order]
        # Boundaries between runs of distinct values; prefix counts give the
        # support/confidence of (f <= t) for every candidate midpoint at once.
        distinct_ends = np.nonzero(np.diff(v_sorted))[0]
        if distinct_ends.size == 0:
            continue
        prefix_n = distinct_ends + 1
        prefix_t = np.cumsum(y_sorted)[distinct_ends]
        m = rows.size
        for end_idx, n_le, t_le in zip(distinct_ends, prefix_n, prefix_t):
            threshold = float((v_sorted[end_idx] + v_sorted[end_idx + 1]) / 2.0)
            for op, supp, t_count in (
                (OP_LE, int(n_le), int(t_le)),
                (OP_GT, int(m - n_le), int(total_t - t_le)),
            ):
                if supp < support_floor or supp == 0:
                    continue
                confidence = t_count / supp
                if confidence < node.confidence + min_improvement:
                    continue
                cond = Condition(fname, op, threshold)
                if cond in node.blocked:
                    continue
                out.append((confidence, cond, supp))
    out.sort(key=lambda item: (-item[0], -item[2]) + item[1].sort_key())
    return out


def mine_rules(
    matrix: np.ndarray,
    assignment: np.ndarray,
    target: int,
    params: MiningParams | None = None,
) -> RuleSet:
    """Mine class-association rules for ``target`` from raw features.

    ``matrix`` is the (n, 21) raw training matrix and ``assignment`` the
    cluster index per row.  The support floor is
    ``min_support_frac * (target cluster size)`` measured in matching rows.

    Raises:
        EmptyRuleSetError: when nothing clears the floors.
    """
    params = params or MiningParams()
    matrix = np.asarray(matrix, dtype=float)
    assignment = np.asarray(assignment)
    if matrix.ndim != 2 or matrix.shape[1] != len(FEATURE_NAMES):
        raise ValueError("matrix must be (n, 21)")
    if matrix.shape[0] < 10:
        raise ValueError("need at least 10 rows to mine rules")
    target_mask = assignment == target
    n_target = int(target_mask.sum())
    if n_target == 0:
        raise ValueError(f"cluster {target} has no members")
    support_floor = params.min_support_frac * n_target

    root = _Node(
        conditions=(),
        rows=np.arange(matrix.shape[0]),
        confidence=n_target / matrix.shape[0],
    )
    mined: list[AssociationRule] = []
    queue = [root]
    while queue:
        node = queue.pop(0)
        if len(node.conditions) >= params.max_len:
            continue
        candidates = _candidate_conditions(
            matrix, target_mask, node, support_floor,
            params.min_confidence_improvement,
        )
        # One branch per (feature, op) pair per node: sibling rules that
        # differ only in threshold would multi-count the same evidence in
        # the membership-score denominator without dominating each other.
        taken: set[tuple[str, str]] = set()
        picked: list[tuple[float, Condition, int]] = []
        for confidence, cond, support in candidates:
            if len(picked) >= params.max_branching:
                break
            if (cond.feature, cond.op) in taken:
                continue
            taken.add((cond.feature, cond.op))
            picked.append((confidence, cond, support))
        for confidence, cond, support in picked:
            col = matrix[node.rows, _FEATURE_INDEX[cond.feature]]
            keep = (col <= cond.threshold) if cond.op == OP_LE else (col > cond.threshold)
            child = _Node(
                conditions=node.conditions + (cond,),
                rows=node.rows[keep],
                confidence=confidence,
                blocked=node.blocked | {cond},
            )
            mined.append(
                AssociationRule(child.conditions, target, support, confidence)
            )
            queue.append(child)

    if not mined:
        raise EmptyRuleSetError(
            f"no rule for cluster {target} clears support >= {support_floor:g}"
        )
    return RuleSet(cluster=target, rules=_prune(mined))


def _prune(mined: list[AssociationRule]) -> list[AssociationRule]:
    """Drop duplicate condition-sets, then dominated rules, then order."""
    by_set: dict[frozenset[Condition], AssociationRule] = {}
    for rule in mined:
        by_set.setdefault(rule.condition_set(), rule)
    unique = list(by_set.values())
    kept: list[AssociationRule] = []
    for rule in unique:
        conds = rule.condition_set()
        dominated = any(
            other.condition_set() < conds
            and other.confidence >= rule.confidence
            and other.support >= rule.support
            for other in unique
        )
        if not dominated:
            kept.append(rule)
    kept.sort(
        key=lambda r: (
            -r.confidence,
            -r.support,
            len(r.conditions),
            tuple(c.sort_key() for c in r.conditions),
        )
    )
    for i, rule in enumerate(kept):
        rule.rule_id = f"c{rule.consequent}r{i:02d}"
    return kept


def format_rules(ruleset: RuleSet, label: str | None = None) -> str:
    """Human-readable rendering of a ruleset, one rule per line."""
    head = f"cluster {ruleset.cluster}" + (f" [{label}]" if label else "")
    lines = [f"Rules for {head} ({len(ruleset.rules)} rules):"]
    for rule in ruleset.rules:
        lhs = " AND ".join(str(c) for c in rule.conditions)
        lines.append(
            f"  {rule.rule_id}: IF {lhs} THEN {head}"
            f"  [support={rule.support}, confidence={rule.confidence:.3f}]"
        )
    return "\n".join(lines)
