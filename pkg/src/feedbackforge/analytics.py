"""Pure aggregation and comparison analytics over evaluations.

Self evaluations never enter the aggregate; they exist to be compared
against it. All functions are pure and safe under arbitrary concurrency.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime

from .errors import DomainError, NotFoundError
from .model import Evaluation, Rubric

#: Half a Likert step: the default band within which a self score counts
#: as aligned with the aggregate.
DEFAULT_ALIGNMENT_EPSILON = 0.5


@dataclass(frozen=True)
class ItemAggregate:
    """Per-item aggregate over the non-self evaluations of one instance."""

    mean: float | None
    count: int
    by_kind: dict[str, float] = field(default_factory=dict)
    by_kind_counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "count": self.count,
            "by_kind": dict(sorted(self.by_kind.items())),
            "by_kind_counts": dict(sorted(self.by_kind_counts.items())),
        }


@dataclass(frozen=True)
class SelfComparison:
    """One rubric item's self score against the aggregate mean.

    ``alignment`` is None when the item is missing from either side; the
    item is still reported, never dropped.
    """

    self_score: int | None
    aggregate_mean: float | None
    delta: float | None
    alignment: str | None

    def to_dict(self) -> dict:
        return {
            "self_score": self.self_score,
            "aggregate_mean": self.aggregate_mean,
            "delta": self.delta,
            "alignment": self.alignment,
        }


@dataclass(frozen=True)
class ItemTiming:
    first_score_at: datetime | None
    last_score_at: datetime | None
    revision_count: int

    def to_dict(self) -> dict:
        from .model import to_rfc3339

        return {
            "first_score_at": to_rfc3339(self.first_score_at) if self.first_score_at else None,
            "last_score_at": to_rfc3339(self.last_score_at) if self.last_score_at else None,
            "revision_count": self.revision_count,
        }


def aggregate_scores(
    instance_id: str,
    rubric: Rubric,
    evaluations: list[Evaluation],
) -> dict[str, ItemAggregate]:
    """Aggregate non-self scores per rubric item.

    Every rubric item appears in the result; items nobody scored carry
    count 0 and no mean. The rubric parameter supplies the item list and
    the scale bounds used to reject out-of-range scores.
    """
    for ev in evaluations:
        if ev.instance_id != instance_id:
            raise DomainError(
                f"evaluation {ev.id!r} belongs to instance {ev.instance_id!r}, "
                f"not {instance_id!r}")
        for item_id, score in ev.item_scores.items():
            if item_id not in rubric.item_ids:
                raise DomainError(f"score for unknown rubric item {item_id!r}")
            if not rubric.scale_min <= score <= rubric.scale_max:
                raise DomainError(
                    f"score {score} for item {item_id!r} outside "
                    f"[{rubric.scale_min}, {rubric.scale_max}]")

    included = [ev for ev in evaluations if ev.evaluator_kind != "self"]
    result: dict[str, ItemAggregate] = {}
    for item_id in rubric.item_ids:
        scores: list[int] = []
        kind_scores: dict[str, list[int]] = {}
        for ev in included:
            if item_id in ev.item_scores:
                scores.append(ev.item_scores[item_id])
                kind_scores.setdefault(ev.evaluator_kind, []).append(ev.item_scores[item_id])
        result[item_id] = ItemAggregate(
            mean=sum(scores) / len(scores) if scores else None,
            count=len(scores),
            by_kind={k: sum(v) / len(v) for k, v in kind_scores.items()},
            by_kind_counts={k: len(v) for k, v in kind_scores.items()},
        )
    return result


def compare_self_vs_aggregate(
    self_eval: Evaluation,
    aggregate: dict[str, ItemAggregate],
    alignment_epsilon: float = DEFAULT_ALIGNMENT_EPSILON,
) -> dict[str, SelfComparison]:
    """Contrast a self evaluation against the aggregate, item by item.

    delta = self score minus the aggregate mean. Within
    ``alignment_epsilon`` of zero the item counts as aligned, otherwise
    above or below by the sign of delta.
    """
    if self_eval is None:
        raise NotFoundError("no self evaluation submitted")
    if self_eval.evaluator_kind != "self":
        raise DomainError("compare_self_vs_aggregate requires a self evaluation")

    item_ids = list(aggregate.keys())
    for item_id in self_eval.item_scores:
        if item_id not in item_ids:
            item_ids.append(item_id)

    result: dict[str, SelfComparison] = {}
    for item_id in item_ids:
        self_score = self_eval.item_scores.get(item_id)
        agg = aggregate.get(item_id)
        mean = agg.mean if agg is not None else None
        if self_score is None or mean is None:
            result[item_id] = SelfComparison(self_score, mean, None, None)
            continue
        delta = self_score - mean
        if abs(delta) <= alignment_epsilon:
            alignment = "aligned"
        elif delta > 0:
            alignment = "above"
        else:
            alignment = "below"
        result[item_id] = SelfComparison(self_score, mean, delta, alignment)
    return result


def evaluation_timing_summary(events: list) -> dict[str, ItemTiming]:
    """Summarize score-selection timing per rubric item for one evaluation.

    revision_count is the number of score_selected events beyond the
    first, floored at zero. Items that only saw comment or level-view
    events appear with no timestamps.
    """
    if not events:
        return {}
    eval_ids = {ev.evaluation_id for ev in events}
    if len(eval_ids) > 1:
        raise DomainError(f"events span multiple evaluations: {sorted(eval_ids)}")

    result: dict[str, ItemTiming] = {}
    by_item: dict[str, list] = {}
    for ev in events:
        by_item.setdefault(ev.item_id, []).append(ev)
    for item_id, item_events in by_item.items():
        score_times = sorted(
            e.occurred_at for e in item_events if e.kind == "score_selected")
        result[item_id] = ItemTiming(
            first_score_at=score_times[0] if score_times else None,
            last_score_at=score_times[-1] if score_times else None,
            revision_count=max(0, len(score_times) - 1),
        )
    return result
