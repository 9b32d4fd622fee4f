"""Benchmark metrics computed from answer records.

Four metrics per scenario:

1. Acc: fraction of questions answered correctly (timed-out ones included).
2. DAR (direct answer rate): fraction answered with zero exploration steps.
3. NS (normalized steps): mean of used_steps_i / max_steps_i over questions;
   a direct answer contributes 0.
4. NUWL (normalized urgency-weighted latency): for each question, the
   normalized steps of every question whose exploration started strictly
   before this one was requested, plus its own, weighted by the question's
   ground-truth urgency and averaged over all questions.

NUWL uses the dataset's urgency labels, never the agent's estimates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .explorer import StepBudget
from .trace import AnswerRecord, EpisodeTrace


class UndefinedMetricError(ValueError):
    """Metric requested over an empty record set."""


class TraceCorruptionError(ValueError):
    """Record set is internally inconsistent (e.g. explored without a start time)."""


@dataclass
class MetricsResult:
    acc: float
    dar: float
    ns: float
    nuwl: float
    per_question: list[tuple[str, float, float, float]]  # (id, ns_i, latency_i, weighted)

    def to_dict(self) -> dict:
        return {
            "acc": self.acc,
            "dar": self.dar,
            "ns": self.ns,
            "nuwl": self.nuwl,
            "per_question": [list(t) for t in self.per_question],
        }


def _require(records: Sequence[AnswerRecord]) -> None:
    if not records:
        raise UndefinedMetricError("no answer records")


def _ns_of(record: AnswerRecord, budget: StepBudget | None) -> float:
    max_steps = record.max_steps
    if not max_steps and budget is not None:
        max_steps = budget.max_steps_per_question
    if not max_steps or max_steps <= 0:
        raise ValueError(f"max_steps must be positive for {record.question_id}")
    if record.used_steps > 0 and record.start_time is None:
        raise TraceCorruptionError(
            f"{record.question_id} used {record.used_steps} steps but has no start time"
        )
    return record.used_steps / max_steps


def accuracy(records: Sequence[AnswerRecord]) -> float:
    _require(records)
    return sum(1 for r in records if r.correct) / len(records)


def direct_answer_rate(records: Sequence[AnswerRecord]) -> float:
    _require(records)
    return sum(1 for r in records if r.direct) / len(records)


def normalized_steps(records: Sequence[AnswerRecord], budget: StepBudget | None = None) -> float:
    _require(records)
    return sum(_ns_of(r, budget) for r in records) / len(records)


def nuwl(
    records: Sequence[AnswerRecord],
    urgencies_true: dict[str, float] | None = None,
    budget: StepBudget | None = None,
    start_before: str = "request",
) -> float:
    """Urgency-weighted accumulated latency.

    The default `start_before="request"` counts, for each question i, the
    normalized steps of questions whose exploration started strictly before
    i's request time. `start_before="answer"` is an alternative reading that
    instead counts everything processed before i was answered; it exists for
    comparison only and is not used by any benchmark default.
    """
    _require(records)
    if start_before not in ("request", "answer"):
        raise ValueError("start_before must be 'request' or 'answer'")
    ns = {r.question_id: _ns_of(r, budget) for r in records}
    total = 0.0
    for ri in records:
        u = (
            urgencies_true[ri.question_id]
            if urgencies_true is not None
            else ri.urgency_true
        )
        if start_before == "request":
            cutoff = ri.request_time
            others: Iterable[AnswerRecord] = records
        else:
            cutoff = ri.answer_time
            others = (r for r in records if r.question_id != ri.question_id)
        queued = sum(
            ns[rj.question_id]
            for rj in others
            if rj.start_time is not None and rj.start_time < cutoff
        )
        total += u * (queued + ns[ri.question_id])
    return total / len(records)


def compute_metrics(
    records: Sequence[AnswerRecord],
    budget: StepBudget | None = None,
    urgencies_true: dict[str, float] | None = None,
) -> MetricsResult:
    _require(records)
    ns = {r.question_id: _ns_of(r, budget) for r in records}
    per_question = []
    for ri in records:
        u = (
            urgencies_true[ri.question_id]
            if urgencies_true is not None
            else ri.urgency_true
        )
        queued = sum(
            ns[rj.question_id]
            for rj in records
            if rj.start_time is not None and rj.start_time < ri.request_time
        )
        latency = queued + ns[ri.question_id]
        per_question.append((ri.question_id, ns[ri.question_id], latency, u * latency))
    return MetricsResult(
        acc=accuracy(records),
        dar=direct_answer_rate(records),
        ns=normalized_steps(records, budget),
        nuwl=nuwl(records, urgencies_true, budget),
        per_question=per_question,
    )


def aggregate(results: Sequence[MetricsResult]) -> dict:
    """Unweighted mean of each metric across scenarios."""
    if not results:
        raise UndefinedMetricError("no per-scenario results to aggregate")
    n = len(results)
    return {
        "acc": sum(r.acc for r in results) / n,
        "dar": sum(r.dar for r in results) / n,
        "ns": sum(r.ns for r in results) / n,
        "nuwl": sum(r.nuwl for r in results) / n,
        "scenarios": n,
    }


def verify_trace(trace: EpisodeTrace, tolerance: float = 1e-9) -> tuple[dict, dict, float]:
    """Recompute metrics from the trace's raw answer records and compare with
    the stored summary. Returns (stored, recomputed, max absolute difference).
    """
    stored = trace.summary_metrics()
    if stored is None:
        raise TraceCorruptionError("trace has no summary event")
    result = compute_metrics(trace.records)
    recomputed = {"acc": result.acc, "dar": result.dar, "ns": result.ns, "nuwl": result.nuwl}
    worst = max(abs(recomputed[k] - stored.get(k, float("nan"))) for k in recomputed)
    return stored, recomputed, worst
