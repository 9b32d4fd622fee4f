"""Episode traces: the ordered, replayable event log of a scenario run.

A trace is JSONL with one bus message per line. The `answered` events carry
complete answer records, and the final `summary` event stores the metrics the
pipeline computed, so every metric can be recomputed from the raw trace and
checked against the stored values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .bus import BusMessage


@dataclass
class AnswerRecord:
    question_id: str
    predicted: str
    correct: bool
    direct: bool
    used_steps: int
    max_steps: int
    request_time: float
    start_time: float | None
    answer_time: float
    urgency_true: float
    timed_out: bool = False

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "predicted": self.predicted,
            "correct": self.correct,
            "direct": self.direct,
            "used_steps": self.used_steps,
            "max_steps": self.max_steps,
            "request_time": self.request_time,
            "start_time": self.start_time,
            "answer_time": self.answer_time,
            "urgency_true": self.urgency_true,
            "timed_out": self.timed_out,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnswerRecord":
        return cls(
            question_id=data["question_id"],
            predicted=data["predicted"],
            correct=data["correct"],
            direct=data["direct"],
            used_steps=data["used_steps"],
            max_steps=data["max_steps"],
            request_time=data["request_time"],
            start_time=data["start_time"],
            answer_time=data["answer_time"],
            urgency_true=data["urgency_true"],
            timed_out=data.get("timed_out", False),
        )


@dataclass
class EpisodeTrace:
    scenario_id: str
    messages: list[BusMessage] = field(default_factory=list)
    records: list[AnswerRecord] = field(default_factory=list)

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(m.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"
            for m in self.messages
        )

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    def summary_metrics(self) -> dict | None:
        for message in reversed(self.messages):
            if message.topic == "summary":
                return message.payload.get("metrics")
        return None


def trace_from_jsonl(text: str) -> EpisodeTrace:
    messages = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        data = json.loads(line)
        messages.append(
            BusMessage(
                topic=data["topic"],
                virtual_time=data["virtual_time"],
                seq=data["seq"],
                payload=data["payload"],
            )
        )
    scenario_id = ""
    for message in messages:
        if message.topic == "scenario-started":
            scenario_id = message.payload.get("scenario_id", "")
            break
    records = [
        AnswerRecord.from_dict(m.payload["record"])
        for m in messages
        if m.topic == "answered"
    ]
    return EpisodeTrace(scenario_id=scenario_id, messages=messages, records=records)


def read_trace(path: str | Path) -> EpisodeTrace:
    return trace_from_jsonl(Path(path).read_text())
