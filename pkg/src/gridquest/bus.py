"""In-process message bus with per-topic sequence numbers.

The reference executor is a deterministic event loop, so the bus is a thin
abstraction: publish appends to an ordered log and synchronously delivers to
subscribed consumers. Delivery is at-least-once by contract; consumers must
be idempotent, and `duplicate_delivery` exists so tests can prove they are.
A broker-backed implementation can replace this class as long as it keeps
per-topic ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

TOPICS = (
    "scenario-started",
    "question-arrived",
    "parsed",
    "direct-answer-attempt",
    "pooled",
    "pool-event",
    "selected",
    "step-taken",
    "stop-decided",
    "answered",
    "summary",
)


@dataclass
class BusMessage:
    topic: str
    virtual_time: float
    seq: int
    payload: dict

    def to_dict(self) -> dict:
        return {
            "topic": self.topic,
            "virtual_time": self.virtual_time,
            "seq": self.seq,
            "payload": self.payload,
        }


class MessageBus:
    def __init__(self, duplicate_delivery: bool = False):
        self.duplicate_delivery = duplicate_delivery
        self.log: list[BusMessage] = []
        self._consumers: dict[str, list[Callable[[BusMessage], None]]] = {}
        self._next_seq: dict[str, int] = {}

    def subscribe(self, topic: str, handler: Callable[[BusMessage], None]) -> None:
        if topic not in TOPICS:
            raise ValueError(f"unknown topic {topic!r}")
        self._consumers.setdefault(topic, []).append(handler)

    def publish(self, topic: str, payload: dict, virtual_time: float) -> BusMessage:
        if topic not in TOPICS:
            raise ValueError(f"unknown topic {topic!r}")
        seq = self._next_seq.get(topic, 0)
        self._next_seq[topic] = seq + 1
        message = BusMessage(topic=topic, virtual_time=virtual_time, seq=seq, payload=payload)
        self.log.append(message)
        self.deliver(message)
        if self.duplicate_delivery:
            self.deliver(message)
        return message

    def deliver(self, message: BusMessage) -> None:
        """Hand a message to its consumers; may be called repeatedly with the
        same message (consumers are required to tolerate redelivery)."""
        for handler in self._consumers.get(message.topic, ()):  # single consumer in practice
            handler(message)
