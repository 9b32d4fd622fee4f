"""Question pool: buffer of unanswered questions, dependency DAG, and the
priority updater that scores every entry whenever the pool changes.

The priority of an entry is a weighted sum of four components:

    priority = w_u * urgency + w_s * scope + w_r * reward + w_d * dependency

where urgency = -ln(1 - u_est), scope is 1 for locally-scoped questions,
reward counts other unanswered questions targeting the same room or nearby
objects, and dependency is 1 once all prerequisites are answered. Pending
entries stay in the ranking (they just lose the dependency term); a strict
gate that excludes them from selection is available as a config switch.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .questions import ParsedQuestion
from .world import Cell, GridScene, UnknownRoomError, resolve_room

logger = logging.getLogger(__name__)

STATUSES = ("ready", "pending", "exploring", "answered")


class DuplicateQuestionError(ValueError):
    """Question id already present in the pool."""


class CycleError(ValueError):
    """Dependency edge would close a cycle."""


@dataclass
class PriorityWeights:
    w_u: float = 1.0
    w_s: float = 1.0
    w_r: float = 1.0
    w_d: float = 1.0

    def check(self) -> None:
        for name in ("w_u", "w_s", "w_r", "w_d"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a finite non-negative number")


class DependencyGraph:
    """Directed acyclic graph over question ids; edge (u, v) means v depends
    on u, i.e. u must be answered before v becomes ready."""

    def __init__(self) -> None:
        self.nodes: set[str] = set()
        self._out: dict[str, set[str]] = {}
        self._in: dict[str, set[str]] = {}

    @property
    def edges(self) -> set[tuple[str, str]]:
        return {(u, v) for u, targets in self._out.items() for v in targets}

    def add_node(self, node: str) -> None:
        if node not in self.nodes:
            self.nodes.add(node)
            self._out[node] = set()
            self._in[node] = set()

    def _reaches(self, start: str, goal: str) -> bool:
        stack = [start]
        seen = set()
        while stack:
            node = stack.pop()
            if node == goal:
                return True
            if node in seen:
                continue
            seen.add(node)
            stack.extend(self._out.get(node, ()))
        return False

    def add_edge(self, prerequisite: str, dependent: str) -> None:
        """Insert prerequisite -> dependent, refusing edges that close a cycle."""
        if prerequisite == dependent:
            raise CycleError(f"self-dependency on {prerequisite!r}")
        if self._reaches(dependent, prerequisite):
            raise CycleError(f"edge {prerequisite!r} -> {dependent!r} would close a cycle")
        self.add_node(prerequisite)
        self.add_node(dependent)
        self._out[prerequisite].add(dependent)
        self._in[dependent].add(prerequisite)

    def prerequisites_of(self, node: str) -> set[str]:
        return set(self._in.get(node, ()))

    def is_acyclic(self) -> bool:
        """Kahn's algorithm; used by property tests after every mutation."""
        indegree = {n: len(self._in.get(n, ())) for n in self.nodes}
        queue = [n for n, d in indegree.items() if d == 0]
        visited = 0
        while queue:
            node = queue.pop()
            visited += 1
            for nxt in self._out.get(node, ()):
                indegree[nxt] -= 1
                if indegree[nxt] == 0:
                    queue.append(nxt)
        return visited == len(self.nodes)


@dataclass
class PoolEntry:
    parsed: ParsedQuestion
    request_time: float
    status: str = "ready"
    start_time: float | None = None
    reward_raw: int = 0
    priority: float = 0.0
    target_room: str | None = None
    target_cells: tuple[Cell, ...] = ()
    #: declared deps whose question has not arrived yet (edge deferred).
    waiting_deps: set[str] = field(default_factory=set)

    @property
    def question_id(self) -> str:
        return self.parsed.question.question_id


def urgency_component(u_est: float) -> float:
    """Non-linear urgency transform -ln(1 - u); 0 at u=0, unbounded as u -> 1."""
    if not 0.0 <= u_est < 1.0:
        raise ValueError(f"urgency must lie in [0, 1), got {u_est}")
    return -math.log1p(-u_est)


def scope_component(scope_type: str) -> int:
    if scope_type == "local":
        return 1
    if scope_type == "global":
        return 0
    raise ValueError(f"unknown scope type {scope_type!r}")


def _cells_close(a: tuple[Cell, ...], b: tuple[Cell, ...], radius: int) -> bool:
    for (ax, ay) in a:
        for (bx, by) in b:
            if max(abs(ax - bx), abs(ay - by)) <= radius:
                return True
    return False


def reward_component(entry: PoolEntry, entries: list[PoolEntry], co_location_radius: int) -> int:
    """Number of other unanswered pool questions aimed at the same room or at
    object instances within `co_location_radius` cells of this entry's."""
    count = 0
    for other in entries:
        if other is entry or other.status == "answered":
            continue
        if entry.target_room is not None and other.target_room == entry.target_room:
            count += 1
        elif _cells_close(entry.target_cells, other.target_cells, co_location_radius):
            count += 1
    return count


def dependency_component(entry: PoolEntry, dag: DependencyGraph, answered: set[str]) -> int:
    """1 when every prerequisite is answered (ready), else 0 (pending)."""
    deps = dag.prerequisites_of(entry.question_id) | entry.waiting_deps
    return 1 if deps <= answered else 0


def priority(
    entry: PoolEntry,
    weights: PriorityWeights,
    entries: list[PoolEntry],
    dag: DependencyGraph,
    answered: set[str],
    co_location_radius: int = 8,
) -> float:
    return (
        weights.w_u * urgency_component(entry.parsed.urgency_est)
        + weights.w_s * scope_component(entry.parsed.scope_type)
        + weights.w_r * reward_component(entry, entries, co_location_radius)
        + weights.w_d * dependency_component(entry, dag, answered)
    )


class QuestionPool:
    """Single-owner state machine over pool entries.

    All mutations recompute every entry's reward, status, and priority, so a
    dump taken between mutations is always internally consistent.
    """

    def __init__(
        self,
        scene: GridScene,
        weights: PriorityWeights | None = None,
        co_location_radius: int = 8,
        strict_ready_gate: bool = False,
    ):
        self.scene = scene
        self.weights = weights or PriorityWeights()
        self.weights.check()
        self.co_location_radius = co_location_radius
        self.strict_ready_gate = strict_ready_gate
        self.entries: dict[str, PoolEntry] = {}
        self.dag = DependencyGraph()
        self.answered: set[str] = set()
        self.events: list[dict] = []

    # -- target resolution ---------------------------------------------------

    def _targets(self, parsed: ParsedQuestion) -> tuple[str | None, tuple[Cell, ...]]:
        query = parsed.question.query
        room = None
        if query.room is not None:
            try:
                room = resolve_room(self.scene, query.room)
            except UnknownRoomError:
                room = None
        cells = tuple(sorted(o.cell for o in self.scene.objects_in(query.category, room)))
        return (room.label if room is not None else None), cells

    # -- mutations ------------------------------------------------------------

    def add_question(self, parsed: ParsedQuestion, now: float) -> PoolEntry:
        qid = parsed.question.question_id
        if qid in self.entries or qid in self.answered:
            raise DuplicateQuestionError(f"question {qid!r} already known to the pool")
        target_room, target_cells = self._targets(parsed)
        entry = PoolEntry(
            parsed=parsed,
            request_time=now,
            target_room=target_room,
            target_cells=target_cells,
        )
        self.entries[qid] = entry
        self.dag.add_node(qid)

        for dep in parsed.question.declared_deps:
            if dep in self.entries or dep in self.answered:
                self._try_edge(dep, qid)
            else:
                # Dependency has not arrived yet; keep it pending and
                # materialize the edge on arrival.
                entry.waiting_deps.add(dep)
        # Resolve edges other entries were waiting on.
        for other in self.entries.values():
            if qid in other.waiting_deps:
                other.waiting_deps.discard(qid)
                self._try_edge(qid, other.question_id)

        self.recompute()
        return entry

    def _try_edge(self, prerequisite: str, dependent: str) -> None:
        try:
            self.dag.add_edge(prerequisite, dependent)
        except CycleError as exc:
            logger.warning("dropping dependency edge: %s", exc)
            self.events.append(
                {"event": "cycle-rejected", "edge": [prerequisite, dependent], "detail": str(exc)}
            )

    def select_next(self, now: float, fifo: bool = False) -> str | None:
        """Pick the next question for exploration and mark it exploring.

        Default: highest priority among ready/pending entries (pending ones
        compete without the dependency term unless the strict gate is on),
        ties broken by earlier request time then id. With fifo=True the
        priority formula is bypassed entirely (baseline behavior).
        """
        candidates = [
            e for e in self.entries.values() if e.status in ("ready", "pending")
        ]
        if self.strict_ready_gate and not fifo:
            candidates = [e for e in candidates if e.status == "ready"]
        if not candidates:
            return None
        if fifo:
            chosen = min(candidates, key=lambda e: (e.request_time, e.question_id))
        else:
            chosen = min(
                candidates, key=lambda e: (-e.priority, e.request_time, e.question_id)
            )
        chosen.status = "exploring"
        chosen.start_time = now
        self.recompute()
        return chosen.question_id

    def mark_answered(self, qid: str, now: float) -> None:
        entry = self.entries.pop(qid, None)
        if entry is None:
            if qid in self.answered:
                return
            raise KeyError(f"question {qid!r} not in pool")
        entry.status = "answered"
        self.answered.add(qid)
        self.recompute()

    def recompute(self) -> None:
        """Refresh statuses, rewards, and priorities for every entry."""
        entries = [self.entries[k] for k in sorted(self.entries)]
        for entry in entries:
            if entry.status in ("exploring", "answered"):
                continue
            ready = dependency_component(entry, self.dag, self.answered) == 1
            entry.status = "ready" if ready else "pending"
        for entry in entries:
            entry.reward_raw = reward_component(entry, entries, self.co_location_radius)
            entry.priority = priority(
                entry,
                self.weights,
                entries,
                self.dag,
                self.answered,
                self.co_location_radius,
            )

    # -- introspection ---------------------------------------------------------

    def dump(self) -> dict:
        """Debugging snapshot: per-entry components and the DAG edge list."""
        rows = []
        for qid in sorted(self.entries):
            entry = self.entries[qid]
            rows.append(
                {
                    "question_id": qid,
                    "status": entry.status,
                    "request_time": entry.request_time,
                    "start_time": entry.start_time,
                    "urgency": urgency_component(entry.parsed.urgency_est),
                    "scope": scope_component(entry.parsed.scope_type),
                    "reward": entry.reward_raw,
                    "dependency": dependency_component(entry, self.dag, self.answered),
                    "priority": entry.priority,
                }
            )
        return {
            "entries": rows,
            "answered": sorted(self.answered),
            "dag_edges": sorted(self.dag.edges),
        }
