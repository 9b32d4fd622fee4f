"""Scenario-lifetime group memory: observations shared across questions, with
retrieval by query and a coverage-based confidence score.

Confidence is coverage-plus-sighting-boost: the fraction of the relevant area
already seen, lifted to 1.0 once a matching object has been sighted (counting
queries never get the boost, so they effectively demand full room coverage).
Negative knowledge is implicit: full coverage with zero sightings yields
confidence 1.0 for an existence query whose answer is "no".
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .world import Cell, GridScene, Observation, Sighting, StructuredQuery, resolve_room


@dataclass
class MemoryRecord:
    observation: Observation
    source_question: str | None = None


class GroupMemory:
    """Append-only store of observations with category/room indexes.

    Single writer (the exploration loop); cleared only between scenarios.
    """

    def __init__(self, scene: GridScene):
        self.scene = scene
        self.records: list[MemoryRecord] = []
        self.by_category: dict[str, list[int]] = {}
        self.by_room: dict[str, list[int]] = {}
        self.seen_cells: set[Cell] = set()

    def __len__(self) -> int:
        return len(self.records)

    def insert(self, record: MemoryRecord) -> None:
        index = len(self.records)
        self.records.append(record)
        self.seen_cells |= record.observation.visible_cells
        for sighting in record.observation.sightings:
            slot = self.by_category.setdefault(sighting.category, [])
            if not slot or slot[-1] != index:
                slot.append(index)
            room = self.scene.room_of(sighting.cell)
            if room is not None:
                slot = self.by_room.setdefault(room.room_id, [])
                if not slot or slot[-1] != index:
                    slot.append(index)

    def rebuilt(self) -> "GroupMemory":
        """Fresh memory re-indexed from the raw record list; the result must
        match the incrementally maintained indexes exactly."""
        fresh = GroupMemory(self.scene)
        for record in self.records:
            fresh.insert(record)
        return fresh

    def clear(self) -> None:
        self.records = []
        self.by_category = {}
        self.by_room = {}
        self.seen_cells = set()

    # -- retrieval -------------------------------------------------------------

    def _sighting_matches(self, sighting: Sighting, query: StructuredQuery) -> bool:
        if sighting.category != query.category:
            return False
        if query.room is not None:
            room = resolve_room(self.scene, query.room)
            return sighting.cell in room.cells
        return True

    def retrieve(self, query: StructuredQuery) -> list[MemoryRecord]:
        """Records containing a sighting of the query's target, most recent
        first (observation time, then insertion order)."""
        indexes = self.by_category.get(query.category, [])
        hits = [
            i
            for i in indexes
            if any(
                self._sighting_matches(s, query) for s in self.records[i].observation.sightings
            )
        ]
        hits.sort(key=lambda i: (self.records[i].observation.time, i), reverse=True)
        return [self.records[i] for i in hits]

    def matching_sightings(self, query: StructuredQuery) -> list[tuple[float, int, Sighting]]:
        """(time, record index, sighting) triples matching the query, most
        recent first. Convenience view used by the answering rules."""
        out = []
        for i in self.by_category.get(query.category, []):
            for s in self.records[i].observation.sightings:
                if self._sighting_matches(s, query):
                    out.append((self.records[i].observation.time, i, s))
        out.sort(key=lambda t: (t[0], t[1]), reverse=True)
        return out

    # -- scoring ---------------------------------------------------------------

    def coverage(self, query: StructuredQuery) -> float:
        """Raw coverage fraction: target room cells seen for local queries,
        all free cells seen for global ones."""
        if query.room is not None:
            room = resolve_room(self.scene, query.room)
            return len(room.cells & self.seen_cells) / len(room.cells)
        free = self.scene.free_cells()
        return len(self.seen_cells.intersection(free)) / len(free)

    def confidence(self, query: StructuredQuery) -> float:
        cov = self.coverage(query)
        if query.kind == "counting":
            return cov
        if query.room is not None:
            boostable = query.kind in ("existence", "state", "identification", "location")
        else:
            boostable = query.kind in ("existence", "location")
        if boostable and self.matching_sightings(query):
            return 1.0
        return cov

    # -- export ----------------------------------------------------------------

    def dump_jsonl(self) -> str:
        """One JSON record per line for post-hoc audits."""
        lines = []
        for record in self.records:
            obs = record.observation
            lines.append(
                json.dumps(
                    {
                        "time": obs.time,
                        "pose": {"cell": list(obs.pose.cell), "heading": obs.pose.heading},
                        "visible_cells": [list(c) for c in sorted(obs.visible_cells)],
                        "sightings": [
                            {
                                "object_id": s.object_id,
                                "category": s.category,
                                "cell": list(s.cell),
                                "attributes": dict(sorted(s.attributes.items())),
                            }
                            for s in obs.sightings
                        ],
                        "source_question": record.source_question,
                    },
                    sort_keys=True,
                    separators=(",", ":"),
                )
            )
        return "\n".join(lines) + ("\n" if lines else "")
