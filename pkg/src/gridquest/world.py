"""Symbolic grid world: scenes, line-of-sight visibility, observations, and
the ground-truth answer oracle used for dataset generation and scoring.

All geometry is discrete: cells are (x, y) pairs with 0 <= x < width and
0 <= y < height. A cell is either free or a wall. Visibility uses Chebyshev
range plus an exact integer raycast between cell centers, so results are
reproducible and cheap to verify by brute force.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

if TYPE_CHECKING:  # pragma: no cover
    from .questions import Question

Cell = tuple[int, int]

HEADINGS = ("north", "east", "south", "west")

QUERY_KINDS = ("existence", "counting", "state", "identification", "location")

#: Value domains per attribute name, shared by the scene generator and the
#: observation noise model (noise swaps a value for another one in-domain).
ATTRIBUTE_DOMAINS: dict[str, tuple[str, ...]] = {
    "state": ("on", "off"),
    "material": ("wood", "metal", "plastic", "fabric", "woven", "glass"),
    "color": ("red", "blue", "green", "white", "black", "brown"),
}


class InvalidPoseError(ValueError):
    """Pose is out of bounds or on a wall cell."""


class AmbiguousQueryError(ValueError):
    """Query references an object that is absent or not unique."""


class DatasetInconsistencyError(ValueError):
    """The derived answer value matches none of the question's options."""


class UnknownRoomError(KeyError):
    """Query references a room label that cannot be resolved in the scene."""


@dataclass
class Room:
    room_id: str
    label: str
    cells: frozenset[Cell]


@dataclass
class ObjectInstance:
    object_id: str
    category: str
    cell: Cell
    attributes: dict[str, str] = field(default_factory=dict)


@dataclass
class Pose:
    cell: Cell
    heading: str = "north"


@dataclass
class StructuredQuery:
    """Machine-readable form of a question, evaluated against a scene.

    kind: one of QUERY_KINDS; category: target object category;
    room: room label for locally-scoped queries (None means scene-wide);
    attribute: attribute name for state/identification queries.
    """

    kind: str
    category: str
    room: str | None = None
    attribute: str | None = None


@dataclass
class Sighting:
    object_id: str
    category: str
    cell: Cell
    attributes: dict[str, str]


@dataclass
class Observation:
    time: float
    pose: Pose
    visible_cells: set[Cell]
    sightings: list[Sighting]


@dataclass
class GridScene:
    scene_id: str
    width: int
    height: int
    walls: set[Cell]
    rooms: list[Room]
    objects: list[ObjectInstance]

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and cell not in self.walls

    def free_cells(self) -> list[Cell]:
        return [
            (x, y)
            for x in range(self.width)
            for y in range(self.height)
            if (x, y) not in self.walls
        ]

    def room_of(self, cell: Cell) -> Room | None:
        for room in self.rooms:
            if cell in room.cells:
                return room
        return None

    def objects_in(self, category: str, room: Room | None = None) -> list[ObjectInstance]:
        found = [o for o in self.objects if o.category == category]
        if room is not None:
            found = [o for o in found if o.cell in room.cells]
        return found

    def validate(self) -> list[str]:
        """Check scene invariants; returns human-readable violations."""
        problems: list[str] = []
        if not self.free_cells():
            problems.append("scene has no free cell")
        seen_cells: set[Cell] = set()
        for room in self.rooms:
            if not room.cells:
                problems.append(f"room {room.room_id} has no cells")
            if not room.label:
                problems.append(f"room {room.room_id} has an empty label")
            overlap = seen_cells & room.cells
            if overlap:
                problems.append(f"room {room.room_id} overlaps another room at {sorted(overlap)}")
            seen_cells |= room.cells
            for cell in room.cells:
                if not self.is_free(cell):
                    problems.append(f"room {room.room_id} claims non-free cell {cell}")
        for obj in self.objects:
            if not obj.category:
                problems.append(f"object {obj.object_id} has an empty category")
            if not self.in_bounds(obj.cell):
                problems.append(f"object {obj.object_id} is out of bounds at {obj.cell}")
                continue
            if not self.is_free(obj.cell):
                problems.append(f"object {obj.object_id} sits on a wall at {obj.cell}")
            rooms_holding = [r for r in self.rooms if obj.cell in r.cells]
            if len(rooms_holding) != 1:
                problems.append(
                    f"object {obj.object_id} lies in {len(rooms_holding)} rooms (expected 1)"
                )
        return problems


def resolve_room(scene: GridScene, label: str) -> Room:
    """Find the room carrying `label`; duplicates are rejected as unresolvable."""
    matches = [r for r in scene.rooms if r.label == label]
    if not matches:
        raise UnknownRoomError(f"no room labeled {label!r} in scene {scene.scene_id}")
    if len(matches) > 1:
        raise UnknownRoomError(f"room label {label!r} is ambiguous in scene {scene.scene_id}")
    return matches[0]


def _cells_crossed(a: Cell, b: Cell) -> list[Cell]:
    """Cells whose interior the segment between the centers of a and b crosses.

    Exact integer grid traversal. With coordinates scaled by 2 the centers are
    odd, so the next x/y boundary crossings sit at parameters
    (2*px + 1) / (2*|dx|) and (2*py + 1) / (2*|dy|); comparing them by
    cross-multiplication stays in integers. Equal parameters mean the segment
    passes exactly through a grid corner, which steps diagonally and never
    enters the two side cells. The traversal is symmetric in a and b.
    """
    (x0, y0), (x1, y1) = a, b
    dx, dy = x1 - x0, y1 - y0
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    adx, ady = abs(dx), abs(dy)
    cx, cy = x0, y0
    px = py = 0  # boundary crossings consumed per axis
    cells = [(cx, cy)]
    while (cx, cy) != (x1, y1):
        tx = (2 * px + 1) * ady  # both sides scaled by 2*adx*ady
        ty = (2 * py + 1) * adx
        if adx and (not ady or tx < ty):
            cx += sx
            px += 1
        elif ady and (not adx or ty < tx):
            cy += sy
            py += 1
        else:  # corner hit
            cx += sx
            cy += sy
            px += 1
            py += 1
        cells.append((cx, cy))
    return cells


def line_of_sight(scene: GridScene, a: Cell, b: Cell) -> bool:
    """True when no wall interior lies strictly between the two cell centers."""
    for cell in _cells_crossed(a, b):
        if cell != a and cell != b and cell in scene.walls:
            return False
    return True


def visible_cells(scene: GridScene, pose: Pose, sight_range: int) -> set[Cell]:
    """All free cells within Chebyshev `sight_range` of the pose with clear
    line of sight. Always contains the pose's own cell; heading is ignored.
    """
    if not scene.in_bounds(pose.cell) or pose.cell in scene.walls:
        raise InvalidPoseError(f"pose cell {pose.cell} is not a free cell in bounds")
    if sight_range < 0:
        raise ValueError("sight_range must be >= 0")
    px, py = pose.cell
    out = {pose.cell}
    for x in range(max(0, px - sight_range), min(scene.width - 1, px + sight_range) + 1):
        for y in range(max(0, py - sight_range), min(scene.height - 1, py + sight_range) + 1):
            cell = (x, y)
            if cell == pose.cell or cell in scene.walls:
                continue
            if line_of_sight(scene, pose.cell, cell):
                out.add(cell)
    return out


class VisibilityIndex:
    """Memoized visible_cells for a fixed scene and sight range.

    Intended for a single owner (the exploration loop); the underlying
    computation is pure, so cached results never go stale.
    """

    def __init__(self, scene: GridScene, sight_range: int):
        self.scene = scene
        self.sight_range = sight_range
        self._cache: dict[Cell, frozenset[Cell]] = {}

    def visible(self, cell: Cell) -> frozenset[Cell]:
        hit = self._cache.get(cell)
        if hit is None:
            hit = frozenset(visible_cells(self.scene, Pose(cell), self.sight_range))
            self._cache[cell] = hit
        return hit


def observe(
    scene: GridScene,
    pose: Pose,
    sight_range: int,
    noise_rate: float = 0.0,
    rng_seed: int = 0,
    time: float = 0.0,
    vis_index: VisibilityIndex | None = None,
) -> Observation:
    """Symbolic observation: every object on a visible cell is sighted.

    With probability `noise_rate` per attribute (seeded, reproducible) the
    perceived value is swapped for a uniformly chosen wrong value from that
    attribute's domain. noise_rate must satisfy 0 <= noise_rate < 1.
    """
    if not 0.0 <= noise_rate < 1.0:
        raise ValueError("noise_rate must be in [0, 1)")
    if vis_index is not None:
        if not scene.in_bounds(pose.cell) or pose.cell in scene.walls:
            raise InvalidPoseError(f"pose cell {pose.cell} is not a free cell in bounds")
        visible = set(vis_index.visible(pose.cell))
    else:
        visible = visible_cells(scene, pose, sight_range)
    rng = random.Random(rng_seed)
    sightings: list[Sighting] = []
    for obj in sorted(
        (o for o in scene.objects if o.cell in visible), key=lambda o: o.object_id
    ):
        perceived: dict[str, str] = {}
        for name in sorted(obj.attributes):
            value = obj.attributes[name]
            domain = ATTRIBUTE_DOMAINS.get(name, ())
            if noise_rate > 0.0 and len(domain) > 1 and rng.random() < noise_rate:
                value = rng.choice([v for v in domain if v != value])
            perceived[name] = value
        sightings.append(Sighting(obj.object_id, obj.category, obj.cell, perceived))
    return Observation(time=time, pose=pose, visible_cells=visible, sightings=sightings)


def evaluate_query(scene: GridScene, query: StructuredQuery) -> str:
    """Evaluate a structured query against ground truth, returning the
    canonical answer value (not yet an option label)."""
    room = resolve_room(scene, query.room) if query.room is not None else None
    if query.kind == "existence":
        return "yes" if scene.objects_in(query.category, room) else "no"
    if query.kind == "counting":
        return str(len(scene.objects_in(query.category, room)))
    if query.kind in ("state", "identification"):
        matches = scene.objects_in(query.category, room)
        if len(matches) != 1:
            raise AmbiguousQueryError(
                f"{query.kind} query needs exactly one {query.category!r}"
                f"{' in ' + query.room if query.room else ''}, found {len(matches)}"
            )
        if query.attribute is None or query.attribute not in matches[0].attributes:
            raise AmbiguousQueryError(
                f"object {matches[0].object_id} has no attribute {query.attribute!r}"
            )
        return matches[0].attributes[query.attribute]
    if query.kind == "location":
        matches = scene.objects_in(query.category)
        if not matches:
            raise AmbiguousQueryError(f"no {query.category!r} present to locate")
        labels = set()
        for obj in matches:
            holding = scene.room_of(obj.cell)
            if holding is None:
                raise AmbiguousQueryError(f"object {obj.object_id} lies outside all rooms")
            labels.add(holding.label)
        if len(labels) != 1:
            raise AmbiguousQueryError(
                f"{query.category!r} spans several rooms: {sorted(labels)}"
            )
        return labels.pop()
    raise ValueError(f"unknown query kind {query.kind!r}")


def ground_truth_answer(scene: GridScene, question: "Question") -> str:
    """Option label ('A'..'D') whose value matches the scene's ground truth.

    Used only for dataset generation and metric scoring; the agent never
    calls this.
    """
    value = evaluate_query(scene, question.query)
    for label, option in zip("ABCD", question.options):
        if option == value:
            return label
    raise DatasetInconsistencyError(
        f"answer value {value!r} matches no option of {question.question_id}"
    )


# --- JSON round trip -------------------------------------------------------

def scene_to_dict(scene: GridScene) -> dict:
    return {
        "scene_id": scene.scene_id,
        "width": scene.width,
        "height": scene.height,
        "walls": [list(c) for c in sorted(scene.walls)],
        "rooms": [
            {
                "room_id": r.room_id,
                "label": r.label,
                "cells": [list(c) for c in sorted(r.cells)],
            }
            for r in scene.rooms
        ],
        "objects": [
            {
                "object_id": o.object_id,
                "category": o.category,
                "cell": list(o.cell),
                "attributes": dict(sorted(o.attributes.items())),
            }
            for o in scene.objects
        ],
    }


def scene_from_dict(data: dict) -> GridScene:
    return GridScene(
        scene_id=data["scene_id"],
        width=data["width"],
        height=data["height"],
        walls={tuple(c) for c in data["walls"]},
        rooms=[
            Room(r["room_id"], r["label"], frozenset(tuple(c) for c in r["cells"]))
            for r in data["rooms"]
        ],
        objects=[
            ObjectInstance(o["object_id"], o["category"], tuple(o["cell"]), dict(o["attributes"]))
            for o in data["objects"]
        ],
    )


def scene_to_json(scene: GridScene) -> str:
    return json.dumps(scene_to_dict(scene), sort_keys=True, separators=(",", ":"))
