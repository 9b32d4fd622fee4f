"""Procedural scenario generator: grid scenes with rooms and attributed
objects, plus question sets with urgency labels, flags, and dependencies.

Everything is driven by a single integer seed through one `random.Random`
stream, so a given (seed, params) pair always yields a byte-identical
scenario JSON.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .questions import DUMMY_OPTION, Question, Scenario
from .world import (
    ATTRIBUTE_DOMAINS,
    Cell,
    GridScene,
    ObjectInstance,
    Pose,
    Room,
    StructuredQuery,
    ground_truth_answer,
)


class GenerationError(ValueError):
    """Raised when parameters cannot produce a valid scenario."""


#: category -> attribute names carried by instances of that category.
OBJECT_CATALOG: dict[str, tuple[str, ...]] = {
    "tv": ("state", "color"),
    "lamp": ("state", "color"),
    "heater": ("state",),
    "fan": ("state",),
    "chair": ("material", "color"),
    "sofa": ("material", "color"),
    "table": ("material",),
    "basket": ("material",),
    "plant": ("color",),
    "box": ("color", "material"),
    "rug": ("color", "material"),
    "vase": ("color", "material"),
}

#: Categories that may appear more than once per scene (keeps counting
#: questions interesting while tv/lamp/etc stay unique for state queries).
DUPLICABLE_CATEGORIES = ("chair", "plant", "box", "vase", "basket", "table")

ROOM_LABELS = (
    "kitchen",
    "living room",
    "bedroom",
    "bathroom",
    "hallway",
    "office",
    "dining room",
    "garage",
    "studio",
    "pantry",
    "laundry",
    "closet",
)

QUESTION_KINDS = ("existence", "counting", "state", "identification", "location")

#: Fallback order when a drawn kind has no valid target in the scene;
#: existence always succeeds, so generation cannot stall.
_KIND_FALLBACK = ("state", "identification", "location", "counting", "existence")


@dataclass
class GeneratorParams:
    grid_width: int = 16
    grid_height: int = 12
    room_rows: int = 2
    room_cols: int = 3
    object_count: int = 15
    initial_count: int = 3
    followup_count: int = 2
    followup_spacing: float = 120.0
    max_time: float = 600.0
    dependency_rate: float = 0.25
    category_weights: tuple[float, ...] = (0.345, 0.23, 0.215, 0.145, 0.065)
    urgency_band_weights: tuple[float, float, float] = (0.575, 0.265, 0.16)

    def check(self) -> None:
        if self.grid_width < 8 or self.grid_height < 8:
            raise GenerationError("grid must be at least 8x8")
        if self.object_count < 5:
            raise GenerationError("need at least 5 objects")
        if self.room_rows < 1 or self.room_cols < 1:
            raise GenerationError("room grid must be at least 1x1")
        if self.room_rows * self.room_cols > len(ROOM_LABELS):
            raise GenerationError("more rooms than available labels")
        if self.initial_count < 1 or self.followup_count < 0:
            raise GenerationError("need at least one initial question")
        if self.followup_spacing <= 0 or self.max_time <= 0:
            raise GenerationError("followup_spacing and max_time must be positive")


def _cut_positions(rng: random.Random, total: int, parts: int) -> list[int]:
    """Internal wall line coordinates splitting [0, total) into `parts` spans,
    each span at least one cell wide."""
    if parts <= 1:
        return []
    cuts = []
    for i in range(1, parts):
        base = round(total * i / parts)
        jitter = rng.choice((-1, 0, 1)) if total >= 4 * parts else 0
        cuts.append(base + jitter)
    fixed: list[int] = []
    prev = -1
    for i, c in enumerate(cuts):
        remaining = len(cuts) - i - 1
        c = max(c, prev + 2)
        c = min(c, total - 2 - 2 * remaining)
        fixed.append(c)
        prev = c
    return fixed


def _spans(cuts: list[int], total: int) -> list[tuple[int, int]]:
    edges = [-1] + cuts + [total]
    return [(edges[i] + 1, edges[i + 1] - 1) for i in range(len(edges) - 1)]


def build_scene(seed: int, params: GeneratorParams | None = None) -> GridScene:
    """Deterministic room-grid scene: full wall lines between rooms, one door
    per adjacent pair, objects scattered over room cells."""
    params = params or GeneratorParams()
    params.check()
    rng = random.Random(f"scene-{seed}")  # str seeding hashes via sha512: stable across runs

    xcuts = _cut_positions(rng, params.grid_width, params.room_cols)
    ycuts = _cut_positions(rng, params.grid_height, params.room_rows)
    xspans = _spans(xcuts, params.grid_width)
    yspans = _spans(ycuts, params.grid_height)

    walls: set[Cell] = set()
    for cx in xcuts:
        walls.update((cx, y) for y in range(params.grid_height))
    for cy in ycuts:
        walls.update((x, cy) for x in range(params.grid_width))

    labels = rng.sample(ROOM_LABELS, params.room_rows * params.room_cols)
    room_cells: list[set[Cell]] = []
    for ri, (y0, y1) in enumerate(yspans):
        for ci, (x0, x1) in enumerate(xspans):
            room_cells.append({(x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1)})

    def room_index(ri: int, ci: int) -> int:
        return ri * params.room_cols + ci

    # One door per adjacent room pair; the door cell joins the left/top room.
    for ri in range(params.room_rows):
        for ci in range(params.room_cols - 1):
            wall_x = xcuts[ci]
            y0, y1 = yspans[ri]
            door = (wall_x, rng.randint(y0, y1))
            walls.discard(door)
            room_cells[room_index(ri, ci)].add(door)
    for ri in range(params.room_rows - 1):
        for ci in range(params.room_cols):
            wall_y = ycuts[ri]
            x0, x1 = xspans[ci]
            door = (rng.randint(x0, x1), wall_y)
            walls.discard(door)
            room_cells[room_index(ri, ci)].add(door)

    rooms = [
        Room(room_id=f"room-{i}", label=labels[i], cells=frozenset(cells))
        for i, cells in enumerate(room_cells)
    ]

    placeable = sorted(c for cells in room_cells for c in cells)
    if len(placeable) < params.object_count:
        raise GenerationError("grid too small for requested object count")
    spots = rng.sample(placeable, params.object_count)

    categories = list(OBJECT_CATALOG)
    rng.shuffle(categories)
    assigned = categories[: min(params.object_count, len(categories))]
    while len(assigned) < params.object_count:
        assigned.append(rng.choice(DUPLICABLE_CATEGORIES))

    objects = []
    for i, (cell, category) in enumerate(zip(spots, assigned)):
        attrs = {
            name: rng.choice(ATTRIBUTE_DOMAINS[name]) for name in OBJECT_CATALOG[category]
        }
        objects.append(
            ObjectInstance(object_id=f"obj-{i}", category=category, cell=cell, attributes=attrs)
        )

    return GridScene(
        scene_id=f"scene-{seed:06d}",
        width=params.grid_width,
        height=params.grid_height,
        walls=walls,
        rooms=rooms,
        objects=objects,
    )


def _rounded_counts(rng: random.Random, n: int, weights: tuple[float, ...]) -> list[int]:
    """Randomized rounding of n*weights to integers summing to n with
    E[count_i] = n*weights[i]; keeps band shares tight across a suite."""
    raw = [n * w for w in weights]
    base = [math.floor(r) for r in raw]
    fracs = [r - b for r, b in zip(raw, base)]
    remainder = n - sum(base)
    if remainder > 0:
        u = rng.random()
        cum = 0.0
        taken = 0
        for i, f in enumerate(fracs):
            cum += f
            while taken < remainder and u + taken < cum:
                base[i] += 1
                taken += 1
        while taken < remainder:  # float-sum slack lands on the last band
            base[-1] += 1
            taken += 1
    return base


_URGENCY_BANDS = {
    "low": (0.02, 0.29),
    "medium": (0.30, 0.69),
    "high": (0.70, 0.98),
}


def _shuffled_real_options(rng: random.Random, real: list[str]) -> tuple[str, ...]:
    """Shuffle the real options, then pad with dummies up to four."""
    real = list(real)
    rng.shuffle(real)
    while len(real) < 4:
        real.append(DUMMY_OPTION)
    return tuple(real[:4])


def _unique_in_room(scene: GridScene, obj: ObjectInstance) -> bool:
    room = scene.room_of(obj.cell)
    if room is None:
        return False
    return len(scene.objects_in(obj.category, room)) == 1


def _build_existence(rng: random.Random, scene: GridScene) -> tuple[str, StructuredQuery, tuple[str, ...]] | None:
    room = rng.choice(scene.rooms)
    present = sorted({o.category for o in scene.objects if o.cell in room.cells})
    absent = sorted(set(OBJECT_CATALOG) - set(present))
    if present and (not absent or rng.random() < 0.5):
        category = rng.choice(present)
    elif absent:
        category = rng.choice(absent)
    else:
        category = rng.choice(sorted(OBJECT_CATALOG))
    text = f"Is there a {category} in the {room.label}?"
    query = StructuredQuery("existence", category, room=room.label)
    return text, query, _shuffled_real_options(rng, ["yes", "no"])


def _build_counting(rng: random.Random, scene: GridScene) -> tuple[str, StructuredQuery, tuple[str, ...]] | None:
    room = rng.choice(scene.rooms)
    present = sorted({o.category for o in scene.objects if o.cell in room.cells})
    pool = present if (present and rng.random() < 0.7) else sorted(OBJECT_CATALOG)
    category = rng.choice(pool)
    count = len(scene.objects_in(category, room))
    distractors = [n for n in range(max(0, count - 2), count + 4) if n != count]
    picks = rng.sample(distractors, 3)
    options = [str(count)] + [str(n) for n in picks]
    text = f"How many {category}s are in the {room.label}?"
    query = StructuredQuery("counting", category, room=room.label)
    return text, query, _shuffled_real_options(rng, options)


def _build_state(rng: random.Random, scene: GridScene) -> tuple[str, StructuredQuery, tuple[str, ...]] | None:
    candidates = [
        o for o in scene.objects if "state" in o.attributes and _unique_in_room(scene, o)
    ]
    if not candidates:
        return None
    obj = rng.choice(sorted(candidates, key=lambda o: o.object_id))
    room = scene.room_of(obj.cell)
    text = f"Is the {obj.category} in the {room.label} turned on or off?"
    query = StructuredQuery("state", obj.category, room=room.label, attribute="state")
    return text, query, _shuffled_real_options(rng, list(ATTRIBUTE_DOMAINS["state"]))


def _build_identification(rng: random.Random, scene: GridScene) -> tuple[str, StructuredQuery, tuple[str, ...]] | None:
    candidates = [
        o
        for o in scene.objects
        if _unique_in_room(scene, o) and ({"material", "color"} & set(o.attributes))
    ]
    if not candidates:
        return None
    obj = rng.choice(sorted(candidates, key=lambda o: o.object_id))
    room = scene.room_of(obj.cell)
    attr = rng.choice(sorted({"material", "color"} & set(obj.attributes)))
    truth = obj.attributes[attr]
    wrong = rng.sample([v for v in ATTRIBUTE_DOMAINS[attr] if v != truth], 3)
    if attr == "material":
        text = f"What is the {obj.category} in the {room.label} made of?"
    else:
        text = f"What color is the {obj.category} in the {room.label}?"
    query = StructuredQuery("identification", obj.category, room=room.label, attribute=attr)
    return text, query, _shuffled_real_options(rng, [truth] + wrong)


def _build_location(rng: random.Random, scene: GridScene) -> tuple[str, StructuredQuery, tuple[str, ...]] | None:
    confined: list[tuple[str, str]] = []
    for category in sorted({o.category for o in scene.objects}):
        labels = {scene.room_of(o.cell).label for o in scene.objects_in(category)}
        if len(labels) == 1:
            confined.append((category, labels.pop()))
    if not confined:
        return None
    category, truth = rng.choice(confined)
    scene_labels = [r.label for r in scene.rooms if r.label != truth]
    fillers = [l for l in ROOM_LABELS if l != truth and l not in scene_labels]
    distractor_pool = scene_labels + fillers
    wrong = rng.sample(distractor_pool, 3) if len(distractor_pool) >= 3 else distractor_pool
    text = f"Where can you find the {category}?"
    query = StructuredQuery("location", category)
    return text, query, _shuffled_real_options(rng, [truth] + wrong)


_BUILDERS = {
    "existence": _build_existence,
    "counting": _build_counting,
    "state": _build_state,
    "identification": _build_identification,
    "location": _build_location,
}


def generate_scenario(seed: int, params: GeneratorParams | None = None) -> Scenario:
    """Build a complete scenario: scene, initial questions, and follow-ups.

    Question kinds are drawn i.i.d. from the category mix; urgency bands use
    randomized rounding so suite-level band shares stay close to the target
    split. Deterministic in (seed, params).
    """
    params = params or GeneratorParams()
    params.check()
    scene = build_scene(seed, params)
    rng = random.Random(f"questions-{seed}")

    n = params.initial_count + params.followup_count
    band_counts = _rounded_counts(rng, n, params.urgency_band_weights)
    bands = (
        ["low"] * band_counts[0] + ["medium"] * band_counts[1] + ["high"] * band_counts[2]
    )
    rng.shuffle(bands)

    questions: list[Question] = []
    for i in range(n):
        kind = rng.choices(QUESTION_KINDS, weights=params.category_weights)[0]
        built = _BUILDERS[kind](rng, scene)
        if built is None:
            for fallback in _KIND_FALLBACK:
                built = _BUILDERS[fallback](rng, scene)
                if built is not None:
                    break
        assert built is not None  # existence fallback always succeeds
        text, query, options = built

        band = bands[i]
        lo, hi = _URGENCY_BANDS[band]
        question = Question(
            question_id=f"scn-{seed:06d}-q{i}",
            text=text,
            query=query,
            options=options,
            ground_truth="A",  # placeholder until the oracle fills it in
            urgency_true=round(rng.uniform(lo, hi), 6),
            arrival_time=0.0,
            safety_flag=band == "high",
            functional_flag=band == "medium",
        )
        try:
            question.ground_truth = ground_truth_answer(scene, question)
        except Exception as exc:
            raise GenerationError(f"builder produced unanswerable question: {exc}") from exc
        questions.append(question)

    # Random assignment to initial vs follow-up roles, then arrival times and
    # backward-only dependencies in arrival order.
    rng.shuffle(questions)
    for i, q in enumerate(questions):
        if i < params.initial_count:
            q.arrival_time = 0.0
        else:
            q.arrival_time = params.followup_spacing * (i - params.initial_count + 1)
        if i > 0 and rng.random() < params.dependency_rate:
            q.declared_deps = (questions[rng.randrange(i)].question_id,)

    free = scene.free_cells()
    pose = Pose(cell=rng.choice(free), heading=rng.choice(("north", "east", "south", "west")))

    return Scenario(
        scenario_id=f"scn-{seed:06d}",
        scene=scene,
        max_time=params.max_time,
        initial_pose=pose,
        initial_questions=questions[: params.initial_count],
        followup_questions=questions[params.initial_count :],
    )


def generate_suite(seed: int, count: int, params: GeneratorParams | None = None) -> list[Scenario]:
    """`count` scenarios under seeds seed, seed+1, ..., seed+count-1."""
    return [generate_scenario(seed + i, params) for i in range(count)]
