"""Frontier-based targeted exploration over the grid.

The agent maintains a partial map (known free / known wall cells). Frontiers
are known free cells adjacent to unexplored space; each one is scored by a
synthetic semantic relevance divided by a harmonically discounted path cost,
and each step moves one cell along the shortest known-free path toward the
best frontier, then observes and feeds the group memory.

Exploration for a question starts wherever the previous question's
exploration ended; only the very first exploration of a scenario starts at
the scenario's initial pose.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .memory import GroupMemory, MemoryRecord
from .world import (
    Cell,
    GridScene,
    Observation,
    Pose,
    StructuredQuery,
    VisibilityIndex,
    observe,
    resolve_room,
)


class BudgetExhaustedError(RuntimeError):
    """Signal that the per-question step allocation is used up; callers
    treat this as "answer with what we have", not as a failure."""


@dataclass
class StepBudget:
    max_steps_per_question: int = 40
    step_duration: float = 1.0

    def check(self) -> None:
        if self.max_steps_per_question <= 0 or self.step_duration <= 0:
            raise ValueError("step budget values must be positive")


@dataclass
class ExplorationState:
    pose: Pose
    known_free: set[Cell] = field(default_factory=set)
    known_wall: set[Cell] = field(default_factory=set)
    frontier_cells: set[Cell] = field(default_factory=set)
    semantic_value: dict[Cell, float] = field(default_factory=dict)
    steps_used: int = 0
    max_steps: int = 40

    @classmethod
    def initial(cls, pose: Pose, max_steps: int = 40) -> "ExplorationState":
        return cls(pose=pose, known_free={pose.cell}, max_steps=max_steps)

    def begin_question(self, max_steps: int) -> None:
        """Reset per-question step accounting; the map persists."""
        self.steps_used = 0
        self.max_steps = max_steps

    def reset_map(self) -> None:
        """Forget everything but the pose (per-question isolation mode)."""
        self.known_free = {self.pose.cell}
        self.known_wall = set()
        self.frontier_cells = set()
        self.semantic_value = {}


def _neighbors4(cell: Cell) -> tuple[Cell, Cell, Cell, Cell]:
    x, y = cell
    return ((x, y - 1), (x - 1, y), (x + 1, y), (x, y + 1))


def compute_frontiers(state: ExplorationState, scene: GridScene) -> set[Cell]:
    """From-scratch frontier set: known free cells with at least one
    in-bounds neighbor that is neither known free nor known wall."""
    out = set()
    for cell in state.known_free:
        for n in _neighbors4(cell):
            if scene.in_bounds(n) and n not in state.known_free and n not in state.known_wall:
                out.add(cell)
                break
    return out


def _bfs_distances(cells: set[Cell], start: Cell) -> dict[Cell, int]:
    if start not in cells:
        return {}
    dist = {start: 0}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for n in _neighbors4(cur):
            if n in cells and n not in dist:
                dist[n] = dist[cur] + 1
                queue.append(n)
    return dist


def score_frontiers(
    state: ExplorationState,
    query: StructuredQuery,
    scene: GridScene,
    distance_scale: float = 8.0,
    target_value: float = 0.9,
    base_value: float = 0.2,
    relevance: Callable[[Cell], float] | None = None,
) -> dict[Cell, float]:
    """score(f) = semantic(f) / (1 + path_len(pose, f) / distance_scale).

    Semantic relevance is two-level by default: `target_value` for frontiers
    inside the query's target room (or, when the room is still untouched, for
    the frontier nearest to it), `base_value` elsewhere. A custom `relevance`
    callable overrides the default entirely. Unreachable frontiers are
    excluded.
    """
    dists = _bfs_distances(state.known_free, state.pose.cell)
    frontiers = [f for f in sorted(state.frontier_cells) if f in dists]
    if not frontiers:
        return {}

    if relevance is not None:
        semantics = {f: relevance(f) for f in frontiers}
    else:
        room_cells: frozenset[Cell] = frozenset()
        if query.room is not None:
            room_cells = resolve_room(scene, query.room).cells
        semantics = {f: (target_value if f in room_cells else base_value) for f in frontiers}
        if room_cells and not any(f in room_cells for f in frontiers):
            # Room not reached yet: pull the nearest frontier toward it.
            def gap(f: Cell) -> int:
                return min(max(abs(f[0] - cx), abs(f[1] - cy)) for cx, cy in room_cells)

            nearest = min(frontiers, key=lambda f: (gap(f), f))
            semantics[nearest] = target_value

    scores = {}
    for f in frontiers:
        scores[f] = semantics[f] / (1.0 + dists[f] / distance_scale)
        state.semantic_value[f] = semantics[f]
    return scores


def should_stop(
    state: ExplorationState,
    query: StructuredQuery,
    memory: GroupMemory,
    stop_threshold: float = 0.75,
) -> bool:
    """True once enough information is gathered or the budget is gone."""
    if state.steps_used >= state.max_steps:
        return True
    return memory.confidence(query) >= stop_threshold


@dataclass
class StepResult:
    pose: Pose
    observation: Observation
    chosen_frontier: Cell | None
    confidence: float


class ExplorationRun:
    """Step-at-a-time driver for one question's exploration.

    The event loop in the orchestrator advances it step by step so that
    question arrivals can interleave; `explore_for` wraps it in a plain loop
    for standalone use. Both paths share the same stop policy: a confidence
    check before the first step (unless disabled) and then after every
    `check_interval`-th step, with a hard stop when the budget runs out.
    """

    def __init__(
        self,
        scene: GridScene,
        state: ExplorationState,
        query: StructuredQuery,
        memory: GroupMemory,
        budget: StepBudget,
        stop_threshold: float = 0.75,
        check_interval: int = 3,
        vision_range: int = 4,
        noise_rate: float = 0.0,
        distance_scale: float = 8.0,
        target_value: float = 0.9,
        base_value: float = 0.2,
        check_at_start: bool = True,
        vis_index: VisibilityIndex | None = None,
        source_question: str | None = None,
        relevance: Callable[[Cell], float] | None = None,
    ):
        budget.check()
        self.scene = scene
        self.state = state
        self.query = query
        self.memory = memory
        self.budget = budget
        self.stop_threshold = stop_threshold
        self.check_interval = max(1, check_interval)
        self.vision_range = vision_range
        self.noise_rate = noise_rate
        self.distance_scale = distance_scale
        self.target_value = target_value
        self.base_value = base_value
        self.check_at_start = check_at_start
        self.vis_index = vis_index or VisibilityIndex(scene, vision_range)
        self.source_question = source_question
        self.relevance = relevance
        state.begin_question(budget.max_steps_per_question)
        state.frontier_cells = compute_frontiers(state, scene)

    def budget_exhausted(self) -> bool:
        return self.state.steps_used >= self.state.max_steps

    def check_due(self) -> bool:
        if self.state.steps_used == 0:
            return self.check_at_start
        return self.state.steps_used % self.check_interval == 0

    def should_stop_now(self) -> bool:
        return should_stop(self.state, self.query, self.memory, self.stop_threshold)

    def confidence(self) -> float:
        return self.memory.confidence(self.query)

    def do_step(self, time: float, rng_seed: int) -> StepResult:
        """Move one cell toward the best frontier (or hold position when the
        map is fully explored), observe, and record the observation."""
        state = self.state
        if state.steps_used >= state.max_steps:
            raise BudgetExhaustedError(
                f"question budget of {state.max_steps} steps already used"
            )
        scores = score_frontiers(
            state,
            self.query,
            self.scene,
            distance_scale=self.distance_scale,
            target_value=self.target_value,
            base_value=self.base_value,
            relevance=self.relevance,
        )
        chosen: Cell | None = None
        if scores:
            chosen = min(scores, key=lambda f: (-scores[f], f))
        if chosen is not None and chosen != state.pose.cell:
            towards = _bfs_distances(state.known_free, chosen)
            options = [
                n
                for n in sorted(_neighbors4(state.pose.cell))
                if n in towards and towards[n] == towards[state.pose.cell] - 1
            ]
            if options:
                state.pose = Pose(cell=options[0], heading=state.pose.heading)

        obs = observe(
            self.scene,
            state.pose,
            self.vision_range,
            noise_rate=self.noise_rate,
            rng_seed=rng_seed,
            time=time,
            vis_index=self.vis_index,
        )
        self.memory.insert(MemoryRecord(observation=obs, source_question=self.source_question))
        state.known_free |= obs.visible_cells
        for cell in obs.visible_cells:
            for n in _neighbors4(cell):
                if self.scene.in_bounds(n) and n in self.scene.walls:
                    state.known_wall.add(n)
        state.frontier_cells = compute_frontiers(state, self.scene)
        state.steps_used += 1
        return StepResult(
            pose=state.pose,
            observation=obs,
            chosen_frontier=chosen,
            confidence=self.memory.confidence(self.query),
        )


def derive_seed(base: int, counter: int) -> int:
    """Stable per-step RNG seed derivation (no salted hashing involved)."""
    return base * 1_000_003 + counter


def explore_for(
    query: StructuredQuery,
    start_pose: Pose,
    scene: GridScene,
    memory: GroupMemory,
    budget: StepBudget,
    state: ExplorationState | None = None,
    rng_seed: int = 0,
    time_start: float = 0.0,
    **run_options,
) -> tuple[int, Pose]:
    """Run one question's exploration loop; returns (steps_used, final pose).

    Pass the previous question's `state` to keep the map and pose; otherwise
    a fresh state starting at `start_pose` is created.
    """
    if state is None:
        state = ExplorationState.initial(start_pose, budget.max_steps_per_question)
    run = ExplorationRun(scene, state, query, memory, budget, **run_options)
    counter = 0
    while True:
        if run.check_due() and run.should_stop_now():
            break
        if run.budget_exhausted():
            break
        counter += 1
        run.do_step(
            time=time_start + counter * budget.step_duration,
            rng_seed=derive_seed(rng_seed, counter),
        )
    return state.steps_used, state.pose
