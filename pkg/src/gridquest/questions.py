"""Question and scenario data model, plus the rule-based parser that
annotates each question with an urgency estimate and a scope type.

Questions carry a machine-readable structured query alongside their text; the
text exists for human inspection only. Urgency labels stored in the dataset
(`urgency_true`) are for evaluation only and are never read by the agent; the
parser derives its own estimate from the safety/functional flags.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .world import (
    GridScene,
    Pose,
    StructuredQuery,
    ground_truth_answer,
    scene_from_dict,
    scene_to_dict,
)

OPTION_LABELS = ("A", "B", "C", "D")

#: Filler used to pad questions that naturally have fewer than four options.
DUMMY_OPTION = "(Do not choose this option)"


@dataclass
class Question:
    question_id: str
    text: str
    query: StructuredQuery
    options: tuple[str, str, str, str]
    ground_truth: str
    urgency_true: float
    arrival_time: float
    safety_flag: bool = False
    functional_flag: bool = False
    declared_deps: tuple[str, ...] = ()


@dataclass
class ParsedQuestion:
    question: Question
    urgency_est: float
    scope_type: str  # "local" | "global"

    @property
    def question_id(self) -> str:
        return self.question.question_id


@dataclass
class ParserRules:
    """Urgency constants sit at the centers of the low/medium/high bands."""

    safety_urgency: float = 0.8
    functional_urgency: float = 0.5
    default_urgency: float = 0.2


DEFAULT_PARSER_RULES = ParserRules()


def parse_question(q: Question, rules: ParserRules | None = None) -> ParsedQuestion:
    """Annotate a question with semantic metadata.

    Pure and idempotent; computed once per question by the pipeline since the
    attributes are intrinsic to the question. Scope is local when the query
    names a specific room, global otherwise (location questions never name a
    room, so they are global).
    """
    rules = rules or DEFAULT_PARSER_RULES
    if q.safety_flag:
        urgency = rules.safety_urgency
    elif q.functional_flag:
        urgency = rules.functional_urgency
    else:
        urgency = rules.default_urgency
    scope = "local" if q.query.room is not None else "global"
    return ParsedQuestion(question=q, urgency_est=urgency, scope_type=scope)


@dataclass
class Scenario:
    scenario_id: str
    scene: GridScene
    max_time: float
    initial_pose: Pose
    initial_questions: list[Question]
    followup_questions: list[Question] = field(default_factory=list)

    @property
    def questions(self) -> list[Question]:
        return list(self.initial_questions) + list(self.followup_questions)


def validate_scenario(s: Scenario) -> list[str]:
    """Collect every invariant violation; an empty list means valid.

    Violations are returned as data rather than raised so that callers can
    report all of them at once.
    """
    problems = [f"scene: {p}" for p in s.scene.validate()]
    if s.max_time <= 0:
        problems.append(f"max_time must be positive, got {s.max_time}")
    if not s.scene.is_free(s.initial_pose.cell):
        problems.append(f"initial pose {s.initial_pose.cell} is not on a free cell")

    all_questions = s.questions
    ids = [q.question_id for q in all_questions]
    dupes = {i for i in ids if ids.count(i) > 1}
    if dupes:
        problems.append(f"duplicate question ids: {sorted(dupes)}")
    known = set(ids)

    for q in s.initial_questions:
        if q.arrival_time != 0:
            problems.append(f"{q.question_id}: initial question arrives at {q.arrival_time}, not 0")
    for q in s.followup_questions:
        if q.arrival_time <= 0:
            problems.append(f"{q.question_id}: follow-up must arrive after t=0")

    for q in all_questions:
        if len(q.options) != 4:
            problems.append(f"{q.question_id}: expected 4 options, got {len(q.options)}")
        if q.ground_truth not in OPTION_LABELS:
            problems.append(f"{q.question_id}: ground_truth label {q.ground_truth!r} invalid")
        if not 0 < q.urgency_true < 1:
            problems.append(f"{q.question_id}: urgency_true {q.urgency_true} outside (0,1)")
        if q.arrival_time < 0:
            problems.append(f"{q.question_id}: negative arrival_time")
        for dep in q.declared_deps:
            if dep not in known:
                problems.append(f"{q.question_id}: dependency {dep!r} not in scenario")
            if dep == q.question_id:
                problems.append(f"{q.question_id}: depends on itself")
        if q.ground_truth in OPTION_LABELS and len(q.options) == 4:
            try:
                expected = ground_truth_answer(s.scene, q)
            except Exception as exc:  # oracle failure is itself a violation
                problems.append(f"{q.question_id}: ground-truth oracle failed: {exc}")
            else:
                if expected != q.ground_truth:
                    problems.append(
                        f"{q.question_id}: stored ground_truth {q.ground_truth} "
                        f"disagrees with scene oracle {expected}"
                    )
    return problems


# --- JSON round trip -------------------------------------------------------

def question_to_dict(q: Question, role: str) -> dict:
    return {
        "question_id": q.question_id,
        "text": q.text,
        "query": {
            "kind": q.query.kind,
            "category": q.query.category,
            "room": q.query.room,
            "attribute": q.query.attribute,
        },
        "options": list(q.options),
        "ground_truth": q.ground_truth,
        "urgency_true": q.urgency_true,
        "arrival_time": q.arrival_time,
        "safety_flag": q.safety_flag,
        "functional_flag": q.functional_flag,
        "declared_deps": list(q.declared_deps),
        "role": role,
    }


def question_from_dict(data: dict) -> Question:
    qd = data["query"]
    return Question(
        question_id=data["question_id"],
        text=data["text"],
        query=StructuredQuery(qd["kind"], qd["category"], qd.get("room"), qd.get("attribute")),
        options=tuple(data["options"]),
        ground_truth=data["ground_truth"],
        urgency_true=data["urgency_true"],
        arrival_time=data["arrival_time"],
        safety_flag=data.get("safety_flag", False),
        functional_flag=data.get("functional_flag", False),
        declared_deps=tuple(data.get("declared_deps", ())),
    )


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "scenario_id": s.scenario_id,
        "scene": scene_to_dict(s.scene),
        "max_time": s.max_time,
        "initial_pose": {"cell": list(s.initial_pose.cell), "heading": s.initial_pose.heading},
        "questions": (
            [question_to_dict(q, "initial") for q in s.initial_questions]
            + [question_to_dict(q, "followup") for q in s.followup_questions]
        ),
    }


def scenario_from_dict(data: dict) -> Scenario:
    pose = data["initial_pose"]
    initial = [question_from_dict(d) for d in data["questions"] if d["role"] == "initial"]
    followup = [question_from_dict(d) for d in data["questions"] if d["role"] == "followup"]
    return Scenario(
        scenario_id=data["scenario_id"],
        scene=scene_from_dict(data["scene"]),
        max_time=data["max_time"],
        initial_pose=Pose(tuple(pose["cell"]), pose.get("heading", "north")),
        initial_questions=initial,
        followup_questions=followup,
    )


def scenario_to_json(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), sort_keys=True, separators=(",", ":"))


def scenario_from_json(text: str) -> Scenario:
    return scenario_from_dict(json.loads(text))
