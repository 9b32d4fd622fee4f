"""Pipeline orchestration: generator, parser, finishing gate, pool, planner,
stopping, and answering wired over the message bus with a virtual clock.

The reference executor is a deterministic single-threaded event loop: a heap
of timed events (question arrivals, planner polls, exploration steps) drives
the run, and every pipeline hop is published on the bus, whose ordered log is
the episode trace. Consumers are idempotent, so redelivering any bus message
leaves the final trace content unchanged.

Baselines and ablations run inside the same engine via RunConfig: sequential
modes force FIFO selection and disable the finishing gate entirely, the
no-memory mode additionally clears memory and map between questions, and each
ablation zeroes one term of the priority formula (no_priority switches
selection to FIFO while keeping the group memory active).
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .bus import BusMessage, MessageBus
from .explorer import ExplorationRun, ExplorationState, StepBudget, derive_seed
from .memory import GroupMemory
from .metrics import MetricsResult, aggregate, compute_metrics
from .pool import PriorityWeights, QuestionPool
from .questions import (
    DUMMY_OPTION,
    ParsedQuestion,
    Question,
    Scenario,
    parse_question,
    validate_scenario,
)
from .trace import AnswerRecord, EpisodeTrace
from .world import VisibilityIndex

MODES = ("paraeqsa", "seq_nomem", "seq_mem")
ABLATIONS = ("no_priority", "no_urgency", "no_scope", "no_reward", "no_dependency")


class ConfigError(ValueError):
    """RunConfig fails validation."""


class ScenarioValidationError(ValueError):
    """Scenario rejected before the run starts."""


@dataclass
class RunConfig:
    mode: str = "paraeqsa"
    weights: PriorityWeights = field(default_factory=PriorityWeights)
    finishing_threshold: float = 0.8
    stop_threshold: float = 0.75
    budget: StepBudget = field(default_factory=StepBudget)
    ablations: frozenset = frozenset()
    seed: int = 0
    vision_range: int = 4
    noise_rate: float = 0.05
    co_location_radius: int = 8
    check_interval: int = 3
    distance_scale: float = 8.0
    target_relevance: float = 0.9
    base_relevance: float = 0.2
    strict_ready_gate: bool = False

    def check(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        unknown = set(self.ablations) - set(ABLATIONS)
        if unknown:
            raise ConfigError(f"unknown ablations: {sorted(unknown)}")
        if not 0.0 <= self.finishing_threshold <= 1.0:
            raise ConfigError("finishing_threshold must lie in [0, 1]")
        if not 0.0 <= self.stop_threshold <= 1.0:
            raise ConfigError("stop_threshold must lie in [0, 1]")
        if not 0.0 <= self.noise_rate < 1.0:
            raise ConfigError("noise_rate must lie in [0, 1)")
        if self.vision_range < 0 or self.check_interval < 1:
            raise ConfigError("vision_range must be >= 0 and check_interval >= 1")
        self.budget.check()
        self.weights.check()

    @property
    def gate_enabled(self) -> bool:
        """Sequential baselines tackle every question with a fresh exploration
        phase, so the finishing gate exists only in the full pipeline."""
        return self.mode == "paraeqsa"

    @property
    def fifo_selection(self) -> bool:
        return self.mode != "paraeqsa" or "no_priority" in self.ablations

    @property
    def stop_check_at_start(self) -> bool:
        """Baselines always explore before their first stopping check; the
        full pipeline may stop at zero steps when memory already suffices."""
        return self.mode == "paraeqsa"

    def effective_weights(self) -> PriorityWeights:
        w = replace(self.weights)
        if "no_urgency" in self.ablations:
            w.w_u = 0.0
        if "no_scope" in self.ablations:
            w.w_s = 0.0
        if "no_reward" in self.ablations:
            w.w_r = 0.0
        if "no_dependency" in self.ablations:
            w.w_d = 0.0
        return w

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "weights": {
                "w_u": self.weights.w_u,
                "w_s": self.weights.w_s,
                "w_r": self.weights.w_r,
                "w_d": self.weights.w_d,
            },
            "finishing_threshold": self.finishing_threshold,
            "stop_threshold": self.stop_threshold,
            "budget": {
                "max_steps_per_question": self.budget.max_steps_per_question,
                "step_duration": self.budget.step_duration,
            },
            "ablations": sorted(self.ablations),
            "seed": self.seed,
            "vision_range": self.vision_range,
            "noise_rate": self.noise_rate,
            "co_location_radius": self.co_location_radius,
            "check_interval": self.check_interval,
            "distance_scale": self.distance_scale,
            "target_relevance": self.target_relevance,
            "base_relevance": self.base_relevance,
            "strict_ready_gate": self.strict_ready_gate,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        base = cls()
        weights = data.get("weights", {})
        budget = data.get("budget", {})
        return cls(
            mode=data.get("mode", base.mode),
            weights=PriorityWeights(
                w_u=weights.get("w_u", 1.0),
                w_s=weights.get("w_s", 1.0),
                w_r=weights.get("w_r", 1.0),
                w_d=weights.get("w_d", 1.0),
            ),
            finishing_threshold=data.get("finishing_threshold", base.finishing_threshold),
            stop_threshold=data.get("stop_threshold", base.stop_threshold),
            budget=StepBudget(
                max_steps_per_question=budget.get("max_steps_per_question", 40),
                step_duration=budget.get("step_duration", 1.0),
            ),
            ablations=frozenset(data.get("ablations", ())),
            seed=data.get("seed", base.seed),
            vision_range=data.get("vision_range", base.vision_range),
            noise_rate=data.get("noise_rate", base.noise_rate),
            co_location_radius=data.get("co_location_radius", base.co_location_radius),
            check_interval=data.get("check_interval", base.check_interval),
            distance_scale=data.get("distance_scale", base.distance_scale),
            target_relevance=data.get("target_relevance", base.target_relevance),
            base_relevance=data.get("base_relevance", base.base_relevance),
            strict_ready_gate=data.get("strict_ready_gate", base.strict_ready_gate),
        )


def finishing_gate(
    parsed: ParsedQuestion, memory: GroupMemory, threshold: float = 0.8
) -> tuple[str, float]:
    """Decide whether memory already answers the question.

    Returns ("direct", confidence) when confidence clears the threshold
    (inclusive), else ("pool", confidence).
    """
    confidence = memory.confidence(parsed.question.query)
    return ("direct" if confidence >= threshold else "pool"), confidence


def answer_question(question: Question, memory: GroupMemory, rng_seed: int = 0) -> str:
    """Forced-choice answer from memory; always returns an option label.

    Aggregation rules per query kind: existence says yes on any matching
    sighting and no only under complete coverage; counting counts distinct
    sighted matching objects; state/identification take the majority perceived
    attribute value (ties go to the most recent); location reports the room
    of the most recent sighting. When memory supports no value (or the value
    matches no option), the answer falls through to the first non-dummy
    option. Deterministic given the memory contents; rng_seed is accepted for
    interface stability.
    """
    query = question.query
    matches = memory.matching_sightings(query)  # newest first
    value: str | None = None
    if query.kind == "existence":
        if matches:
            value = "yes"
        elif memory.coverage(query) >= 1.0:
            value = "no"
    elif query.kind == "counting":
        if memory.coverage(query) > 0.0:
            value = str(len({s.object_id for _, _, s in matches}))
    elif query.kind in ("state", "identification"):
        if matches and query.attribute is not None:
            votes: dict[str, int] = {}
            newest: dict[str, tuple[float, int]] = {}
            for when, index, sighting in matches:
                seen = sighting.attributes.get(query.attribute)
                if seen is None:
                    continue
                votes[seen] = votes.get(seen, 0) + 1
                newest.setdefault(seen, (when, index))  # matches are newest-first
            if votes:
                top = max(votes.values())
                tied = [v for v, count in votes.items() if count == top]
                value = max(tied, key=lambda v: newest[v])
    elif query.kind == "location":
        if matches:
            room = memory.scene.room_of(matches[0][2].cell)
            if room is not None:
                value = room.label
    if value is not None:
        for label, option in zip("ABCD", question.options):
            if option == value:
                return label
    for label, option in zip("ABCD", question.options):
        if option != DUMMY_OPTION:
            return label
    return "A"


class _ScenarioRun:
    """Deterministic event-loop execution of one scenario under one config."""

    def __init__(self, scenario: Scenario, config: RunConfig, bus: MessageBus | None = None):
        self.scenario = scenario
        self.config = config
        self.bus = bus or MessageBus()
        self.clock = 0.0
        self._tick = 0
        self._heap: list[tuple[float, int, str, dict]] = []

        self.questions: dict[str, Question] = {
            q.question_id: q for q in scenario.questions
        }
        self.arrival_times: dict[str, float] = {
            q.question_id: q.arrival_time for q in scenario.questions
        }
        self.parsed: dict[str, ParsedQuestion] = {}
        self.pool = QuestionPool(
            scenario.scene,
            weights=config.effective_weights(),
            co_location_radius=config.co_location_radius,
            strict_ready_gate=config.strict_ready_gate,
        )
        self.memory = GroupMemory(scenario.scene)
        self.exploration = ExplorationState.initial(
            scenario.initial_pose, config.budget.max_steps_per_question
        )
        self.vis_index = VisibilityIndex(scenario.scene, config.vision_range)
        self.current: tuple[str, ExplorationRun] | None = None
        self.records: dict[str, AnswerRecord] = {}
        self.record_order: list[AnswerRecord] = []
        self._arrived: set[str] = set()
        self._routed: set[str] = set()
        self._selected_handled: set[str] = set()
        self._step_counter = 0

        self.bus.subscribe("question-arrived", self._on_arrived)
        self.bus.subscribe("parsed", self._on_parsed)
        self.bus.subscribe("direct-answer-attempt", self._on_gate_decision)
        self.bus.subscribe("pooled", self._on_pooled)
        self.bus.subscribe("selected", self._on_selected)

    # -- event scheduling -------------------------------------------------------

    def _schedule(self, time: float, kind: str, data: dict) -> None:
        self._tick += 1
        heapq.heappush(self._heap, (time, self._tick, kind, data))

    # -- bus consumers (idempotent) ----------------------------------------------

    def _on_arrived(self, msg: BusMessage) -> None:
        qid = msg.payload["question_id"]
        if qid in self._arrived:
            return
        self._arrived.add(qid)
        parsed = parse_question(self.questions[qid])
        self.parsed[qid] = parsed
        self.bus.publish(
            "parsed",
            {
                "question_id": qid,
                "urgency_est": parsed.urgency_est,
                "scope_type": parsed.scope_type,
            },
            self.clock,
        )

    def _on_parsed(self, msg: BusMessage) -> None:
        qid = msg.payload["question_id"]
        if qid in self._routed:
            return
        self._routed.add(qid)
        if self.config.gate_enabled:
            decision, confidence = finishing_gate(
                self.parsed[qid], self.memory, self.config.finishing_threshold
            )
            self.bus.publish(
                "direct-answer-attempt",
                {"question_id": qid, "confidence": confidence, "decision": decision},
                self.clock,
            )
        else:
            self._pool_question(qid)

    def _on_gate_decision(self, msg: BusMessage) -> None:
        qid = msg.payload["question_id"]
        if msg.payload["decision"] == "direct":
            if qid in self.records:
                return
            self._answer(qid, used_steps=0, start_time=None)
        else:
            self._pool_question(qid)

    def _pool_question(self, qid: str) -> None:
        if qid in self.pool.entries or qid in self.pool.answered or qid in self.records:
            return
        entry = self.pool.add_question(self.parsed[qid], now=self.clock)
        while self.pool.events:
            self.bus.publish("pool-event", self.pool.events.pop(0), self.clock)
        self.bus.publish(
            "pooled", {"question_id": qid, "status": entry.status}, self.clock
        )

    def _on_pooled(self, msg: BusMessage) -> None:
        self._schedule(self.clock, "poll", {})

    def _on_selected(self, msg: BusMessage) -> None:
        qid = msg.payload["question_id"]
        if qid in self._selected_handled or qid in self.records:
            return
        self._selected_handled.add(qid)
        if self.config.mode == "seq_nomem":
            # Isolated exploration phase: no knowledge carries over.
            self.memory.clear()
            self.exploration.reset_map()
        run = ExplorationRun(
            self.scenario.scene,
            self.exploration,
            self.questions[qid].query,
            self.memory,
            self.config.budget,
            stop_threshold=self.config.stop_threshold,
            check_interval=self.config.check_interval,
            vision_range=self.config.vision_range,
            noise_rate=self.config.noise_rate,
            distance_scale=self.config.distance_scale,
            target_value=self.config.target_relevance,
            base_value=self.config.base_relevance,
            check_at_start=self.config.stop_check_at_start,
            vis_index=self.vis_index,
            source_question=qid,
        )
        self.current = (qid, run)
        if run.check_due() and run.should_stop_now():
            self.bus.publish(
                "stop-decided",
                {
                    "question_id": qid,
                    "reason": "confidence",
                    "steps_used": 0,
                    "confidence": run.confidence(),
                },
                self.clock,
            )
            self._finish_exploration(qid)
        else:
            self._schedule(
                self.clock + self.config.budget.step_duration, "step", {"question_id": qid}
            )

    # -- timed events --------------------------------------------------------------

    def _poll(self) -> None:
        if self.current is not None:
            return
        if self.config.gate_enabled:
            self._regate()
        qid = self.pool.select_next(self.clock, fifo=self.config.fifo_selection)
        if qid is None:
            return
        entry = self.pool.entries[qid]
        self.bus.publish(
            "selected",
            {
                "question_id": qid,
                "priority": entry.priority,
                "request_time": entry.request_time,
            },
            self.clock,
        )

    def _regate(self) -> None:
        """Re-run the finishing gate over pooled questions; exploration for
        earlier questions may have made some of them answerable for free."""
        for qid in sorted(self.pool.entries):
            entry = self.pool.entries.get(qid)
            if entry is None or entry.status not in ("ready", "pending"):
                continue
            decision, confidence = finishing_gate(
                self.parsed[qid], self.memory, self.config.finishing_threshold
            )
            if decision == "direct":
                self.bus.publish(
                    "direct-answer-attempt",
                    {"question_id": qid, "confidence": confidence, "decision": decision},
                    self.clock,
                )

    def _do_step(self, data: dict) -> None:
        qid = data["question_id"]
        if self.current is None or self.current[0] != qid or qid in self.records:
            return
        run = self.current[1]
        self._step_counter += 1
        result = run.do_step(
            time=self.clock, rng_seed=derive_seed(self.config.seed, self._step_counter)
        )
        self.bus.publish(
            "step-taken",
            {
                "question_id": qid,
                "step_no": run.state.steps_used,
                "pose": list(result.pose.cell),
                "chosen_frontier": list(result.chosen_frontier)
                if result.chosen_frontier
                else None,
                "confidence": result.confidence,
            },
            self.clock,
        )
        stop = run.budget_exhausted() or (run.check_due() and run.should_stop_now())
        if stop:
            reason = (
                "confidence"
                if result.confidence >= self.config.stop_threshold
                else "budget"
            )
            self.bus.publish(
                "stop-decided",
                {
                    "question_id": qid,
                    "reason": reason,
                    "steps_used": run.state.steps_used,
                    "confidence": result.confidence,
                },
                self.clock,
            )
            self._finish_exploration(qid)
        else:
            self._schedule(
                self.clock + self.config.budget.step_duration, "step", {"question_id": qid}
            )

    # -- answering -------------------------------------------------------------------

    def _finish_exploration(self, qid: str) -> None:
        assert self.current is not None and self.current[0] == qid
        run = self.current[1]
        self.current = None
        entry = self.pool.entries.get(qid)
        start = entry.start_time if entry is not None else None
        self._answer(qid, used_steps=run.state.steps_used, start_time=start)

    def _answer(
        self, qid: str, used_steps: int, start_time: float | None, timed_out: bool = False
    ) -> None:
        if qid in self.records:
            return
        question = self.questions[qid]
        predicted = answer_question(
            question, self.memory, rng_seed=derive_seed(self.config.seed, self._step_counter)
        )
        entry = self.pool.entries.get(qid)
        request_time = (
            entry.request_time
            if entry is not None
            else self.arrival_times.get(qid, question.arrival_time)
        )
        record = AnswerRecord(
            question_id=qid,
            predicted=predicted,
            correct=predicted == question.ground_truth,
            direct=used_steps == 0,
            used_steps=used_steps,
            max_steps=self.config.budget.max_steps_per_question,
            request_time=request_time,
            start_time=start_time,
            answer_time=self.clock,
            urgency_true=question.urgency_true,
            timed_out=timed_out,
        )
        self.records[qid] = record
        self.record_order.append(record)
        if entry is not None:
            self.pool.mark_answered(qid, self.clock)
        self.bus.publish("answered", {"question_id": qid, "record": record.to_dict()}, self.clock)
        self._schedule(self.clock, "poll", {})

    def _force_answer_remaining(self, at_time: float) -> None:
        self.clock = at_time
        leftover = sorted(set(self.questions) - set(self.records))
        for qid in leftover:
            if self.current is not None and self.current[0] == qid:
                run = self.current[1]
                entry = self.pool.entries.get(qid)
                self.current = None
                self._answer(
                    qid,
                    used_steps=run.state.steps_used,
                    start_time=entry.start_time if entry else None,
                    timed_out=True,
                )
            else:
                if qid not in self.parsed:
                    self.parsed[qid] = parse_question(self.questions[qid])
                self._answer(qid, used_steps=0, start_time=None, timed_out=True)

    # -- main loop ----------------------------------------------------------------------

    def run(self) -> EpisodeTrace:
        self.bus.publish(
            "scenario-started",
            {"scenario_id": self.scenario.scenario_id, "config": self.config.to_dict()},
            0.0,
        )
        for q in self.scenario.questions:
            self._schedule(q.arrival_time, "arrival", {"question_id": q.question_id})

        timed_out = False
        while self._heap and len(self.records) < len(self.questions):
            time, _, kind, data = heapq.heappop(self._heap)
            if time > self.scenario.max_time:
                timed_out = True
                break
            self.clock = time
            if kind == "arrival":
                self.bus.publish("question-arrived", data, time)
            elif kind == "poll":
                self._poll()
            elif kind == "step":
                self._do_step(data)

        if len(self.records) < len(self.questions):
            self._force_answer_remaining(
                self.scenario.max_time if timed_out else self.clock
            )

        result = compute_metrics(self.record_order, self.config.budget)
        self.bus.publish(
            "summary",
            {
                "scenario_id": self.scenario.scenario_id,
                "metrics": {
                    "acc": result.acc,
                    "dar": result.dar,
                    "ns": result.ns,
                    "nuwl": result.nuwl,
                },
                "questions": len(self.record_order),
            },
            self.clock,
        )
        return EpisodeTrace(
            scenario_id=self.scenario.scenario_id,
            messages=list(self.bus.log),
            records=list(self.record_order),
        )


def run_scenario(
    scenario: Scenario,
    config: RunConfig | None = None,
    bus: MessageBus | None = None,
    validate: bool = True,
) -> EpisodeTrace:
    """Execute the full pipeline for one scenario and return its trace."""
    config = config or RunConfig()
    config.check()
    if validate:
        problems = validate_scenario(scenario)
        if problems:
            raise ScenarioValidationError(
                f"{scenario.scenario_id}: " + "; ".join(problems[:5])
            )
    return _ScenarioRun(scenario, config, bus).run()


@dataclass
class BenchReport:
    rows: list[dict]
    per_scenario: dict[str, dict[str, dict]]

    def to_json(self) -> str:
        return json.dumps(
            {"rows": self.rows, "per_scenario": self.per_scenario},
            sort_keys=True,
            indent=2,
        )

    def to_csv(self) -> str:
        lines = ["config,acc,dar,ns,nuwl,scenarios,errors"]
        for row in self.rows:
            lines.append(
                f"{row['config']},{row['acc']:.6f},{row['dar']:.6f},"
                f"{row['ns']:.6f},{row['nuwl']:.6f},{row['scenarios']},{row['errors']}"
            )
        return "\n".join(lines) + "\n"

    def row(self, name: str) -> dict:
        for row in self.rows:
            if row["config"] == name:
                return row
        raise KeyError(name)


def run_suite(
    scenarios: list[Scenario],
    configs: dict[str, RunConfig] | list[tuple[str, RunConfig]],
    trace_dir: str | Path | None = None,
) -> BenchReport:
    """Run every (config, scenario) pair and aggregate metrics per config.

    A scenario failure is recorded for that config and the suite continues.
    Optionally writes each trace to `trace_dir/<config>__<scenario>.jsonl`.
    """
    if not scenarios:
        raise ValueError("need at least one scenario")
    pairs = list(configs.items()) if isinstance(configs, dict) else list(configs)
    rows = []
    per_scenario: dict[str, dict[str, dict]] = {}
    for name, config in pairs:
        results: list[MetricsResult] = []
        errors = 0
        per_scenario[name] = {}
        for scenario in scenarios:
            try:
                trace = run_scenario(scenario, config)
            except Exception as exc:
                errors += 1
                per_scenario[name][scenario.scenario_id] = {"error": str(exc)}
                continue
            result = compute_metrics(trace.records, config.budget)
            results.append(result)
            per_scenario[name][scenario.scenario_id] = {
                "acc": result.acc,
                "dar": result.dar,
                "ns": result.ns,
                "nuwl": result.nuwl,
            }
            if trace_dir is not None:
                out = Path(trace_dir)
                out.mkdir(parents=True, exist_ok=True)
                trace.write(out / f"{name}__{scenario.scenario_id}.jsonl")
        if results:
            summary = aggregate(results)
        else:
            summary = {"acc": 0.0, "dar": 0.0, "ns": 0.0, "nuwl": 0.0, "scenarios": 0}
        rows.append(
            {
                "config": name,
                "acc": summary["acc"],
                "dar": summary["dar"],
                "ns": summary["ns"],
                "nuwl": summary["nuwl"],
                "scenarios": summary["scenarios"],
                "errors": errors,
            }
        )
    return BenchReport(rows=rows, per_scenario=per_scenario)
