"""gridquest: deterministic grid-world simulator and benchmark harness for
parallel, urgency-aware question scheduling and answering."""

from .explorer import ExplorationState, StepBudget, explore_for
from .generator import GeneratorParams, generate_scenario, generate_suite
from .memory import GroupMemory, MemoryRecord
from .metrics import (
    MetricsResult,
    accuracy,
    aggregate,
    compute_metrics,
    direct_answer_rate,
    normalized_steps,
    nuwl,
)
from .orchestrator import (
    ABLATIONS,
    MODES,
    BenchReport,
    RunConfig,
    answer_question,
    finishing_gate,
    run_scenario,
    run_suite,
)
from .pool import DependencyGraph, PriorityWeights, QuestionPool
from .questions import (
    ParsedQuestion,
    ParserRules,
    Question,
    Scenario,
    parse_question,
    validate_scenario,
)
from .trace import AnswerRecord, EpisodeTrace, read_trace
from .world import (
    GridScene,
    ObjectInstance,
    Observation,
    Pose,
    Room,
    StructuredQuery,
    ground_truth_answer,
    observe,
    visible_cells,
)

__version__ = "0.1.0"
