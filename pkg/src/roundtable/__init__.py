"""Round-based multi-agent discussion orchestration.

Strategies span four dimensions (governance, participation, interaction
pattern, context management); discussions terminate by consensus, forced
majority vote, or instructor decision. A deterministic scripted backend
supports verification; an HTTP chat-completion backend supports real
model runs. Reporting covers accuracy, token costs, and the normalized
token-accuracy ratio.
"""
from .agents import (
    AgentKind,
    AgentReply,
    AgentSpec,
    ScriptedAgentConfig,
    ScriptedBackend,
    ScriptedInstructorConfig,
    TokenScheme,
    count_tokens,
    extract_prediction,
)
from .baselines import baseline_agent_all, baseline_mv
from .context import AgentView, TurnKind, build_view, render_view
from .decision import (
    InstructorRuling,
    PredictionBoard,
    detect_consensus,
    instructor_rule,
    majority_vote,
)
from .engine import Roster, RoundPlan, execute_round, plan_round, run_discussion
from .errors import (
    BackendError,
    ConstraintViolationError,
    DegenerateError,
    MixedSchemeError,
    NoPredictionsError,
    OutOfRangeError,
    ParamError,
    ProtocolError,
    RoundtableError,
    SchemaError,
    StrategySyntaxError,
)
from .harness import roster_for_task, scripted_setup
from .llm import HttpBackend, LlmBackendConfig
from .metrics import (
    AggregateMetrics,
    RunRecord,
    TarParams,
    aggregate,
    compute_ntar,
    compute_tar,
    emit_report,
    run_record_from_transcript,
)
from .strategy import (
    CANONICAL_STRATEGY_LABELS,
    ContextStrategy,
    Governance,
    InteractionPattern,
    Participation,
    StrategyCombo,
    StrategyConfig,
    enumerate_valid_strategies,
    format_strategy,
    parse_strategy,
    validate_strategy,
)
from .tasks import (
    DEI_SEGMENT_NAMES,
    GeneratorParams,
    PDDP_LABELS,
    SES_LABELS,
    Segment,
    TaskInstance,
    generate_dei,
    generate_ses,
    generate_tasks,
    load_tasks,
    save_tasks,
)
from .transcript import Message, Outcome, Purpose, Termination, Transcript

__version__ = "0.1.0"
