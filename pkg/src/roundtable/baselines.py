"""Single-round baselines: one agent with everything, and independent voters.

``Agent_all`` answers once from the concatenation of all segments; the
majority-vote baseline asks one agent per segment independently and
combines their answers. Both produce a one-round transcript in the same
format as discussions so the reporting pipeline treats them uniformly.
"""
from __future__ import annotations

from .agents import AgentSpec, TokenScheme
from .context import (
    AgentView,
    TurnKind,
    concat_preamble,
    discussion_preamble,
    instruction_single_shot,
    REPROMPT_SUFFIX,
    task_statement,
)
from .decision import PredictionBoard, majority_vote
from .errors import ProtocolError
from .metrics import BASELINE_AGENT_ALL, BASELINE_MV, RunRecord, run_record_from_transcript
from .tasks import TaskInstance
from .transcript import Message, Outcome, Purpose, Termination, Transcript


def _single_shot(spec: AgentSpec, view: AgentView, backend) -> list[Message]:
    reply = backend.respond(spec, view, TurnKind.FINAL, round_index=1)
    attempts = [reply]
    if reply.prediction is None:
        retry_view = AgentView(
            role_preamble=view.role_preamble,
            task_statement=view.task_statement,
            visible_history=view.visible_history,
            turn_instruction=view.turn_instruction + REPROMPT_SUFFIX,
        )
        reply = backend.respond(spec, retry_view, TurnKind.FINAL, round_index=1)
        attempts.append(reply)
    messages = [
        Message(
            round_index=1,
            speaker_id=spec.id,
            content=attempt.content,
            purpose=Purpose.DISCUSSION,
            prediction=attempt.prediction,
            input_tokens=attempt.input_tokens,
            output_tokens=attempt.output_tokens,
        )
        for attempt in attempts
    ]
    if reply.prediction is None:
        raise ProtocolError(f"baseline agent '{spec.id}' gave no parseable prediction")
    return messages


def baseline_agent_all(
    task: TaskInstance, backend, *, seed: int = 0
) -> tuple[RunRecord, Transcript]:
    """One agent, one call, all segments concatenated in schema order."""
    spec = AgentSpec(id="agent_all", segment_ref="<all>", backend_binding="baseline")
    view = AgentView(
        role_preamble=concat_preamble(task.segments),
        task_statement=task_statement(task),
        visible_history="",
        turn_instruction=instruction_single_shot(),
    )
    messages = _single_shot(spec, view, backend)
    label = messages[-1].prediction
    transcript = Transcript(
        task_id=task.id,
        strategy_label=BASELINE_AGENT_ALL,
        seed=seed,
        token_scheme=_scheme_value(backend),
        gold_label=task.gold_label,
        scenario=task.scenario,
        rounds=[messages],
        outcome=Outcome(label, 1, Termination.CONSENSUS),
    )
    return run_record_from_transcript(transcript), transcript


def baseline_mv(
    task: TaskInstance, backend, *, seed: int = 0
) -> tuple[RunRecord, Transcript]:
    """One independent call per segment agent, combined by majority vote.

    Reported as a single round; the per-agent call count is visible as the
    message count in the transcript.
    """
    messages: list[Message] = []
    board: dict[str, tuple[str, int]] = {}
    roster_ids = []
    for i, segment in enumerate(task.segments):
        spec = AgentSpec(id=f"a{i + 1}", segment_ref=segment.name, backend_binding="baseline")
        roster_ids.append(spec.id)
        view = AgentView(
            role_preamble=discussion_preamble(segment),
            task_statement=task_statement(task),
            visible_history="",
            turn_instruction=instruction_single_shot(),
        )
        agent_messages = _single_shot(spec, view, backend)
        messages.extend(agent_messages)
        board[spec.id] = (agent_messages[-1].prediction, 1)
    label = majority_vote(PredictionBoard(board), roster_ids)
    transcript = Transcript(
        task_id=task.id,
        strategy_label=BASELINE_MV,
        seed=seed,
        token_scheme=_scheme_value(backend),
        gold_label=task.gold_label,
        scenario=task.scenario,
        rounds=[messages],
        outcome=Outcome(label, 1, Termination.FORCED_MAJORITY_VOTE),
    )
    return run_record_from_transcript(transcript), transcript


def _scheme_value(backend) -> str:
    scheme = backend.token_scheme
    return scheme.value if isinstance(scheme, TokenScheme) else str(scheme)
