"""The round-based discussion state machine.

Each round is planned (who speaks, in what order), executed (views built,
backends called, messages recorded), summarized (under the rolling-summary
context strategies), and then checked for termination: consensus or a
forced majority vote under decentralized governance, an instructor ruling
under centralized governance. Every backend call becomes exactly one
transcript message, so token accounting is conservative by construction.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable

from .agents import AgentKind, AgentReply, AgentSpec
from .context import (
    AgentView,
    DiscussionState,
    TurnKind,
    build_instructor_view,
    build_view,
    instruction_discussion,
    instruction_intent,
    instruction_plan,
    REPROMPT_SUFFIX,
    update_instructor_summary,
    update_self_summary,
)
from .decision import PredictionBoard, detect_consensus, instructor_rule, majority_vote
from .errors import BackendError, MixedSchemeError, NoPredictionsError, ProtocolError
from .strategy import (
    ContextStrategy,
    Governance,
    InteractionPattern,
    Participation,
    StrategyConfig,
)
from .tasks import TaskInstance
from .transcript import Message, Outcome, Purpose, Termination, Transcript

ViewObserver = Callable[[str, int, TurnKind, AgentView], None]


@dataclass(frozen=True)
class RoundPlan:
    """Who speaks this round; ``concurrent`` means pre-round snapshot views."""

    speakers: tuple[str, ...]
    concurrent: bool


@dataclass(frozen=True)
class Roster:
    discussion: tuple[AgentSpec, ...]
    instructor: AgentSpec | None = None

    def __post_init__(self):
        ids = [a.id for a in self.discussion]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate discussion agent ids")
        for spec in self.discussion:
            if spec.kind is not AgentKind.DISCUSSION:
                raise ValueError(f"'{spec.id}' is not a discussion agent")
        if self.instructor is not None:
            if self.instructor.kind is not AgentKind.INSTRUCTOR:
                raise ValueError("instructor spec must have the instructor kind")
            if self.instructor.id in ids:
                raise ValueError("instructor id collides with a discussion agent")

    @property
    def discussion_ids(self) -> tuple[str, ...]:
        return tuple(a.id for a in self.discussion)


class _ObservedBackend:
    """Pass-through wrapper that reports every view to a test observer."""

    def __init__(self, inner, observer: ViewObserver):
        self._inner = inner
        self._observer = observer
        self.token_scheme = inner.token_scheme

    def respond(self, spec, view, turn_kind, *, round_index, want_addressees=False):
        self._observer(spec.id, round_index, turn_kind, view)
        return self._inner.respond(
            spec, view, turn_kind, round_index=round_index, want_addressees=want_addressees
        )


def _parse_speaker_plan(content: str) -> list[str] | None:
    for line in content.splitlines():
        stripped = line.strip()
        if stripped.upper().startswith("SPEAKERS:"):
            rest = stripped[len("SPEAKERS:"):].strip()
            if not rest:
                return []
            return [part.strip() for part in rest.split(",")]
    return None


def plan_round(
    state: DiscussionState,
    roster: Roster,
    backends: dict[str, object],
    rng: random.Random,
) -> RoundPlan:
    """Decide this round's speakers and order.

    Full participation uses the roster (a fresh seeded permutation per
    round under random-sequential interaction); selective participation
    queries every agent's speak intent (recording one intent message per
    query); instructor-decided participation asks the instructor for an
    ordered speaker list and validates it against the roster.
    """
    strategy = state.strategy
    round_index = state.round_index
    ids = state.discussion_ids
    participation = strategy.participation

    def record(spec: AgentSpec, reply: AgentReply, purpose: Purpose) -> None:
        state.add_pending(
            Message(
                round_index=round_index,
                speaker_id=spec.id,
                content=reply.content,
                purpose=purpose,
                input_tokens=reply.input_tokens,
                output_tokens=reply.output_tokens,
            )
        )

    if participation is Participation.FULL:
        speakers = list(ids)
    elif participation is Participation.SELECTIVE:
        speakers = []
        for spec in roster.discussion:
            backend = backends[spec.backend_binding]
            instruction = instruction_intent(round_index)
            view = build_view(spec.id, state, instruction)
            reply = backend.respond(spec, view, TurnKind.INTENT, round_index=round_index)
            record(spec, reply, Purpose.SPEAK_INTENT)
            if reply.wants_to_speak is None:
                view = build_view(spec.id, state, instruction + REPROMPT_SUFFIX)
                reply = backend.respond(spec, view, TurnKind.INTENT, round_index=round_index)
                record(spec, reply, Purpose.SPEAK_INTENT)
            if reply.wants_to_speak is None:
                raise ProtocolError(f"agent '{spec.id}' gave no SPEAK/PASS intent")
            if reply.wants_to_speak:
                speakers.append(spec.id)
    else:  # instructor decided
        spec = roster.instructor
        backend = backends[spec.backend_binding]
        instruction = instruction_plan(round_index)
        view = build_instructor_view(state, instruction)
        reply = backend.respond(spec, view, TurnKind.CONTROL, round_index=round_index)
        record(spec, reply, Purpose.INSTRUCTOR_CONTROL)
        plan_ids = _parse_speaker_plan(reply.content)
        if plan_ids is None:
            view = build_instructor_view(state, instruction + REPROMPT_SUFFIX)
            reply = backend.respond(spec, view, TurnKind.CONTROL, round_index=round_index)
            record(spec, reply, Purpose.INSTRUCTOR_CONTROL)
            plan_ids = _parse_speaker_plan(reply.content)
        if plan_ids is None:
            raise ProtocolError("instructor gave no SPEAKERS: line")
        if not plan_ids:
            raise ProtocolError("instructor chose an empty speaker list")
        unknown = [a for a in plan_ids if a not in ids]
        if unknown:
            raise ProtocolError(f"instructor chose unknown agents {unknown}")
        if len(set(plan_ids)) != len(plan_ids):
            raise ProtocolError("instructor chose duplicate speakers")
        speakers = plan_ids

    interaction = strategy.interaction
    concurrent = interaction is InteractionPattern.SIMULTANEOUS
    if interaction is InteractionPattern.RANDOM_SEQUENTIAL:
        speakers = rng.sample(list(ids), len(ids))
    if concurrent:
        # Merge order is roster order regardless of how speakers were chosen.
        order = {agent_id: i for i, agent_id in enumerate(ids)}
        speakers = sorted(speakers, key=order.__getitem__)
    return RoundPlan(speakers=tuple(speakers), concurrent=concurrent)


def execute_round(
    state: DiscussionState,
    plan: RoundPlan,
    roster: Roster,
    backends: dict[str, object],
) -> list[Message]:
    """Collect one discussion message per planned speaker.

    Concurrent rounds build every view from the pre-round snapshot before
    any reply lands; sequential rounds let later speakers see earlier
    same-round messages. Point-to-point turns record validated addressee
    sets. A speaker whose reply lacks a parseable prediction is reprompted
    once, then the run fails with a protocol error.
    """
    strategy = state.strategy
    round_index = state.round_index
    want_addressees = strategy.interaction is InteractionPattern.SELECTIVE_POINT_TO_POINT
    spec_by_id = {a.id: a for a in roster.discussion}
    produced: list[Message] = []

    snapshot_views: dict[str, AgentView] = {}
    if plan.concurrent:
        for agent_id in plan.speakers:
            snapshot_views[agent_id] = build_view(
                agent_id, state, instruction_discussion(round_index)
            )

    for agent_id in plan.speakers:
        spec = spec_by_id[agent_id]
        backend = backends[spec.backend_binding]
        if plan.concurrent:
            view = snapshot_views[agent_id]
        else:
            view = build_view(
                agent_id, state, instruction_discussion(round_index, want_addressees)
            )
        reply = backend.respond(
            spec, view, TurnKind.DISCUSSION, round_index=round_index,
            want_addressees=want_addressees,
        )
        attempts = [reply]
        if reply.prediction is None:
            retry_view = AgentView(
                role_preamble=view.role_preamble,
                task_statement=view.task_statement,
                visible_history=view.visible_history,
                turn_instruction=view.turn_instruction + REPROMPT_SUFFIX,
            )
            reply = backend.respond(
                spec, retry_view, TurnKind.DISCUSSION, round_index=round_index,
                want_addressees=want_addressees,
            )
            attempts.append(reply)
        for attempt in attempts:
            message = Message(
                round_index=round_index,
                speaker_id=agent_id,
                content=attempt.content,
                purpose=Purpose.DISCUSSION,
                addressees=_validated_addressees(attempt, agent_id, state) if want_addressees else None,
                prediction=attempt.prediction,
                input_tokens=attempt.input_tokens,
                output_tokens=attempt.output_tokens,
            )
            state.add_pending(message)
            produced.append(message)
        if reply.prediction is None:
            raise ProtocolError(f"agent '{agent_id}' gave no parseable prediction")
    return produced


def _validated_addressees(
    reply: AgentReply, speaker_id: str, state: DiscussionState
) -> tuple[str, ...] | None:
    if reply.addressees is None:
        return None
    unknown = [a for a in reply.addressees if a not in state.discussion_ids]
    if unknown:
        raise ProtocolError(f"agent '{speaker_id}' addressed unknown agents {unknown}")
    if speaker_id in reply.addressees:
        raise ProtocolError(f"agent '{speaker_id}' addressed itself")
    if not reply.addressees:
        raise ProtocolError(f"agent '{speaker_id}' gave an empty addressee set")
    return tuple(reply.addressees)


def run_discussion(
    task: TaskInstance,
    strategy: StrategyConfig,
    roster: Roster,
    backends: dict[str, object],
    *,
    view_observer: ViewObserver | None = None,
) -> tuple[Transcript, Outcome]:
    """Run one discussion to termination and return its full record.

    Deterministic given (task, strategy incl. seed, scripted backends).
    On a backend or protocol failure the partial transcript is attached to
    the raised error.
    """
    if strategy.governance is Governance.CENTRALIZED:
        if roster.instructor is None:
            raise ValueError("centralized governance needs an instructor agent")
    elif roster.instructor is not None:
        raise ValueError("decentralized governance admits no instructor agent")
    segment_names = [s.name for s in task.segments]
    refs = [a.segment_ref for a in roster.discussion]
    if sorted(refs) != sorted(segment_names):
        raise ValueError(
            f"discussion agents must map one-to-one onto task segments "
            f"(agents: {refs}, segments: {segment_names})"
        )
    specs = list(roster.discussion) + ([roster.instructor] if roster.instructor else [])
    for spec in specs:
        if spec.backend_binding not in backends:
            raise ValueError(f"agent '{spec.id}' has no bound backend '{spec.backend_binding}'")
    schemes = {backends[s.backend_binding].token_scheme for s in specs}
    if len(schemes) != 1:
        raise MixedSchemeError(f"run mixes token schemes {sorted(s.value for s in schemes)}")
    token_scheme = next(iter(schemes))

    if view_observer is not None:
        backends = {
            name: _ObservedBackend(backend, view_observer) for name, backend in backends.items()
        }

    state = DiscussionState(
        task=task,
        strategy=strategy,
        discussion_ids=roster.discussion_ids,
        instructor_id=roster.instructor.id if roster.instructor else None,
        segment_by_agent={a.id: task.segment_named(a.segment_ref) for a in roster.discussion},
    )
    rng = random.Random(strategy.seed)
    outcome: Outcome | None = None
    empty_streak = 0

    try:
        for round_index in range(1, strategy.max_rounds + 1):
            state.begin_round(round_index)
            plan = plan_round(state, roster, backends, rng)
            executed = execute_round(state, plan, roster, backends)
            state.commit_round()

            if strategy.context is ContextStrategy.SELF_SUMMARIZED:
                for spec in roster.discussion:
                    message = update_self_summary(state, spec, backends[spec.backend_binding])
                    state.append_to_last_round(message)
            elif strategy.context is ContextStrategy.INSTRUCTOR_SUMMARY:
                spec = roster.instructor
                message = update_instructor_summary(state, spec, backends[spec.backend_binding])
                state.append_to_last_round(message)

            if strategy.governance is Governance.DECENTRALIZED:
                empty_streak = empty_streak + 1 if not executed else 0
                consensus = detect_consensus(PredictionBoard(state.board), state.discussion_ids)
                if consensus is not None:
                    outcome = Outcome(consensus, round_index, Termination.CONSENSUS)
                    break
                if empty_streak >= 2 or round_index == strategy.max_rounds:
                    try:
                        label = majority_vote(PredictionBoard(state.board), state.discussion_ids)
                    except NoPredictionsError as exc:
                        raise ProtocolError(
                            "forced majority vote with no predictions on the board"
                        ) from exc
                    outcome = Outcome(label, round_index, Termination.FORCED_MAJORITY_VOTE)
                    break
            else:
                ruling, control_messages = instructor_rule(
                    state,
                    roster.instructor,
                    backends[roster.instructor.backend_binding],
                    at_round_cap=round_index == strategy.max_rounds,
                )
                for message in control_messages:
                    state.append_to_last_round(message)
                if ruling.terminates:
                    outcome = Outcome(
                        ruling.final_label, round_index, Termination.INSTRUCTOR_DECISION
                    )
                    break
    except (BackendError, ProtocolError) as exc:
        exc.partial_transcript = _snapshot_transcript(task, strategy, token_scheme, state)
        raise

    assert outcome is not None  # every branch above terminates by the cap
    transcript = Transcript(
        task_id=task.id,
        strategy_label=strategy.label,
        seed=strategy.seed,
        token_scheme=token_scheme.value,
        gold_label=task.gold_label,
        scenario=task.scenario,
        rounds=state.rounds,
        outcome=outcome,
    )
    return transcript, outcome


def _snapshot_transcript(task, strategy, token_scheme, state) -> Transcript:
    rounds = list(state.rounds)
    if state.pending:
        rounds = rounds + [list(state.pending)]
    return Transcript(
        task_id=task.id,
        strategy_label=strategy.label,
        seed=strategy.seed,
        token_scheme=token_scheme.value,
        gold_label=task.gold_label,
        scenario=task.scenario,
        rounds=rounds,
        outcome=None,
    )
