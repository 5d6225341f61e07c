"""Per-turn views of the discussion under the three context strategies.

A view is the complete input for one backend call: the agent's standing
role text (with its verbatim segment), the task statement, the slice of
history the strategy allows, and the instruction for the turn. History is
rendered one message per line as ``[round r] <speaker> (to <addr>): <content>``
so that token counts are reproducible.

Rolling self-summaries trail the discussion by one round: the stored text
used in a round-``r`` view condenses rounds ``1..r-2`` and is combined
with the full (visible) log of round ``r-1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .strategy import ContextStrategy, InteractionPattern, StrategyConfig
from .tasks import Segment, TaskInstance
from .transcript import Message, Purpose


class TurnKind(Enum):
    DISCUSSION = "discussion"
    INTENT = "intent"
    SUMMARY = "summary"
    CONTROL = "control"
    FINAL = "final"


@dataclass(frozen=True)
class AgentView:
    role_preamble: str
    task_statement: str
    visible_history: str
    turn_instruction: str


def render_view(view: AgentView) -> str:
    """Canonical flat rendering; scripted token counts are taken over this."""
    parts = [
        view.role_preamble,
        view.task_statement,
        view.visible_history,
        view.turn_instruction,
    ]
    return "\n\n".join(p for p in parts if p)


DISCIPLINE = (
    "You are a context-bound discussion agent. Use ONLY the context segment "
    "assigned to you and the discussion content shown to you; if they are "
    "insufficient, say so instead of inventing details."
)

INSTRUCTOR_PREAMBLE = (
    "You are the discussion instructor. You hold no evidence segment. You "
    "choose speakers, maintain the shared summary, and decide when the "
    "discussion is finished."
)


def discussion_preamble(segment: Segment) -> str:
    return f"{DISCIPLINE}\nYour segment '{segment.name}':\n{segment.text}"


def concat_preamble(segments: tuple[Segment, ...]) -> str:
    blocks = "\n".join(f"Segment '{s.name}':\n{s.text}" for s in segments)
    return f"{DISCIPLINE}\nYour segments:\n{blocks}"


def task_statement(task: TaskInstance) -> str:
    return f"Task: {task.question}\nAllowed labels: {' | '.join(task.label_set)}"


def render_message(message: Message) -> str:
    addr = "all" if message.addressees is None else ", ".join(message.addressees)
    return f"[round {message.round_index}] {message.speaker_id} (to {addr}): {message.content}"


def render_messages(messages: list[Message]) -> str:
    return "\n".join(render_message(m) for m in messages)


# Turn instructions. The fixed marker phrases double as the wire contract
# for reply parsing, so keep them stable.
def instruction_discussion(round_index: int, point_to_point: bool = False) -> str:
    text = (
        f"Round {round_index}. Contribute your assessment for this round. "
        "End your reply with a line 'PREDICTION: <label>' using one allowed label."
    )
    if point_to_point:
        text += (
            " Also include a line 'TO: <comma-separated agent ids>' naming the "
            "peers you address, or 'TO: all'."
        )
    return text


def instruction_intent(round_index: int) -> str:
    return (
        f"Round {round_index}. Decide whether you need to speak this round. "
        "Reply with exactly one line: SPEAK or PASS."
    )


def instruction_plan(round_index: int) -> str:
    return (
        f"Round {round_index}. Choose which discussion agents speak this round "
        "and in what order. Reply with one line 'SPEAKERS: <comma-separated agent ids>'."
    )


def instruction_ruling(round_index: int) -> str:
    return (
        f"Round {round_index} has ended. If the discussion supports a final "
        "decision, reply 'FINAL:<label>'; otherwise reply 'CONTINUE'."
    )


def instruction_forced_decision(round_index: int) -> str:
    return (
        f"The round limit was reached at round {round_index}. Reply "
        "'FINAL:<label>' with your best decision now."
    )


def instruction_summary(round_index: int) -> str:
    return (
        f"Round {round_index} has ended. Summarize the discussion so far for "
        "use in later rounds. Reply with the summary text only."
    )


def instruction_single_shot() -> str:
    return (
        "Decide the label now from your context alone. End your reply with a "
        "line 'PREDICTION: <label>'."
    )


REPROMPT_SUFFIX = (
    " Your previous reply did not follow the required format; answer again "
    "following it exactly."
)


@dataclass
class SummaryState:
    """Stored summaries. ``self_view`` trails ``self_latest`` by one round."""

    self_view: dict[str, str] = field(default_factory=dict)
    self_latest: dict[str, str] = field(default_factory=dict)
    instructor: str = ""


@dataclass
class DiscussionState:
    """Mutable state of one running discussion."""

    task: TaskInstance
    strategy: StrategyConfig
    discussion_ids: tuple[str, ...]
    instructor_id: str | None
    segment_by_agent: dict[str, Segment]
    rounds: list[list[Message]] = field(default_factory=list)
    pending: list[Message] = field(default_factory=list)
    round_index: int = 0
    summaries: SummaryState = field(default_factory=SummaryState)
    board: dict[str, tuple[str, int]] = field(default_factory=dict)

    def begin_round(self, round_index: int) -> None:
        self.round_index = round_index
        self.pending = []

    def add_pending(self, message: Message) -> None:
        self.pending.append(message)
        if message.purpose is Purpose.DISCUSSION and message.prediction is not None:
            self.board[message.speaker_id] = (message.prediction, message.round_index)

    def commit_round(self) -> None:
        self.rounds.append(self.pending)
        self.pending = []

    def append_to_last_round(self, message: Message) -> None:
        self.rounds[-1].append(message)

    def discussion_messages_in(self, messages: list[Message]) -> list[Message]:
        return [m for m in messages if m.purpose is Purpose.DISCUSSION]

    def _visible(self, messages: list[Message], viewer_id: str) -> list[Message]:
        is_instructor = viewer_id == self.instructor_id
        return [m for m in messages if m.visible_to(viewer_id, viewer_is_instructor=is_instructor)]


def build_view(agent_id: str, state: DiscussionState, turn_instruction: str) -> AgentView:
    """Compose a discussion agent's view under the run's context strategy.

    The previous-round log (C1), rolling summary plus previous-round log
    (C2), or shared instructor summary (C3) forms the base; earlier
    same-round messages are appended whenever the interaction pattern is
    sequential. All message slices respect point-to-point addressing.
    """
    strategy = state.strategy
    parts: list[str] = []
    context = strategy.context
    if context is ContextStrategy.SELF_SUMMARIZED:
        stored = state.summaries.self_view.get(agent_id, "")
        if stored:
            parts.append(stored)
    elif context is ContextStrategy.INSTRUCTOR_SUMMARY:
        if state.summaries.instructor:
            parts.append(state.summaries.instructor)
    if context in (ContextStrategy.FULL_LAST_ROUND_LOG, ContextStrategy.SELF_SUMMARIZED):
        if state.rounds:
            last = state._visible(state.discussion_messages_in(state.rounds[-1]), agent_id)
            if last:
                parts.append(render_messages(last))
    if strategy.interaction is not InteractionPattern.SIMULTANEOUS:
        intra = state._visible(state.discussion_messages_in(state.pending), agent_id)
        if intra:
            parts.append(render_messages(intra))
    segment = state.segment_by_agent[agent_id]
    return AgentView(
        role_preamble=discussion_preamble(segment),
        task_statement=task_statement(state.task),
        visible_history="\n".join(parts),
        turn_instruction=turn_instruction,
    )


def build_instructor_view(state: DiscussionState, turn_instruction: str) -> AgentView:
    """The instructor's control view: the full untruncated dialogue so far."""
    messages: list[Message] = []
    for round_messages in state.rounds:
        messages.extend(state.discussion_messages_in(round_messages))
    messages.extend(state.discussion_messages_in(state.pending))
    return AgentView(
        role_preamble=INSTRUCTOR_PREAMBLE,
        task_statement=task_statement(state.task),
        visible_history=render_messages(messages),
        turn_instruction=turn_instruction,
    )


def _summary_input(previous: str, last_round: str) -> str:
    if previous and last_round:
        return previous + "\n" + last_round
    return previous or last_round


def update_self_summary(state: DiscussionState, spec, backend) -> Message:
    """One rolling-summary call for one agent over the just-completed round.

    The call input is (previous summary + visible last-round log); the
    output becomes the agent's latest summary while the previous one is
    promoted into view use, preserving the one-round lag.
    """
    agent_id = spec.id
    previous = state.summaries.self_latest.get(agent_id, "")
    last = state._visible(state.discussion_messages_in(state.rounds[-1]), agent_id)
    view = AgentView(
        role_preamble=discussion_preamble(state.segment_by_agent[agent_id]),
        task_statement=task_statement(state.task),
        visible_history=_summary_input(previous, render_messages(last)),
        turn_instruction=instruction_summary(state.round_index),
    )
    reply = backend.respond(spec, view, TurnKind.SUMMARY, round_index=state.round_index)
    state.summaries.self_view[agent_id] = previous
    state.summaries.self_latest[agent_id] = reply.content
    return Message(
        round_index=state.round_index,
        speaker_id=agent_id,
        content=reply.content,
        purpose=Purpose.SELF_SUMMARY,
        input_tokens=reply.input_tokens,
        output_tokens=reply.output_tokens,
    )


def update_instructor_summary(state: DiscussionState, spec, backend) -> Message:
    """One shared-summary call over the just-completed round (instructor only)."""
    previous = state.summaries.instructor
    last = state.discussion_messages_in(state.rounds[-1])
    view = AgentView(
        role_preamble=INSTRUCTOR_PREAMBLE,
        task_statement=task_statement(state.task),
        visible_history=_summary_input(previous, render_messages(last)),
        turn_instruction=instruction_summary(state.round_index),
    )
    reply = backend.respond(spec, view, TurnKind.SUMMARY, round_index=state.round_index)
    state.summaries.instructor = reply.content
    return Message(
        round_index=state.round_index,
        speaker_id=spec.id,
        content=reply.content,
        purpose=Purpose.INSTRUCTOR_SUMMARY,
        input_tokens=reply.input_tokens,
        output_tokens=reply.output_tokens,
    )
