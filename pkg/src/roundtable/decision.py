"""Consensus detection, forced majority voting, and instructor rulings."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

from .context import (
    DiscussionState,
    TurnKind,
    build_instructor_view,
    instruction_forced_decision,
    instruction_ruling,
    REPROMPT_SUFFIX,
)
from .errors import NoPredictionsError, ProtocolError
from .tasks import canonicalize_label
from .transcript import Message, Purpose


@dataclass(frozen=True)
class PredictionBoard:
    """Each discussion agent's most recent prediction and the round it was made."""

    entries: dict[str, tuple[str, int]]


@dataclass(frozen=True)
class InstructorRuling:
    """``final_label`` is None to continue, otherwise the chosen label."""

    final_label: str | None = None

    @property
    def terminates(self) -> bool:
        return self.final_label is not None


def detect_consensus(board: PredictionBoard, roster: Sequence[str]) -> str | None:
    """The unanimous label, or None if any agent is missing or disagrees."""
    labels = set()
    for agent_id in roster:
        entry = board.entries.get(agent_id)
        if entry is None:
            return None
        labels.add(entry[0])
    if len(labels) == 1:
        return next(iter(labels))
    return None


TieRule = Callable[[Sequence[str], PredictionBoard, Sequence[str]], str]


def default_tie_rule(tied: Sequence[str], board: PredictionBoard, roster: Sequence[str]) -> str:
    """Pick the tied label whose earliest predicting agent sits lowest in the roster."""
    def earliest_index(label: str) -> int:
        return min(i for i, a in enumerate(roster) if board.entries.get(a, (None,))[0] == label)

    return min(tied, key=earliest_index)


def majority_vote(
    board: PredictionBoard,
    roster: Sequence[str],
    tie_rule: TieRule = default_tie_rule,
) -> str:
    """Modal label over roster agents' predictions; absent agents abstain."""
    votes = [board.entries[a][0] for a in roster if a in board.entries]
    if not votes:
        raise NoPredictionsError("no agent holds a prediction")
    counts = Counter(votes)
    top = max(counts.values())
    tied = sorted(label for label, count in counts.items() if count == top)
    if len(tied) == 1:
        return tied[0]
    return tie_rule(tied, board, roster)


def parse_ruling(content: str, label_set: Sequence[str]) -> str | None:
    """Parse the instructor control grammar: ``CONTINUE`` or ``FINAL:<label>``.

    Returns ``"CONTINUE"``, a canonical label, or None when no line parses.
    The last well-formed line wins.
    """
    result = None
    for line in content.splitlines():
        stripped = line.strip()
        if stripped == "CONTINUE":
            result = "CONTINUE"
        elif stripped.startswith("FINAL:"):
            label = canonicalize_label(stripped[len("FINAL:"):], tuple(label_set))
            if label is not None:
                result = label
    return result


def instructor_rule(
    state: DiscussionState,
    spec,
    backend,
    *,
    at_round_cap: bool,
) -> tuple[InstructorRuling, list[Message]]:
    """Ask the instructor to continue or finalize; force a decision at the cap.

    Returns the ruling plus the control messages produced (one per call),
    which the caller appends to the transcript.
    """
    label_set = state.task.label_set
    messages: list[Message] = []

    def ask(instruction: str, turn_kind: TurnKind) -> str:
        view = build_instructor_view(state, instruction)
        reply = backend.respond(spec, view, turn_kind, round_index=state.round_index)
        messages.append(
            Message(
                round_index=state.round_index,
                speaker_id=spec.id,
                content=reply.content,
                purpose=Purpose.INSTRUCTOR_CONTROL,
                input_tokens=reply.input_tokens,
                output_tokens=reply.output_tokens,
            )
        )
        return reply.content

    instruction = instruction_ruling(state.round_index)
    parsed = parse_ruling(ask(instruction, TurnKind.CONTROL), label_set)
    if parsed is None:
        parsed = parse_ruling(ask(instruction + REPROMPT_SUFFIX, TurnKind.CONTROL), label_set)
        if parsed is None:
            raise ProtocolError("instructor ruling matched neither CONTINUE nor FINAL:<label>")
    if parsed != "CONTINUE":
        return InstructorRuling(parsed), messages
    if not at_round_cap:
        return InstructorRuling(None), messages

    # Round cap reached on a CONTINUE: issue the forced-decision query.
    forced_instruction = instruction_forced_decision(state.round_index)
    forced = parse_ruling(ask(forced_instruction, TurnKind.FINAL), label_set)
    if forced in (None, "CONTINUE"):
        forced = parse_ruling(
            ask(forced_instruction + REPROMPT_SUFFIX, TurnKind.FINAL), label_set
        )
        if forced in (None, "CONTINUE"):
            raise ProtocolError("instructor gave no FINAL:<label> at the round cap")
    return InstructorRuling(forced), messages
