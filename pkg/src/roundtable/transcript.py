"""Discussion records: messages, rounds, outcomes, and their JSON form.

The transcript JSON layout is a stable external contract consumed by the
metrics pipeline:

    {
      "task_id": ..., "strategy": ..., "seed": ...,
      "scenario": ..., "gold_label": ..., "token_scheme": ...,
      "rounds": [[{"round", "speaker", "addressees", "content",
                   "prediction", "input_tokens", "output_tokens",
                   "purpose"}]],
      "outcome": {"label": ..., "rounds": ..., "termination": ...}
    }

``addressees`` is the string ``"all"`` for broadcast messages or a list of
agent ids for point-to-point ones.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

from .errors import SchemaError


class Purpose(Enum):
    DISCUSSION = "discussion"
    SELF_SUMMARY = "self_summary"
    INSTRUCTOR_SUMMARY = "instructor_summary"
    INSTRUCTOR_CONTROL = "instructor_control"
    # Not part of the core four: records the per-agent volunteer query under
    # selective participation so its token cost stays in the transcript.
    SPEAK_INTENT = "speak_intent"


class Termination(Enum):
    CONSENSUS = "consensus"
    FORCED_MAJORITY_VOTE = "forced_majority_vote"
    INSTRUCTOR_DECISION = "instructor_decision"


@dataclass(frozen=True)
class Message:
    """One backend call's worth of recorded output.

    ``addressees`` is ``None`` for broadcast; a non-empty tuple (excluding
    the speaker) only occurs on point-to-point discussion turns.
    Token counts are those of the single backend call that produced the
    message.
    """

    round_index: int
    speaker_id: str
    content: str
    purpose: Purpose
    addressees: tuple[str, ...] | None = None
    prediction: str | None = None
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self):
        if self.round_index < 1:
            raise ValueError("round_index is 1-based")
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")
        if self.addressees is not None:
            if not self.addressees:
                raise ValueError("addressee subset must be non-empty")
            if self.speaker_id in self.addressees:
                raise ValueError("speaker cannot address itself")

    def visible_to(self, viewer_id: str, *, viewer_is_instructor: bool = False) -> bool:
        """Whether this message appears in ``viewer_id``'s dialogue history."""
        if self.purpose is not Purpose.DISCUSSION:
            return False
        if viewer_is_instructor or viewer_id == self.speaker_id:
            return True
        return self.addressees is None or viewer_id in self.addressees


@dataclass(frozen=True)
class Outcome:
    final_label: str
    rounds_used: int
    termination: Termination

    def __post_init__(self):
        if self.rounds_used < 1:
            raise ValueError("rounds_used must be >= 1")


@dataclass
class Transcript:
    """Append-only record of one discussion (or baseline) run."""

    task_id: str
    strategy_label: str
    seed: int
    token_scheme: str
    gold_label: str
    scenario: str
    rounds: list[list[Message]] = field(default_factory=list)
    outcome: Outcome | None = None

    def all_messages(self) -> Iterator[Message]:
        for round_messages in self.rounds:
            yield from round_messages

    def total_input_tokens(self) -> int:
        return sum(m.input_tokens for m in self.all_messages())

    def total_output_tokens(self) -> int:
        return sum(m.output_tokens for m in self.all_messages())

    def to_json_dict(self) -> dict:
        doc = {
            "task_id": self.task_id,
            "strategy": self.strategy_label,
            "seed": self.seed,
            "scenario": self.scenario,
            "gold_label": self.gold_label,
            "token_scheme": self.token_scheme,
            "rounds": [
                [_message_to_json(m) for m in round_messages]
                for round_messages in self.rounds
            ],
            "outcome": None,
        }
        if self.outcome is not None:
            doc["outcome"] = {
                "label": self.outcome.final_label,
                "rounds": self.outcome.rounds_used,
                "termination": self.outcome.termination.value,
            }
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Transcript":
        return _transcript_from_json(doc)

    @classmethod
    def loads(cls, text: str) -> "Transcript":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}", "") from exc
        return _transcript_from_json(doc)


def _message_to_json(message: Message) -> dict:
    return {
        "round": message.round_index,
        "speaker": message.speaker_id,
        "addressees": "all" if message.addressees is None else list(message.addressees),
        "content": message.content,
        "prediction": message.prediction,
        "input_tokens": message.input_tokens,
        "output_tokens": message.output_tokens,
        "purpose": message.purpose.value,
    }


def _require(doc: dict, key: str, types, pointer: str):
    if not isinstance(doc, dict) or key not in doc:
        raise SchemaError(f"missing key '{key}'", pointer)
    value = doc[key]
    if not isinstance(value, types):
        raise SchemaError(f"key '{key}' has wrong type", f"{pointer}/{key}")
    return value


def _transcript_from_json(doc: dict) -> Transcript:
    if not isinstance(doc, dict):
        raise SchemaError("transcript document must be an object", "")
    task_id = _require(doc, "task_id", str, "")
    strategy = _require(doc, "strategy", str, "")
    seed = _require(doc, "seed", int, "")
    scenario = _require(doc, "scenario", str, "")
    gold = _require(doc, "gold_label", str, "")
    scheme = _require(doc, "token_scheme", str, "")
    rounds_doc = _require(doc, "rounds", list, "")
    rounds: list[list[Message]] = []
    for i, round_doc in enumerate(rounds_doc):
        if not isinstance(round_doc, list):
            raise SchemaError("round must be a list", f"/rounds/{i}")
        round_messages = []
        for j, message_doc in enumerate(round_doc):
            pointer = f"/rounds/{i}/{j}"
            round_index = _require(message_doc, "round", int, pointer)
            if round_index != i + 1:
                raise SchemaError("message round does not match its position", pointer)
            addressees_doc = _require(message_doc, "addressees", (str, list), pointer)
            if addressees_doc == "all":
                addressees = None
            elif isinstance(addressees_doc, list):
                addressees = tuple(str(a) for a in addressees_doc)
            else:
                raise SchemaError("addressees must be 'all' or a list", f"{pointer}/addressees")
            purpose_value = _require(message_doc, "purpose", str, pointer)
            try:
                purpose = Purpose(purpose_value)
            except ValueError as exc:
                raise SchemaError(f"unknown purpose '{purpose_value}'", f"{pointer}/purpose") from exc
            prediction = message_doc.get("prediction")
            if prediction is not None and not isinstance(prediction, str):
                raise SchemaError("prediction must be a string or null", f"{pointer}/prediction")
            try:
                message = Message(
                    round_index=round_index,
                    speaker_id=_require(message_doc, "speaker", str, pointer),
                    content=_require(message_doc, "content", str, pointer),
                    purpose=purpose,
                    addressees=addressees,
                    prediction=prediction,
                    input_tokens=_require(message_doc, "input_tokens", int, pointer),
                    output_tokens=_require(message_doc, "output_tokens", int, pointer),
                )
            except ValueError as exc:
                raise SchemaError(str(exc), pointer) from exc
            round_messages.append(message)
        rounds.append(round_messages)
    outcome_doc = doc.get("outcome")
    outcome = None
    if outcome_doc is not None:
        label = _require(outcome_doc, "label", str, "/outcome")
        rounds_used = _require(outcome_doc, "rounds", int, "/outcome")
        termination_value = _require(outcome_doc, "termination", str, "/outcome")
        try:
            termination = Termination(termination_value)
        except ValueError as exc:
            raise SchemaError(
                f"unknown termination '{termination_value}'", "/outcome/termination"
            ) from exc
        try:
            outcome = Outcome(label, rounds_used, termination)
        except ValueError as exc:
            raise SchemaError(str(exc), "/outcome") from exc
    return Transcript(
        task_id=task_id,
        strategy_label=strategy,
        seed=seed,
        token_scheme=scheme,
        gold_label=gold,
        scenario=scenario,
        rounds=rounds,
        outcome=outcome,
    )
