"""Agent specs, replies, token counting, and the deterministic scripted backend.

The scripted backend is the verification harness: every reply is a pure
function of (view, round, config), so whole discussions replay
byte-identically. Scripted agents "read" the discussion by parsing the
rendered history lines and the ``PREDICTION:`` trailers inside them, and
read their own segment through its embedded ``VERDICT:`` token.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .context import AgentView, TurnKind, render_view
from .decision import PredictionBoard, majority_vote
from .errors import NoPredictionsError
from .tasks import label_from_tail, read_segment_verdict


class TokenScheme(Enum):
    PROVIDER_REPORTED = "provider_reported"
    WHITESPACE = "whitespace"
    CHARS_DIV_4 = "chars_div_4"


def count_tokens(text: str, scheme: TokenScheme) -> int:
    """Deterministic token count; provider-reported counts never go through here."""
    if scheme is TokenScheme.WHITESPACE:
        return len(text.split())
    if scheme is TokenScheme.CHARS_DIV_4:
        return -(-len(text) // 4)
    raise ValueError("provider_reported counts come from the provider, not a counter")


_PREDICTION_RE = re.compile(r"PREDICTION\s*:\s*(.+)", re.IGNORECASE)


def extract_prediction(content: str, label_set: tuple[str, ...] | list[str]) -> str | None:
    """Canonical label from the last ``PREDICTION:<label>`` line, if any."""
    for line in reversed(content.splitlines()):
        match = _PREDICTION_RE.search(line)
        if match:
            label = label_from_tail(match.group(1), label_set)
            if label is not None:
                return label
    return None


_LABELS_PREFIX = "Allowed labels: "


def parse_label_set(task_statement: str) -> tuple[str, ...]:
    for line in task_statement.splitlines():
        if line.startswith(_LABELS_PREFIX):
            return tuple(part.strip() for part in line[len(_LABELS_PREFIX):].split(" | "))
    return ()


class AgentKind(Enum):
    DISCUSSION = "discussion"
    INSTRUCTOR = "instructor"


@dataclass(frozen=True)
class AgentSpec:
    id: str
    kind: AgentKind = AgentKind.DISCUSSION
    segment_ref: str | None = None
    backend_binding: str = "scripted"

    def __post_init__(self):
        if self.kind is AgentKind.DISCUSSION and self.segment_ref is None:
            raise ValueError(f"discussion agent '{self.id}' needs a segment_ref")
        if self.kind is AgentKind.INSTRUCTOR and self.segment_ref is not None:
            raise ValueError("the instructor holds no segment")


@dataclass(frozen=True)
class AgentReply:
    content: str
    prediction: str | None = None
    wants_to_speak: bool | None = None
    addressees: tuple[str, ...] | None = None
    input_tokens: int = 0
    output_tokens: int = 0


# Scripted agents flag decisive evidence with this token; peers and the
# instructor key their persuasion/termination rules off it.
INFORMED_MARKER = "decisive"

_PERSUASION_RULES = ("adopt_majority_seen", "adopt_first_informed", "never")
_INTENT_RULES = ("always", "never", "if_disagreement")
_ADDRESSEE_RULES = ("broadcast", "peers_disagreeing", "fixed")
_RULING_RULES = ("informed_then_unanimity", "unanimity_only", "never")


def _summarize(rule: str, text: str) -> str:
    if rule == "identity_concat":
        return text
    if rule.startswith("truncate:"):
        return text[: int(rule.split(":", 1)[1])]
    raise ValueError(f"unknown summarizer '{rule}'")


def _check_summarizer(rule: str) -> None:
    _summarize(rule, "")


@dataclass(frozen=True)
class ScriptedAgentConfig:
    """Deterministic behavior of one scripted discussion agent.

    ``stubbornness`` k means the agent ignores persuasion through round k.
    With ``read_segment`` the agent derives its base label (and informed
    status) from its segment's verdict token, falling back to
    ``initial_label`` when the segment has none.
    """

    initial_label: str
    stubbornness: int = 0
    persuasion: str = "adopt_majority_seen"
    is_informed: bool = False
    summarizer: str = "identity_concat"
    read_segment: bool = True
    intent_rule: str = "always"
    intent_rounds: tuple[int, ...] | None = None
    addressee_rule: str = "broadcast"
    fixed_addressees: tuple[str, ...] = ()
    padding_words: int = 0

    def __post_init__(self):
        if self.stubbornness < 0:
            raise ValueError("stubbornness must be >= 0")
        if self.persuasion not in _PERSUASION_RULES:
            raise ValueError(f"persuasion must be one of {_PERSUASION_RULES}")
        if self.intent_rule not in _INTENT_RULES:
            raise ValueError(f"intent_rule must be one of {_INTENT_RULES}")
        if self.addressee_rule not in _ADDRESSEE_RULES:
            raise ValueError(f"addressee_rule must be one of {_ADDRESSEE_RULES}")
        if self.padding_words < 0:
            raise ValueError("padding_words must be >= 0")
        _check_summarizer(self.summarizer)


@dataclass(frozen=True)
class ScriptedInstructorConfig:
    ruling_rule: str = "informed_then_unanimity"
    summarizer: str = "identity_concat"

    def __post_init__(self):
        if self.ruling_rule not in _RULING_RULES:
            raise ValueError(f"ruling_rule must be one of {_RULING_RULES}")
        _check_summarizer(self.summarizer)


_HISTORY_LINE_RE = re.compile(r"^\[round (\d+)\] (\S+) \(to ([^)]*)\): (.*)$")


@dataclass(frozen=True)
class _HistoryEntry:
    round_index: int
    speaker: str
    content: str


def parse_history(visible_history: str) -> list[_HistoryEntry]:
    """Recover (round, speaker, content) triples from rendered history lines."""
    entries = []
    for line in visible_history.splitlines():
        match = _HISTORY_LINE_RE.match(line)
        if match:
            entries.append(_HistoryEntry(int(match.group(1)), match.group(2), match.group(4)))
    return entries


class ScriptedBackend:
    """Deterministic backend standing in for a language model.

    Replies depend only on the view, the round, and the per-agent config;
    token counts use a deterministic scheme (whitespace by default).
    """

    def __init__(
        self,
        agent_configs: dict[str, ScriptedAgentConfig],
        instructor_config: ScriptedInstructorConfig | None = None,
        token_scheme: TokenScheme = TokenScheme.WHITESPACE,
    ):
        if token_scheme is TokenScheme.PROVIDER_REPORTED:
            raise ValueError("scripted backends need a computable token scheme")
        self.agent_configs = dict(agent_configs)
        self.instructor_config = instructor_config
        self.token_scheme = token_scheme
        self.discussion_ids = tuple(agent_configs)

    # -- public protocol ---------------------------------------------------

    def respond(
        self,
        spec: AgentSpec,
        view: AgentView,
        turn_kind: TurnKind,
        *,
        round_index: int,
        want_addressees: bool = False,
    ) -> AgentReply:
        input_tokens = count_tokens(render_view(view), self.token_scheme)
        if spec.kind is AgentKind.INSTRUCTOR:
            content, prediction = self._instructor_content(view, turn_kind)
            addressees = None
            wants = None
        else:
            config = self.agent_configs[spec.id]
            content, prediction, wants, addressees = self._agent_content(
                spec, config, view, turn_kind, round_index, want_addressees
            )
        return AgentReply(
            content=content,
            prediction=prediction,
            wants_to_speak=wants,
            addressees=addressees,
            input_tokens=input_tokens,
            output_tokens=count_tokens(content, self.token_scheme),
        )

    # -- discussion agents ---------------------------------------------------

    def _resolve_label(
        self, spec: AgentSpec, config: ScriptedAgentConfig, view: AgentView, round_index: int
    ) -> tuple[str, bool]:
        label_set = parse_label_set(view.task_statement)
        verdict = read_segment_verdict(view.role_preamble, label_set) if config.read_segment else None
        informed = config.is_informed or verdict is not None
        base = verdict if verdict is not None else config.initial_label
        entries = parse_history(view.visible_history)
        current = base
        for entry in entries:
            if entry.speaker == spec.id:
                own = extract_prediction(entry.content, label_set)
                if own is not None:
                    current = own
        if round_index <= config.stubbornness or config.persuasion == "never":
            return current, informed
        if config.persuasion == "adopt_first_informed":
            for entry in entries:
                if INFORMED_MARKER in entry.content:
                    label = extract_prediction(entry.content, label_set)
                    if label is not None:
                        return label, informed
            return current, informed
        # adopt_majority_seen: majority over peers' latest visible predictions.
        latest: dict[str, str] = {}
        for entry in entries:
            if entry.speaker == spec.id:
                continue
            label = extract_prediction(entry.content, label_set)
            if label is not None:
                latest[entry.speaker] = label
        if not latest:
            return current, informed
        counts: dict[str, int] = {}
        for label in latest.values():
            counts[label] = counts.get(label, 0) + 1
        top = max(counts.values())
        tied = [label for label, count in counts.items() if count == top]
        if len(tied) == 1 and counts.get(current, 0) < top:
            return tied[0], informed
        return current, informed

    def _agent_content(
        self,
        spec: AgentSpec,
        config: ScriptedAgentConfig,
        view: AgentView,
        turn_kind: TurnKind,
        round_index: int,
        want_addressees: bool,
    ):
        if turn_kind is TurnKind.SUMMARY:
            return _summarize(config.summarizer, view.visible_history), None, None, None
        label, informed = self._resolve_label(spec, config, view, round_index)
        if turn_kind is TurnKind.INTENT:
            wants = self._wants_to_speak(spec, config, view, round_index, label)
            return ("SPEAK" if wants else "PASS"), None, wants, None
        if turn_kind in (TurnKind.DISCUSSION, TurnKind.FINAL):
            stance = (
                f"my evidence is {INFORMED_MARKER} for this verdict"
                if informed
                else "my evidence is inconclusive, stating my stance"
            )
            padding = (" " + " ".join(["pad"] * config.padding_words)) if config.padding_words else ""
            content = (
                f"sig-{spec.id}-r{round_index} segment {spec.segment_ref}: "
                f"{stance}.{padding} PREDICTION: {label}"
            )
            addressees = self._addressees(spec, config, view, label) if want_addressees else None
            return content, label, None, addressees
        raise ValueError(f"scripted discussion agent cannot take a {turn_kind} turn")

    def _wants_to_speak(
        self,
        spec: AgentSpec,
        config: ScriptedAgentConfig,
        view: AgentView,
        round_index: int,
        label: str,
    ) -> bool:
        if config.intent_rounds is not None:
            return round_index in config.intent_rounds
        if config.intent_rule == "always":
            return True
        if config.intent_rule == "never":
            return False
        # if_disagreement: speak when nothing was said yet or someone differs.
        label_set = parse_label_set(view.task_statement)
        entries = parse_history(view.visible_history)
        latest: dict[str, str] = {}
        for entry in entries:
            parsed = extract_prediction(entry.content, label_set)
            if parsed is not None:
                latest[entry.speaker] = parsed
        others = {s: l for s, l in latest.items() if s != spec.id}
        if not others:
            return True
        return any(l != label for l in others.values())

    def _addressees(
        self, spec: AgentSpec, config: ScriptedAgentConfig, view: AgentView, label: str
    ) -> tuple[str, ...] | None:
        if config.addressee_rule == "fixed":
            chosen = tuple(a for a in config.fixed_addressees if a != spec.id)
            return chosen or None
        if config.addressee_rule == "peers_disagreeing":
            label_set = parse_label_set(view.task_statement)
            latest: dict[str, str] = {}
            for entry in parse_history(view.visible_history):
                parsed = extract_prediction(entry.content, label_set)
                if parsed is not None:
                    latest[entry.speaker] = parsed
            chosen = tuple(
                peer
                for peer in self.discussion_ids
                if peer != spec.id and peer in latest and latest[peer] != label
            )
            return chosen or None
        return None  # broadcast

    # -- instructor ---------------------------------------------------------

    def _instructor_content(self, view: AgentView, turn_kind: TurnKind):
        config = self.instructor_config
        if config is None:
            raise ValueError("no instructor config bound to this backend")
        if turn_kind is TurnKind.SUMMARY:
            return _summarize(config.summarizer, view.visible_history), None
        if turn_kind is TurnKind.CONTROL and "SPEAKERS" in view.turn_instruction:
            return "SPEAKERS: " + ", ".join(self.discussion_ids), None
        label_set = parse_label_set(view.task_statement)
        entries = parse_history(view.visible_history)
        latest: dict[str, tuple[str, int]] = {}
        for entry in entries:
            label = extract_prediction(entry.content, label_set)
            if label is not None:
                latest[entry.speaker] = (label, entry.round_index)
        if turn_kind is TurnKind.CONTROL:
            return self._ruling(config, entries, latest, label_set), None
        if turn_kind is TurnKind.FINAL:
            board = PredictionBoard({a: latest[a] for a in self.discussion_ids if a in latest})
            try:
                label = majority_vote(board, self.discussion_ids)
            except NoPredictionsError:
                label = label_set[0] if label_set else ""
            return f"FINAL: {label}", None
        raise ValueError(f"scripted instructor cannot take a {turn_kind} turn")

    def _ruling(self, config, entries, latest, label_set) -> str:
        if config.ruling_rule == "never":
            return "CONTINUE"
        if config.ruling_rule == "informed_then_unanimity":
            for entry in entries:
                if INFORMED_MARKER in entry.content:
                    label = extract_prediction(entry.content, label_set)
                    if label is not None:
                        return f"FINAL: {label}"
        spoken = [latest.get(a) for a in self.discussion_ids]
        if all(s is not None for s in spoken):
            labels = {s[0] for s in spoken}
            if len(labels) == 1:
                return f"FINAL: {next(iter(labels))}"
        return "CONTINUE"
