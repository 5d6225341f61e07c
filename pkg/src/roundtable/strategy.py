"""Collaboration-strategy lattice: grammar, cross-dimension rules, enumeration.

A strategy is a point in the governance x participation x interaction x
context lattice, written ``G<d>-P<d>-I<d>-C<d>`` (case-sensitive, no
whitespace). Only nine of the 72 grammatical combinations satisfy the
cross-dimension rules; :func:`enumerate_valid_strategies` lists them in
canonical report order.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

from .errors import ConstraintViolationError, OutOfRangeError, StrategySyntaxError


class Governance(Enum):
    DECENTRALIZED = 1  # G1: agents self-organize
    CENTRALIZED = 2    # G2: an instructor coordinates speakers, context, decision


class Participation(Enum):
    FULL = 1                # P1: every agent speaks each round
    SELECTIVE = 2           # P2: agents volunteer per round
    INSTRUCTOR_DECIDED = 3  # P3: instructor picks speakers and order


class InteractionPattern(Enum):
    SIMULTANEOUS = 1             # I1: independent replies, merged at round end
    ORDERED_SEQUENTIAL = 2       # I2: fixed order, later speakers see earlier ones
    RANDOM_SEQUENTIAL = 3        # I3: seeded random order per round
    SELECTIVE_POINT_TO_POINT = 4  # I4: speakers choose their addressees


class ContextStrategy(Enum):
    FULL_LAST_ROUND_LOG = 1  # C1: verbatim log of the previous round
    SELF_SUMMARIZED = 2      # C2: each agent keeps a rolling summary
    INSTRUCTOR_SUMMARY = 3   # C3: instructor-maintained shared summary


_DIMENSIONS = (
    ("G", Governance),
    ("P", Participation),
    ("I", InteractionPattern),
    ("C", ContextStrategy),
)


class StrategyCombo(NamedTuple):
    """One (G, P, I, C) quadruple; not necessarily a legal combination."""

    governance: Governance
    participation: Participation
    interaction: InteractionPattern
    context: ContextStrategy

    @property
    def label(self) -> str:
        return format_strategy(self)


def format_strategy(combo: StrategyCombo) -> str:
    """Render a quadruple in the canonical ``G#-P#-I#-C#`` form."""
    return "-".join(f"{letter}{dim.value}" for (letter, _), dim in zip(_DIMENSIONS, combo))


def parse_strategy(text: str) -> StrategyCombo:
    """Parse a strategy string into its quadruple.

    Grammar: ``G{1|2}-P{1|2|3}-I{1|2|3|4}-C{1|2|3}``, case-sensitive,
    hyphen-separated, no whitespace. Cross-dimension rules are NOT checked
    here; use :func:`validate_strategy` for that.

    Raises :class:`StrategySyntaxError` (with byte offset) on malformed
    text and :class:`OutOfRangeError` on a digit outside its dimension.
    """
    pos = 0
    parts = []
    for index, (letter, enum_cls) in enumerate(_DIMENSIONS):
        if index > 0:
            if pos >= len(text) or text[pos] != "-":
                raise StrategySyntaxError(f"expected '-' before {letter} dimension", pos)
            pos += 1
        if pos >= len(text) or text[pos] != letter:
            raise StrategySyntaxError(f"expected '{letter}'", pos)
        pos += 1
        if pos >= len(text) or not text[pos].isascii() or not text[pos].isdigit():
            raise StrategySyntaxError(f"expected digit after '{letter}'", pos)
        digit = int(text[pos])
        values = {member.value for member in enum_cls}
        if digit not in values:
            raise OutOfRangeError(
                f"{letter}{digit} out of range; {letter} admits {sorted(values)}"
            )
        pos += 1
        parts.append(enum_cls(digit))
    if pos != len(text):
        raise StrategySyntaxError("trailing characters after strategy", pos)
    return StrategyCombo(*parts)


_G1 = Governance.DECENTRALIZED
_G2 = Governance.CENTRALIZED
_P1 = Participation.FULL
_P2 = Participation.SELECTIVE
_P3 = Participation.INSTRUCTOR_DECIDED

# Named rules; a violation report lists every failed rule by name.
_RULES: tuple[tuple[str, object], ...] = (
    ("P1-requires-G1", lambda c: c.participation is not _P1 or c.governance is _G1),
    ("P2-requires-G1", lambda c: c.participation is not _P2 or c.governance is _G1),
    ("P3-requires-G2", lambda c: c.participation is not _P3 or c.governance is _G2),
    (
        "I1-requires-G1-P1-or-G2-P3",
        lambda c: c.interaction is not InteractionPattern.SIMULTANEOUS
        or (c.governance, c.participation) in {(_G1, _P1), (_G2, _P3)},
    ),
    (
        "I2-requires-G1-P1-or-G2-P3",
        lambda c: c.interaction is not InteractionPattern.ORDERED_SEQUENTIAL
        or (c.governance, c.participation) in {(_G1, _P1), (_G2, _P3)},
    ),
    (
        "I3-requires-G1-P1",
        lambda c: c.interaction is not InteractionPattern.RANDOM_SEQUENTIAL
        or (c.governance, c.participation) == (_G1, _P1),
    ),
    (
        "I4-requires-G1-P2",
        lambda c: c.interaction is not InteractionPattern.SELECTIVE_POINT_TO_POINT
        or (c.governance, c.participation) == (_G1, _P2),
    ),
    (
        "C1-requires-G1-P1",
        lambda c: c.context is not ContextStrategy.FULL_LAST_ROUND_LOG
        or (c.governance, c.participation) == (_G1, _P1),
    ),
    (
        "C2-requires-G1",
        lambda c: c.context is not ContextStrategy.SELF_SUMMARIZED or c.governance is _G1,
    ),
    (
        "C3-requires-G2-P3",
        lambda c: c.context is not ContextStrategy.INSTRUCTOR_SUMMARY
        or (c.governance, c.participation) == (_G2, _P3),
    ),
)


def validate_strategy(combo: StrategyCombo) -> list[str]:
    """Return the names of all violated cross-dimension rules (empty = valid)."""
    return [name for name, rule in _RULES if not rule(combo)]


# Canonical report order (full-participation C1 block, C2 block, selective, centralized).
CANONICAL_STRATEGY_LABELS: tuple[str, ...] = (
    "G1-P1-I1-C1",
    "G1-P1-I2-C1",
    "G1-P1-I3-C1",
    "G1-P1-I1-C2",
    "G1-P1-I2-C2",
    "G1-P1-I3-C2",
    "G1-P2-I4-C2",
    "G2-P3-I1-C3",
    "G2-P3-I2-C3",
)


def enumerate_valid_strategies() -> list[str]:
    """All legal strategy strings, in canonical report order."""
    return list(CANONICAL_STRATEGY_LABELS)


@dataclass(frozen=True)
class StrategyConfig:
    """A validated strategy plus the run controls that make a run reproducible.

    ``seed`` drives the I3 speaking order and any stochastic backend;
    ``max_rounds`` caps the discussion before the forced decision path.
    """

    governance: Governance
    participation: Participation
    interaction: InteractionPattern
    context: ContextStrategy
    max_rounds: int = 10
    seed: int = 0

    def __post_init__(self):
        violations = validate_strategy(self.combo)
        if violations:
            raise ConstraintViolationError(violations)
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @property
    def combo(self) -> StrategyCombo:
        return StrategyCombo(self.governance, self.participation, self.interaction, self.context)

    @property
    def label(self) -> str:
        return format_strategy(self.combo)

    @classmethod
    def from_label(cls, text: str, *, max_rounds: int = 10, seed: int = 0) -> "StrategyConfig":
        combo = parse_strategy(text)
        return cls(*combo, max_rounds=max_rounds, seed=seed)
