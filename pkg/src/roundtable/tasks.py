"""Task schema, file loader, and synthetic evidence generators.

Two scenarios are supported. Evidence-integration tasks ("dei") split one
answer across named context segments; evidence-synthesis tasks ("ses")
give each agent a single evidence sentence, only some of which bear on the
claim. Synthetic segments embed a machine-readable ``VERDICT: <label>``
token so deterministic scripted agents can read them without any NLP.
"""
from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import ParamError, SchemaError

SCENARIO_DEI = "dei"
SCENARIO_SES = "ses"

# Canonical label sets and segment roles.
PDDP_LABELS: tuple[str, ...] = ("expired", "extended care", "home with service", "home")
SES_LABELS: tuple[str, ...] = ("supported", "refuting", "neutral")
DEI_SEGMENT_NAMES: tuple[str, ...] = ("BHC", "MSIP", "PR", "DM", "SH")

RELEVANCE_CONSISTENT = "consistent"
RELEVANCE_INCONSISTENT = "inconsistent"

VERDICT_MARKER = "VERDICT:"
_VERDICT_RE = re.compile(r"VERDICT\s*:\s*(.+)", re.IGNORECASE)


def canonicalize_label(raw: str, label_set: tuple[str, ...] | list[str]) -> str | None:
    """Map free-form text onto a canonical label, or None if it matches none."""
    cleaned = raw.strip()
    while True:
        trimmed = cleaned.strip("\"'").rstrip(".,;:!?").strip()
        if trimmed == cleaned:
            break
        cleaned = trimmed
    folded = cleaned.casefold()
    for label in label_set:
        if folded == label.casefold():
            return label
    return None


def label_from_tail(tail: str, label_set: tuple[str, ...] | list[str]) -> str | None:
    """Canonicalize marker tail text, tolerating a trailing sentence."""
    label = canonicalize_label(tail, label_set)
    if label is None and "." in tail:
        label = canonicalize_label(tail.split(".", 1)[0], label_set)
    return label


def read_segment_verdict(text: str, label_set: tuple[str, ...] | list[str]) -> str | None:
    """Extract the embedded verdict token from synthetic segment text, if any."""
    for line in text.splitlines():
        match = _VERDICT_RE.search(line)
        if match:
            label = label_from_tail(match.group(1), label_set)
            if label is not None:
                return label
    return None


@dataclass(frozen=True)
class Segment:
    name: str
    text: str
    relevance: str | None = None  # consistent | inconsistent, SES only


@dataclass(frozen=True)
class TaskInstance:
    id: str
    scenario: str
    question: str
    label_set: tuple[str, ...]
    gold_label: str
    segments: tuple[Segment, ...]

    def __post_init__(self):
        problems = validate_task(self)
        if problems:
            raise ValueError("; ".join(problems))

    def segment_named(self, name: str) -> Segment:
        for segment in self.segments:
            if segment.name == name:
                return segment
        raise KeyError(name)


def validate_task(task: TaskInstance) -> list[str]:
    problems = []
    if task.scenario not in (SCENARIO_DEI, SCENARIO_SES):
        problems.append(f"unknown scenario '{task.scenario}'")
    if len(task.label_set) < 2:
        problems.append("label_set needs at least two labels")
    if len(set(task.label_set)) != len(task.label_set):
        problems.append("label_set has duplicates")
    if task.gold_label not in task.label_set:
        problems.append("gold_label not in label_set")
    if len(task.segments) < 2:
        problems.append("need at least two segments")
    names = [s.name for s in task.segments]
    if len(set(names)) != len(names):
        problems.append("segment names must be unique")
    for segment in task.segments:
        if task.scenario == SCENARIO_SES:
            if segment.relevance not in (RELEVANCE_CONSISTENT, RELEVANCE_INCONSISTENT):
                problems.append(f"segment '{segment.name}' needs a relevance tag")
        else:
            if segment.relevance is not None:
                problems.append(f"segment '{segment.name}' must not carry a relevance tag")
            if segment.name not in DEI_SEGMENT_NAMES:
                problems.append(f"segment '{segment.name}' is not a canonical dei role")
    return problems


# ---------------------------------------------------------------------------
# File loading / saving


def tasks_to_json_dict(tasks: list[TaskInstance]) -> dict:
    return {
        "tasks": [
            {
                "id": t.id,
                "scenario": t.scenario,
                "question": t.question,
                "label_set": list(t.label_set),
                "gold_label": t.gold_label,
                "segments": [
                    {"name": s.name, "text": s.text}
                    | ({"relevance": s.relevance} if s.relevance is not None else {})
                    for s in t.segments
                ],
            }
            for t in tasks
        ]
    }


def save_tasks(tasks: list[TaskInstance], path: str | Path) -> None:
    Path(path).write_text(json.dumps(tasks_to_json_dict(tasks), indent=2), encoding="utf-8")


def _expect(doc, key: str, types, pointer: str):
    if not isinstance(doc, dict) or key not in doc:
        raise SchemaError(f"missing key '{key}'", pointer)
    value = doc[key]
    if not isinstance(value, types):
        raise SchemaError(f"key '{key}' has wrong type", f"{pointer}/{key}")
    return value


def load_tasks(path: str | Path) -> list[TaskInstance]:
    """Load and validate a task file; raises SchemaError with a JSON pointer."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}", "") from exc
    if not isinstance(doc, dict):
        raise SchemaError("task document must be an object", "")
    tasks_doc = _expect(doc, "tasks", list, "")
    tasks = []
    seen_ids: set[str] = set()
    for i, task_doc in enumerate(tasks_doc):
        pointer = f"/tasks/{i}"
        task_id = _expect(task_doc, "id", str, pointer)
        if task_id in seen_ids:
            raise SchemaError(f"duplicate task id '{task_id}'", f"{pointer}/id")
        seen_ids.add(task_id)
        scenario = _expect(task_doc, "scenario", str, pointer)
        if scenario not in (SCENARIO_DEI, SCENARIO_SES):
            raise SchemaError(f"unknown scenario '{scenario}'", f"{pointer}/scenario")
        question = _expect(task_doc, "question", str, pointer)
        label_set_doc = _expect(task_doc, "label_set", list, pointer)
        labels = []
        for j, label in enumerate(label_set_doc):
            if not isinstance(label, str) or not label:
                raise SchemaError("labels must be non-empty strings", f"{pointer}/label_set/{j}")
            if label in labels:
                raise SchemaError(f"duplicate label '{label}'", f"{pointer}/label_set/{j}")
            labels.append(label)
        if len(labels) < 2:
            raise SchemaError("label_set needs at least two labels", f"{pointer}/label_set")
        gold = _expect(task_doc, "gold_label", str, pointer)
        if gold not in labels:
            raise SchemaError(f"gold_label '{gold}' not in label_set", f"{pointer}/gold_label")
        segments_doc = _expect(task_doc, "segments", list, pointer)
        if len(segments_doc) < 2:
            raise SchemaError("need at least two segments", f"{pointer}/segments")
        segments = []
        seen_names: set[str] = set()
        for j, segment_doc in enumerate(segments_doc):
            seg_pointer = f"{pointer}/segments/{j}"
            name = _expect(segment_doc, "name", str, seg_pointer)
            if name in seen_names:
                raise SchemaError(f"duplicate segment name '{name}'", f"{seg_pointer}/name")
            seen_names.add(name)
            text = _expect(segment_doc, "text", str, seg_pointer)
            relevance = segment_doc.get("relevance")
            if scenario == SCENARIO_SES:
                if relevance not in (RELEVANCE_CONSISTENT, RELEVANCE_INCONSISTENT):
                    raise SchemaError(
                        "ses segments need relevance 'consistent' or 'inconsistent'",
                        f"{seg_pointer}/relevance",
                    )
            else:
                if relevance is not None:
                    raise SchemaError(
                        "dei segments must not carry a relevance tag", f"{seg_pointer}/relevance"
                    )
                if name not in DEI_SEGMENT_NAMES:
                    raise SchemaError(
                        f"'{name}' is not one of {list(DEI_SEGMENT_NAMES)}", f"{seg_pointer}/name"
                    )
            segments.append(Segment(name=name, text=text, relevance=relevance))
        tasks.append(
            TaskInstance(
                id=task_id,
                scenario=scenario,
                question=question,
                label_set=tuple(labels),
                gold_label=gold,
                segments=tuple(segments),
            )
        )
    return tasks


# ---------------------------------------------------------------------------
# Synthetic generators


@dataclass(frozen=True)
class GeneratorParams:
    scenario: str
    n_tasks: int = 10
    n_segments: int = 6            # ses only; dei always uses the five roles
    label_set: tuple[str, ...] = ()
    informative_segment: str = "BHC"  # dei only
    n_consistent: int = 1          # ses only
    noise: float = 0.0             # fraction controlling distractor sentences
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in (SCENARIO_DEI, SCENARIO_SES):
            raise ParamError(f"unknown scenario '{self.scenario}'")
        if self.n_tasks < 0:
            raise ParamError("n_tasks must be >= 0")
        if not 0.0 <= self.noise <= 1.0:
            raise ParamError("noise must be within [0, 1]")
        if self.scenario == SCENARIO_SES:
            if self.n_segments < 2:
                raise ParamError("ses needs at least two segments")
            if not 1 <= self.n_consistent < self.n_segments:
                raise ParamError("need 1 <= n_consistent < n_segments")
        else:
            if self.informative_segment not in DEI_SEGMENT_NAMES:
                raise ParamError(
                    f"informative_segment must be one of {list(DEI_SEGMENT_NAMES)}"
                )

    @property
    def effective_labels(self) -> tuple[str, ...]:
        if self.label_set:
            return self.label_set
        return SES_LABELS if self.scenario == SCENARIO_SES else PDDP_LABELS


_SES_TOPICS = (
    "the harbor bridge retrofit",
    "the northern rail extension",
    "the city archive digitization",
    "the reservoir maintenance program",
    "the annual census audit",
    "the coastal survey expedition",
    "the museum lighting upgrade",
    "the river ferry schedule",
)

_FILLER_SENTENCES = (
    "Unrelated correspondence from the same file mentions routine scheduling.",
    "A marginal note refers to an earlier draft without further detail.",
    "The attached index lists documents that were not preserved.",
    "Formatting of the original record suggests a later transcription.",
    "An adjacent entry covers an unrelated administrative matter.",
)

_DEI_SEGMENT_FLAVOR = {
    "BHC": "Course summary: the stay proceeded with monitoring and staged treatment.",
    "MSIP": "Procedure log: one scheduled intervention was recorded without complication.",
    "PR": "Findings: serial measurements were taken and archived for review.",
    "DM": "Medication list: maintenance prescriptions were continued at discharge.",
    "SH": "Background: lives locally; support arrangements noted on file.",
}


def _noise_sentences(rng: random.Random, noise: float) -> str:
    count = int(round(noise * 4))
    if count <= 0:
        return ""
    picked = [rng.choice(_FILLER_SENTENCES) for _ in range(count)]
    return " " + " ".join(picked)


def generate_ses(params: GeneratorParams) -> list[TaskInstance]:
    """Deterministically generate claim-verification tasks.

    Each task carries exactly ``n_consistent`` segments whose text entails
    the gold label via an embedded verdict token; the remaining segments
    are distractors tagged inconsistent.
    """
    if params.scenario != SCENARIO_SES:
        raise ParamError("generate_ses requires scenario 'ses'")
    labels = params.effective_labels
    rng = random.Random(params.seed)
    tasks = []
    for i in range(params.n_tasks):
        gold = labels[rng.randrange(len(labels))]
        topic = _SES_TOPICS[rng.randrange(len(_SES_TOPICS))]
        year = 1990 + rng.randrange(40)
        claim = f"The records state that {topic} concluded in {year}."
        consistent_positions = set(rng.sample(range(params.n_segments), params.n_consistent))
        segments = []
        for j in range(params.n_segments):
            name = f"E{j + 1}"
            noise = _noise_sentences(rng, params.noise)
            # Noise precedes the verdict token so the token stays readable.
            if j in consistent_positions:
                text = (
                    f"Evidence {name}: the primary record addresses {topic} directly "
                    f"and settles the claim.{noise} {VERDICT_MARKER} {gold}."
                )
                relevance = RELEVANCE_CONSISTENT
            else:
                filler = _FILLER_SENTENCES[rng.randrange(len(_FILLER_SENTENCES))]
                text = f"Evidence {name}: {filler}{noise}"
                relevance = RELEVANCE_INCONSISTENT
            segments.append(Segment(name=name, text=text, relevance=relevance))
        tasks.append(
            TaskInstance(
                id=f"ses-{params.seed}-{i:04d}",
                scenario=SCENARIO_SES,
                question=claim,
                label_set=labels,
                gold_label=gold,
                segments=tuple(segments),
            )
        )
    return tasks


def generate_dei(params: GeneratorParams) -> list[TaskInstance]:
    """Deterministically generate evidence-integration tasks.

    Every task has the five canonical segments; only the informative one
    carries a verdict token sufficient for the gold label.
    """
    if params.scenario != SCENARIO_DEI:
        raise ParamError("generate_dei requires scenario 'dei'")
    labels = params.effective_labels
    rng = random.Random(params.seed)
    tasks = []
    for i in range(params.n_tasks):
        gold = labels[rng.randrange(len(labels))]
        segments = []
        for name in DEI_SEGMENT_NAMES:
            flavor = _DEI_SEGMENT_FLAVOR[name]
            noise = _noise_sentences(rng, params.noise)
            if name == params.informative_segment:
                text = (
                    f"{flavor} Disposition planning was documented explicitly.{noise} "
                    f"{VERDICT_MARKER} {gold}."
                )
            else:
                text = f"{flavor} No explicit disposition statement appears in this segment.{noise}"
            segments.append(Segment(name=name, text=text))
        tasks.append(
            TaskInstance(
                id=f"dei-{params.seed}-{i:04d}",
                scenario=SCENARIO_DEI,
                question="Which discharge disposition applies to this patient?",
                label_set=labels,
                gold_label=gold,
                segments=tuple(segments),
            )
        )
    return tasks


def generate_tasks(params: GeneratorParams) -> list[TaskInstance]:
    if params.scenario == SCENARIO_SES:
        return generate_ses(params)
    return generate_dei(params)
