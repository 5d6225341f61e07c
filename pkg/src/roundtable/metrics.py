"""Token accounting, accuracy aggregation, cost-efficiency scores, reports.

The headline score is the token-accuracy ratio: accuracy (in percentage
points) divided by a weighted token cost ``alpha * #I + beta * #O``. The
default weights are alpha=1, beta=4, reflecting output tokens being priced
about four times input tokens. Within one report the ratios are normalized
by the batch maximum so the most cost-effective strategy scores 1.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from statistics import fmean
from typing import Mapping

from .errors import DegenerateError, MixedSchemeError
from .strategy import CANONICAL_STRATEGY_LABELS
from .transcript import Transcript

BASELINE_AGENT_ALL = "Agent_all"
BASELINE_MV = "MV"

REPORT_COLUMNS = ("Strategy", "Acc", "#I", "#O", "Round", "TAR", "NTAR")


@dataclass(frozen=True)
class TarParams:
    alpha: float = 1.0
    beta: float = 4.0

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")


@dataclass(frozen=True)
class RunRecord:
    """One run's contribution to the aggregates."""

    task_id: str
    strategy: str
    correct: bool
    input_tokens: int
    output_tokens: int
    rounds: int
    token_scheme: str
    scenario: str = ""


@dataclass(frozen=True)
class AggregateMetrics:
    strategy: str
    accuracy: float  # percentage in [0, 100]
    mean_input_tokens: float
    mean_output_tokens: float
    mean_rounds: float
    n: int
    token_scheme: str = ""
    scenario: str = ""
    mean_run_tar: float | None = None


def run_record_from_transcript(transcript: Transcript) -> RunRecord:
    """Rebuild a run record from a serialized transcript (replay path)."""
    if transcript.outcome is None:
        raise ValueError(f"transcript '{transcript.task_id}' has no outcome")
    return RunRecord(
        task_id=transcript.task_id,
        strategy=transcript.strategy_label,
        correct=transcript.outcome.final_label == transcript.gold_label,
        input_tokens=transcript.total_input_tokens(),
        output_tokens=transcript.total_output_tokens(),
        rounds=transcript.outcome.rounds_used,
        token_scheme=transcript.token_scheme,
        scenario=transcript.scenario,
    )


def compute_tar(
    accuracy: float,
    mean_input: float,
    mean_output: float,
    params: TarParams = TarParams(),
) -> float:
    """accuracy / (alpha * #I + beta * #O), full precision."""
    denominator = params.alpha * mean_input + params.beta * mean_output
    if denominator <= 0:
        raise DegenerateError("token denominator is zero")
    return accuracy / denominator


def compute_ntar(tars: Mapping[str, float]) -> dict[str, float]:
    """Divide each ratio by the batch maximum; the best strategy maps to 1."""
    if not tars:
        raise ValueError("no ratios to normalize")
    maximum = max(tars.values())
    if maximum <= 0:
        raise DegenerateError("maximum ratio is zero")
    return {strategy: value / maximum for strategy, value in tars.items()}


def _strategy_order(strategy: str) -> tuple[int, str]:
    if strategy in CANONICAL_STRATEGY_LABELS:
        return (CANONICAL_STRATEGY_LABELS.index(strategy), strategy)
    if strategy == BASELINE_AGENT_ALL:
        return (100, strategy)
    if strategy == BASELINE_MV:
        return (101, strategy)
    return (200, strategy)


def aggregate(
    records: list[RunRecord],
    tar_params: TarParams | None = None,
) -> list[AggregateMetrics]:
    """Group records by strategy and average them, in canonical row order."""
    if not records:
        raise ValueError("no records to aggregate")
    groups: dict[str, list[RunRecord]] = {}
    for record in records:
        groups.setdefault(record.strategy, []).append(record)
    aggregates = []
    for strategy in sorted(groups, key=_strategy_order):
        group = groups[strategy]
        schemes = {r.token_scheme for r in group}
        if len(schemes) != 1:
            raise MixedSchemeError(
                f"strategy '{strategy}' mixes token schemes {sorted(schemes)}"
            )
        scenarios = {r.scenario for r in group}
        mean_run_tar = None
        if tar_params is not None:
            mean_run_tar = fmean(
                compute_tar(100.0 if r.correct else 0.0, r.input_tokens, r.output_tokens, tar_params)
                for r in group
            )
        aggregates.append(
            AggregateMetrics(
                strategy=strategy,
                accuracy=100.0 * sum(r.correct for r in group) / len(group),
                mean_input_tokens=fmean(r.input_tokens for r in group),
                mean_output_tokens=fmean(r.output_tokens for r in group),
                mean_rounds=fmean(r.rounds for r in group),
                n=len(group),
                token_scheme=next(iter(schemes)),
                scenario=next(iter(scenarios)) if len(scenarios) == 1 else "",
                mean_run_tar=mean_run_tar,
            )
        )
    return aggregates


def _tar_ntar_columns(
    aggregates: list[AggregateMetrics], tar_params: TarParams
) -> tuple[dict[str, float], dict[str, float]]:
    tars = {
        a.strategy: compute_tar(
            a.accuracy, a.mean_input_tokens, a.mean_output_tokens, tar_params
        )
        for a in aggregates
    }
    # Baselines are reported but excluded from the normalization pool.
    pool = {s: t for s, t in tars.items() if s in CANONICAL_STRATEGY_LABELS}
    ntars = compute_ntar(pool) if pool and max(pool.values()) > 0 else {}
    return tars, ntars


def emit_report(
    aggregates: list[AggregateMetrics],
    tar_params: TarParams = TarParams(),
    format: str = "csv",
    notes: Mapping[str, str] | None = None,
) -> str:
    """Render the aggregate table.

    CSV carries the seven display columns with the normalized ratio at two
    decimals; JSON mirrors the columns at full precision plus any row
    notes. Baseline rows show ``N/A`` (null) in the NTAR column.
    """
    tars, ntars = ({}, {}) if not aggregates else _tar_ntar_columns(aggregates, tar_params)
    if format == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer)
        writer.writerow(REPORT_COLUMNS)
        for a in aggregates:
            ntar = ntars.get(a.strategy)
            writer.writerow(
                [
                    a.strategy,
                    f"{a.accuracy:.1f}",
                    f"{a.mean_input_tokens:.1f}",
                    f"{a.mean_output_tokens:.1f}",
                    f"{a.mean_rounds:.2f}",
                    f"{tars[a.strategy]:.7f}",
                    "N/A" if ntar is None else f"{ntar:.2f}",
                ]
            )
        return buffer.getvalue()
    if format == "json":
        rows = []
        for a in aggregates:
            row = {
                "strategy": a.strategy,
                "n": a.n,
                "accuracy": a.accuracy,
                "mean_input_tokens": a.mean_input_tokens,
                "mean_output_tokens": a.mean_output_tokens,
                "mean_rounds": a.mean_rounds,
                "tar": tars[a.strategy],
                "ntar": ntars.get(a.strategy),
                "token_scheme": a.token_scheme,
            }
            if a.mean_run_tar is not None:
                row["mean_run_tar"] = a.mean_run_tar
            note = (notes or {}).get(a.strategy)
            if note:
                row["note"] = note
            rows.append(row)
        doc = {
            "tar_params": {"alpha": tar_params.alpha, "beta": tar_params.beta},
            "columns": list(REPORT_COLUMNS),
            "rows": rows,
        }
        return json.dumps(doc, indent=2) + "\n"
    raise ValueError(f"unknown report format '{format}'")
