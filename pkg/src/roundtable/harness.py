"""Convenience builders wiring tasks, rosters, and scripted backends together."""
from __future__ import annotations

from dataclasses import replace

from .agents import (
    AgentKind,
    AgentSpec,
    ScriptedAgentConfig,
    ScriptedBackend,
    ScriptedInstructorConfig,
    TokenScheme,
)
from .engine import Roster
from .strategy import Governance, StrategyConfig
from .tasks import TaskInstance

SCRIPTED_BINDING = "scripted"
INSTRUCTOR_ID = "instructor"


def roster_for_task(task: TaskInstance, *, with_instructor: bool) -> Roster:
    """One discussion agent per segment (ids a1..aN, schema order)."""
    discussion = tuple(
        AgentSpec(id=f"a{i + 1}", segment_ref=segment.name, backend_binding=SCRIPTED_BINDING)
        for i, segment in enumerate(task.segments)
    )
    instructor = None
    if with_instructor:
        instructor = AgentSpec(
            id=INSTRUCTOR_ID, kind=AgentKind.INSTRUCTOR, backend_binding=SCRIPTED_BINDING
        )
    return Roster(discussion=discussion, instructor=instructor)


def default_agent_profile(task: TaskInstance) -> ScriptedAgentConfig:
    return ScriptedAgentConfig(
        initial_label=task.label_set[-1],
        stubbornness=1,
        persuasion="adopt_first_informed",
        addressee_rule="peers_disagreeing",
        summarizer="truncate:400",
    )


def scripted_setup(
    task: TaskInstance,
    strategy: StrategyConfig,
    *,
    agent_profile: ScriptedAgentConfig | None = None,
    instructor_profile: ScriptedInstructorConfig | None = None,
    per_agent: dict[str, ScriptedAgentConfig] | None = None,
    token_scheme: TokenScheme = TokenScheme.WHITESPACE,
) -> tuple[Roster, dict[str, ScriptedBackend]]:
    """Roster plus a scripted backend for one run.

    ``agent_profile`` applies to every discussion agent (with the task's
    last label as the fallback stance when none was set); ``per_agent``
    overrides individual ids. Informed behavior emerges from segment
    verdict tokens via ``read_segment``.
    """
    with_instructor = strategy.governance is Governance.CENTRALIZED
    roster = roster_for_task(task, with_instructor=with_instructor)
    if agent_profile is None:
        agent_profile = default_agent_profile(task)
    configs: dict[str, ScriptedAgentConfig] = {}
    for spec in roster.discussion:
        config = (per_agent or {}).get(spec.id, agent_profile)
        if config.initial_label not in task.label_set:
            config = replace(config, initial_label=task.label_set[-1])
        configs[spec.id] = config
    instructor_config = None
    if with_instructor:
        instructor_config = instructor_profile or ScriptedInstructorConfig(
            summarizer="truncate:240"
        )
    backend = ScriptedBackend(configs, instructor_config, token_scheme=token_scheme)
    return roster, {SCRIPTED_BINDING: backend}


def baseline_scripted_backend(
    task: TaskInstance,
    *,
    agent_profile: ScriptedAgentConfig | None = None,
    token_scheme: TokenScheme = TokenScheme.WHITESPACE,
) -> ScriptedBackend:
    """Backend for the single-round baselines (per-segment voters + agent_all)."""
    profile = agent_profile or default_agent_profile(task)
    if profile.initial_label not in task.label_set:
        profile = replace(profile, initial_label=task.label_set[-1])
    configs = {f"a{i + 1}": profile for i in range(len(task.segments))}
    configs["agent_all"] = profile
    return ScriptedBackend(configs, token_scheme=token_scheme)
