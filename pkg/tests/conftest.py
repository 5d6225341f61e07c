from __future__ import annotations

import pytest

from roundtable.agents import (
    AgentReply,
    ScriptedAgentConfig,
    TokenScheme,
    count_tokens,
    extract_prediction,
    parse_label_set,
)
from roundtable.context import TurnKind, render_view
from roundtable.harness import scripted_setup
from roundtable.strategy import StrategyConfig
from roundtable.tasks import GeneratorParams, generate_ses


# Reference cost/accuracy rows for the two task families, in canonical
# strategy order: (accuracy %, mean input tokens, mean output tokens,
# mean rounds). The last column of each entry is the golden 2-decimal
# normalized token-accuracy ratio for that batch.
GOLDEN_PDDP_ROWS = {
    "G1-P1-I1-C1": (50.7, 25663, 2184, 3.28, 0.21),
    "G1-P1-I2-C1": (57.8, 6470, 854, 1.30, 0.82),
    "G1-P1-I3-C1": (45.2, 9531, 1127, 1.65, 0.45),
    "G1-P1-I1-C2": (46.2, 52400, 15568, 4.43, 0.06),
    "G1-P1-I2-C2": (59.8, 15057, 3046, 1.56, 0.31),
    "G1-P1-I3-C2": (46.7, 19673, 4100, 1.81, 0.18),
    "G1-P2-I4-C2": (50.8, 348035, 58795, 9.91, 0.01),
    "G2-P3-I1-C3": (46.2, 13119, 2412, 2.04, 0.28),
    "G2-P3-I2-C3": (58.8, 4867, 841, 1.03, 1.00),
}

GOLDEN_EBFC_ROWS = {
    "G1-P1-I1-C1": (49.3, 28099, 1990, 6.28, 0.06),
    "G1-P1-I2-C1": (70.4, 13361, 1155, 3.35, 0.18),
    "G1-P1-I3-C1": (68.8, 15368, 1284, 3.99, 0.16),
    "G1-P1-I1-C2": (81.4, 20074, 6780, 3.46, 0.08),
    "G1-P1-I2-C2": (84.4, 14600, 3073, 2.00, 0.15),
    "G1-P1-I3-C2": (77.9, 13125, 2901, 2.14, 0.15),
    "G1-P2-I4-C2": (86.4, 30085, 6125, 2.76, 0.07),
    "G2-P3-I1-C3": (86.9, 2111, 490, 1.16, 1.00),
    "G2-P3-I2-C3": (85.4, 2859, 452, 1.10, 0.86),
}


def make_ses_task(n_segments: int = 6, n_consistent: int = 1, seed: int = 7):
    params = GeneratorParams(
        scenario="ses", n_tasks=1, n_segments=n_segments, n_consistent=n_consistent, seed=seed
    )
    return generate_ses(params)[0]


def make_ses_batch(n_tasks: int, n_segments: int = 6, n_consistent: int = 1, seed: int = 7):
    params = GeneratorParams(
        scenario="ses", n_tasks=n_tasks, n_segments=n_segments, n_consistent=n_consistent, seed=seed
    )
    return generate_ses(params)


@pytest.fixture
def ses_task():
    return make_ses_task()


def informed_setup(task, label: str, *, max_rounds: int = 10, seed: int = 0, **profile_kwargs):
    """Roster of segment-reading agents: verdict holders lead, others adopt."""
    strategy = StrategyConfig.from_label(label, max_rounds=max_rounds, seed=seed)
    profile = ScriptedAgentConfig(
        initial_label=task.label_set[-1],
        stubbornness=profile_kwargs.pop("stubbornness", 1),
        persuasion=profile_kwargs.pop("persuasion", "adopt_first_informed"),
        addressee_rule=profile_kwargs.pop("addressee_rule", "peers_disagreeing"),
        summarizer=profile_kwargs.pop("summarizer", "truncate:400"),
        **profile_kwargs,
    )
    roster, backends = scripted_setup(task, strategy, agent_profile=profile)
    return strategy, roster, backends


class StubBackend:
    """Duck-typed backend replaying canned replies, for failure-path tests."""

    def __init__(self, replies, token_scheme: TokenScheme = TokenScheme.WHITESPACE):
        self.replies = list(replies)
        self.token_scheme = token_scheme
        self.calls = []

    def respond(self, spec, view, turn_kind, *, round_index, want_addressees=False):
        self.calls.append((spec.id, turn_kind, round_index))
        if not self.replies:
            raise AssertionError("stub backend exhausted")
        item = self.replies.pop(0)
        if isinstance(item, Exception):
            raise item
        if callable(item):
            item = item(spec, view, turn_kind, round_index)
        if isinstance(item, str):
            prediction = None
            if turn_kind in (TurnKind.DISCUSSION, TurnKind.FINAL):
                prediction = extract_prediction(item, parse_label_set(view.task_statement))
            item = AgentReply(
                content=item,
                prediction=prediction,
                input_tokens=count_tokens(render_view(view), self.token_scheme),
                output_tokens=count_tokens(item, self.token_scheme),
            )
        return item
