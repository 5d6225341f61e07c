"""HTTP chat-completion backend speaking the OpenAI-compatible protocol.

Requests are ``{model, messages, temperature, max_tokens}`` POSTed to the
configured endpoint; token counts come from the response ``usage`` fields
(``prompt_tokens``/``completion_tokens``), falling back to a deterministic
counter when the provider reports none. Prompts are rendered from
versioned template files with ``{segment}``, ``{task_statement}``,
``{history}`` and ``{instruction}`` placeholders.
"""
from __future__ import annotations

import os
import re
import threading
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import httpx

from .agents import (
    AgentReply,
    AgentSpec,
    TokenScheme,
    count_tokens,
    extract_prediction,
    parse_label_set,
)
from .context import AgentView, TurnKind
from .errors import BackendError

DEFAULT_TEMPLATE_VERSION = "v1"

_SLOT_RE = re.compile(r"\{(segment|task_statement|history|instruction)\}")


def render_template(template: str, view: AgentView) -> str:
    slots = {
        "segment": view.role_preamble,
        "task_statement": view.task_statement,
        "history": view.visible_history,
        "instruction": view.turn_instruction,
    }
    return _SLOT_RE.sub(lambda m: slots[m.group(1)], template)


def load_templates(template_dir: str | Path | None = None) -> dict[TurnKind, str]:
    """Read the five turn templates from a directory (default: packaged v1)."""
    templates = {}
    if template_dir is None:
        base = resources.files("roundtable").joinpath("templates", DEFAULT_TEMPLATE_VERSION)
        for kind in TurnKind:
            templates[kind] = base.joinpath(f"{kind.value}.txt").read_text(encoding="utf-8")
    else:
        base_path = Path(template_dir)
        for kind in TurnKind:
            templates[kind] = (base_path / f"{kind.value}.txt").read_text(encoding="utf-8")
    return templates


@dataclass(frozen=True)
class LlmBackendConfig:
    endpoint_url: str
    model_name: str
    temperature: float = 0.0
    max_output_tokens: int = 512
    retry_count: int = 2
    backoff: tuple[float, ...] = (0.5, 1.0)
    api_key_env: str = "OPENAI_API_KEY"
    template_dir: str | None = None
    max_in_flight: int = 4
    timeout: float = 60.0
    fallback_scheme: TokenScheme = TokenScheme.CHARS_DIV_4

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.retry_count < 0:
            raise ValueError("retry_count must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.fallback_scheme is TokenScheme.PROVIDER_REPORTED:
            raise ValueError("fallback scheme must be computable")


class HttpBackend:
    """Chat-completion client with bounded retries and an in-flight cap."""

    def __init__(self, config: LlmBackendConfig, *, sleep=time.sleep):
        self.config = config
        self.token_scheme = TokenScheme.PROVIDER_REPORTED
        self._templates = load_templates(config.template_dir)
        self._semaphore = threading.BoundedSemaphore(config.max_in_flight)
        self._sleep = sleep

    def respond(
        self,
        spec: AgentSpec,
        view: AgentView,
        turn_kind: TurnKind,
        *,
        round_index: int,
        want_addressees: bool = False,
    ) -> AgentReply:
        prompt = render_template(self._templates[turn_kind], view)
        payload = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_output_tokens,
        }
        data = self._post_with_retries(payload)
        content, input_tokens, output_tokens = self._unpack(data, prompt)
        label_set = parse_label_set(view.task_statement)
        prediction = None
        wants = None
        addressees = None
        if turn_kind in (TurnKind.DISCUSSION, TurnKind.FINAL):
            prediction = extract_prediction(content, label_set)
        if turn_kind is TurnKind.INTENT:
            wants = _parse_intent(content)
        if want_addressees:
            addressees = _parse_addressees(content, spec.id)
        return AgentReply(
            content=content,
            prediction=prediction,
            wants_to_speak=wants,
            addressees=addressees,
            input_tokens=input_tokens,
            output_tokens=output_tokens,
        )

    def _post_with_retries(self, payload: dict) -> dict:
        headers = {}
        api_key = os.environ.get(self.config.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        last_error = "no attempt made"
        for attempt in range(self.config.retry_count + 1):
            if attempt > 0:
                backoff = self.config.backoff
                self._sleep(backoff[min(attempt - 1, len(backoff) - 1)] if backoff else 0.0)
            try:
                with self._semaphore:
                    response = httpx.post(
                        self.config.endpoint_url,
                        json=payload,
                        headers=headers,
                        timeout=self.config.timeout,
                    )
                response.raise_for_status()
                return response.json()
            except (httpx.HTTPError, ValueError) as exc:
                last_error = f"{type(exc).__name__}: {exc}"
        raise BackendError(
            f"chat endpoint failed after {self.config.retry_count + 1} attempts: {last_error}"
        )

    def _unpack(self, data: dict, prompt: str) -> tuple[str, int, int]:
        try:
            content = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed chat completion response: {exc}")
        usage = data.get("usage") or {}
        input_tokens = usage.get("prompt_tokens")
        output_tokens = usage.get("completion_tokens")
        if not isinstance(input_tokens, int) or input_tokens < 0:
            input_tokens = count_tokens(prompt, self.config.fallback_scheme)
        if not isinstance(output_tokens, int) or output_tokens < 0:
            output_tokens = count_tokens(content, self.config.fallback_scheme)
        return content, input_tokens, output_tokens


def _parse_intent(content: str) -> bool | None:
    for line in content.splitlines():
        word = line.strip().rstrip(".!").upper()
        if word == "SPEAK":
            return True
        if word == "PASS":
            return False
    return None


def _parse_addressees(content: str, speaker_id: str) -> tuple[str, ...] | None:
    for line in content.splitlines():
        stripped = line.strip()
        if stripped.upper().startswith("TO:"):
            rest = stripped[3:].strip()
            if rest.lower() == "all" or not rest:
                return None
            ids = tuple(part.strip() for part in rest.split(",") if part.strip() != speaker_id)
            return tuple(i for i in ids if i) or None
    return None
