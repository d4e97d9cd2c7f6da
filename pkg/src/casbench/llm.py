"""Chat-completion gateway: vendor adapters, retrying HTTP client, scripted mock."""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import asdict, dataclass

import httpx

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


class LLMError(Exception):
    pass


class TransportError(LLMError):
    """Transport-level failure that survived all retries."""


class ProviderRefusal(LLMError):
    def __init__(self, status, payload):
        super().__init__(f"provider refused request (HTTP {status}): {payload!r}"[:500])
        self.status = status
        self.payload = payload


class BudgetExceeded(LLMError):
    pass


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"bad role {self.role!r}")
        if self.role != "system" and not self.content:
            raise ValueError(f"{self.role} message must have content")


@dataclass
class GenerationParams:
    model_id: str = ""
    max_tokens: int = 1024
    thinking_budget: int | None = None
    temperature: float | None = None

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.thinking_budget is not None and self.thinking_budget < 1:
            raise ValueError("thinking_budget must be >= 1")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class Usage:
    input_tokens: int = 0
    output_tokens: int = 0
    thinking_tokens: int = 0

    def __post_init__(self):
        if min(self.input_tokens, self.output_tokens, self.thinking_tokens) < 0:
            raise ValueError("usage counts must be >= 0")

    @property
    def total(self):
        return self.input_tokens + self.output_tokens + self.thinking_tokens

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def validate_history(history):
    if not history or history[0].role != "system":
        raise ValueError("history must begin with a system message")
    if any(m.role == "system" for m in history[1:]):
        raise ValueError("history must contain exactly one system message")


# -- adapters


class AnthropicAdapter:
    name = "anthropic"
    default_endpoint = "https://api.anthropic.com/v1/messages"

    def __init__(self, endpoint=None, api_version="2023-06-01"):
        self.endpoint = endpoint or self.default_endpoint
        self.api_version = api_version

    def headers(self, api_key):
        return {
            "x-api-key": api_key,
            "anthropic-version": self.api_version,
            "content-type": "application/json",
        }

    def build_request(self, history, params):
        body = {
            "model": params.model_id,
            "max_tokens": params.max_tokens,
            "system": history[0].content,
            "messages": [{"role": m.role, "content": m.content} for m in history[1:]],
        }
        if params.thinking_budget is not None:
            # the API wants budget_tokens < max_tokens, so the visible answer
            # keeps its own max_tokens allowance on top of the budget
            body["thinking"] = {"type": "enabled", "budget_tokens": params.thinking_budget}
            body["max_tokens"] = params.max_tokens + params.thinking_budget
        if params.temperature is not None:
            body["temperature"] = params.temperature
        return body

    def parse_response(self, payload):
        try:
            blocks = payload["content"]
            text = "".join(b.get("text", "") for b in blocks if b.get("type") == "text")
            u = payload.get("usage", {})
            usage = Usage(int(u.get("input_tokens", 0)), int(u.get("output_tokens", 0)))
        except (KeyError, TypeError, AttributeError) as e:
            raise ProviderRefusal(200, payload) from e
        return text, usage


class OpenAICompatAdapter:
    name = "openai"
    default_endpoint = "https://api.openai.com/v1/chat/completions"

    def __init__(self, endpoint=None):
        self.endpoint = endpoint or self.default_endpoint

    def headers(self, api_key):
        return {"authorization": f"Bearer {api_key}", "content-type": "application/json"}

    def build_request(self, history, params):
        body = {
            "model": params.model_id,
            "max_tokens": params.max_tokens,
            "messages": [{"role": m.role, "content": m.content} for m in history],
        }
        if params.thinking_budget is not None:
            body["reasoning"] = {"max_tokens": params.thinking_budget}
        if params.temperature is not None:
            body["temperature"] = params.temperature
        return body

    def parse_response(self, payload):
        try:
            text = payload["choices"][0]["message"]["content"] or ""
            u = payload.get("usage", {})
            details = u.get("completion_tokens_details") or {}
            thinking = int(details.get("reasoning_tokens", 0) or 0)
            usage = Usage(
                int(u.get("prompt_tokens", 0)),
                max(int(u.get("completion_tokens", 0)) - thinking, 0),
                thinking,
            )
        except (KeyError, IndexError, TypeError, AttributeError) as e:
            raise ProviderRefusal(200, payload) from e
        return text, usage


ADAPTERS = {"anthropic": AnthropicAdapter, "openai": OpenAICompatAdapter}


def make_adapter(name, endpoint=None):
    try:
        return ADAPTERS[name](endpoint=endpoint)
    except KeyError:
        raise ValueError(f"unknown provider adapter {name!r}") from None


# -- budget


class TokenBudget:
    """Per-run ceiling on total tokens spent."""

    def __init__(self, limit: int | None):
        self.limit = limit
        self.spent = 0
        self._lock = threading.Lock()

    def check(self):
        if self.limit is not None and self.spent >= self.limit:
            raise BudgetExceeded(f"token budget {self.limit} exhausted ({self.spent} spent)")

    def charge(self, usage: Usage):
        with self._lock:
            self.spent += usage.total


# -- clients

RETRY_STATUS = {408, 429, 500, 502, 503, 504, 529}
BACKOFF = (1.0, 4.0, 16.0)


class HttpLLM:
    """Whole-message chat client for one vendor adapter.

    Transport failures and transient HTTP statuses are retried with the
    ``backoff`` schedule; every other non-2xx status is a ProviderRefusal.
    """

    def __init__(self, adapter, api_key, *, transport=None, timeout=600.0,
                 backoff=BACKOFF, sleep=time.sleep, budget: TokenBudget | None = None):
        if not api_key:
            raise ValueError("an API key is required")
        self.adapter = adapter
        self.api_key = api_key
        self.backoff = tuple(backoff)
        self.sleep = sleep
        self.budget = budget
        self._http = httpx.Client(transport=transport, timeout=timeout)
        self.calls = 0

    def close(self):
        self._http.close()

    def complete(self, history, params):
        validate_history(history)
        if self.budget:
            self.budget.check()
        body = self.adapter.build_request(history, params)
        headers = self.adapter.headers(self.api_key)
        last = None
        for attempt in range(len(self.backoff) + 1):
            if attempt:
                delay = self.backoff[attempt - 1]
                log.warning("retrying LLM call in %gs after %s", delay, last)
                self.sleep(delay)
            self.calls += 1
            try:
                resp = self._http.post(self.adapter.endpoint, json=body, headers=headers)
            except httpx.TransportError as e:
                last = e
                continue
            if resp.status_code in RETRY_STATUS:
                last = f"HTTP {resp.status_code}"
                continue
            try:
                payload = resp.json()
            except ValueError:
                payload = resp.text
            if resp.status_code >= 400:
                raise ProviderRefusal(resp.status_code, payload)
            text, usage = self.adapter.parse_response(payload)
            if not text:
                raise ProviderRefusal(resp.status_code, payload)
            if self.budget:
                self.budget.charge(usage)
            return ChatMessage("assistant", text), usage
        raise TransportError(f"gave up after {len(self.backoff) + 1} attempts: {last}")


class ScriptedLLM:
    """Deterministic stand-in that pops scripted replies in order.

    Every request is also rendered through ``adapter`` and kept in
    ``requests`` so tests can inspect the wire body.
    """

    def __init__(self, responses, adapter=None):
        self._queue = []
        for r in responses:
            if isinstance(r, str):
                r = (r, Usage())
            self._queue.append((r[0], r[1] if r[1] is not None else Usage()))
        self.adapter = adapter or AnthropicAdapter()
        self.requests: list[dict] = []
        self._lock = threading.Lock()

    @property
    def remaining(self):
        return len(self._queue)

    def complete(self, history, params):
        validate_history(history)
        with self._lock:
            self.requests.append(self.adapter.build_request(history, params))
            if not self._queue:
                raise TransportError("scripted mock has no responses left")
            text, usage = self._queue.pop(0)
        return ChatMessage("assistant", text), Usage(**asdict(usage))

    def dump_log(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for req in self.requests:
                fh.write(json.dumps(req, ensure_ascii=False) + "\n")


def script_mock(responses, adapter=None) -> ScriptedLLM:
    return ScriptedLLM(responses, adapter=adapter)
