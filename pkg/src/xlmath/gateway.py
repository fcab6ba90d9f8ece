"""Provider-agnostic chat-completion and reward-scoring client.

Every nondeterministic external call goes through this module. The client
adds a content-addressed disk cache (interrupted runs resume without
re-billing), bounded retries with exponential backoff, and a bounded
in-flight window shared by all concurrent callers. The mock backend is fully
scripted and deterministic, which is what makes whole harness runs
reproducible bit-for-bit.

Token accounting always comes from the backend. The mock counts
whitespace-delimited tokens; consistency within one comparison is what
matters for the cost metric, not the tokenizer choice.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

from .core import DataModelError, SamplingConfig, TokenUsage

logger = logging.getLogger(__name__)

DEFAULT_RETRIES = 3
DEFAULT_BACKOFF = 0.25


class GatewayError(RuntimeError):
    """Backend failure surfaced after retries are exhausted."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[tuple[str, str], ...]
    sampling: SamplingConfig = SamplingConfig()

    def __post_init__(self) -> None:
        if not self.messages:
            raise DataModelError("chat request needs at least one message")
        for role, _ in self.messages:
            if role not in ("system", "user", "assistant"):
                raise DataModelError(f"unknown message role: {role!r}")

    @classmethod
    def single(cls, model_id: str, prompt: str, sampling: SamplingConfig) -> ChatRequest:
        return cls(model_id=model_id, messages=(("user", prompt),), sampling=sampling)

    def cache_key(self) -> str:
        payload = json.dumps(
            {
                "model_id": self.model_id,
                "messages": self.messages,
                "sampling": self.sampling.to_dict(),
            },
            ensure_ascii=False,
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: TokenUsage
    provider_meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RewardScoreRequest:
    question: str
    response: str

    def __post_init__(self) -> None:
        if not self.question or not self.response:
            raise DataModelError("reward request needs non-empty question and response")

    def cache_key(self) -> str:
        payload = json.dumps(
            {"question": self.question, "response": self.response},
            ensure_ascii=False,
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ChatBackend(Protocol):
    backend_id: str

    def complete_once(self, request: ChatRequest) -> ChatResponse: ...


class RewardBackend(Protocol):
    backend_id: str

    def score_once(self, request: RewardScoreRequest) -> float: ...


def _count_tokens(text: str) -> int:
    return len(text.split())


class MockBackendError(GatewayError):
    """A request reached the mock that no fixture rule covers."""


class MockBackend:
    """Scripted chat backend driven by ordered first-match-wins rules.

    A rule is either ``{"contains": [substr, ...], "response": text}``,
    matching when every substring occurs in the concatenated message text, or
    ``{"request_hash": hex, "response": text}`` matching one exact request by
    its content hash. Instrumented with call and in-flight counters so tests
    can observe the client's concurrency window.
    """

    def __init__(self, rules: Sequence[dict], backend_id: str = "mock", latency: float = 0.0):
        self.backend_id = backend_id
        self.latency = latency
        self._rules = [self._check_rule(rule) for rule in rules]
        self._lock = threading.Lock()
        self.call_count = 0
        self.in_flight = 0
        self.max_in_flight = 0

    @staticmethod
    def _check_rule(rule: dict) -> dict:
        if "response" not in rule or ("contains" not in rule) == ("request_hash" not in rule):
            raise DataModelError(
                f"mock rule needs 'response' plus 'contains' or 'request_hash': {rule!r}"
            )
        if isinstance(rule.get("contains"), str):
            rule = dict(rule, contains=[rule["contains"]])
        return rule

    @classmethod
    def from_file(cls, path, backend_id: str | None = None) -> MockBackend:
        with open(path, "r", encoding="utf-8") as handle:
            rules = json.load(handle)
        return cls(rules, backend_id=backend_id or f"mock:{Path(path).name}")

    def complete_once(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.call_count += 1
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
        try:
            if self.latency:
                time.sleep(self.latency)
            haystack = "\n".join(text for _, text in request.messages)
            request_hash = request.cache_key()
            for rule in self._rules:
                if "request_hash" in rule:
                    matched = rule["request_hash"] == request_hash
                else:
                    matched = all(needle in haystack for needle in rule["contains"])
                if matched:
                    text = rule["response"]
                    return ChatResponse(
                        text=text,
                        usage=TokenUsage(_count_tokens(haystack), _count_tokens(text)),
                        provider_meta={"backend": self.backend_id},
                    )
            raise MockBackendError(
                f"unscripted fixture: no mock rule matches request "
                f"(first 80 chars: {haystack[:80]!r})"
            )
        finally:
            with self._lock:
                self.in_flight -= 1


class MockRewardBackend:
    """Scripted reward scorer: rules match substrings of question/response."""

    def __init__(self, rules: Sequence[dict], backend_id: str = "mock-reward"):
        self.backend_id = backend_id
        self._rules = list(rules)
        self.call_count = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path, backend_id: str | None = None) -> MockRewardBackend:
        with open(path, "r", encoding="utf-8") as handle:
            rules = json.load(handle)
        return cls(rules, backend_id=backend_id or f"mock-reward:{Path(path).name}")

    def score_once(self, request: RewardScoreRequest) -> float:
        with self._lock:
            self.call_count += 1
        for rule in self._rules:
            if rule.get("question_contains", "") in request.question and (
                rule.get("response_contains", "") in request.response
            ):
                return float(rule["score"])
        raise MockBackendError("unscripted fixture: no reward rule matches request")


class OpenAiChatBackend:
    """Chat-completions backend for OpenAI-compatible HTTP endpoints."""

    def __init__(
        self,
        endpoint: str,
        model_id: str,
        auth_env: str | None = None,
        timeout: float = 120.0,
        backend_id: str | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model_id = model_id
        self.auth_env = auth_env
        self.timeout = timeout
        self.backend_id = backend_id or f"{self.endpoint}#{model_id}"

    def complete_once(self, request: ChatRequest) -> ChatResponse:
        import httpx

        headers = {}
        if self.auth_env:
            token = os.environ.get(self.auth_env)
            if not token:
                raise GatewayError(f"auth token variable {self.auth_env} is not set")
            headers["Authorization"] = f"Bearer {token}"
        # request.model_id is a cache-namespace label; the wire model is ours
        body = {
            "model": self.model_id,
            "messages": [
                {"role": role, "content": text} for role, text in request.messages
            ],
            "temperature": request.sampling.temperature,
            "top_p": request.sampling.top_p,
            "max_tokens": request.sampling.max_tokens,
        }
        if request.sampling.seed is not None:
            body["seed"] = request.sampling.seed
        try:
            response = httpx.post(
                f"{self.endpoint}/chat/completions",
                json=body,
                headers=headers,
                timeout=self.timeout,
            )
            response.raise_for_status()
            data = response.json()
        except httpx.HTTPError as exc:
            raise GatewayError(f"chat backend transport failure: {exc}") from exc
        try:
            text = data["choices"][0]["message"]["content"]
            usage = data.get("usage", {})
            token_usage = TokenUsage(
                int(usage.get("prompt_tokens", 0)),
                int(usage.get("completion_tokens", 0)),
            )
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed backend response: {data!r}") from exc
        return ChatResponse(
            text=text, usage=token_usage, provider_meta={"backend": self.backend_id}
        )


class HttpRewardBackend:
    """Reward endpoint: POST {question, response} -> {"score": float}."""

    def __init__(self, endpoint: str, auth_env: str | None = None, timeout: float = 120.0):
        self.endpoint = endpoint
        self.auth_env = auth_env
        self.timeout = timeout
        self.backend_id = endpoint

    def score_once(self, request: RewardScoreRequest) -> float:
        import httpx

        headers = {}
        if self.auth_env:
            token = os.environ.get(self.auth_env)
            if not token:
                raise GatewayError(f"auth token variable {self.auth_env} is not set")
            headers["Authorization"] = f"Bearer {token}"
        try:
            response = httpx.post(
                self.endpoint,
                json={"question": request.question, "response": request.response},
                headers=headers,
                timeout=self.timeout,
            )
            response.raise_for_status()
            return float(response.json()["score"])
        except httpx.HTTPError as exc:
            raise GatewayError(f"reward backend transport failure: {exc}") from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise GatewayError(f"malformed reward response: {exc}") from exc


class DiskCache:
    """Content-addressed response cache with atomic writes.

    Writes go to a temp file then rename, so a crash never leaves a torn
    entry; a cache hit returns byte-identical text and usage.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        try:
            with open(path, "r", encoding="utf-8") as handle:
                return json.load(handle)
        except FileNotFoundError:
            return None
        except (OSError, json.JSONDecodeError):
            logger.warning("dropping unreadable cache entry %s", path)
            return None

    def put(self, key: str, value: dict) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".tmp.{os.getpid()}.{threading.get_ident()}")
        with open(tmp, "w", encoding="utf-8") as handle:
            json.dump(value, handle, ensure_ascii=False, sort_keys=True)
        os.replace(tmp, path)


class GatewayClient:
    """Caching, retrying, concurrency-bounded front door to the backends."""

    def __init__(
        self,
        backend: ChatBackend,
        reward_backend: RewardBackend | None = None,
        cache_dir: Path | str | None = None,
        max_in_flight: int = 4,
        retries: int = DEFAULT_RETRIES,
        backoff: float = DEFAULT_BACKOFF,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if max_in_flight < 1:
            raise DataModelError("max_in_flight must be >= 1")
        self.backend = backend
        self.reward_backend = reward_backend
        self.cache = DiskCache(cache_dir) if cache_dir is not None else None
        self.max_in_flight = max_in_flight
        self.retries = retries
        self.backoff = backoff
        self._sleep = sleep
        self._gate = threading.Semaphore(max_in_flight)
        self._memory: dict[str, dict] = {}
        self._memory_lock = threading.Lock()

    @property
    def backend_id(self) -> str:
        return self.backend.backend_id

    def _cached(self, key: str) -> dict | None:
        with self._memory_lock:
            if key in self._memory:
                return self._memory[key]
        if self.cache is not None:
            return self.cache.get(key)
        return None

    def _store(self, key: str, value: dict) -> None:
        with self._memory_lock:
            self._memory[key] = value
        if self.cache is not None:
            self.cache.put(key, value)

    def _with_retries(self, call: Callable[[], object], what: str):
        attempts = self.retries + 1
        for attempt in range(1, attempts + 1):
            try:
                return call()
            except MockBackendError:
                raise  # scripting gaps are bugs in the fixture, not transient faults
            except GatewayError as exc:
                if attempt == attempts:
                    raise GatewayError(
                        f"{what} failed after {attempt} attempts: {exc}", attempts=attempt
                    ) from exc
                delay = self.backoff * (2 ** (attempt - 1))
                logger.warning("%s attempt %d failed (%s); retrying", what, attempt, exc)
                self._sleep(delay)
        raise AssertionError("unreachable")

    def complete(self, request: ChatRequest) -> ChatResponse:
        """Chat completion with cache, retries, and the in-flight bound.

        An empty response text is surfaced as a provider error rather than
        cached, so a flaky provider cannot poison reruns.
        """
        key = request.cache_key()
        hit = self._cached(key)
        if hit is not None:
            return ChatResponse(
                text=hit["text"],
                usage=TokenUsage.from_dict(hit["usage"]),
                provider_meta=dict(hit.get("provider_meta", {})),
            )

        def call() -> ChatResponse:
            with self._gate:
                response = self.backend.complete_once(request)
            if not response.text:
                raise GatewayError("provider returned empty response text")
            return response

        response = self._with_retries(call, "chat completion")
        self._store(
            key,
            {
                "text": response.text,
                "usage": response.usage.to_dict(),
                "provider_meta": response.provider_meta,
            },
        )
        return response

    def reward_score(self, request: RewardScoreRequest) -> float:
        """Scalar quality score for a (question, response) pair."""
        if self.reward_backend is None:
            raise GatewayError("no reward backend configured")
        key = "rm-" + request.cache_key()
        hit = self._cached(key)
        if hit is not None:
            return float(hit["score"])

        def call() -> float:
            with self._gate:
                return self.reward_backend.score_once(request)

        score = float(self._with_retries(call, "reward scoring"))
        self._store(key, {"score": score})
        return score
