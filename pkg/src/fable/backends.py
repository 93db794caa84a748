"""Pluggable generation, pairwise-scoring, and embedding backends.

Three roles, each with a deterministic mock and an HTTP client:

* generation: chat-style completion, ``generate(ChatRequest) -> str``
* scoring: pairwise relevance, ``score(text_a, text_b) -> float in [0, 1]``
* embedding: ``embed(text) -> list[float]`` of fixed dimension

Mocks are pure functions of (input, seed) so every pipeline run in mock
mode is bit-reproducible. HTTP clients speak a single configurable
endpoint per role with JSON bodies mirroring the call shapes; retries
apply to transport/5xx failures only, never to validation failures.
"""

from __future__ import annotations

import hashlib
import math
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence, TypeVar

import requests

from .errors import BackendError, TransportError, ValidationError

ROLES = ("system", "user", "assistant")

T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion invocation: an ordered transcript plus decoding
    parameters. Roles must alternate user/assistant after an optional
    leading system message, and at least one user message is required."""

    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_tokens: int = 512
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValidationError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_tokens <= 0:
            raise ValidationError(f"max_tokens must be > 0, got {self.max_tokens}")
        if not self.messages:
            raise ValidationError("request needs at least one message")
        for role, text in self.messages:
            if role not in ROLES:
                raise ValidationError(f"unknown message role '{role}'")
            if not text:
                raise ValidationError(f"empty text in '{role}' message")
        body = list(self.messages)
        if body[0][0] == "system":
            body = body[1:]
        if not body or body[0][0] != "user":
            raise ValidationError("first non-system message must be from the user")
        for (role_a, _), (role_b, _) in zip(body, body[1:]):
            if role_a == role_b:
                raise ValidationError(
                    f"roles must alternate after the system message, got "
                    f"'{role_a}' twice in a row"
                )
        if not any(role == "user" for role, _ in self.messages):
            raise ValidationError("request needs at least one user message")


@dataclass(frozen=True)
class BackendPolicy:
    """Retry, backoff, timeout, and parallelism budget for remote calls."""

    max_concurrency: int = 4
    max_retries: int = 2
    backoff_base: float = 0.1
    backoff_multiplier: float = 2.0
    timeout: float = 30.0

    def __post_init__(self) -> None:
        if self.max_concurrency < 1:
            raise ValidationError("max_concurrency must be >= 1")
        if self.max_retries < 0:
            raise ValidationError("max_retries must be >= 0")


class BackendStats:
    """Thread-safe request/retry counters, exposed for tests and manifests."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.requests = 0
        self.retries = 0
        self.failures = 0

    def record(self, retries: int, failed: bool = False) -> None:
        with self._lock:
            self.requests += 1
            self.retries += retries
            if failed:
                self.failures += 1

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return {
                "requests": self.requests,
                "retries": self.retries,
                "failures": self.failures,
            }


def transcript_hash(messages: Sequence[tuple[str, str]], length: int = 8) -> str:
    """Short stable digest of a message transcript."""
    framed = "\x1e".join(f"{role}\x1f{text}" for role, text in messages)
    return hashlib.sha256(framed.encode("utf-8")).hexdigest()[:length]


def logistic(x: float) -> float:
    """Map an unbounded raw score into (0, 1)."""
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    ex = math.exp(x)
    return ex / (1.0 + ex)


def tokenize(text: str) -> list[str]:
    return re.findall(r"\w+", text.lower())


def _retrying(
    call: Callable[[], T],
    policy: BackendPolicy,
    stats: BackendStats,
    sleeper: Callable[[float], None],
) -> T:
    retries = 0
    while True:
        try:
            result = call()
        except TransportError as exc:
            if retries >= policy.max_retries:
                stats.record(retries, failed=True)
                raise BackendError(
                    f"transport failed after {retries} retries: {exc}"
                ) from exc
            sleeper(policy.backoff_base * policy.backoff_multiplier**retries)
            retries += 1
            continue
        stats.record(retries)
        return result


# ---------------------------------------------------------------------------
# Mock backends


class MockGenerationBackend:
    """Deterministic stand-in for a chat-completion service.

    Returns ``GEN[<transcript-hash>:<seed>]`` where the seed is the
    request's seed when set, the backend's otherwise. Pure function of
    (messages, seed); decoding parameters do not affect the output.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.stats = BackendStats()

    @property
    def backend_id(self) -> str:
        return f"mock-gen#{self.seed}"

    def generate(self, request: ChatRequest) -> str:
        seed = request.seed if request.seed is not None else self.seed
        self.stats.record(0)
        return f"GEN[{transcript_hash(request.messages)}:{seed}]"


class MockScoringBackend:
    """Deterministic pairwise scorer.

    Scripted pairs take precedence; everything else falls back to
    ``default``: a constant, a callable (text_a, text_b) -> score, or
    None for token-set Jaccard overlap (so score(t, t) = 1 and texts with
    no shared tokens score 0).
    """

    def __init__(
        self,
        table: Optional[Mapping[tuple[str, str], float]] = None,
        default: float | Callable[[str, str], float] | None = None,
    ):
        self.table = dict(table or {})
        self.default = default
        self.stats = BackendStats()

    @property
    def backend_id(self) -> str:
        return "mock-score"

    def score(self, text_a: str, text_b: str) -> float:
        if not text_a or not text_b:
            raise ValidationError("score() requires two non-empty texts")
        self.stats.record(0)
        if (text_a, text_b) in self.table:
            return self.table[(text_a, text_b)]
        if callable(self.default):
            return self.default(text_a, text_b)
        if self.default is not None:
            return float(self.default)
        a, b = set(tokenize(text_a)), set(tokenize(text_b))
        if not a and not b:
            return 1.0
        union = a | b
        return len(a & b) / len(union)


class MockEmbeddingBackend:
    """Seeded feature-hashing embedder of fixed dimension.

    Each token maps to one signed bucket via a stable digest of
    (seed, token); a text's vector is the sum of its token features.
    Texts whose token buckets do not collide embed orthogonally.
    """

    def __init__(self, dim: int = 16, seed: int = 0):
        if dim < 1:
            raise ValidationError("embedding dimension must be >= 1")
        self.dim = dim
        self.seed = seed
        self.stats = BackendStats()

    @property
    def backend_id(self) -> str:
        return f"mock-embed#{self.seed}d{self.dim}"

    def token_bucket(self, token: str) -> tuple[int, int]:
        """(bucket index, sign) a token hashes to. Exposed so fixtures can
        construct non-colliding token sets."""
        digest = hashlib.sha256(f"{self.seed}:{token}".encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:4], "big") % self.dim
        sign = 1 if digest[4] % 2 == 0 else -1
        return bucket, sign

    def embed(self, text: str) -> list[float]:
        if not text:
            raise ValidationError("embed() requires non-empty text")
        self.stats.record(0)
        vector = [0.0] * self.dim
        for token in tokenize(text):
            bucket, sign = self.token_bucket(token)
            vector[bucket] += float(sign)
        return vector


# ---------------------------------------------------------------------------
# HTTP backends

Transport = Callable[[str, dict, dict, float], Any]


def default_transport(url: str, payload: dict, headers: dict, timeout: float) -> Any:
    try:
        response = requests.post(url, json=payload, headers=headers, timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(str(exc)) from exc
    if response.status_code >= 500:
        raise TransportError(f"HTTP {response.status_code} from {url}")
    if response.status_code >= 400:
        raise BackendError(
            f"HTTP {response.status_code} from {url}: {response.text[:200]}"
        )
    try:
        return response.json()
    except ValueError as exc:
        raise BackendError(f"non-JSON response from {url}") from exc


class _HttpBackend:
    def __init__(
        self,
        url: str,
        token: Optional[str] = None,
        policy: BackendPolicy = BackendPolicy(),
        transport: Optional[Transport] = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        if not url:
            raise ValidationError("backend URL must be non-empty")
        self.url = url
        self.token = token
        self.policy = policy
        self.transport = transport or default_transport
        self.sleeper = sleeper
        self.stats = BackendStats()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        return headers

    def _post(self, payload: dict) -> Any:
        return _retrying(
            lambda: self.transport(self.url, payload, self._headers(), self.policy.timeout),
            self.policy,
            self.stats,
            self.sleeper,
        )


class HttpGenerationBackend(_HttpBackend):
    """POST {messages, temperature, max_tokens, seed} -> {"text": ...}."""

    @property
    def backend_id(self) -> str:
        return f"http-gen:{self.url}"

    def generate(self, request: ChatRequest) -> str:
        payload: dict[str, Any] = {
            "messages": [{"role": role, "text": text} for role, text in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        body = self._post(payload)
        text = body.get("text") if isinstance(body, Mapping) else None
        if not text:
            raise BackendError(f"empty completion from {self.url}")
        return text


class HttpScoringBackend(_HttpBackend):
    """POST {text_a, text_b} -> {"score": raw}.

    Raw service scores are mapped into [0, 1]: ``normalize="logistic"``
    (the default, for unbounded cross-encoder outputs) or ``"identity"``
    for services that already emit normalized scores.
    """

    def __init__(self, *args: Any, normalize: str = "logistic", **kwargs: Any):
        super().__init__(*args, **kwargs)
        if normalize not in ("logistic", "identity"):
            raise ValidationError(f"unknown score normalization '{normalize}'")
        self.normalize = normalize

    @property
    def backend_id(self) -> str:
        return f"http-score:{self.url}"

    def score(self, text_a: str, text_b: str) -> float:
        if not text_a or not text_b:
            raise ValidationError("score() requires two non-empty texts")
        body = self._post({"text_a": text_a, "text_b": text_b})
        if not isinstance(body, Mapping) or "score" not in body:
            raise BackendError(f"missing 'score' in response from {self.url}")
        raw = float(body["score"])
        if self.normalize == "logistic":
            return logistic(raw)
        if not 0.0 <= raw <= 1.0:
            raise BackendError(
                f"identity-normalized score {raw} outside [0, 1] from {self.url}"
            )
        return raw


class HttpEmbeddingBackend(_HttpBackend):
    """POST {text} -> {"vector": [...]}; dimension is pinned by the first
    response and enforced afterwards."""

    def __init__(self, *args: Any, **kwargs: Any):
        super().__init__(*args, **kwargs)
        self._dim: Optional[int] = None

    @property
    def backend_id(self) -> str:
        return f"http-embed:{self.url}"

    def embed(self, text: str) -> list[float]:
        if not text:
            raise ValidationError("embed() requires non-empty text")
        body = self._post({"text": text})
        if not isinstance(body, Mapping) or not body.get("vector"):
            raise BackendError(f"missing 'vector' in response from {self.url}")
        vector = [float(x) for x in body["vector"]]
        if self._dim is None:
            self._dim = len(vector)
        elif len(vector) != self._dim:
            raise BackendError(
                f"embedding dimension changed from {self._dim} to {len(vector)}"
            )
        return vector


# ---------------------------------------------------------------------------
# Bounded-parallel batching


def bounded_map(
    fn: Callable[[T], R], items: Iterable[T], max_concurrency: int
) -> list[R]:
    """Apply ``fn`` with at most ``max_concurrency`` calls in flight.

    Output order matches input order regardless of completion order.
    """
    items = list(items)
    if max_concurrency < 1:
        raise ValidationError("max_concurrency must be >= 1")
    if max_concurrency == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_concurrency) as pool:
        return list(pool.map(fn, items))


def generate_many(
    backend: Any, requests_: Sequence[ChatRequest], max_concurrency: int = 1
) -> list[str]:
    return bounded_map(backend.generate, requests_, max_concurrency)


def score_many(
    backend: Any, pairs: Sequence[tuple[str, str]], max_concurrency: int = 1
) -> list[float]:
    return bounded_map(lambda pair: backend.score(pair[0], pair[1]), pairs, max_concurrency)


def embed_many(
    backend: Any, texts: Sequence[str], max_concurrency: int = 1
) -> list[list[float]]:
    return bounded_map(backend.embed, texts, max_concurrency)
