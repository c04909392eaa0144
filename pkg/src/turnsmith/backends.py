"""Chat and embedding backends.

Two families live here:

* HTTP backends speaking the OpenAI-compatible wire protocol
  (``POST {base_url}/chat/completions`` and ``POST {base_url}/embeddings``),
  with exponential-backoff retries on 429/5xx/timeouts, bounded in-flight
  concurrency, and non-retryable 4xx surfaced with a response-body excerpt.

* A seeded mock that recognizes the synthesis / scenario / judge prompt
  shapes and fabricates valid payloads deterministically from
  (backend seed, prompt digest, sampling seed). Whole pipelines run against
  it offline and reproduce byte-identical artifacts.

Backend instances are safe for concurrent use; the in-flight bound applies
per instance. Everything downstream also works if calls are serialized.
"""

from __future__ import annotations

import json
import random
import re
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol, Sequence, runtime_checkable

import httpx
import numpy as np

from .errors import BackendError
from .hashing import derive_seed, sha256_hex
from .jsonextract import extract_json_object

ROLES = ("system", "user", "assistant")

SYNTHESIS_TEMPERATURE = 0.9
JUDGE_TEMPERATURE = 0.0
DEFAULT_MAX_IN_FLIGHT = 8
DEFAULT_MAX_ATTEMPTS = 5


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"invalid role {self.role!r}, expected one of {ROLES}")
        if not self.content and self.role != "assistant":
            raise ValueError(f"{self.role} message content must be non-empty")


@dataclass(frozen=True)
class GenerationParams:
    """Sampling parameters. Defaults: temperature 0.9 for synthesis; judges use 0.0."""

    model: str = ""
    temperature: float = SYNTHESIS_TEMPERATURE
    max_tokens: int | None = None
    top_p: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_tokens is not None and self.max_tokens < 1:
            raise ValueError(f"max_tokens must be positive, got {self.max_tokens}")
        if self.top_p is not None and not 0.0 < self.top_p <= 1.0:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")

    def with_seed(self, seed: int | None) -> "GenerationParams":
        return replace(self, seed=seed)


@dataclass
class ChatResult:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_s: float = 0.0
    attempts: int = 1


@dataclass
class EmbeddingVector:
    model: str
    values: np.ndarray
    dim: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("embedding values must be a 1-d vector")
        if self.dim == 0:
            self.dim = int(self.values.shape[0])
        elif self.dim != self.values.shape[0]:
            raise ValueError(f"dim {self.dim} != len(values) {self.values.shape[0]}")
        if not np.linalg.norm(self.values) > 0:
            raise ValueError("embedding must have nonzero norm")


@runtime_checkable
class ChatBackend(Protocol):
    def complete_chat(self, messages: Sequence[ChatMessage], params: GenerationParams) -> ChatResult: ...


@runtime_checkable
class EmbeddingBackend(Protocol):
    model: str

    def embed_texts(self, texts: Sequence[str], model: str | None = None) -> list[EmbeddingVector]: ...


def _check_embed_inputs(texts: Sequence[str]) -> None:
    if not texts:
        raise ValueError("embed_texts requires at least one text")
    for i, text in enumerate(texts):
        if not isinstance(text, str) or not text.strip():
            raise ValueError(f"embed_texts input #{i} is empty")


class _RetryingHttp:
    """Shared POST-with-retries core for the two HTTP backends."""

    def __init__(
        self,
        base_url: str,
        *,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        backoff_base: float = 0.5,
        backoff_cap: float = 30.0,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        transport: httpx.BaseTransport | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(
            base_url=base_url.rstrip("/"), headers=headers, timeout=timeout, transport=transport
        )
        self._max_attempts = max(1, max_attempts)
        self._backoff_base = backoff_base
        self._backoff_cap = backoff_cap
        self._sleep = sleeper
        self._gate = threading.BoundedSemaphore(max_in_flight)

    def post_json(self, path: str, payload: dict) -> tuple[dict, int]:
        """Returns (response json, attempts). Retries 429/5xx/timeouts with backoff."""
        last_reason = ""
        last_status: int | None = None
        for attempt in range(1, self._max_attempts + 1):
            try:
                with self._gate:
                    response = self._client.post(path, json=payload)
            except (httpx.TimeoutException, httpx.TransportError) as exc:
                last_reason = f"{type(exc).__name__}: {exc}"
                last_status = None
            else:
                if response.status_code == 200:
                    try:
                        return response.json(), attempt
                    except json.JSONDecodeError as exc:
                        raise BackendError(
                            f"non-JSON 200 response from {path}: {response.text[:300]}",
                            status=200,
                            attempts=attempt,
                        ) from exc
                if response.status_code == 429 or response.status_code >= 500:
                    last_reason = f"HTTP {response.status_code}"
                    last_status = response.status_code
                else:
                    raise BackendError(
                        f"request to {path} rejected (HTTP {response.status_code}): {response.text[:300]}",
                        status=response.status_code,
                        attempts=attempt,
                    )
            if attempt < self._max_attempts:
                cap = min(self._backoff_cap, self._backoff_base * (2 ** (attempt - 1)))
                self._sleep(random.uniform(0, cap))
        raise BackendError(
            f"request to {path} failed after {self._max_attempts} attempts ({last_reason})",
            status=last_status,
            attempts=self._max_attempts,
        )

    def close(self) -> None:
        self._client.close()


class HttpChatBackend:
    """OpenAI-compatible /chat/completions client."""

    deterministic = False

    def __init__(self, base_url: str, model: str, **http_kwargs):
        self.model = model
        self._http = _RetryingHttp(base_url, **http_kwargs)

    def complete_chat(self, messages: Sequence[ChatMessage], params: GenerationParams) -> ChatResult:
        if not messages:
            raise ValueError("complete_chat requires at least one message")
        wire_messages = [
            {"role": m.role, "content": m.content}
            for m in messages
            if not (m.role == "assistant" and m.content == "")
        ]
        payload: dict = {
            "model": params.model or self.model,
            "messages": wire_messages,
            "temperature": params.temperature,
        }
        if params.max_tokens is not None:
            payload["max_tokens"] = params.max_tokens
        if params.top_p is not None:
            payload["top_p"] = params.top_p
        if params.seed is not None:
            payload["seed"] = params.seed

        started = time.monotonic()
        data, attempts = self._http.post_json("/chat/completions", payload)
        latency = time.monotonic() - started
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed chat completion payload: {str(data)[:300]}", attempts=attempts) from exc
        usage = data.get("usage") or {}
        return ChatResult(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            latency_s=latency,
            attempts=attempts,
        )

    def close(self) -> None:
        self._http.close()


class HttpEmbeddingBackend:
    """OpenAI-compatible /embeddings client; batches large inputs transparently."""

    deterministic = False

    def __init__(self, base_url: str, model: str, *, batch_size: int = 128, **http_kwargs):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.model = model
        self._batch_size = batch_size
        self._http = _RetryingHttp(base_url, **http_kwargs)

    def embed_texts(self, texts: Sequence[str], model: str | None = None) -> list[EmbeddingVector]:
        _check_embed_inputs(texts)
        model = model or self.model
        vectors: list[EmbeddingVector] = []
        for start in range(0, len(texts), self._batch_size):
            batch = list(texts[start : start + self._batch_size])
            data, attempts = self._http.post_json("/embeddings", {"model": model, "input": batch})
            rows = data.get("data")
            if not isinstance(rows, list) or len(rows) != len(batch):
                raise BackendError(
                    f"embeddings response has {len(rows) if isinstance(rows, list) else 'no'} rows "
                    f"for a batch of {len(batch)}",
                    attempts=attempts,
                )
            rows = sorted(rows, key=lambda r: r.get("index", 0))
            for row in rows:
                try:
                    values = np.asarray(row["embedding"], dtype=np.float64)
                except (KeyError, TypeError, ValueError) as exc:
                    raise BackendError(f"malformed embeddings row: {str(row)[:200]}", attempts=attempts) from exc
                vectors.append(EmbeddingVector(model=model, values=values))
        dims = {v.dim for v in vectors}
        if len(dims) > 1:
            raise BackendError(f"embedding dimensions disagree across the batch: {sorted(dims)}")
        return vectors

    def close(self) -> None:
        self._http.close()


# --- deterministic mock -----------------------------------------------------

_Q_OPENERS = (
    "Okay so, how should I even get started with",
    "Quick one: what's the first thing to sort out with",
    "I've been meaning to ask about",
    "Honestly I'm a bit lost with",
    "So what's the deal with",
    "Been chewing on this for a while:",
)

_Q_ASPECTS = (
    "the budget side of it",
    "common beginner mistakes",
    "how long it realistically takes",
    "what tools or gear actually help",
    "how to tell it's going well",
    "what experienced people do differently",
    "the part everyone underestimates",
    "whether the order of steps matters",
    "any quick wins to start with",
    "what to avoid early on",
    "how to keep momentum after week one",
    "the trade-offs people gloss over",
)

_Q_FORMS = (
    "What about {aspect}?",
    "And {aspect}, how big a deal is that?",
    "Hmm, curious about {aspect} too.",
    "Does {aspect} change anything here?",
    "Any tips on {aspect}?",
    "Where does {aspect} fit into all this?",
)

_R_LEADS = (
    "Here's the practical take:",
    "Good question:",
    "Short version:",
    "Totally doable.",
    "Right, so:",
    "Think of it this way:",
)

_R_BODIES = (
    "start small, check the result, then adjust before scaling up",
    "consistency beats intensity, so settle into a rhythm you can keep",
    "write down what you observe so the next step is obvious",
    "pick the simplest option first and only add complexity when it hurts",
    "set a checkpoint after each stage so problems surface early",
    "borrow a proven routine and adapt one piece at a time",
    "budget a little slack for surprises, they always show up",
    "focus on the one constraint that actually limits you right now",
)

_T_ACTIVITIES = (
    "planning", "fixing", "choosing", "learning", "organizing",
    "improving", "troubleshooting", "starting", "comparing", "maintaining",
)

_T_SUBJECTS = (
    "a balcony herb garden", "a home espresso routine", "a secondhand road bike",
    "a small rainwater system", "a weekly meal-prep habit", "an old laptop battery",
    "a beginner chess opening plan", "a shared family calendar", "a squeaky bedroom door",
    "a first 10k training block", "a cluttered garage workspace", "a houseplant watering schedule",
    "a noisy desktop fan", "a neighborhood book swap", "a budget weekend road trip",
    "a leaky bathroom faucet", "a sourdough starter", "a home wifi dead zone",
    "a community tool library", "a winter vegetable patch",
)

_COT_LINES = (
    "Let me think step by step about how this conversation should flow.",
    "Thinking it through: the turns should follow the staged flow and stay on one topic.",
    "Step by step: anchor the topic, then let each turn push the thread forward.",
)

_QUERY_MARKER = "only simulate user questions"
_RESPONSE_MARKER = "only providing responses"
_SCENARIO_MARKER = "distinct scenario topics"
_JUDGE_MARKER = "select a score from"

_TOPIC_TAIL = "The input core topic for this task is:"
_QUESTIONS_TAIL = "questions-only turns for this task is:"


class MockBackend:
    """Seeded offline stand-in for both chat and embedding backends.

    Completions are a pure function of (backend seed, message payload,
    params.seed): the sampling seed is folded in so that re-sampling the same
    prompt with different seeds yields distinct dialogues, the way a real
    temperature-0.9 backend would.
    """

    deterministic = True

    def __init__(self, seed: int = 0, *, embed_dim: int = 32, model: str = "mock-chat"):
        if embed_dim < 2:
            raise ValueError("embed_dim must be >= 2")
        self.seed = seed
        self.model = model
        self.embed_dim = embed_dim
        self.embed_model = f"mock-embed-{embed_dim}"
        self.chat_calls = 0

    # -- chat ---------------------------------------------------------------

    def complete_chat(self, messages: Sequence[ChatMessage], params: GenerationParams) -> ChatResult:
        if not messages:
            raise ValueError("complete_chat requires at least one message")
        blob = json.dumps([[m.role, m.content] for m in messages], ensure_ascii=False)
        full_text = "\n\n".join(m.content for m in messages)
        rng = random.Random(derive_seed(self.seed, blob, "none" if params.seed is None else params.seed))
        if _JUDGE_MARKER in full_text:
            text = self._judge_completion(rng)
        elif _RESPONSE_MARKER in full_text:
            text = self._response_completion(full_text, rng)
        elif _QUERY_MARKER in full_text:
            text = self._query_completion(full_text, rng)
        elif _SCENARIO_MARKER in full_text:
            text = self._scenario_completion(full_text, rng)
        else:
            text = self._generic_completion(messages, blob, rng)
        self.chat_calls += 1
        return ChatResult(
            text=text,
            prompt_tokens=sum(len(m.content.split()) for m in messages),
            completion_tokens=len(text.split()),
            latency_s=0.0,
            attempts=1,
        )

    def _wrap_json(self, payload: dict, rng: random.Random) -> str:
        """Sometimes fence the object, sometimes prepend mock reasoning."""
        body = json.dumps(payload, ensure_ascii=False)
        style = rng.random()
        if style < 1 / 3:
            return body
        if style < 2 / 3:
            return f"```json\n{body}\n```"
        return f"{rng.choice(_COT_LINES)}\n\n```json\n{body}\n```"

    @staticmethod
    def _tail_after(text: str, marker: str) -> str:
        idx = text.rfind(marker)
        if idx < 0:
            return ""
        return text[idx + len(marker) :].strip()

    def _query_completion(self, text: str, rng: random.Random) -> str:
        topic = self._tail_after(text, _TOPIC_TAIL) or "the topic at hand"
        bounds = re.search(r"comprising (\d+)-(\d+) turns", text)
        lo, hi = (int(bounds.group(1)), int(bounds.group(2))) if bounds else (6, 8)
        n_turns = rng.randint(lo, hi)
        turns = [f"{rng.choice(_Q_OPENERS)} {topic}?"]
        for aspect in rng.sample(_Q_ASPECTS, min(n_turns - 1, len(_Q_ASPECTS))):
            turns.append(rng.choice(_Q_FORMS).format(aspect=aspect))
        return self._wrap_json({"category": topic, "turns": turns}, rng)

    def _response_completion(self, text: str, rng: random.Random) -> str:
        questions: list[str] = []
        tail = self._tail_after(text, _QUESTIONS_TAIL)
        if tail:
            try:
                payload, _ = extract_json_object(tail)
                raw = payload.get("turns", [])
                questions = [q for q in raw if isinstance(q, str)]
            except Exception:
                questions = []
        if not questions:
            questions = ["the question"] * 6
        turns = []
        for question in questions:
            topic_ref = re.sub(r"\s+", " ", question).strip().rstrip("?").lower()
            turns.append(f"{rng.choice(_R_LEADS)} {rng.choice(_R_BODIES)}. That should cover {topic_ref[:56]}.")
        return self._wrap_json({"turns": turns}, rng)

    def _scenario_completion(self, text: str, rng: random.Random) -> str:
        wanted = re.search(r"exactly (\d+)", text)
        n = int(wanted.group(1)) if wanted else 5
        space = len(_T_ACTIVITIES) * len(_T_SUBJECTS)
        picks = rng.sample(range(space), min(n, space))
        topics = [f"{_T_ACTIVITIES[i // len(_T_SUBJECTS)]} {_T_SUBJECTS[i % len(_T_SUBJECTS)]}" for i in picks]
        return self._wrap_json({"topics": topics}, rng)

    @staticmethod
    def _judge_completion(rng: random.Random) -> str:
        return str(rng.randint(1, 10))

    @staticmethod
    def _generic_completion(messages: Sequence[ChatMessage], blob: str, rng: random.Random) -> str:
        last_user = next((m.content for m in reversed(messages) if m.role == "user"), messages[-1].content)
        excerpt = re.sub(r"\s+", " ", last_user).strip()[:60]
        return (
            f"{rng.choice(_R_LEADS)} staying with '{excerpt}', {rng.choice(_R_BODIES)} "
            f"(ref {sha256_hex(blob)[:6]})."
        )

    # -- embeddings ---------------------------------------------------------

    def embed_texts(self, texts: Sequence[str], model: str | None = None) -> list[EmbeddingVector]:
        _check_embed_inputs(texts)
        model = model or self.embed_model
        out = []
        for text in texts:
            gen = np.random.default_rng(derive_seed(self.seed, "embed", model, text))
            vec = gen.standard_normal(self.embed_dim)
            norm = np.linalg.norm(vec)
            out.append(EmbeddingVector(model=model, values=vec / norm))
        return out


class ScriptedChatBackend:
    """Replays canned completions in order; records every call. Test helper."""

    deterministic = True
    model = "scripted"

    def __init__(self, responses: Sequence[str]):
        self._responses = list(responses)
        self.calls: list[tuple[tuple[ChatMessage, ...], GenerationParams]] = []

    def complete_chat(self, messages: Sequence[ChatMessage], params: GenerationParams) -> ChatResult:
        self.calls.append((tuple(messages), params))
        if not self._responses:
            raise BackendError("scripted backend exhausted", attempts=1)
        return ChatResult(text=self._responses.pop(0))


@dataclass
class StubEmbeddingBackend:
    """Maps exact texts to preset vectors. Test helper for metric oracles."""

    vectors: dict[str, Sequence[float]]
    model: str = "stub-embed"
    deterministic: bool = field(default=True)

    def embed_texts(self, texts: Sequence[str], model: str | None = None) -> list[EmbeddingVector]:
        _check_embed_inputs(texts)
        out = []
        for text in texts:
            if text not in self.vectors:
                raise KeyError(f"stub embedder has no vector for {text!r}")
            out.append(EmbeddingVector(model=model or self.model, values=np.asarray(self.vectors[text], dtype=np.float64)))
        return out
