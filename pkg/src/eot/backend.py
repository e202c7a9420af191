"""Model backends: HTTP chat-completions client, deterministic mock, call ledger.

Every backend interaction (including failed retry attempts) appends exactly
one ModelCall to the backend's ledger, which is what the call-count checks
reconcile against.
"""

from __future__ import annotations

import base64
import hashlib
import os
import re
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .boxed import extract_all_boxed
from .exceptions import BackendError, RequestRejected, TransportError
from .prompts import CANDIDATE_FOOTER

API_KEY_ENV = "EOT_API_KEY"

CALL_KINDS = ("generate", "reference", "score", "crossover", "mutate", "aggregate")

# Diverse sampling for answer-producing calls, stable for judging ones.
DEFAULT_TEMPERATURE = {
    "generate": 0.8,
    "reference": 0.8,
    "crossover": 0.8,
    "mutate": 0.8,
    "score": 0.0,
    "aggregate": 0.0,
}

ImagePayload = tuple[bytes, str]


@dataclass
class ModelCall:
    """One backend round-trip, successful or not."""

    kind: str
    prompt: str
    image: ImagePayload | None
    reply: str
    latency: float
    attempt: int
    error: str | None = None


class CallLedger:
    """Append-only, thread-safe record of every model invocation."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.calls: list[ModelCall] = []
        self._counters: Counter = Counter()

    def append(self, call: ModelCall) -> None:
        with self._lock:
            self.calls.append(call)
            self._counters[call.kind] += 1

    def count(self, *kinds: str) -> int:
        with self._lock:
            return sum(self._counters[k] for k in kinds)

    def total(self) -> int:
        with self._lock:
            return len(self.calls)

    def counters(self) -> dict[str, int]:
        with self._lock:
            return dict(self._counters)

    def search_calls(self) -> int:
        """Calls attributable to the search itself (aggregation excluded)."""
        return self.count("generate", "reference", "score", "crossover", "mutate")


class ModelBackend:
    """Shared retry/ledger behaviour; subclasses implement ``_send``.

    Transport failures are retried up to ``retries`` attempts with
    exponential backoff (base 0.5 s, doubling). Outright rejections
    (HTTP 4xx) are never retried.
    """

    retries = 3
    backoff_base = 0.5

    def __init__(self, sleeper: Callable[[float], None] = time.sleep):
        self.ledger = CallLedger()
        self._sleep = sleeper

    def complete(
        self,
        prompt: str,
        *,
        kind: str,
        image: ImagePayload | None = None,
        temperature: float | None = None,
        sample: int = 0,
    ) -> str:
        if kind not in CALL_KINDS:
            raise ValueError(f"unknown call kind: {kind!r}")
        temp = DEFAULT_TEMPERATURE[kind] if temperature is None else temperature
        last: Exception | None = None
        for attempt in range(1, self.retries + 1):
            started = time.perf_counter()
            try:
                reply = self._send(
                    prompt, kind=kind, image=image, temperature=temp, sample=sample
                )
            except RequestRejected as exc:
                self.ledger.append(
                    ModelCall(kind, prompt, image, "", time.perf_counter() - started,
                              attempt, error=str(exc))
                )
                raise
            except TransportError as exc:
                last = exc
                self.ledger.append(
                    ModelCall(kind, prompt, image, "", time.perf_counter() - started,
                              attempt, error=str(exc))
                )
                if attempt < self.retries:
                    self._sleep(self.backoff_base * 2 ** (attempt - 1))
                continue
            self.ledger.append(
                ModelCall(kind, prompt, image, reply, time.perf_counter() - started,
                          attempt)
            )
            return reply
        raise BackendError(f"backend unavailable: {last}") from last

    def _send(
        self,
        prompt: str,
        *,
        kind: str,
        image: ImagePayload | None,
        temperature: float,
        sample: int,
    ) -> str:
        raise NotImplementedError

    def child(self, seed: int) -> "ModelBackend":
        """A backend with the same configuration but a fresh ledger."""
        raise NotImplementedError


_OPENERS = (
    "Working step by step,",
    "Breaking the problem into parts,",
    "A direct computation shows that",
    "Checking the key constraint first,",
)

_MIDDLES = (
    "the intermediate quantities cancel cleanly",
    "each case leads to the same total",
    "the bound is tight after simplification",
    "the pattern repeats with period two",
    "only one branch survives the check",
    "the estimate matches the exact count",
)

_SCORE_SECTIONS = re.compile(
    r"Reference answer:\n(.*?)\n\nCandidate answer:\n(.*?)\n\nReply", re.DOTALL
)

_FIRST_CANDIDATE = re.compile(
    r"\[Candidate 1\]\n(.*?)\n\n(?:\[Candidate 2\]|" + re.escape(CANDIDATE_FOOTER) + ")",
    re.DOTALL,
)


class MockBackend(ModelBackend):
    """Deterministic stand-in for a model endpoint.

    Replies are pure functions of (seed, kind, sample, prompt), hashed
    with SHA-256, so runs reproduce byte-for-byte across processes. The
    ``sample`` nonce lets callers draw several distinct answers from one
    prompt, standing in for temperature sampling.

    * answer-producing kinds return a short synthetic answer ending in
      ``The Answer is \\boxed{v}`` with v from a small answer pool;
    * score kind returns ``Score: q`` with q biased upward (>= 50) when
      the candidate's boxed value matches the reference's;
    * aggregate kind echoes the first candidate embedded in the prompt.
    """

    def __init__(
        self,
        seed: int = 0,
        answer_pool: Sequence[str] = ("2", "3", "5", "7"),
        sleeper: Callable[[float], None] = time.sleep,
    ):
        super().__init__(sleeper=sleeper)
        self.seed = seed
        self.answer_pool = tuple(answer_pool)

    def child(self, seed: int) -> "MockBackend":
        return MockBackend(seed=seed, answer_pool=self.answer_pool, sleeper=self._sleep)

    def _digest(self, kind: str, sample: int, prompt: str) -> bytes:
        key = f"{self.seed}|{kind}|{sample}|{prompt}"
        return hashlib.sha256(key.encode()).digest()

    def _send(self, prompt, *, kind, image, temperature, sample) -> str:
        digest = self._digest(kind, sample, prompt)
        if kind == "score":
            return self._score_reply(prompt, digest)
        if kind == "aggregate":
            match = _FIRST_CANDIDATE.search(prompt)
            if match:
                return match.group(1)
        return self._answer_reply(digest)

    def _answer_reply(self, digest: bytes) -> str:
        value = self.answer_pool[digest[0] % len(self.answer_pool)]
        opener = _OPENERS[digest[1] % len(_OPENERS)]
        middle = _MIDDLES[digest[2] % len(_MIDDLES)]
        return f"{opener} {middle}. The Answer is \\boxed{{{value}}}"

    def _score_reply(self, prompt: str, digest: bytes) -> str:
        sections = _SCORE_SECTIONS.search(prompt)
        if sections:
            reference, answer = sections.group(1), sections.group(2)
            ref_boxes = extract_all_boxed(reference)
            ans_boxes = extract_all_boxed(answer)
            matched = answer == reference or (
                bool(ref_boxes) and bool(ans_boxes) and ref_boxes[-1] == ans_boxes[-1]
            )
        else:
            boxes = extract_all_boxed(prompt)
            matched = len(boxes) >= 2 and boxes[0] == boxes[-1]
        h = int.from_bytes(digest[3:5], "big")
        score = 50 + h % 51 if matched else h % 50
        return f"Score: {score}"


def _requests_transport(url: str, payload: dict, headers: dict, timeout: float):
    import requests

    try:
        resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(str(exc)) from exc
    try:
        data = resp.json()
    except ValueError as exc:
        raise TransportError(f"non-JSON reply (HTTP {resp.status_code})") from exc
    return resp.status_code, data


class HttpBackend(ModelBackend):
    """Chat-completions-style HTTP client.

    Sends a single user message (text, plus a base64 data-URL image part
    when the query carries one) and reads the first choice's message
    content. 5xx and transport failures retry; 4xx fails immediately.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_tokens: int = 1024,
        system_prompt: str | None = None,
        transport: Callable | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        super().__init__(sleeper=sleeper)
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.timeout = timeout
        self.max_tokens = max_tokens
        self.system_prompt = system_prompt
        self._transport = transport or _requests_transport

    def child(self, seed: int) -> "HttpBackend":
        return HttpBackend(
            endpoint=self.endpoint,
            model=self.model,
            api_key=self.api_key,
            timeout=self.timeout,
            max_tokens=self.max_tokens,
            system_prompt=self.system_prompt,
            transport=self._transport,
            sleeper=self._sleep,
        )

    def _build_payload(
        self, prompt: str, image: ImagePayload | None, temperature: float
    ) -> dict:
        content: object
        if image is None:
            content = prompt
        else:
            data, media_type = image
            url = f"data:{media_type};base64,{base64.b64encode(data).decode()}"
            content = [
                {"type": "text", "text": prompt},
                {"type": "image_url", "image_url": {"url": url}},
            ]
        messages = []
        if self.system_prompt:
            messages.append({"role": "system", "content": self.system_prompt})
        messages.append({"role": "user", "content": content})
        return {
            "model": self.model,
            "messages": messages,
            "temperature": temperature,
            "max_tokens": self.max_tokens,
        }

    def _send(self, prompt, *, kind, image, temperature, sample) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = self._build_payload(prompt, image, temperature)
        status, data = self._transport(self.endpoint, payload, headers, self.timeout)
        if 400 <= status < 500:
            raise RequestRejected(f"request rejected: HTTP {status}")
        if status != 200:
            raise TransportError(f"HTTP {status}")
        try:
            reply = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc
        if not isinstance(reply, str):
            raise TransportError("completion content is not text")
        return reply
