"""Pluggable text-generation backends and reply parsing.

Three backends share one interface: an OpenAI-compatible HTTP chat endpoint,
a scripted mock keyed by prompt fingerprint, and a record/replay cassette.
Fingerprints hash the template name plus sorted slot bindings rather than the
raw prompt text, so template-wording edits do not invalidate cassettes.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional

import requests

DEFAULT_MODEL = "llama3-8b-instruct"


class GatewayError(Exception):
    """Backend failure: network exhaustion, cassette miss, oversized prompt."""


class ParseError(Exception):
    """Reply could not be parsed into the expected structure."""


@dataclass(frozen=True)
class GenerationParams:
    """Decoding parameters used for all generation calls."""

    temperature: float = 0.6
    top_k: int = 40
    top_p: float = 0.8
    max_sequence_length: int = 4096
    presence_penalty: float = 0.02
    frequency_penalty: float = 0.02
    repetition_penalty: float = 1.02

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")


@dataclass(frozen=True)
class PromptCall:
    """One rendered prompt plus the structured inputs that produced it."""

    text: str
    template: str = ""
    bindings: Mapping[str, str] = field(default_factory=dict)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.template.encode("utf-8"))
        for key in sorted(self.bindings):
            h.update(b"\x00")
            h.update(key.encode("utf-8"))
            h.update(b"\x01")
            h.update(str(self.bindings[key]).encode("utf-8"))
        return h.hexdigest()


def estimate_tokens(text: str) -> int:
    # Rough heuristic: ~4 characters per token, floor of one token per word.
    return max(len(text) // 4, len(text.split()))


class Backend:
    """Interface: map a prompt call to reply text."""

    def complete(self, call: PromptCall, params: GenerationParams,
                 seed: int = 0) -> str:
        raise NotImplementedError


def complete(backend: Backend, call: PromptCall, params: GenerationParams,
             seed: int = 0) -> str:
    """Guarded entry point enforcing the prompt-size precondition."""
    if not call.text:
        raise GatewayError("prompt must be non-empty")
    if estimate_tokens(call.text) > params.max_sequence_length:
        raise GatewayError(
            f"prompt estimate {estimate_tokens(call.text)} tokens exceeds "
            f"max sequence length {params.max_sequence_length}")
    return backend.complete(call, params, seed)


class ScriptedMockBackend(Backend):
    """Deterministic table lookup from prompt fingerprint to canned reply.

    An optional fallback function handles fingerprints absent from the
    script; without one, a miss raises.
    """

    def __init__(self, script: Optional[Mapping[str, str]] = None,
                 fallback: Optional[Callable[[PromptCall], str]] = None):
        self.script = dict(script or {})
        self.fallback = fallback
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, call: PromptCall, params: GenerationParams,
                 seed: int = 0) -> str:
        with self._lock:
            self.calls += 1
        fp = call.fingerprint()
        if fp in self.script:
            return self.script[fp]
        if self.fallback is not None:
            return self.fallback(call)
        raise GatewayError(f"mock script has no entry for fingerprint {fp}")


class CassetteRecorder(Backend):
    """Pass-through backend that appends each exchange to a cassette file."""

    def __init__(self, inner: Backend, path: Path):
        self.inner = inner
        self.path = Path(path)
        self._lock = threading.Lock()

    def complete(self, call: PromptCall, params: GenerationParams,
                 seed: int = 0) -> str:
        reply = self.inner.complete(call, params, seed)
        record = {
            "fingerprint": call.fingerprint(),
            "template": call.template,
            "prompt": call.text,
            "reply": reply,
        }
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        return reply


class CassetteBackend(Backend):
    """Replays a recorded session from a line-delimited cassette file.

    Strict mode requires an exact fingerprint match; permissive mode falls
    back to the next unused recording with the same template name.
    """

    def __init__(self, path: Path, strict: bool = True):
        self.path = Path(path)
        self.strict = strict
        self._lock = threading.Lock()
        self._by_fingerprint: dict[str, list[str]] = {}
        self._by_template: dict[str, list[dict]] = {}
        with self.path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                self._by_fingerprint.setdefault(rec["fingerprint"], []).append(rec["reply"])
                self._by_template.setdefault(rec["template"], []).append(rec)

    def complete(self, call: PromptCall, params: GenerationParams,
                 seed: int = 0) -> str:
        fp = call.fingerprint()
        with self._lock:
            queue = self._by_fingerprint.get(fp)
            if queue:
                reply = queue.pop(0)
                for recs in self._by_template.values():
                    for i, rec in enumerate(recs):
                        if rec["fingerprint"] == fp and rec["reply"] == reply:
                            recs.pop(i)
                            break
                    else:
                        continue
                    break
                return reply
            if self.strict:
                raise GatewayError(f"cassette miss for fingerprint {fp}")
            recs = self._by_template.get(call.template)
            if recs:
                rec = recs.pop(0)
                fq = self._by_fingerprint.get(rec["fingerprint"], [])
                if rec["reply"] in fq:
                    fq.remove(rec["reply"])
                return rec["reply"]
            raise GatewayError(
                f"cassette has no remaining recording for template {call.template!r}")


class HttpChatBackend(Backend):
    """OpenAI-compatible chat-completions client with retry and a concurrency cap."""

    TRANSIENT_STATUS = {429, 500, 502, 503, 504}

    def __init__(self, base_url: str, model: str = DEFAULT_MODEL,
                 token: Optional[str] = None, max_retries: int = 3,
                 timeout: float = 120.0, max_concurrency: int = 4,
                 backoff_base: float = 0.5, backoff_cap: float = 8.0,
                 send_top_k: bool = True):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.token = token
        self.max_retries = max_retries
        self.timeout = timeout
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.send_top_k = send_top_k
        self._semaphore = threading.Semaphore(max_concurrency)
        self._session = requests.Session()

    def _payload(self, call: PromptCall, params: GenerationParams, seed: int) -> dict:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": call.text}],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "presence_penalty": params.presence_penalty,
            "frequency_penalty": params.frequency_penalty,
            "seed": seed,
        }
        if self.send_top_k:
            # Vendor extension; endpoints that reject unknown fields can
            # disable it via send_top_k=False.
            payload["top_k"] = params.top_k
            payload["repetition_penalty"] = params.repetition_penalty
        return payload

    def complete(self, call: PromptCall, params: GenerationParams,
                 seed: int = 0) -> str:
        url = f"{self.base_url}/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        payload = self._payload(call, params, seed)
        last_error: Optional[str] = None
        with self._semaphore:
            for attempt in range(self.max_retries + 1):
                if attempt:
                    delay = min(self.backoff_base * (2 ** (attempt - 1)), self.backoff_cap)
                    time.sleep(delay)
                try:
                    resp = self._session.post(url, json=payload, headers=headers,
                                              timeout=self.timeout)
                except requests.RequestException as exc:
                    last_error = str(exc)
                    continue
                if resp.status_code in self.TRANSIENT_STATUS:
                    last_error = f"HTTP {resp.status_code}"
                    continue
                if resp.status_code != 200:
                    raise GatewayError(f"chat endpoint returned HTTP {resp.status_code}: "
                                       f"{resp.text[:200]}")
                body = resp.json()
                try:
                    return body["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError) as exc:
                    raise GatewayError(f"malformed chat response: {exc}") from exc
        raise GatewayError(f"chat endpoint failed after {self.max_retries} retries: "
                           f"{last_error}")


_LIST_LINE_RE = re.compile(r"^\s*(?:\d+\s*[.):]|[-*•])\s+(.+?)\s*$")


def _clean_title(raw: str) -> str:
    title = raw.strip()
    # Markdown emphasis and surrounding quote marks are formatting, not title.
    title = title.strip("*_").strip()
    if len(title) >= 2 and title[0] in "\"'“‘" and title[-1] in "\"'”’":
        title = title[1:-1].strip()
    # Drop a trailing parenthetical that merely repeats the title.
    if title.endswith(")") and "(" in title:
        head, _, tail = title.rpartition("(")
        inner = tail[:-1].strip()
        if inner.lower() == head.strip().lower():
            title = head.strip()
    return " ".join(title.split())


def parse_item_list(reply: str, n: int) -> list[str]:
    """Extract up to n item titles from a numbered or bulleted reply.

    Deduplicates case-insensitively, keeping first occurrences in order.
    """
    titles: list[str] = []
    seen: set[str] = set()
    for line in reply.splitlines():
        m = _LIST_LINE_RE.match(line)
        if not m:
            continue
        title = _clean_title(m.group(1))
        if not title:
            continue
        key = title.lower()
        if key in seen:
            continue
        seen.add(key)
        titles.append(title)
        if len(titles) == n:
            break
    if not titles:
        raise ParseError("no parseable item titles in reply")
    return titles


def parse_categories(reply: str) -> list[str]:
    """Extract exactly 3 category names from a summarizing reply."""
    found: list[str] = []
    for line in reply.splitlines():
        m = _LIST_LINE_RE.match(line)
        if m:
            name = _clean_title(m.group(1))
            if name and name.lower() not in (f.lower() for f in found):
                found.append(name)
        if len(found) >= 3:
            return found[:3]
    # Fallback: a single slash-separated line of categories.
    for line in reply.splitlines():
        if " / " in line:
            parts = [_clean_title(p) for p in line.split(" / ")]
            parts = [p for p in parts if p]
            if len(parts) >= 3:
                return parts[:3]
    raise ParseError(f"found only {len(found)} categories, need 3")
