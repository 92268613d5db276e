"""Model-client contract: remote chat endpoint, scripted mock, record/replay.

Wire contract (shared with the fine-tuning bridge and any conforming server):
request ``{"model", "messages": [{"role", "content"}], "temperature"}``,
response ``{"choices": [{"message": {"content"}}]}``. Transcripts are line-json
records ``{bundle_hash, purpose, messages, reply, timestamp}``.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from collections import deque
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import httpx

from .errors import ReplayMiss, TransportError
from .prompts import PromptBundle

Message = dict  # {"role": str, "content": str}


@dataclass(frozen=True)
class ModelClientConfig:
    """How to reach a model: a URL, or the built-in "mock"/"replay" endpoints."""

    endpoint: str = "mock"
    model_id: str = "gpt-4-turbo"
    temperature: float = 0.0
    max_retries: int = 2
    timeout: float = 30.0
    transcript_path: Path | None = None
    api_key_env: str | None = None
    script: tuple[str, ...] = ()

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


def bundle_hash(messages: list[Message]) -> str:
    canonical = json.dumps(messages, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class MockClient:
    """Returns scripted replies in order; repeats the last one when exhausted."""

    def __init__(self, replies=(), reply_fn=None):
        self._replies = deque(replies)
        self._reply_fn = reply_fn
        self._last: str | None = None
        self._lock = threading.Lock()
        self.calls: list[list[Message]] = []

    def complete(self, messages: list[Message], purpose: str = "") -> str:
        with self._lock:
            self.calls.append(messages)
            if self._reply_fn is not None:
                return self._reply_fn(messages)
            if self._replies:
                self._last = self._replies.popleft()
            if self._last is None:
                raise TransportError("mock client has no scripted reply")
            return self._last

    @property
    def call_count(self) -> int:
        return len(self.calls)


class ReplayClient:
    """Serves recorded replies by bundle hash; unseen bundles are a ReplayMiss."""

    def __init__(self, transcript_path: Path):
        self._by_hash: dict[str, deque[str]] = {}
        self._lock = threading.Lock()
        with Path(transcript_path).open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                self._by_hash.setdefault(rec["bundle_hash"], deque()).append(rec["reply"])

    def complete(self, messages: list[Message], purpose: str = "") -> str:
        key = bundle_hash(messages)
        with self._lock:
            queue = self._by_hash.get(key)
            if not queue:
                raise ReplayMiss(f"no recorded reply for bundle {key[:12]}")
            reply = queue.popleft()
            if not queue:
                queue.append(reply)  # identical re-asks keep replaying the last reply
            return reply


class RemoteClient:
    """POSTs the wire body to a chat-completion endpoint with transport retries."""

    def __init__(self, config: ModelClientConfig):
        self.config = config
        headers = {}
        if config.api_key_env:
            key = os.environ.get(config.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        self._http = httpx.Client(timeout=config.timeout, headers=headers)

    def complete(self, messages: list[Message], purpose: str = "") -> str:
        body = {
            "model": self.config.model_id,
            "messages": messages,
            "temperature": self.config.temperature,
        }
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                response = self._http.post(self.config.endpoint, json=body)
                response.raise_for_status()
                return response.json()["choices"][0]["message"]["content"]
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as e:
                last_error = e
                if attempt < self.config.max_retries:
                    time.sleep(0.2 * (attempt + 1))
        raise TransportError(f"remote call failed after {self.config.max_retries + 1} attempts: {last_error}")


class TranscriptRecorder:
    """Wraps a client and appends each (bundle, reply) pair to a line-json transcript."""

    def __init__(self, inner, path: Path):
        self._inner = inner
        self._path = Path(path)
        self._lock = threading.Lock()
        self._path.parent.mkdir(parents=True, exist_ok=True)

    def complete(self, messages: list[Message], purpose: str = "") -> str:
        reply = self._inner.complete(messages, purpose=purpose)
        record = {
            "bundle_hash": bundle_hash(messages),
            "purpose": purpose,
            "messages": messages,
            "reply": reply,
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        with self._lock, self._path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        return reply


def make_client(config: ModelClientConfig):
    if config.endpoint == "mock":
        client = MockClient(config.script)
    elif config.endpoint == "replay":
        if not config.transcript_path:
            raise ValueError("replay endpoint needs transcript_path")
        return ReplayClient(config.transcript_path)
    else:
        client = RemoteClient(config)
    if config.transcript_path and config.endpoint != "replay":
        return TranscriptRecorder(client, config.transcript_path)
    return client


def wire_messages(pairs: list[tuple[str, str]]) -> list[Message]:
    return [{"role": role, "content": content} for role, content in pairs]


def send(bundle: PromptBundle, config: ModelClientConfig) -> str:
    """One-shot send of a full bundle through a client built from ``config``."""
    client = make_client(config)
    return client.complete(wire_messages(list(bundle.messages)), purpose=bundle.purpose.value)
