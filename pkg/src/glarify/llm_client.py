"""Chat-completion clients: live HTTP, replay, and recording.

Requests are keyed for replay by a content hash over the model name, the
whitespace-normalized prompt texts, and the ordered image references.
Decode parameters are deliberately excluded so fixture transcripts survive
formatting-only prompt edits and configuration tweaks. Transcript files
are line-delimited ``glarify-llm/1`` records.
"""
from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

import requests

from .canonical import atomic_write_text, canonical_json, normalize_whitespace, sha256_hex
from .errors import DataError, ReplayMissError, StructuredOutputError, TransportError

LLM_SCHEMA = "glarify-llm/1"

ENV_ENDPOINT = "GLARIFY_LLM_ENDPOINT"
ENV_KEY = "GLARIFY_LLM_KEY"
ENV_MODEL = "GLARIFY_LLM_MODEL"

DEFAULT_TEMPERATURE = 0.7
DEFAULT_MAX_OUTPUT_TOKENS = 1024
DEFAULT_IN_FLIGHT_LIMIT = 4


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    user_content: str
    image_refs: tuple[str, ...] = ()
    temperature: float = DEFAULT_TEMPERATURE
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    model_name: str = "gpt-4o"

    def __post_init__(self):
        object.__setattr__(self, "image_refs", tuple(self.image_refs))
        if not self.system_prompt or not self.user_content:
            raise DataError("prompts must be non-empty")
        if not (0.0 <= self.temperature <= 2.0):
            raise DataError(f"temperature out of range: {self.temperature}")
        if self.max_output_tokens <= 0:
            raise DataError("max_output_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: float = 0.0


def request_hash(req: ChatRequest) -> str:
    """Stable content key for record/replay."""
    key = canonical_json(
        {
            "model": req.model_name,
            "system": normalize_whitespace(req.system_prompt),
            "user": normalize_whitespace(req.user_content),
            "images": list(req.image_refs),
        }
    )
    return sha256_hex(key)


class ChatClient(Protocol):
    def complete(self, req: ChatRequest) -> ChatResponse: ...


def load_transcript(path: str | Path) -> dict[str, str]:
    """Read a ``glarify-llm/1`` transcript into a hash -> response map."""
    table: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"transcript line {line_no}: invalid JSON: {exc.msg}") from exc
            if rec.get("schema") != LLM_SCHEMA:
                raise DataError(f"transcript line {line_no}: schema {rec.get('schema')!r} != {LLM_SCHEMA!r}")
            table[rec["request_hash"]] = rec["response_text"]
    return table


def write_transcript(records: Iterable[tuple[str, str]], path: str | Path) -> None:
    lines = [
        canonical_json({"schema": LLM_SCHEMA, "request_hash": h, "response_text": text})
        for h, text in records
    ]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


class ReplayChatClient:
    """Deterministic client answering from a recorded transcript."""

    def __init__(self, transcript: dict[str, str] | str | Path):
        if isinstance(transcript, (str, Path)):
            transcript = load_transcript(transcript)
        self._table = dict(transcript)

    def complete(self, req: ChatRequest) -> ChatResponse:
        h = request_hash(req)
        if h not in self._table:
            raise ReplayMissError(f"no recorded response for request hash {h}")
        return ChatResponse(text=self._table[h])


class RecordingChatClient:
    """Wraps a live client and appends every exchange to a transcript file."""

    def __init__(self, inner: ChatClient, path: str | Path):
        self._inner = inner
        self._path = Path(path)
        self._lock = threading.Lock()
        self._records: dict[str, str] = {}
        if self._path.exists():
            self._records = load_transcript(self._path)

    def complete(self, req: ChatRequest) -> ChatResponse:
        resp = self._inner.complete(req)
        with self._lock:
            self._records[request_hash(req)] = resp.text
            write_transcript(sorted(self._records.items()), self._path)
        return resp


class HttpChatClient:
    """OpenAI-style chat completions over HTTP with bounded retries.

    Transient transport failures (connection errors, 429, 5xx) are retried
    up to 3 times with exponential backoff; anything else fails fast.
    Image references are attached as-is; the endpoint is responsible for
    resolving or encoding pixels.
    """

    RETRIES = 3
    BACKOFF_S = 0.5

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        model_name: str | None = None,
        timeout_s: float = 60.0,
        in_flight_limit: int = DEFAULT_IN_FLIGHT_LIMIT,
        sleep=time.sleep,
    ):
        self.endpoint = endpoint or os.environ.get(ENV_ENDPOINT)
        self.api_key = api_key or os.environ.get(ENV_KEY)
        self.model_name = model_name or os.environ.get(ENV_MODEL)
        if not self.endpoint:
            raise DataError(f"no endpoint configured; set {ENV_ENDPOINT}")
        self.timeout_s = timeout_s
        self._sleep = sleep
        self._slots = threading.Semaphore(in_flight_limit)
        self._session = requests.Session()

    def _payload(self, req: ChatRequest) -> dict:
        user_parts: list[dict] = [{"type": "text", "text": req.user_content}]
        for ref in req.image_refs:
            user_parts.append({"type": "image_url", "image_url": {"url": ref}})
        return {
            "model": req.model_name or self.model_name,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": user_parts},
            ],
        }

    def complete(self, req: ChatRequest) -> ChatResponse:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = self._payload(req)
        last_status: int | None = None
        last_error = "transport failure"
        with self._slots:
            for attempt in range(self.RETRIES):
                if attempt:
                    self._sleep(self.BACKOFF_S * (2 ** (attempt - 1)))
                start = time.monotonic()
                try:
                    resp = self._session.post(
                        self.endpoint, json=payload, headers=headers, timeout=self.timeout_s
                    )
                except requests.RequestException as exc:
                    last_status, last_error = None, f"connection error: {exc}"
                    continue
                latency_ms = (time.monotonic() - start) * 1000.0
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_status, last_error = resp.status_code, f"transient status {resp.status_code}"
                    continue
                if resp.status_code != 200:
                    raise TransportError(f"request failed with status {resp.status_code}", resp.status_code)
                return self._parse_response(resp.json(), latency_ms)
        raise TransportError(f"{last_error} after {self.RETRIES} attempts", last_status)

    @staticmethod
    def _parse_response(body: dict, latency_ms: float) -> ChatResponse:
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion body: {exc}") from exc
        usage = body.get("usage") or {}
        return ChatResponse(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            latency_ms=latency_ms,
        )


def extract_json_block(text: str):
    """Parse the first ```json fenced block, or the whole text if it is bare JSON.

    Commentary outside the fence is ignored. A parse failure inside a fence
    reports the offset within the fenced payload; text with neither a
    labeled fence nor a directly parseable body is rejected.
    """
    start = text.lower().find("```json")
    if start != -1:
        body_start = text.find("\n", start)
        end = text.find("```", body_start) if body_start != -1 else -1
        if body_start != -1 and end != -1:
            payload = text[body_start + 1 : end]
            try:
                return json.loads(payload)
            except json.JSONDecodeError as exc:
                raise StructuredOutputError(
                    f"parse failure inside fenced block at offset {exc.pos}: {exc.msg}"
                ) from exc
    stripped = text.strip()
    if stripped:
        try:
            return json.loads(stripped)
        except json.JSONDecodeError:
            pass
    raise StructuredOutputError("no structured block")
