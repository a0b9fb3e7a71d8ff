"""Chat-completion endpoint driver with caching, retries, and bounded concurrency.

The wire protocol is the common chat-completions HTTP shape: POST a JSON body
{"model", "messages", "temperature", "max_tokens"} and read the first
choice's message content. The whole prompt travels as a single user message;
an optional system message is configurable. Replies are cached on disk keyed
by a hash of (prompt, model, temperature, max output tokens), so a warm cache
makes whole runs pure functions of their inputs.

Mock endpoint mode swaps the HTTP transport for an in-process responder (a
callable from record to reply) behind the same cache seam, which lets full
pipelines run offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping

import requests

from .corpus import DatasetSplit
from .ioutil import atomic_write_text
from .templates import STAGE_ERC, InstructionRecord, expected_cause_output

log = logging.getLogger(__name__)

Responder = Callable[[InstructionRecord], str]


class EndpointError(RuntimeError):
    """The endpoint failed after retries or returned an unusable response."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class AuthenticationError(EndpointError):
    """Credentials are missing or rejected; never retried."""


class _Retryable(Exception):
    pass


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str = ""
    model_name: str = "default"
    auth_env_var: str | None = None
    temperature: float = 0.0
    max_output_tokens: int = 128
    request_timeout: float = 30.0
    max_retries: int = 3
    max_in_flight: int = 4
    system_message: str | None = None
    backoff_base: float = 1.0

    def __post_init__(self) -> None:
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class CompletionResult:
    record_id: str
    reply: str
    from_cache: bool
    latency_ms: float
    attempts: int
    error: str | None = None


class ResponseCache:
    """Content-addressed reply store: one file per key under a hex fan-out.

    Entries carry the request fields alongside the reply, so an entry can be
    re-verified against its key after a restart. Writes go to a temporary
    name and are renamed into place, making concurrent writers safe.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    @staticmethod
    def key(prompt: str, model_name: str, temperature: float, max_output_tokens: int) -> str:
        payload = json.dumps(
            {"prompt": prompt, "model": model_name, "temperature": temperature,
             "max_output_tokens": max_output_tokens},
            ensure_ascii=False, sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / key[2:4] / f"{key}.json"

    def get(self, key: str) -> str | None:
        path = self._path(key)
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except (OSError, json.JSONDecodeError) as exc:
            log.warning("unreadable cache entry %s treated as a miss: %s", path, exc)
            return None
        reply = entry.get("reply")
        return reply if isinstance(reply, str) else None

    def put(self, key: str, prompt: str, model_name: str, temperature: float,
            max_output_tokens: int, reply: str) -> None:
        entry = {
            "prompt": prompt,
            "model": model_name,
            "temperature": temperature,
            "max_output_tokens": max_output_tokens,
            "reply": reply,
        }
        atomic_write_text(self._path(key), json.dumps(entry, ensure_ascii=False, sort_keys=True))

    def verify(self, key: str) -> bool:
        """True iff the stored entry's request fields hash back to its key."""
        path = self._path(key)
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            return False
        try:
            recomputed = self.key(entry["prompt"], entry["model"],
                                  entry["temperature"], entry["max_output_tokens"])
        except (KeyError, TypeError):
            return False
        return recomputed == key


def _resolve_token(cfg: EndpointConfig) -> str | None:
    if cfg.auth_env_var is None:
        return None
    token = os.environ.get(cfg.auth_env_var)
    if not token:
        raise AuthenticationError(
            f"auth env var {cfg.auth_env_var!r} is unset or empty", attempts=0)
    return token


def _http_complete(prompt: str, cfg: EndpointConfig, token: str | None) -> str:
    headers = {"Content-Type": "application/json"}
    if token:
        headers["Authorization"] = f"Bearer {token}"
    messages = []
    if cfg.system_message:
        messages.append({"role": "system", "content": cfg.system_message})
    messages.append({"role": "user", "content": prompt})
    body = {
        "model": cfg.model_name,
        "messages": messages,
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_output_tokens,
    }
    try:
        resp = requests.post(cfg.base_url, json=body, headers=headers,
                             timeout=cfg.request_timeout)
    except (requests.Timeout, requests.ConnectionError) as exc:
        raise _Retryable(f"transport failure: {exc}") from exc

    if resp.status_code in (401, 403):
        raise AuthenticationError(f"endpoint rejected credentials (HTTP {resp.status_code})")
    if resp.status_code == 429 or resp.status_code >= 500:
        raise _Retryable(f"HTTP {resp.status_code}")
    if resp.status_code != 200:
        raise EndpointError(f"unexpected HTTP {resp.status_code}: {resp.text[:200]}")
    try:
        content = resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise EndpointError(f"malformed endpoint response: {exc}") from exc
    if not isinstance(content, str):
        raise EndpointError("malformed endpoint response: message content is not text")
    return content


def complete_one(
    record: InstructionRecord,
    cfg: EndpointConfig,
    cache: ResponseCache,
    responder: Responder | None = None,
) -> CompletionResult:
    """Complete one record, consulting the cache first.

    Cache hits return with zero network activity and attempts = 0. Misses
    call the endpoint (or the responder in mock mode), retrying timeouts,
    HTTP 429, and 5xx with exponential backoff (base backoff_base seconds,
    factor 2, jitter), then store the reply atomically.
    """
    start = time.perf_counter()
    key = cache.key(record.prompt, cfg.model_name, cfg.temperature, cfg.max_output_tokens)
    cached = cache.get(key)
    if cached is not None:
        return CompletionResult(record.record_id, cached, True,
                                (time.perf_counter() - start) * 1000.0, 0)

    token = None if responder is not None else _resolve_token(cfg)
    attempts = 0
    while True:
        attempts += 1
        try:
            reply = responder(record) if responder is not None else _http_complete(record.prompt, cfg, token)
            break
        except _Retryable as exc:
            if attempts > cfg.max_retries:
                raise EndpointError(f"retries exhausted after {attempts} attempts: {exc}",
                                    attempts=attempts) from exc
            delay = cfg.backoff_base * (2 ** (attempts - 1)) * (1.0 + 0.25 * random.random())
            log.debug("retrying %s in %.2fs (%s)", record.record_id, delay, exc)
            time.sleep(delay)

    cache.put(key, record.prompt, cfg.model_name, cfg.temperature,
              cfg.max_output_tokens, reply)
    return CompletionResult(record.record_id, reply, False,
                            (time.perf_counter() - start) * 1000.0, attempts)


def _complete_guarded(
    record: InstructionRecord,
    cfg: EndpointConfig,
    cache: ResponseCache,
    responder: Responder | None,
) -> CompletionResult:
    try:
        return complete_one(record, cfg, cache, responder)
    except AuthenticationError:
        raise  # configuration-level: would fail every record identically
    except Exception as exc:  # noqa: BLE001 - per-record failures must not abort the batch
        return CompletionResult(record.record_id, "", False, 0.0,
                                getattr(exc, "attempts", 1), error=str(exc))


def complete_all(
    records: Iterable[InstructionRecord],
    cfg: EndpointConfig,
    cache: ResponseCache,
    responder: Responder | None = None,
) -> list[CompletionResult]:
    """Complete a batch with at most max_in_flight outstanding requests.

    Results come back in input order regardless of completion order; per
    record failures are embedded in the results rather than aborting the
    batch (authentication failures still propagate).
    """
    records = list(records)
    ids = [r.record_id for r in records]
    if len(set(ids)) != len(ids):
        raise ValueError("record ids must be unique within a batch")
    if not records:
        return []
    with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
        futures = [pool.submit(_complete_guarded, r, cfg, cache, responder) for r in records]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# Built-in mock responders
# ---------------------------------------------------------------------------

class MappingResponder:
    """Answers from a record-id to reply mapping."""

    def __init__(self, replies: Mapping[str, str], default: str | None = None):
        self.replies = dict(replies)
        self.default = default
        self.calls = 0

    def __call__(self, record: InstructionRecord) -> str:
        self.calls += 1
        if record.record_id in self.replies:
            return self.replies[record.record_id]
        if self.default is not None:
            return self.default
        raise EndpointError(f"mock has no reply for record {record.record_id}")


class ConstantResponder:
    """Answers every record with a fixed reply per stage."""

    def __init__(self, erc_reply: str = "neutral", ecpe_reply: str = "None"):
        self.erc_reply = erc_reply
        self.ecpe_reply = ecpe_reply
        self.calls = 0

    def __call__(self, record: InstructionRecord) -> str:
        self.calls += 1
        return self.erc_reply if record.stage == STAGE_ERC else self.ecpe_reply


class GoldOracleResponder:
    """Answers every record with its gold label or gold cause list.

    With style "single", cause records are answered as "label: indices" to
    match the single-stage reply grammar.
    """

    def __init__(self, split: DatasetSplit, style: str = "two-stage"):
        if style not in ("two-stage", "single"):
            raise ValueError(f"unknown oracle style {style!r}")
        self.split = split
        self.style = style
        self.calls = 0

    def __call__(self, record: InstructionRecord) -> str:
        self.calls += 1
        conv_id, target = record.target
        conv = self.split.conversation(conv_id)
        gold = conv.utterance(target).gold_emotion
        if gold is None:
            raise EndpointError(f"gold oracle: utterance {conv_id}:{target} has no gold label")
        if record.stage == STAGE_ERC:
            return gold
        causes = expected_cause_output(conv, target)
        if self.style == "single":
            return f"{gold}: {causes}"
        return causes


def load_replies_mapping(path: str | Path) -> dict[str, str]:
    """Read a mock replies file: a JSON object of record id to reply text."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict) or not all(isinstance(v, str) for v in doc.values()):
        raise ValueError(f"replies file {path} must be a JSON object of id to reply text")
    return doc


def build_responder(spec: str, split: DatasetSplit | None = None,
                    style: str = "two-stage") -> Responder:
    """Construct a mock responder from a CLI spec: "gold", "neutral", or a path."""
    if spec == "gold":
        if split is None:
            raise ValueError("gold mock responder needs a dataset with gold annotations")
        return GoldOracleResponder(split, style=style)
    if spec == "neutral":
        return ConstantResponder()
    return MappingResponder(load_replies_mapping(spec))
