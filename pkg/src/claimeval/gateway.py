"""Chat-completion client with a content-addressed disk cache.

Cache entries live at ``<cache_dir>/<digest[:2]>/<digest>.json``. The digest
is a SHA-256 over the canonicalized request (model, temperature, messages
with whitespace collapsed), so logically identical requests share one entry.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

import httpx

from .model import atomic_write_text
from .prompts import MessageSequence, PromptConfig

logger = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"
DEFAULT_API_KEY_ENV = "OPENAI_API_KEY"


class CacheMode(str, Enum):
    READ_WRITE = "read_write"
    REPLAY_ONLY = "replay_only"
    BYPASS = "bypass"


class GatewayError(RuntimeError):
    """Transport failure after all retries."""

    def __init__(self, message: str, attempts: int = 0):
        super().__init__(message)
        self.attempts = attempts


class ReplayMiss(GatewayError):
    def __init__(self, digest: str):
        super().__init__(f"replay_only cache miss for request {digest}")
        self.digest = digest


def _normalize(text: str) -> str:
    return " ".join(text.split())


def canonical_request(model: str, temperature: float, messages) -> str:
    if isinstance(messages, MessageSequence):
        messages = messages.to_wire()
    body = {
        "messages": [{"content": _normalize(m["content"]), "role": m["role"]} for m in messages],
        "model": model,
        "temperature": float(temperature),
    }
    return json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def request_digest(model: str, temperature: float, messages) -> str:
    return hashlib.sha256(canonical_request(model, temperature, messages).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CacheEntry:
    key: str
    response_text: str
    created_at: str


class ResponseCache:
    """One JSON file per response, written atomically (safe for concurrent writers)."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    def path_for(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> CacheEntry | None:
        path = self.path_for(key)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except (OSError, json.JSONDecodeError) as exc:
            logger.warning("ignoring unreadable cache entry %s: %s", path, exc)
            return None
        return CacheEntry(obj["key"], obj["response_text"], obj.get("created_at", ""))

    def put(self, key: str, response_text: str, request: dict | None = None) -> CacheEntry:
        entry = CacheEntry(key, response_text, datetime.now(timezone.utc).isoformat(timespec="seconds"))
        obj = {"key": key, "created_at": entry.created_at, "response_text": response_text}
        if request is not None:
            obj["request"] = request
        atomic_write_text(self.path_for(key), json.dumps(obj, ensure_ascii=False, indent=1) + "\n")
        return entry

    def keys(self) -> list[str]:
        if not self.root.is_dir():
            return []
        return sorted(p.stem for p in self.root.glob("??/*.json"))

    def __len__(self) -> int:
        return len(self.keys())


class RateLimiter:
    """At most ``per_minute`` acquisitions in any sliding 60 s window."""

    def __init__(self, per_minute: int | None, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.per_minute = per_minute
        self._clock = clock
        self._sleep = sleep
        self._stamps: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if not self.per_minute:
            return
        while True:
            with self._lock:
                now = self._clock()
                while self._stamps and now - self._stamps[0] >= 60.0:
                    self._stamps.popleft()
                if len(self._stamps) < self.per_minute:
                    self._stamps.append(now)
                    return
                wait = 60.0 - (now - self._stamps[0])
            self._sleep(wait)


class Gateway:
    """Thread-safe chat-completion client.

    The API key is read from the environment variable named by
    ``api_key_env``; it is never logged or stored in the cache.
    """

    def __init__(
        self,
        cache_dir: str | os.PathLike | None = None,
        endpoint: str = DEFAULT_ENDPOINT,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        max_retries: int = 4,
        backoff: float = 1.0,
        timeout: float = 120.0,
        parallelism: int = 4,
        rate_limit_per_minute: int | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cache = ResponseCache(cache_dir) if cache_dir is not None else None
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.max_retries = max(1, max_retries)
        self.backoff = backoff
        self.timeout = timeout
        self.parallelism = max(1, parallelism)
        self._transport = transport
        self._sleep = sleep
        self._limiter = RateLimiter(rate_limit_per_minute, sleep=sleep)
        self._slots = threading.BoundedSemaphore(self.parallelism)
        self._lock = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}
        self._client: httpx.Client | None = None
        self.network_calls = 0
        self.cache_hits = 0
        self.used_digests: set[str] = set()

    # -- plumbing ---------------------------------------------------------

    def _http(self) -> httpx.Client:
        with self._lock:
            if self._client is None:
                self._client = httpx.Client(transport=self._transport, timeout=self.timeout)
            return self._client

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None

    def _key_lock(self, key: str) -> threading.Lock:
        with self._lock:
            return self._key_locks.setdefault(key, threading.Lock())

    def _post(self, body: dict) -> str:
        api_key = os.environ.get(self.api_key_env, "")
        if not api_key:
            raise GatewayError(f"environment variable {self.api_key_env} is not set", attempts=0)
        headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
        last = "no attempt made"
        for attempt in range(1, self.max_retries + 1):
            self._limiter.acquire()
            with self._lock:
                self.network_calls += 1
            try:
                with self._slots:
                    resp = self._http().post(self.endpoint, json=body, headers=headers)
            except httpx.HTTPError as exc:
                last = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 200:
                    try:
                        return resp.json()["choices"][0]["message"]["content"]
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        raise GatewayError(f"unexpected response body: {exc!r}", attempts=attempt) from None
                last = f"HTTP {resp.status_code}"
                if resp.status_code < 500 and resp.status_code != 429:
                    raise GatewayError(f"request rejected: {last}", attempts=attempt)
            if attempt < self.max_retries:
                delay = self.backoff * 2 ** (attempt - 1)
                logger.warning("chat request failed (%s); retry %d/%d in %.1fs",
                               last, attempt, self.max_retries - 1, delay)
                self._sleep(delay)
        raise GatewayError(f"chat request failed after {self.max_retries} attempts: {last}",
                           attempts=self.max_retries)

    # -- public -----------------------------------------------------------

    def digest(self, messages: MessageSequence, config: PromptConfig) -> str:
        return request_digest(config.model_name, config.temperature, messages)

    def complete(self, messages: MessageSequence, config: PromptConfig,
                 cache_mode: CacheMode | str = CacheMode.READ_WRITE) -> str:
        """Return the raw model text for ``messages``.

        ``read_write`` serves hits from the cache and stores misses;
        ``replay_only`` never touches the network and raises ``ReplayMiss``;
        ``bypass`` always calls the endpoint and leaves the cache alone.
        """
        mode = CacheMode(cache_mode)
        key = self.digest(messages, config)
        with self._lock:
            self.used_digests.add(key)
        if mode is not CacheMode.BYPASS and self.cache is None:
            if mode is CacheMode.REPLAY_ONLY:
                raise ReplayMiss(key)
            mode = CacheMode.BYPASS
        body = {
            "model": config.model_name,
            "temperature": config.temperature,
            "messages": messages.to_wire(),
        }
        if mode is CacheMode.BYPASS:
            return self._post(body)
        # serialize per key so a duplicate request is sent at most once
        with self._key_lock(key):
            entry = self.cache.get(key)
            if entry is not None:
                with self._lock:
                    self.cache_hits += 1
                return entry.response_text
            if mode is CacheMode.REPLAY_ONLY:
                raise ReplayMiss(key)
            text = self._post(body)
            self.cache.put(key, text, request=body)
            return text

    def complete_many(self, requests: Sequence[tuple[MessageSequence, PromptConfig]],
                      cache_mode: CacheMode | str = CacheMode.READ_WRITE) -> list[str]:
        """Complete several requests concurrently; results keep input order."""
        return self.map(lambda r: self.complete(r[0], r[1], cache_mode), requests)

    def map(self, fn: Callable, items: Iterable) -> list:
        items = list(items)
        if self.parallelism == 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
            return list(pool.map(fn, items))
