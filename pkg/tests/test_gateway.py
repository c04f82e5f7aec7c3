from __future__ import annotations

import json
import logging
import threading

import httpx
import pytest

from claimeval.gateway import (
    CacheMode,
    Gateway,
    GatewayError,
    RateLimiter,
    ReplayMiss,
    ResponseCache,
    request_digest,
)
from claimeval.prompts import PromptConfig, PromptStyle, render_prompt

CFG = PromptConfig(style=PromptStyle.JSON)


def _msgs(h="The lungs are clear."):
    return render_prompt(CFG, {"premise": "Lungs are clear bilaterally.", "hypothesis": h})


def _gateway(tmp_path, transport, api_key, **kw):
    kw.setdefault("sleep", lambda s: None)
    return Gateway(cache_dir=tmp_path / "cache", api_key_env=api_key, transport=transport, **kw)


def test_digest_ignores_whitespace_and_key_order():
    a = [{"role": "system", "content": "x  y"}, {"role": "user", "content": "z\n"}]
    b = [{"content": "x y", "role": "system"}, {"content": " z", "role": "user"}]
    assert request_digest("m", 0, a) == request_digest("m", 0.0, b)
    assert request_digest("m", 0, a) != request_digest("m", 0.5, a)
    assert request_digest("m", 0, a) != request_digest("n", 0, a)


def test_read_write_then_replay(tmp_path, api_key, fake_endpoint):
    gw = _gateway(tmp_path, fake_endpoint.transport(), api_key)
    first = gw.complete(_msgs(), CFG, CacheMode.READ_WRITE)
    again = gw.complete(_msgs(), CFG, CacheMode.READ_WRITE)
    assert first == again and gw.network_calls == 1 and gw.cache_hits == 1
    digest = gw.digest(_msgs(), CFG)
    assert (tmp_path / "cache" / digest[:2] / f"{digest}.json").is_file()

    replay = _gateway(tmp_path, None, api_key)
    assert replay.complete(_msgs(), CFG, CacheMode.REPLAY_ONLY) == first
    assert replay.network_calls == 0
    with pytest.raises(ReplayMiss):
        replay.complete(_msgs("Something else."), CFG, CacheMode.REPLAY_ONLY)


def test_bypass_always_calls_and_never_writes(tmp_path, api_key, fake_endpoint):
    gw = _gateway(tmp_path, fake_endpoint.transport(), api_key)
    gw.complete(_msgs(), CFG, CacheMode.BYPASS)
    gw.complete(_msgs(), CFG, CacheMode.BYPASS)
    assert gw.network_calls == 2
    assert len(ResponseCache(tmp_path / "cache")) == 0


def test_concurrent_duplicates_send_once(tmp_path, api_key, fake_endpoint):
    gw = _gateway(tmp_path, fake_endpoint.transport(), api_key, parallelism=8)
    out = gw.map(lambda _: gw.complete(_msgs(), CFG), range(16))
    assert len(set(out)) == 1
    assert len(fake_endpoint.requests) == 1
    assert len(ResponseCache(tmp_path / "cache")) == 1


def test_map_preserves_order(tmp_path, api_key, fake_endpoint):
    gw = _gateway(tmp_path, fake_endpoint.transport(), api_key, parallelism=4)
    assert gw.map(lambda x: x * 2, range(20)) == [x * 2 for x in range(20)]


def test_retry_with_backoff_on_429_and_5xx(tmp_path, api_key):
    statuses = iter([429, 503, 200])
    sleeps = []

    def handler(request):
        code = next(statuses)
        if code != 200:
            return httpx.Response(code)
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    gw = _gateway(tmp_path, httpx.MockTransport(handler), api_key, backoff=0.5, sleep=sleeps.append)
    assert gw.complete(_msgs(), CFG) == "ok"
    assert sleeps == [0.5, 1.0]
    assert gw.network_calls == 3


def test_client_error_fails_fast(tmp_path, api_key):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401)

    gw = _gateway(tmp_path, httpx.MockTransport(handler), api_key)
    with pytest.raises(GatewayError) as info:
        gw.complete(_msgs(), CFG)
    assert len(calls) == 1 and info.value.attempts == 1


def test_exhausted_retries(tmp_path, api_key):
    gw = _gateway(tmp_path, httpx.MockTransport(lambda r: httpx.Response(500)), api_key, max_retries=3)
    with pytest.raises(GatewayError) as info:
        gw.complete(_msgs(), CFG)
    assert info.value.attempts == 3
    assert len(ResponseCache(tmp_path / "cache")) == 0


def test_transport_errors_are_retried(tmp_path, api_key):
    attempts = []

    def handler(request):
        attempts.append(1)
        if len(attempts) == 1:
            raise httpx.ConnectError("boom", request=request)
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    gw = _gateway(tmp_path, httpx.MockTransport(handler), api_key)
    assert gw.complete(_msgs(), CFG) == "ok"


def test_key_from_env_only_and_never_logged(tmp_path, api_key, fake_endpoint, caplog, monkeypatch):
    caplog.set_level(logging.DEBUG)
    gw = _gateway(tmp_path, fake_endpoint.transport(), api_key)
    gw.complete(_msgs(), CFG)
    assert fake_endpoint.auth_headers == ["Bearer sk-test-not-a-real-key"]
    assert "sk-test" not in caplog.text
    cached = next((tmp_path / "cache").glob("*/*.json")).read_text()
    assert "sk-test" not in cached

    monkeypatch.delenv(api_key)
    with pytest.raises(GatewayError, match="not set"):
        _gateway(tmp_path / "other", fake_endpoint.transport(), api_key).complete(_msgs(), CFG)


def test_cache_entry_records_request(tmp_path, api_key, fake_endpoint):
    gw = _gateway(tmp_path, fake_endpoint.transport(), api_key)
    gw.complete(_msgs(), CFG)
    obj = json.loads(next((tmp_path / "cache").glob("*/*.json")).read_text())
    assert obj["request"]["model"] == "gpt-4" and obj["request"]["temperature"] == 0.0


def test_rate_limiter_sliding_window():
    now = [0.0]
    slept = []

    def sleep(s):
        slept.append(s)
        now[0] += s

    lim = RateLimiter(2, clock=lambda: now[0], sleep=sleep)
    lim.acquire()
    lim.acquire()
    lim.acquire()
    assert slept and sum(slept) == pytest.approx(60.0)


def test_parallelism_bound(tmp_path, api_key):
    active, peak = [0], [0]
    lock = threading.Lock()
    release = threading.Event()

    def handler(request):
        with lock:
            active[0] += 1
            peak[0] = max(peak[0], active[0])
        release.wait(0.05)
        with lock:
            active[0] -= 1
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    gw = _gateway(tmp_path, httpx.MockTransport(handler), api_key, parallelism=2)
    gw.map(lambda i: gw.complete(_msgs(f"h{i}"), CFG, CacheMode.BYPASS), range(8))
    assert peak[0] <= 2
