from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fake_llm import FakeEndpoint, serve  # noqa: E402

TEST_KEY_ENV = "CLAIMEVAL_TEST_API_KEY"
TEST_KEY = "sk-test-not-a-real-key"


@pytest.fixture
def api_key(monkeypatch):
    monkeypatch.setenv(TEST_KEY_ENV, TEST_KEY)
    return TEST_KEY_ENV


@pytest.fixture
def fake_endpoint():
    return FakeEndpoint()


@pytest.fixture
def fake_server(fake_endpoint):
    server, url = serve(fake_endpoint)
    yield fake_endpoint, url
    server.shutdown()
    server.server_close()


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines so they survive output capture."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
