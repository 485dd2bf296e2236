import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dotrag.graph_store import load_index  # noqa: E402
from dotrag.providers import MockEmbedder, ScriptedMock  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def embedder():
    return MockEmbedder(dim=256, seed=0)


@pytest.fixture
def tesla_index():
    return load_index(FIXTURES / "tesla_index.ndjson")


@pytest.fixture
def tesla_mock():
    return ScriptedMock.from_file(FIXTURES / "tesla_mock.json")


@pytest.fixture
def chain_index():
    return load_index(FIXTURES / "chain_index.ndjson")


@pytest.fixture
def chain_mock():
    return ScriptedMock.from_file(FIXTURES / "chain_mock.json")


def mock(*rules, **defaults) -> ScriptedMock:
    """Inline scripted mock: ``mock({"stage": ..., "response": ...}, path_judgment={"verdict": "partial"})``."""
    return ScriptedMock(rules, defaults)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` records one acceptance verdict and fails the test when ``ok`` is false."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def verdict(number: int, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        lines.append((number, line))
        print(line)
        assert ok, line

    return verdict


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
