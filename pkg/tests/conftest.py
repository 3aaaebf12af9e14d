import json
import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from beamstrike.stubs import StubBackend, serve_http  # noqa: E402

DATA_DIR = Path(__file__).parent / "data"

TOY_SAMPLES = [
    {"id": "s1", "label": 1, "text": "the movie was terrible"},
    {"id": "s2", "label": 1, "text": "awful acting and a terrible plot"},
    {"id": "s3", "label": 1, "text": "service here is awful"},
    {"id": "s4", "label": 1, "text": "terrible terrible terrible"},
    {"id": "s5", "label": 1, "text": "an awful, awful night"},
]

TOY_CONFIG = """\
[attack]
k = 4
b = 2
h = 3
importance = logit
max_queries = 2000
seed = 7
task = toy

[victim]
type = keyword
triggers = terrible, awful

[provider]
type = table
fallback = fine, good

[similarity]
type = token_f1
"""


def write_jsonl(path: Path, rows) -> Path:
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


@pytest.fixture
def toy_dataset(tmp_path) -> Path:
    return write_jsonl(tmp_path / "toy.jsonl", TOY_SAMPLES)


@pytest.fixture
def toy_config(tmp_path) -> Path:
    path = tmp_path / "toy.ini"
    path.write_text(TOY_CONFIG, encoding="utf-8")
    return path


@pytest.fixture
def stub_url():
    backend = StubBackend()
    with serve_http(backend) as url:
        yield url, backend


@pytest.fixture
def dead_url():
    """A localhost URL nothing listens on."""
    import socket

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    return f"http://127.0.0.1:{port}"


@pytest.fixture
def rng():
    return random.Random(1234)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line[1])
