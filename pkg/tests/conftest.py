from __future__ import annotations

from importlib import resources
from pathlib import Path

import pytest

from narrascene.narrative import load_story
from narrascene.terrain import CAParams, generate_base_mask
from narrascene.tiles import HashingEmbedder, build_index, load_tileset

DATA = Path(str(resources.files("narrascene") / "data"))


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def elara():
    return load_story(DATA / "stories" / "elara.json")


@pytest.fixture(scope="session")
def teaser():
    return load_story(DATA / "teaser.json")


@pytest.fixture(scope="session")
def sat_story():
    return load_story(DATA / "sat_fixture.json")


@pytest.fixture(scope="session")
def batch_stories():
    return [load_story(p) for p in sorted((DATA / "stories").glob("*.json")) if p.stem != "elara"]


@pytest.fixture(scope="session")
def fixture_index():
    return build_index(load_tileset(DATA / "tileset.jsonl"), HashingEmbedder())


@pytest.fixture(scope="session")
def mask20():
    return generate_base_mask(CAParams(), 3)


@pytest.fixture
def replay_args(data_dir, tmp_path):
    return [
        "--story-text", str(data_dir / "elara.txt"), "--title", "Elara",
        "--llm-mode", "replay", "--cassette", str(data_dir / "elara_cassette.json"),
        "--tileset", str(data_dir / "tileset.jsonl"),
    ]


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
    missing = [n for n in range(1, 10) if n not in results]
    for n in missing:
        terminalreporter.write_line(f"FAIL criterion {n}: did not run to completion")
