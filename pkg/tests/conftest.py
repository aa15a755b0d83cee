import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

sys.path.insert(0, str(Path(__file__).parent))

from treeqa import index as idx  # noqa: E402


@pytest.fixture(scope="session")
def toy_dir() -> Path:
    return FIXTURES / "toy"


@pytest.fixture(scope="session")
def evolution_dir() -> Path:
    return FIXTURES / "evolution"


@pytest.fixture(scope="session")
def toy_index(toy_dir) -> idx.Index:
    return idx.build_index(idx.read_corpus(toy_dir / "corpus.jsonl"))


@pytest.fixture(scope="session")
def evolution_index(evolution_dir) -> idx.Index:
    return idx.build_index(idx.read_corpus(evolution_dir / "corpus.jsonl"))
