import json
from pathlib import Path

import pytest

from charannot.model import ChunkMeta, ChunkSet, read_corpus

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def novel_text() -> str:
    return (DATA_DIR / "pride_and_prejudice.txt").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def simpsons_corpus():
    return read_corpus(DATA_DIR / "simpsons_annotations.json")


@pytest.fixture(scope="session")
def cl100k_golden():
    return json.loads((DATA_DIR / "cl100k_golden.json").read_text(encoding="utf-8"))


def make_chunkset(texts: list[str], tokenizer_id: str = "bytes4") -> ChunkSet:
    """Bare chunk set for tests that do not care about overlap metadata."""
    chunks = {i: t for i, t in enumerate(texts, start=1)}
    meta = ChunkMeta(
        target_tokens=500,
        tokenizer_id=tokenizer_id,
        context_sentences=0,
        overlap_prefix_bytes={i: 0 for i in chunks},
    )
    return ChunkSet(chunks=chunks, meta=meta)


@pytest.fixture()
def simpsons_chunkset(simpsons_corpus):
    highest = max(rec.chunk for rec in simpsons_corpus.flatten())
    return make_chunkset([f"Scene {i} of the movie script." for i in range(1, highest + 1)])
