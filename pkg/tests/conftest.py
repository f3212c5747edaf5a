from pathlib import Path

import pytest

from kgrag.kg import load_kg
from kgrag.llm import MockLlmClient
from kgrag.retrieval import ingest_corpus, load_corpus_file

DATA_DIR = Path(__file__).parent / "data"

GOLDEN_QUESTION = "On which river is the birthplace of the composer of the Moonlight Sonata?"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture()
def golden_corpus():
    return ingest_corpus(load_corpus_file(str(DATA_DIR / "golden_corpus.jsonl")))


@pytest.fixture()
def golden_kg():
    return load_kg(DATA_DIR / "golden_kg.jsonl")


@pytest.fixture()
def golden_mock():
    return MockLlmClient.from_file(str(DATA_DIR / "golden_mock.json"))
