"""Shared fixtures: compiled model, booted assistants, HTTP test client."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from confbot.assistant import Assistant, load_corpus
from confbot.config import data_path, load_config
from confbot.nlu import compile_model
from confbot.profiles import ProfileStore

TESTS_DIR = Path(__file__).parent
DATA_DIR = TESTS_DIR / "data"


@pytest.fixture(scope="session")
def corpus_doc() -> dict:
    return json.loads(Path(data_path("corpus.json")).read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def model():
    specs, gazetteers = load_corpus(data_path("corpus.json"))
    return compile_model(specs, gazetteers)


@pytest.fixture(scope="session")
def paraphrases() -> dict:
    return json.loads((DATA_DIR / "paraphrases.json").read_text(encoding="utf-8"))


def make_assistant(tmp_path: Path, *, seed_profiles: bool = True, **overrides) -> Assistant:
    """Boot a fresh assistant against the shipped fixtures and a tmp log dir."""
    config = load_config(None, env={}, log_dir=str(tmp_path / "logs"), **overrides)
    if seed_profiles:
        store = ProfileStore(config.log_dir)
        doc = json.loads(Path(data_path("profiles_demo.json")).read_text(encoding="utf-8"))
        store.import_doc(doc)
    return Assistant(config)


@pytest.fixture()
def assistant(tmp_path) -> Assistant:
    return make_assistant(tmp_path)


@pytest.fixture()
def client(assistant):
    from starlette.testclient import TestClient

    from confbot.gateway import create_app

    assistant.config.admin_token = "test-admin"
    with TestClient(create_app(assistant)) as tc:
        yield tc
