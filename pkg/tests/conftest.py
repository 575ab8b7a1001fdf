from pathlib import Path

import pytest

from vulnscribe import Document, LlmGateway, LlmParams, ReplayStore, ScriptedBackend

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture()
def scripted_gateway() -> LlmGateway:
    """Live gateway backed by the deterministic offline model."""
    return LlmGateway(mode="live", backend=ScriptedBackend())


@pytest.fixture()
def replay_gateway() -> LlmGateway:
    """Replay-only gateway over the bundled fixture transcripts."""
    return LlmGateway(mode="replay", replay_store=ReplayStore(FIXTURES / "replay"))


@pytest.fixture()
def params() -> LlmParams:
    return LlmParams(model_id="model-a")


def make_document(body: str, doc_id: str = "doc", **kwargs) -> Document:
    defaults = {"source_kind": "other", "title": "Test Document"}
    defaults.update(kwargs)
    return Document(id=doc_id, body=body, **defaults)
