from __future__ import annotations

import itertools

import pytest
from fastapi.testclient import TestClient

from feedbackforge.model import Rubric, RubricItem
from feedbackforge.persistence import DocumentStore, FileService, RelationalStore
from feedbackforge.service.app import create_app
from feedbackforge.service.config import DEFAULT_PROVIDERS, AppConfig
from feedbackforge.service.jobs import GenerationJobManager
from feedbackforge.service.seed import seed_fixtures

_counter = itertools.count()

# Pass/fail lines recorded by the acceptance tests.  They are replayed in the
# terminal summary because pytest's default capture redirects the stdout file
# descriptor itself, so even direct writes would be swallowed mid-run.
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def bearer(token: str) -> dict:
    return {"Authorization": f"Bearer {token}"}


@pytest.fixture
def relational():
    return RelationalStore(":memory:")


@pytest.fixture
def documents(tmp_path):
    return DocumentStore(tmp_path / "documents")


@pytest.fixture
def rubric():
    return Rubric(
        id="rub_test", title="Talk rubric",
        items=(
            RubricItem(id="it_a", title="Clarity",
                       level_descriptions={n: f"clarity level {n}" for n in range(1, 6)},
                       relevance_terms=frozenset({"clear", "structure"})),
            RubricItem(id="it_b", title="Pace",
                       level_descriptions={n: f"pace level {n}" for n in range(1, 6)},
                       relevance_terms=frozenset({"pace", "fast", "slow"})),
            RubricItem(id="it_c", title="Engagement",
                       level_descriptions={n: f"engagement level {n}" for n in range(1, 6)},
                       relevance_terms=frozenset()),
        ))


@pytest.fixture
def make_app(tmp_path):
    """Factory building a fully wired app over fresh in-memory stores."""

    def factory(*, seed=True, synchronous_jobs=True, providers=None,
                auto_generate_after=0):
        run_dir = tmp_path / f"app{next(_counter)}"
        relational = RelationalStore(":memory:")
        documents = DocumentStore(run_dir / "documents")
        files = FileService(run_dir / "files", relational)
        jobs = GenerationJobManager(
            relational, documents,
            providers if providers is not None else list(DEFAULT_PROVIDERS),
            synchronous=synchronous_jobs)
        config = AppConfig(auto_generate_after=auto_generate_after)
        app = create_app(config, relational=relational, documents=documents,
                         file_service=files, jobs=jobs)
        if seed:
            seed_fixtures(relational)
        return app, relational, documents

    return factory


@pytest.fixture
def seeded_client(make_app):
    app, relational, documents = make_app()
    client = TestClient(app)
    client.app_relational = relational
    client.app_documents = documents
    return client
