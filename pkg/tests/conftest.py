"""Shared fixtures: seeded mock backends, the builtin taxonomy, fixture paths."""

from __future__ import annotations

from pathlib import Path

import pytest

from turnsmith.backends import MockBackend
from turnsmith.taxonomy import load_taxonomy

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def mock_backend() -> MockBackend:
    return MockBackend(seed=1)


@pytest.fixture
def builtin_taxonomy():
    return load_taxonomy()


@pytest.fixture
def intent(builtin_taxonomy):
    return builtin_taxonomy.categories[0]
