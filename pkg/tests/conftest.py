from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fixtures import SnapshotFixture, build_fixture  # noqa: E402


@pytest.fixture(scope="session")
def snapshot_fixture() -> SnapshotFixture:
    return build_fixture()


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory, snapshot_fixture) -> Path:
    """Session directory holding the canonical TSV snapshot pair."""
    root = tmp_path_factory.mktemp("snapshots")
    snapshot_fixture.write_tsv(root, "old")
    snapshot_fixture.write_tsv(root, "new")
    return root
