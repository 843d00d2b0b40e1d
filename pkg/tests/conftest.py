import shutil

import pytest

from rvos_harness.dataset_io import load_manifest
from rvos_harness.fixture import generate_fixture


@pytest.fixture(scope="session")
def fixture_root(tmp_path_factory):
    return generate_fixture(tmp_path_factory.mktemp("fixture"), seed=7)


@pytest.fixture(scope="session")
def manifest(fixture_root):
    return load_manifest(fixture_root, "valid")


@pytest.fixture
def fresh_fixture(tmp_path, fixture_root):
    dst = tmp_path / "fx"
    shutil.copytree(fixture_root, dst)
    return dst
