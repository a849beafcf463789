import os
from pathlib import Path

import pytest

from cegkit import build_ceg_auto, parse_tree

FIXTURES = Path(os.environ.get("CEG_FIXTURE_DIR", Path(__file__).parent / "fixtures"))


def fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text()


def fixture_path(name: str) -> str:
    return str(FIXTURES / name)


@pytest.fixture(scope="session")
def tableau_tree():
    return parse_tree(fixture_text("tableau.tree"))


@pytest.fixture(scope="session")
def binary_pair_tree():
    return parse_tree(fixture_text("binary_pair.tree"))


@pytest.fixture(scope="session")
def ladder_tree():
    return parse_tree(fixture_text("ladder.tree"))


@pytest.fixture(scope="session")
def incidents_tree():
    return parse_tree(fixture_text("incidents.tree"))


@pytest.fixture(scope="session")
def housing_tree():
    return parse_tree(fixture_text("housing.tree"))


@pytest.fixture(scope="session")
def court_tree():
    return parse_tree(fixture_text("court.tree"))


@pytest.fixture(scope="session")
def funnel_tree():
    return parse_tree(fixture_text("funnel.tree"))


@pytest.fixture(scope="session")
def ladder_ceg(ladder_tree):
    return build_ceg_auto(ladder_tree)


@pytest.fixture(scope="session")
def binary_pair_ceg(binary_pair_tree):
    return build_ceg_auto(binary_pair_tree)


@pytest.fixture(scope="session")
def incidents_ceg(incidents_tree):
    return build_ceg_auto(incidents_tree)


@pytest.fixture(scope="session")
def housing_ceg(housing_tree):
    return build_ceg_auto(housing_tree)


@pytest.fixture(scope="session")
def court_ceg(court_tree):
    return build_ceg_auto(court_tree)


@pytest.fixture(scope="session")
def funnel_ceg(funnel_tree):
    return build_ceg_auto(funnel_tree)
