import pytest

from collapsemap.catalog import load_shipped


@pytest.fixture(scope="session")
def experiments():
    return load_shipped(include_proposed=True)


@pytest.fixture(scope="session")
def historical():
    return load_shipped(include_proposed=False)
