import hypothesis
import pytest

from smartrar import PriorSpec, UtilityTable

hypothesis.settings.register_profile(
    "default", deadline=None, max_examples=100, derandomize=True
)
hypothesis.settings.load_profile("default")


@pytest.fixture
def default_table() -> UtilityTable:
    return UtilityTable.default()


@pytest.fixture
def prior() -> PriorSpec:
    return PriorSpec()
