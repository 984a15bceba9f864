import pytest

from evfleet.model import SystemParams


@pytest.fixture(scope="session")
def default_params() -> SystemParams:
    return SystemParams()


@pytest.fixture(scope="session")
def small_pack_params() -> SystemParams:
    """5 kWh pack: every drop-off routes to a charger."""
    return SystemParams(pack_size=5.0)
