"""Pytest configuration and fixtures for meshvpon tests."""

from pathlib import Path

import pytest

# Path to test fixtures
FIXTURES_DIR = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    """Return the path to the fixtures directory."""
    return FIXTURES_DIR


@pytest.fixture
def config1():
    """Numerology 1: 0.5 ms slots, 270 PRBs."""
    from meshvpon.ran import NumerologyConfig

    return NumerologyConfig(mu=1)


@pytest.fixture
def config2():
    """Numerology 2: 0.25 ms slots, 135 PRBs."""
    from meshvpon.ran import NumerologyConfig

    return NumerologyConfig(mu=2)


@pytest.fixture
def split72_config1(config1):
    """Split-7.2 parameters for numerology 1."""
    return config1.split72_params()


@pytest.fixture
def cgs20(config1):
    """20 % CGS pool on 270 PRBs."""
    from meshvpon.ran import CgsConfig

    return CgsConfig(reserved_fraction=0.20, max_prbs=config1.max_prbs)


@pytest.fixture
def grant_cycle():
    """Default 125 us grant cycle on a 50 Gbps slice."""
    from meshvpon.dba import GrantCycleConfig

    return GrantCycleConfig()


@pytest.fixture
def small_scenario():
    """A short low-load run on 4 RUs."""
    from meshvpon.scenario import Scenario

    return Scenario.model_validate({
        "ran": {},
        "pon": {"n_rus": 4},
        "traffic": {"target_load_pct": 10},
        "run": {"duration_s": 0.1, "warmup_ms": 10, "seed": 1},
    })


@pytest.fixture
def temp_output_dir(tmp_path: Path) -> Path:
    """Create a temporary output directory."""
    output_dir = tmp_path / "output"
    output_dir.mkdir()
    return output_dir
