from pathlib import Path

import pytest

import activemon

SPEC_DIR = Path(activemon.__file__).parent / "specs"


@pytest.fixture(scope="session")
def spec_dir() -> Path:
    return SPEC_DIR


@pytest.fixture(scope="session")
def drone_text() -> str:
    return (SPEC_DIR / "drone_experiment.lola").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def conflict_text() -> str:
    return (SPEC_DIR / "priority_conflict.lola").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def geofence_text() -> str:
    return (SPEC_DIR / "geofence_priority.lola").read_text(encoding="utf-8")
