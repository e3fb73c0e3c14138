"""Shared fixtures.

Everything here is cheap except the drive calibration, which runs a root
find; it is session-scoped so the suite pays for it once.
"""

from __future__ import annotations

import pytest

from solitonlink.fiber import FiberParams
from solitonlink.transmitter import MzmParams, PulseParams, calibrate_drive

SAMPLE_RATE = 256e9


@pytest.fixture(scope="session")
def fiber() -> FiberParams:
    return FiberParams()


@pytest.fixture(scope="session")
def calibrated_mzm() -> MzmParams:
    return calibrate_drive(MzmParams(), PulseParams(), SAMPLE_RATE)
