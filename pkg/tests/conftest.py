import math

import numpy as np
import pytest

from vsm_privacy.array_model import ArrayGeometry
from vsm_privacy.scene import SceneConfig, VitalSignProfile
from vsm_privacy.selection import PhaseSet

THETA0 = math.radians(30.0)


def make_phase_set(phases, n=8):
    """PhaseSet with arbitrary phases; configs are distinct dummy masks."""
    phases = np.asarray(phases, dtype=float)
    m = phases.shape[0]
    bitmasks = np.arange(1, m + 1, dtype=np.int64)
    masks = ((bitmasks[:, None] >> np.arange(max(n, m.bit_length() + 1))) & 1).astype(bool)
    return PhaseSet(masks, bitmasks, phases, np.ones(m), THETA0, THETA0, 1)


@pytest.fixture
def geometry():
    return ArrayGeometry()


@pytest.fixture
def scene():
    return SceneConfig()


@pytest.fixture
def profile():
    return VitalSignProfile()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "ACCEPTANCE_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
