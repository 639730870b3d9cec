from pathlib import Path

import numpy as np
import pytest

from wavesrc.core import Orbit, ReceiverArray
from wavesrc.forward import simulate_receivers

# circular-orbit fixture shared by the orbit, cli and acceptance tests
R, R1, T0, OMEGA = 2.0, 0.7, 6.0, 6.0
RHO, OMEGA_ORBIT = 0.3, 1.0
DATA_DT = 5e-5

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def circular_case():
    orbit = Orbit.circular(RHO, OMEGA_ORBIT, horizon=10.0, radius_bound=R1)
    array = ReceiverArray.symmetric(R)
    n = int(np.ceil((T0 + R + R1 + 0.05) / DATA_DT)) + 1
    series = simulate_receivers(orbit, OMEGA, array, 0.0, DATA_DT, n)
    return orbit, array, series


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
