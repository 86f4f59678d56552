from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

DATA = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_circuit(n, n_gates, rng):
    """Random Rot/CNOT circuit measuring a random wire."""
    from tnqc.circuit import Circuit, Cnot, Rot

    gates = []
    for _ in range(n_gates):
        if n > 1 and rng.random() < 0.4:
            c, t = rng.choice(n, 2, replace=False)
            gates.append(Cnot(int(c), int(t)))
        else:
            gates.append(Rot(int(rng.integers(n)), *rng.uniform(0, 2 * np.pi, 3)))
    return Circuit(n, gates, measured_wire=int(rng.integers(n)))


@pytest.fixture(scope="session")
def detectors():
    """Full, coarse and fine detection models trained on synthetic blobs."""
    from tnqc.imaging import DetectorConfig, train_detectors

    cfg = DetectorConfig(seed=0)
    return cfg, train_detectors(cfg)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
