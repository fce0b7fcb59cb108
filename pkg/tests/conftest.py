import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from homqst.hom import ExperimentParams
from homqst.quantum import build_probe_frame

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

LABELS = "HVDARL"
MEASURED_EFF = dict(zip(LABELS, (1.0, 1.39, 1.19, 0.77, 1.19, 1.19)))


def random_density(dim, rng, rank=None):
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    return m / np.trace(m).real


@pytest.fixture
def frame6():
    return build_probe_frame(2, 1, "qubit6")


@pytest.fixture
def measured_eff():
    return dict(MEASURED_EFF)


@pytest.fixture
def measured_params():
    return ExperimentParams(rel_efficiency=MEASURED_EFF)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
