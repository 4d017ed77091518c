import numpy as np
import pytest

from wavemaslov.bundle_tracker import BundleCache
from wavemaslov.maslov_index import maslov_box, select_lambda_max
from wavemaslov.system_model import FHNParameters, make_fhn, make_scalar_bistable
from wavemaslov.wave_solver import WaveConfig, singular_guess, solve_wave, standing_guess

ACCEPTANCE_LINES: dict = {}


def record(number: int, ok: bool, detail: str):
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


class Fixture:
    """A solved wave with its shelf, shared bundle cache and lazily computed box."""

    def __init__(self, system, profile):
        self.system = system
        self.profile = profile
        self.shelf = select_lambda_max(system, profile)
        self.lambda_max = self.shelf.lambda_max
        self.cache = BundleCache(system, profile, self.lambda_max)
        self._box = None

    @property
    def box(self):
        if self._box is None:
            self._box = maslov_box(self.system, self.profile, lambda_max=self.lambda_max,
                                   cache=self.cache)
        return self._box


@pytest.fixture(scope="session")
def scalar_system():
    return make_scalar_bistable(0.3)


@pytest.fixture(scope="session")
def fhn_system():
    return make_fhn(FHNParameters(0.1, 0.001, 1.0))


@pytest.fixture(scope="session")
def scalar_profile(scalar_system):
    return solve_wave(scalar_system, standing_guess(0.3), WaveConfig(tol=1e-8))


@pytest.fixture(scope="session")
def fhn_profile(fhn_system):
    return solve_wave(fhn_system, singular_guess(FHNParameters(0.1, 0.001, 1.0)),
                      WaveConfig(tol=1e-8))


@pytest.fixture(scope="session")
def scalar(scalar_system, scalar_profile):
    return Fixture(scalar_system, scalar_profile)


@pytest.fixture(scope="session")
def fhn(fhn_system, fhn_profile):
    return Fixture(fhn_system, fhn_profile)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
