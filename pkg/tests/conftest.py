import numpy as np
import pytest
from hypothesis import settings

from thermolattice.lattice import LatticeSpec
from thermolattice.states import DensityOperator

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = rank or dim
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    return m / np.trace(m).real


def random_state(spec: LatticeSpec, rng: np.random.Generator, rank: int | None = None) -> DensityOperator:
    return DensityOperator(random_density(spec.hilbert_dim, rng, rank), spec)


def random_pure(spec: LatticeSpec, rng: np.random.Generator) -> DensityOperator:
    v = rng.normal(size=spec.hilbert_dim) + 1j * rng.normal(size=spec.hilbert_dim)
    return DensityOperator.from_vector(v / np.linalg.norm(v), spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def chain3():
    return LatticeSpec(1, 3)


# one pass/fail line per acceptance criterion, printed after the run
_CRITERIA: dict[int, tuple[str, bool]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and not report.failed):
        return
    number, title = mark.args
    _CRITERIA[number] = (title, _CRITERIA.get(number, (title, True))[1] and report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}")
