import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays


def e(i, d):
    v = np.zeros(d)
    v[i] = 1.0
    return v


@st.composite
def unit_vectors(draw, dim=None, min_dim=2, max_dim=16):
    d = dim if dim is not None else draw(st.integers(min_dim, max_dim))
    v = draw(arrays(np.float64, d, elements=st.floats(-1, 1, allow_nan=False, allow_subnormal=False)))
    n = np.linalg.norm(v)
    if n < 1e-3:
        v = e(0, d)
        n = 1.0
    return v / n


@st.composite
def unit_pairs(draw, min_cos=-0.999):
    d = draw(st.integers(2, 16))
    z = draw(unit_vectors(dim=d))
    h = draw(unit_vectors(dim=d))
    if z @ h <= min_cos:
        h = -h
    return z, h


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(1234))


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
