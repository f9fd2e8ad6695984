import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from defectcalc.geometry import QuadratureSpec

settings.register_profile(
    "repo", deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


@st.composite
def polynomial_text(draw, dim, max_terms=4, max_power=3):
    """Random polynomial in x1..x_dim as expression text."""
    n = draw(st.integers(1, max_terms))
    terms = []
    for _ in range(n):
        c = draw(st.floats(1e-3, 2.0)) * draw(st.sampled_from([-1.0, 1.0]))
        factors = [repr(round(c, 6))]
        for i in range(1, dim + 1):
            k = draw(st.integers(0, max_power))
            if k:
                factors.append(f"x{i}^{k}")
        terms.append("*".join(factors))
    return " + ".join(terms)


def points_in(box, n, seed=0):
    rng = np.random.default_rng(seed)
    lo = np.array([a for a, _ in box])
    hi = np.array([b for _, b in box])
    return lo + (hi - lo) * rng.random((n, len(box)))


@pytest.fixture
def q():
    return QuadratureSpec()


# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict = {}


def acceptance_line(n: int) -> str:
    ok, detail = ACCEPTANCE[n]
    return f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(acceptance_line(n))
