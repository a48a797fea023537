import numpy as np
import pytest
from hypothesis import settings

from probtypo.graph import Network

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


def chain(p_a=0.5, p_b_given_a1=0.8, p_b_given_a0=0.2) -> Network:
    return Network(
        ("a", "b"),
        {"a": None, "b": "a"},
        {
            "a": np.array([[1 - p_a, p_a]]),
            "b": np.array([[1 - p_b_given_a0, p_b_given_a0], [1 - p_b_given_a1, p_b_given_a1]]),
        },
    )


@pytest.fixture
def two_chain() -> Network:
    return chain()


# ---------------------------------------------------------------- acceptance summary

ACCEPTANCE_RESULTS: dict[str, tuple[str, str]] = {}


@pytest.fixture
def record_criterion():
    """Tests call record_criterion(id, passed, detail) before asserting."""

    def record(criterion: str, passed: bool, detail: str = ""):
        ACCEPTANCE_RESULTS[criterion] = ("PASS" if passed else "FAIL", detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE_RESULTS, key=lambda c: (len(c.split()[0]), c)):
        status, detail = ACCEPTANCE_RESULTS[criterion]
        terminalreporter.write_line(f"{status}  {criterion}  {detail}")
