import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from finsler_lab import ChartDomain, CustomAnalytic, EuclideanQuadratic, Randers, Riemannian, stereographic_sphere

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

QUARTIC = "(y1^4 + y2^4 + (1 + 0.2*sin(x1))*(y1^2 + y2^2)^2)^(1/4)"


def make_metrics():
    """One member of each family on the 2-torus, plus the sphere chart."""
    return {
        "euclidean": EuclideanQuadratic(np.array([[2.0, 0.3], [0.3, 1.0]])),
        "riemannian": Riemannian.from_expressions([["1 + 0.3*sin(x1)^2", "0.1*cos(x2)"], ["0.1*cos(x2)", "2 + sin(x1 + x2)"]]),
        "randers": Randers.from_expressions([[1, 0], [0, 1]], ["0", "0.3*sin(x1)"]),
        "custom": CustomAnalytic.from_expression(QUARTIC, 2),
    }


@pytest.fixture(scope="session")
def metrics():
    return make_metrics()


@pytest.fixture(scope="session")
def torus():
    return ChartDomain.torus(2)


@pytest.fixture(scope="session")
def sphere():
    return stereographic_sphere()


@pytest.fixture(scope="session")
def sphere_domain():
    return ChartDomain(2, bounds=((-2.0, 2.0), (-2.0, 2.0)))


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    """Store one summary line and fail the calling test if ``ok`` is false."""
    status = "PASS" if ok else "FAIL"
    ACCEPTANCE_LINES[number] = f"[{status}] criterion {number:2d}: {title} -- {detail}"
    print(ACCEPTANCE_LINES[number])
    assert ok, ACCEPTANCE_LINES[number]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
