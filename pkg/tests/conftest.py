import numpy as np
import pytest

from ranksample.experiments import SynthConfig, SystemTransform, build_world
from ranksample.metrics import DenseOracle, System

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def desk():
    """600 users x 200 items, the desk-scale SYNTH instance."""
    return build_world(SynthConfig())


@pytest.fixture(scope="session")
def small():
    t = [SystemTransform.parse(s) for s in ("OPT", "REV-4", "REV-8", "SHIFT-1", "SHIFT-3")]
    return build_world(SynthConfig(n_queries=25, n_docs=12, seed=11), t)


@pytest.fixture
def toy():
    """Two queries, four docs, two systems that disagree on the order."""
    queries = ("q1", "q2")
    docs = ("a", "b", "c", "d")
    mat = np.array([[3.0, 0.0, 1.0, 2.0],
                    [0.0, 2.0, 2.0, 1.0]])
    oracle = DenseOracle(queries, docs, mat, max_utility=3.0)
    s1 = System.from_lists("S1", {"q1": ["a", "b", "c", "d"], "q2": ["b", "c", "a", "d"]})
    s2 = System.from_lists("S2", {"q1": ["d", "a", "c", "b"], "q2": ["c", "b", "d", "a"]})
    return oracle, s1, s2, queries
