import numpy as np
import pytest

from adexpert.datamodel import ADNI_COUNTS, SyntheticSpec, generate_synthetic

ADDR_A = "ab" * 32
ADDR_B = "cd" * 32


@pytest.fixture(scope="session")
def adni_like():
    return generate_synthetic(SyntheticSpec(ADNI_COUNTS, 90, 6, 2.5, 42))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def injected_outliers(seed: int, n: int = 1000, frac: float = 0.05, sigma: float = 8.0):
    """2-D standard normal sample with ``frac * n`` rows replaced by points
    at radius ``sigma`` in a random direction. Returns (X, is_outlier)."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 2))
    n_out = int(round(frac * n))
    idx = rng.choice(n, size=n_out, replace=False)
    theta = rng.uniform(0, 2 * np.pi, size=n_out)
    X[idx] = sigma * np.column_stack([np.cos(theta), np.sin(theta)])
    mask = np.zeros(n, dtype=bool)
    mask[idx] = True
    return X, mask


# --- acceptance summary -----------------------------------------------------

_CRITERIA: dict[int, str] = {}
_ITEM_CRITERION: dict[str, int] = {}
_OUTCOMES: dict[int, list[tuple[str, str]]] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            number, title = mark.args
            _CRITERIA[number] = title
            _ITEM_CRITERION[item.nodeid] = number


def pytest_runtest_logreport(report):
    number = _ITEM_CRITERION.get(report.nodeid)
    if number is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _OUTCOMES.setdefault(number, []).append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        outcomes = _OUTCOMES.get(number, [])
        if not outcomes:
            verdict = "NOT RUN"
        elif all(o == "passed" for _, o in outcomes):
            verdict = "PASS"
        else:
            verdict = "FAIL"
        failed = [name for name, o in outcomes if o != "passed"]
        detail = f"  (failed: {', '.join(failed)})" if failed else ""
        terminalreporter.write_line(f"criterion {number}: {verdict}  {_CRITERIA[number]}{detail}")
