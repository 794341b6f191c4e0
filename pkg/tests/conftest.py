import numpy as np
import pytest

from rfinflation.data import DesignMatrix, SeriesFrame
from rfinflation.simdata import SimConfig, default_pipeline, generate_panel


ACCEPTANCE: dict = {}


def record_criterion(number: int, ok: bool, detail: str) -> bool:
    """Store one acceptance verdict; printed again in the terminal summary."""
    ACCEPTANCE[number] = (bool(ok), detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def random_design(rng, n=60, d=4, names=None):
    X = rng.normal(size=(n, d))
    y = X[:, 0] + 0.5 * np.where(X[:, 1] > 0, 1.0, -1.0) + 0.1 * rng.normal(size=n)
    names = names or tuple(f"x{j}_t" for j in range(d))
    months = np.datetime64("2000-01", "M") + np.arange(n)
    return DesignMatrix(y, X, tuple(names), months)


def sad(y):
    return float(np.abs(y - np.median(y)).sum()) if len(y) else 0.0


def brute_force_split(y, X, min_leaf=1, tol=1e-12):
    """Enumerate every (feature, midpoint) split; lowest SAD, then feature, then threshold."""
    parent = sad(y)
    found = []
    for j in range(X.shape[1]):
        xs = np.unique(X[:, j])
        for a, b in zip(xs[:-1], xs[1:]):
            thr = (a + b) / 2
            if thr >= b:
                thr = a
            mask = X[:, j] <= thr
            if mask.sum() < min_leaf or (~mask).sum() < min_leaf:
                continue
            found.append((sad(y[mask]) + sad(y[~mask]), j, thr))
    if not found:
        return None
    best = min(t for t, _, _ in found)
    if parent - best <= tol:
        return None
    tied = sorted((j, thr, t) for t, j, thr in found if t - best <= tol)
    j, thr, t = tied[0]
    return j, thr, t


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def sim_frame() -> SeriesFrame:
    return generate_panel(SimConfig(months=180, seed=4))


@pytest.fixture(scope="session")
def sim_design(sim_frame):
    return default_pipeline().design(sim_frame)
