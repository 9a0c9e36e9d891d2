from __future__ import annotations

import itertools

import numpy as np
import pytest

from serfsim import fixtures
from serfsim.data import CostSchedule, HarvestRecord, build_dataset, write_dataset
from serfsim.quantreg import pinball_loss


def make_dataset(
    treatments=("Control", "Fracture"),
    seasons=("S1", "S2"),
    n_harvests=4,
    n_reps=2,
    seed=0,
    spray=100.0,
    other=50.0,
):
    """Small balanced panel with random yields and prices."""
    rng = np.random.default_rng(seed)
    records = []
    bii = {}
    t = 0
    times = {}
    for s in seasons:
        for n in range(1, n_harvests + 1):
            t += 1
            times[(s, n)] = t
            bii[t] = round(float(rng.uniform(0, 1)), 3)
    prices = {key: round(float(rng.uniform(5, 30)), 2) for key in times}
    for s, tr, rep, n in itertools.product(seasons, treatments, range(1, n_reps + 1), range(1, n_harvests + 1)):
        records.append(HarvestRecord(s, tr, rep, n, times[(s, n)],
                                     round(float(rng.uniform(50, 400)), 1), prices[(s, n)]))
    costs = {
        (s, tr): CostSchedule(s, tr, 0.0 if tr == treatments[0] else spray, other)
        for s in seasons for tr in treatments
    }
    return build_dataset(records, costs, bii, control=treatments[0])


def brute_force_rq(X, y, tau):
    """Smallest pinball loss over all exact-fit bases (k-row subsets)."""
    n, k = X.shape
    best = np.inf
    for rows in itertools.combinations(range(n), k):
        A = X[list(rows)]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        beta = np.linalg.solve(A, y[list(rows)])
        best = min(best, pinball_loss(y - X @ beta, tau))
    return best


@pytest.fixture(scope="session")
def fixture_dataset():
    return fixtures.load_fixture()


@pytest.fixture
def small_csvs(tmp_path):
    ds = make_dataset()
    return ds, write_dataset(ds, tmp_path / "data")


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
