import csv
from pathlib import Path

import pytest

from mergesim.domain import KinematicCondition, SimParams, TrackGeometry

DATA = Path(__file__).parent / "data"

_ACCEPTANCE: dict[str, str] = {}


@pytest.fixture
def params():
    return SimParams()


@pytest.fixture
def track():
    return TrackGeometry()


@pytest.fixture
def equal_speed_condition():
    def make(h, v=10.0, id="T"):
        return KinematicCondition(id, v, v, h, 0.0)
    return make


@pytest.fixture(scope="session")
def logit_rows():
    with (DATA / "logit_200.csv").open() as fh:
        return [(int(r["merge_first"]), float(r["h"]), float(r["dv"])) for r in csv.DictReader(fh)]


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _ACCEPTANCE[report.nodeid.split("::")[-1]] = report.outcome.upper()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(_ACCEPTANCE.items()):
        terminalreporter.write_line(f"{outcome:<7} {name}")


def write_synthetic_human_csv(path: Path, seed: int = 2024) -> None:
    """990 trials shaped like the human reference data: 28 collisions and 962
    merged trials with mean gap 3.85 m, mean RMSE 0.66 m/s and 510 joint trials.

    Outcomes follow the logistic model with the human estimates
    (-0.30, 1.11, -3.30) and gaps follow the linear model (3.54, 0.17, -0.20,
    0.06), rescaled so the gap mean is exactly 3.85.
    """
    import numpy as np

    rng = np.random.default_rng(seed)
    n_merged, n_joint, n_collide = 962, 510, 28
    h = rng.uniform(-4, 4, n_merged).round(3)
    dv = rng.choice([-0.8, 0.0, 0.8], n_merged)
    p = 1 / (1 + np.exp(-(-0.30 + 1.11 * h - 3.30 * dv)))
    left = rng.uniform(size=n_merged) < p
    gap = np.abs(3.54 + 0.17 * np.abs(h) - 0.20 * np.abs(dv) + 0.06 * h * dv + rng.normal(0, 1.0, n_merged))
    gap *= 3.85 / gap.mean()
    # joint trials: both drivers at 0.7/0.9 m/s; the rest: one driver at x, the other at 0.3
    x = (0.66 * 2 * n_merged - 1.6 * n_joint - 0.3 * (n_merged - n_joint)) / (n_merged - n_joint)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["trial_id", "h", "dv", "outcome", "gap_at_merge", "rmse_left", "rmse_right", "collided",
                    "piecewise_score"])
        for i in range(n_merged):
            if i < n_joint:
                rl, rr = (0.7, 0.9) if i % 2 else (0.9, 0.7)
            else:
                rl, rr = (x, 0.3) if i % 2 else (0.3, x)
            w.writerow([f"H{i}", h[i], dv[i], "left" if left[i] else "right", repr(float(gap[i])), rl, rr, 0, 0.85])
        for j in range(n_collide):
            w.writerow([f"X{j}", rng.choice([-2.0, 0.0, 2.0]), 0.0, "collision", "", 1.0, 1.0, 1, 0.85])
