import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


def tiny_config_dict(**over):
    d = {
        "base": {"dataset_id": "A", "num_users": 4, "swipes_per_user": 30, "profile_spread": 0.5, "seed": 1},
        "external": [{"dataset_id": "B", "num_users": 3, "swipes_per_user": 20, "seed": 2}],
        "k_grid": [50, 235],
        "synth_counts": [10, 20],
        "cv_folds": 3,
        "attack_n": 300,
        "mlp": {"epochs": 3, "hidden": [16]},
        "gan": {"epochs": 2, "hidden": [16], "noise_dim": 8},
        "rf": {"n_trees": 5, "max_depth": 6},
    }
    d.update(over)
    return d


@pytest.fixture
def tiny_cfg_dict():
    return tiny_config_dict()


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(ok), detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
