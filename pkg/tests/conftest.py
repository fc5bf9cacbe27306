from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fdelab.discretization import build_domain
from fdelab.evolution import StepConfig, run_to_extinction
from fdelab.steady_states import separable_solution, solve_lane_emden

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture(scope="session")
def dom256():
    return build_domain(1, [1.0], [256])


@pytest.fixture(scope="session")
def steady_p2(dom256):
    return solve_lane_emden(dom256, 2.0)


def bump(domain, center=0.3, width=0.08, height=3.0):
    return domain.evaluate(lambda x: height * np.exp(-((x - center) / width) ** 2))


def two_bump(domain):
    return domain.evaluate(lambda x: 3 * np.exp(-((x - 0.25) / 0.06) ** 2)
                           + 2 * np.exp(-((x - 0.7) / 0.06) ** 2))


@pytest.fixture(scope="session")
def runs_p2(dom256, steady_p2):
    """Separable, bump and two-bump runs to extinction, p = 2, 256 cells."""
    cfg = StepConfig(dt=1e-3, r_list=(2.0, 3.0, 4.0))
    data = {
        "separable": separable_solution(steady_p2, 1.0, 0.0),
        "bump": bump(dom256),
        "two_bump": two_bump(dom256),
    }
    return {k: run_to_extinction(u0, 2.0, cfg) for k, u0 in data.items()}
