"""
Shared pytest fixtures
"""

from pathlib import Path

import numpy as np
import pytest

from allocator import AllocationProblem, Objective
from medical_records import load_record
from scenario import Scenario, ScenarioConfig, op_flags_for

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def r1_record():
    """Six-row level-form record with three stroke days"""
    return load_record(FIXTURES / "records" / "r1.csv")


@pytest.fixture
def make_scenario():
    """Factory for hand-built scenarios from an omega[k, n, b] array"""
    def build(omega, sigma=1.0, num_normal=None, seed=0) -> Scenario:
        omega = np.asarray(omega, dtype=float)
        K, N, B = omega.shape
        if num_normal is None:
            num_normal = K - 1
        config = ScenarioConfig(num_pbs=B, rbs_per_pbs=N, num_users=K, num_normal=num_normal)
        return Scenario(config, omega, sigma, op_flags_for(config), seed)
    return build


@pytest.fixture
def two_user_problem(make_scenario) -> AllocationProblem:
    """2 users, 2 PBSs, 1 RB each; user 1 is an outpatient with UP = 2"""
    omega = [[[8.0, 2.0]], [[1.0, 4.0]]]
    return AllocationProblem(make_scenario(omega), (1.0, 2.0), Objective.WSRMAX, max_rbs=1)
