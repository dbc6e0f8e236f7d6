"""
Tests for the MILP builder, LP writer/reader and the cross-check solvers
"""

import io
import logging
import math

import numpy as np
import pytest

from allocator import AllocationProblem, Objective, solve
from errors import DomainError
from milpgen import (
    MilpModel, PiecewiseLnSpec, VarKind, binaries_for, build_milp, cbc_available, evaluate_fixed,
    lp_text, parse_lp, solve_by_enumeration, solve_with_pulp, write_lp,
)

needs_cbc = pytest.mark.skipif(not cbc_available(), reason="CBC solver is not available")


def _random_problem(make_scenario, seed: int, objective: Objective, max_rbs: int = 1) -> AllocationProblem:
    rng = np.random.default_rng(seed)
    omega = 10 ** rng.uniform(-1, 2, size=(2, 2, 2))
    return AllocationProblem(make_scenario(omega, sigma=1.5), (1.0, 30.0), objective, max_rbs)


def test_golden_lp_file(two_user_problem, fixtures_dir):
    model = build_milp(two_user_problem, name="two_user_wsrmax")
    golden = (fixtures_dir / "lp" / "two_user_wsrmax.lp").read_bytes()
    assert lp_text(model).encode() == golden


def test_write_lp_to_path_and_stream(two_user_problem, tmp_path):
    model = build_milp(two_user_problem, name="two_user_wsrmax")
    path = tmp_path / "model.lp"
    write_lp(model, path)
    stream = io.StringIO()
    write_lp(model, stream)
    assert path.read_text() == stream.getvalue() == lp_text(model)


def test_two_user_model_shape(two_user_problem):
    model = build_milp(two_user_problem)
    assert len(model.binaries) == 4
    assert len(model.products) == 4
    assert len(model.continuous) == 8
    assert len(model.constraints) == 28


def test_single_slot_model(make_scenario):
    problem = AllocationProblem(make_scenario([[[5.0]]], sigma=2.0, num_normal=0), (1.0,), Objective.WSRMAX, 1)
    model = build_milp(problem)
    assert model.binaries == ["X_0_0_0"]
    assert model.continuous == ["PSI_0_0_0"]
    assert model.products == []
    best = solve_by_enumeration(model)
    assert best.values["PSI_0_0_0"] == pytest.approx(2.5)
    assert best.objective_value == pytest.approx(solve(problem).objective_value)


def test_round_trip_keeps_constraints(two_user_problem, make_scenario):
    pf = _random_problem(make_scenario, 4, Objective.PF_AFTER, max_rbs=2)
    for model in (build_milp(two_user_problem), build_milp(pf, PiecewiseLnSpec.for_problem(pf, 12))):
        parsed = parse_lp(lp_text(model))
        assert len(parsed.constraints) == len(model.constraints)
        assert [c.name for c in parsed.constraints] == [c.name for c in model.constraints]
        assert parsed.binaries == model.binaries
        assert sorted(parsed.continuous) == sorted(model.continuous)
        assert lp_text(parsed) == lp_text(model)


def test_empty_model_has_bounds_only():
    model = MilpModel("empty")
    model.add_variable("y", VarKind.CONTINUOUS, 0.0, 4.0)
    model.add_constraint("dropped", [("y", 0.0)], "<=", 1.0)
    text = lp_text(model)
    assert "Subject To" not in text
    assert text == "\\ Problem name: empty\nMaximize\n obj: 0.0\nBounds\n 0.0 <= y <= 4.0\nEnd\n"
    parsed = parse_lp(text)
    assert parsed.constraints == []
    assert parsed.variables["y"].upper == 4.0


def test_long_rows_wrap():
    model = MilpModel("wide")
    names = [model.add_variable(f"z{i}", VarKind.BINARY, 0.0, 1.0) for i in range(10)]
    model.add_constraint("sum", [(name, 1.0) for name in names], "<=", 3.0)
    model.objective = [(name, -0.5) for name in names]
    text = lp_text(model)
    assert "\n    + 1.0 z8 + 1.0 z9 <= 3.0\n" in text
    parsed = parse_lp(text)
    assert parsed.constraints[0].terms == [(name, 1.0) for name in names]
    assert parsed.objective == [(name, -0.5) for name in names]


def test_model_validation():
    model = MilpModel("bad")
    model.add_variable("a", VarKind.BINARY)
    with pytest.raises(DomainError):
        model.add_variable("a", VarKind.BINARY)
    model.add_constraint("c", [("b", 1.0)], "<=", 1.0)
    with pytest.raises(DomainError):
        model.validate()
    with pytest.raises(DomainError):
        model.add_constraint("d", [("a", 1.0)], "<", 1.0)


def test_enumeration_matches_solver_on_fixture(two_user_problem, caplog):
    caplog.set_level(logging.DEBUG, logger="milpgen")
    best = solve_by_enumeration(build_milp(two_user_problem))
    assert best.objective_value == pytest.approx(20 / 3, rel=1e-9)
    assert best.objective_value == pytest.approx(solve(two_user_problem).objective_value, rel=1e-9)
    assert best.values["X_0_0_0"] == 1.0 and best.values["X_1_0_1"] == 1.0
    assert "2 feasible binary patterns" in caplog.text


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_enumeration_matches_solver_wsrmax(make_scenario, seed):
    problem = _random_problem(make_scenario, seed, Objective.WSRMAX, max_rbs=2)
    best = solve_by_enumeration(build_milp(problem))
    assert best.objective_value == pytest.approx(solve(problem).objective_value, rel=1e-9)


def test_fixed_binaries_reproduce_sinr(make_scenario):
    problem = _random_problem(make_scenario, 9, Objective.WSRMAX, max_rbs=2)
    result = solve(problem)
    fixed = evaluate_fixed(build_milp(problem), binaries_for(result.assignment, problem.num_users))
    assert fixed is not None
    for (k, n, b), psi in result.sinr.items():
        assert fixed.values[f"PSI_{k}_{n}_{b}"] == pytest.approx(psi, rel=1e-9)
    assert fixed.objective_value == pytest.approx(result.objective_value, rel=1e-9)


def test_fixed_binaries_reject_infeasible_pattern(two_user_problem):
    model = build_milp(two_user_problem)
    assert evaluate_fixed(model, {"X_0_0_0": 1, "X_1_0_0": 1}) is None


@pytest.mark.parametrize("objective", [Objective.PF_BEFORE, Objective.PF_AFTER])
def test_tangent_cuts_bound_pf_from_above(make_scenario, objective):
    problem = _random_problem(make_scenario, 5, objective)
    exact = solve(problem).objective_value
    bounds = []
    for count in (9, 17, 33, 65):
        model = build_milp(problem, PiecewiseLnSpec.for_problem(problem, count))
        bounds.append(solve_by_enumeration(model).objective_value)
    for bound in bounds:
        assert bound >= exact - 1e-9
    for coarse, fine in zip(bounds, bounds[1:]):
        assert fine <= coarse + 1e-9
    assert bounds[-1] - exact < 0.02


def test_pf_model_declares_free_ln_variables(make_scenario):
    problem = _random_problem(make_scenario, 6, Objective.PF_AFTER)
    model = build_milp(problem, PiecewiseLnSpec((0.5, 1.0, 2.0), 10.0))
    ln_vars = [name for name in model.variables if name.startswith("L_")]
    assert ln_vars == ["L_0_0_0", "L_0_0_1", "L_0_1_0", "L_0_1_1"]
    assert " L_0_0_0 free" in lp_text(model)
    assert ("PSI_1_0_0", 30.0) in model.objective
    assert sum(1 for c in model.constraints if c.name.startswith("lncut_0_0_0_")) == 3


def test_closed_slot_for_zero_power(make_scenario):
    omega = np.ones((2, 1, 2))
    omega[0, 0, 1] = 0.0
    problem = AllocationProblem(make_scenario(omega), (1.0, 1.0), Objective.PF_BEFORE, 1)
    model = build_milp(problem, PiecewiseLnSpec((0.5, 1.0), 1.0))
    assert any(c.name == "lnzero_0_0_1" for c in model.constraints)
    best = solve_by_enumeration(model)
    assert best.values["X_0_0_0"] == 1.0


def test_piecewise_spec_validation(two_user_problem):
    with pytest.raises(DomainError):
        PiecewiseLnSpec((1.0,), 1.0)
    with pytest.raises(DomainError):
        PiecewiseLnSpec((1.0, 1.0), 1.0)
    with pytest.raises(DomainError):
        PiecewiseLnSpec((0.0, 1.0), 1.0)
    with pytest.raises(DomainError):
        PiecewiseLnSpec.for_problem(two_user_problem, 1)

    pw = PiecewiseLnSpec.for_problem(two_user_problem)
    assert len(pw.breakpoints) == 33
    assert pw.m_max == 8.0
    assert pw.breakpoints[0] == pytest.approx(1e-3)
    assert pw.breakpoints[-1] == pytest.approx(8.0)


@needs_cbc
def test_cbc_matches_solver_wsrmax(two_user_problem, make_scenario):
    for problem in (two_user_problem, _random_problem(make_scenario, 7, Objective.WSRMAX, max_rbs=2)):
        milp = solve_with_pulp(build_milp(problem))
        assert milp.objective_value == pytest.approx(solve(problem).objective_value, rel=1e-6)
        assert milp.solver == "cbc"


@needs_cbc
def test_cbc_pf_is_upper_bound(make_scenario):
    problem = _random_problem(make_scenario, 8, Objective.PF_AFTER)
    milp = solve_with_pulp(build_milp(problem, PiecewiseLnSpec.for_problem(problem, 16)))
    assert milp.objective_value >= solve(problem).objective_value - 1e-6 * max(1.0, abs(milp.objective_value))
    assert not math.isnan(milp.objective_value)


def test_default_breakpoints_nest_in_finer_grid(two_user_problem):
    default = PiecewiseLnSpec.for_problem(two_user_problem).breakpoints
    finer = PiecewiseLnSpec.for_problem(two_user_problem, 2 * (len(default) - 1) + 1).breakpoints
    np.testing.assert_allclose(finer[::2], default, rtol=1e-12)
