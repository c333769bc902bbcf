"""Interior-point solver: correctness, certificates, and structure."""

import numpy as np
import pytest

from jointsparse.model import (
    JointCode,
    normalize_pair,
    random_dictionary_pair,
    synthesize,
)
from jointsparse.rng import substream
from jointsparse.solver import (
    JbpProblem,
    SolverOptions,
    check_feasibility,
    phase1_start,
    solve,
    tighten_activity,
)

from helpers import enumeration_best_objective, subgradient_opt2


def tiny_instance(seed, sparsity=2, eps=1e-3):
    dicts = random_dictionary_pair(6, 6, 8, seed=2000 + seed)
    pair, truth = synthesize(dicts, sparsity, 0.3, float("inf"), seed=500 + seed)
    npair, _, _ = normalize_pair(pair)
    return JbpProblem(
        y_int=npair.y_int, y_dep=npair.y_dep,
        phi_int=dicts.phi_int, phi_dep=dicts.phi_dep,
        eps_int=eps, eps_dep=eps, u_int=1.0, u_dep=1.0,
    )


class TestSolve:
    def test_zero_signals(self):
        dicts = random_dictionary_pair(5, 5, 7, seed=1)
        problem = JbpProblem(
            np.zeros(5), np.zeros(5), dicts.phi_int, dicts.phi_dep,
            eps_int=0.1, eps_dep=0.1, u_int=1.0, u_dep=1.0,
        )
        sol = solve(problem)
        assert sol.status == "Optimal"
        assert sol.objective <= 1e-7
        np.testing.assert_allclose(sol.code.a, 0.0, atol=1e-7)
        np.testing.assert_allclose(sol.code.b, 0.0, atol=1e-7)

    def test_matches_first_order_oracle(self):
        for seed in range(6):
            problem = tiny_instance(seed, sparsity=1 + seed % 2)
            sol = solve(problem)
            assert sol.status == "Optimal"
            f_ref, _ = subgradient_opt2(problem)
            assert abs(sol.objective - f_ref) <= 1e-4

    def test_not_above_enumeration_oracle(self):
        for seed in range(6):
            problem = tiny_instance(seed, sparsity=1 + seed % 2)
            sol = solve(problem)
            best = enumeration_best_objective(problem, max_size=3)
            assert sol.objective <= best + 1e-6

    def test_gap_certificate(self):
        problem = tiny_instance(3)
        opts = SolverOptions()
        sol = solve(problem, opts)
        assert sol.gap <= opts.gap_tol * (1.0 + abs(sol.objective))

    def test_infeasible_status(self):
        dicts = random_dictionary_pair(6, 6, 8, seed=9)
        y = np.ones(6)
        problem = JbpProblem(
            y, y, dicts.phi_int, dicts.phi_dep,
            eps_int=0.5, eps_dep=0.5, u_int=1e-4, u_dep=1e-4,
        )
        sol = solve(problem)
        assert sol.status == "Infeasible"
        assert sol.min_slack is not None and sol.min_slack > 0.0

    def test_depth_ball_dropped_with_empty_mask(self):
        problem = tiny_instance(4)
        masked = JbpProblem(
            problem.y_int, problem.y_dep, problem.phi_int, problem.phi_dep,
            problem.eps_int, problem.eps_dep, problem.u_int, problem.u_dep,
            mask_dep=np.zeros(6, dtype=bool),
        )
        sol = solve(masked)
        assert sol.status == "Optimal"
        np.testing.assert_allclose(sol.code.b, 0.0, atol=1e-6)
        # intensity side must still be served
        res = np.linalg.norm(masked.y_int - masked.phi_int @ sol.code.a)
        assert res <= masked.eps_int + 1e-6

    def test_masked_depth_restricts_residual(self):
        dicts = random_dictionary_pair(8, 8, 10, seed=10)
        pair, _ = synthesize(dicts, 2, 0.2, float("inf"), seed=11)
        npair, _, _ = normalize_pair(pair)
        mask = np.array([True, True, True, False, False, False, False, False])
        problem = JbpProblem(
            npair.y_int, npair.y_dep, dicts.phi_int, dicts.phi_dep,
            eps_int=0.05, eps_dep=0.05, u_int=1.0, u_dep=1.0, mask_dep=mask,
        )
        sol = solve(problem)
        assert sol.status == "Optimal"
        res_obs = np.linalg.norm((npair.y_dep - dicts.phi_dep @ sol.code.b)[mask])
        assert res_obs <= 0.05 + 1e-6


class TestProperties:
    def test_scaling_equivariance(self):
        problem = tiny_instance(5, eps=0.05)
        sol1 = solve(problem)
        s = 2.75
        scaled = JbpProblem(
            s * problem.y_int, s * problem.y_dep, problem.phi_int, problem.phi_dep,
            s * problem.eps_int, s * problem.eps_dep, s * problem.u_int, s * problem.u_dep,
        )
        sol2 = solve(scaled)
        assert abs(sol1.objective - sol2.objective) <= 1e-6
        np.testing.assert_allclose(sol2.code.a, s * sol1.code.a, atol=1e-6)
        np.testing.assert_allclose(sol2.code.b, s * sol1.code.b, atol=1e-6)
        np.testing.assert_allclose(sol2.code.x, sol1.code.x, atol=1e-6)

    def test_permutation_equivariance(self):
        problem = tiny_instance(6, eps=0.05)
        sol1 = solve(problem)
        perm = substream(6, "test-perm").permutation(8)
        permuted = JbpProblem(
            problem.y_int, problem.y_dep,
            problem.phi_int[:, perm], problem.phi_dep[:, perm],
            problem.eps_int, problem.eps_dep, problem.u_int, problem.u_dep,
        )
        sol2 = solve(permuted)
        np.testing.assert_allclose(sol2.code.x, sol1.code.x[perm], atol=1e-6)
        np.testing.assert_allclose(sol2.code.a, sol1.code.a[perm], atol=1e-6)
        np.testing.assert_allclose(sol2.code.b, sol1.code.b[perm], atol=1e-6)

    def test_monotone_in_ball_radii(self):
        for seed in range(4):
            problem = tiny_instance(seed + 20, eps=0.02)
            wider = JbpProblem(
                problem.y_int, problem.y_dep, problem.phi_int, problem.phi_dep,
                2.0 * problem.eps_int, 2.0 * problem.eps_dep,
                problem.u_int, problem.u_dep,
            )
            assert solve(wider).objective <= solve(problem).objective + 1e-6

    def test_max_rule_at_optimum(self):
        for seed in range(5):
            problem = tiny_instance(seed + 30, sparsity=2, eps=5e-3)
            sol = solve(problem)
            assert sol.status == "Optimal"
            expected = tighten_activity(
                sol.code.a, sol.code.b, problem.u_int, problem.u_dep
            )
            np.testing.assert_allclose(sol.code.x, expected, atol=1e-6)


class TestTightenActivity:
    def test_direct_evaluation(self):
        x = tighten_activity(np.array([1.0, 0.0]), np.array([0.0, 2.0]), 2.0, 2.0)
        np.testing.assert_allclose(x, [0.5, 1.0])

    def test_zero_codes(self):
        x = tighten_activity(np.zeros(4), np.zeros(4), 1.0, 3.0)
        np.testing.assert_array_equal(x, 0.0)

    def test_rejects_nonpositive_bounds(self):
        with pytest.raises(ValueError):
            tighten_activity(np.zeros(2), np.zeros(2), 0.0, 1.0)


class TestCheckFeasibility:
    def test_zero_code_on_zero_signals(self):
        dicts = random_dictionary_pair(4, 4, 5, seed=2)
        problem = JbpProblem(
            np.zeros(4), np.zeros(4), dicts.phi_int, dicts.phi_dep,
            eps_int=0.1, eps_dep=0.1, u_int=1.0, u_dep=1.0,
        )
        code = JointCode(np.zeros(5), np.zeros(5), np.zeros(5), 1.0, 1.0)
        report = check_feasibility(problem, code, tol=1e-9)
        assert report.feasible
        assert report.residual_int == 0.0 and report.residual_dep == 0.0
        assert report.box_violation == 0.0 and report.coupling_violation == 0.0

    def test_constructed_coupling_violation(self):
        dicts = random_dictionary_pair(4, 4, 5, seed=3)
        problem = JbpProblem(
            np.zeros(4), np.zeros(4), dicts.phi_int, dicts.phi_dep,
            eps_int=10.0, eps_dep=10.0, u_int=1.0, u_dep=1.0,
        )
        a = np.zeros(5)
        a[1] = 0.7
        x = np.zeros(5)
        x[1] = 0.5
        code = JointCode(a, np.zeros(5), x, 1.0, 1.0)
        report = check_feasibility(problem, code, tol=1e-6)
        assert report.coupling_violation == pytest.approx(0.2)
        assert not report.feasible

    def test_solver_output_feasible(self):
        problem = tiny_instance(7)
        sol = solve(problem)
        assert check_feasibility(problem, sol.code, tol=1e-6).feasible


class TestPhase1:
    def test_zero_point_when_balls_cover_signals(self):
        dicts = random_dictionary_pair(5, 5, 6, seed=4)
        y_int = 0.01 * np.ones(5)
        y_dep = 0.01 * np.ones(5)
        problem = JbpProblem(
            y_int, y_dep, dicts.phi_int, dicts.phi_dep,
            eps_int=1.0, eps_dep=1.0, u_int=1.0, u_dep=1.0,
        )
        x, a, b = phase1_start(problem)
        np.testing.assert_array_equal(a, 0.0)
        np.testing.assert_array_equal(b, 0.0)
        assert np.all(x > 0.0)
        code = JointCode(a, b, x, 1.0, 1.0)
        assert check_feasibility(problem, code, tol=-1e-9).feasible

    def test_infeasible_when_eps_below_minimal_residual(self):
        # tall system: the least-squares residual is positive
        rng = substream(5, "test-phase1")
        phi = rng.standard_normal((8, 3))
        y = rng.standard_normal(8)
        # oracle: minimal residual from unconstrained least squares
        res_min = np.linalg.norm(y - phi @ np.linalg.lstsq(phi, y, rcond=None)[0])
        problem = JbpProblem(
            y, y.copy(), phi, phi.copy(),
            eps_int=0.5 * res_min, eps_dep=0.5 * res_min, u_int=10.0, u_dep=10.0,
        )
        sol = solve(problem)
        assert sol.status == "Infeasible"
        assert sol.min_slack == pytest.approx(0.5 * res_min, rel=1e-3)

    def test_planted_instance_strictly_feasible(self):
        problem = tiny_instance(8)
        x, a, b = phase1_start(problem)
        code = JointCode(a, b, x, problem.u_int, problem.u_dep)
        report = check_feasibility(problem, code, tol=-1e-9)
        assert report.feasible
        assert report.residual_int < problem.eps_int
        assert report.residual_dep < problem.eps_dep
