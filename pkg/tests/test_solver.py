"""Constrained subproblem solver tests: power-capped QPs and phase blocks."""

import math

import numpy as np
import pytest

from riscf.errors import ParameterError
from riscf.solver import (
    PowerSubproblem,
    SolverOptions,
    UnitModulusSubproblem,
    solve_pds,
    solve_power,
    solve_unit_modulus,
)


def identity_power_problem(v, budgets, n_rf=None, m=1, k=1):
    """min ||w - v||^2 split over per-AP identity Gram blocks."""
    v = np.asarray(v, dtype=complex).reshape(m, k, -1)
    n = v.shape[2]
    budgets = np.atleast_1d(np.asarray(budgets, dtype=float))
    a = budgets.shape[0]
    n_rf = n // a if n_rf is None else n_rf
    eye = np.broadcast_to(np.eye(n, dtype=complex), (m, n, n)).copy()
    gram = np.broadcast_to(np.eye(n_rf, dtype=complex), (a, m, n_rf, n_rf)).copy()
    return PowerSubproblem(xi=eye, xt=v, zeta=0.0, gram=gram, budgets=budgets)


def random_power_problem(rng, m=2, k=2, a=2, n_rf=2):
    n = a * n_rf
    basis = rng.normal(size=(m, n, n)) + 1j * rng.normal(size=(m, n, n))
    xi = np.einsum("mnp,mqp->mnq", basis, basis.conj()) / n
    xt = rng.normal(size=(m, k, n)) + 1j * rng.normal(size=(m, k, n))
    gram = np.broadcast_to(np.eye(n_rf, dtype=complex), (a, m, n_rf, n_rf)).copy()
    budgets = rng.uniform(0.5, 2.0, size=a)
    return PowerSubproblem(xi=xi, xt=xt, zeta=0.0, gram=gram, budgets=budgets)


def phase_problem(lin, quad_scale=1.0):
    lin = np.atleast_2d(np.asarray(lin, dtype=complex))
    b, n = lin.shape
    quad = np.broadcast_to(quad_scale * np.eye(n, dtype=complex), (b, n, n)).copy()
    return UnitModulusSubproblem(quad=quad, lin=lin)


class TestPowerAnalytic:
    def test_interior_optimum_is_unconstrained_target(self):
        # budgets generous: minimizing ||w - v||^2 must return v itself
        rng = np.random.default_rng(0)
        v = rng.normal(size=4) + 1j * rng.normal(size=4)
        prob = identity_power_problem(v, budgets=[100.0, 100.0])
        w, info = solve_power(prob, np.zeros((1, 1, 4), dtype=complex))
        assert np.max(np.abs(w.ravel() - v)) <= 1e-6
        assert info["iterations"] <= 500

    def test_binding_ball_projects_radially(self):
        # ||w0|| = 2 against a unit budget: optimum is w0 / 2
        w0 = np.array([1.2, -0.8j, 0.6, 1.0 + 0.6j], dtype=complex)
        w0 *= 2.0 / np.linalg.norm(w0)
        prob = identity_power_problem(w0, budgets=[1.0])
        start = w0.reshape(1, 1, 4) / 4.0
        w, info = solve_power(prob, start)
        assert np.max(np.abs(w.ravel() - w0 / 2.0)) <= 1e-6
        assert info["iterations"] <= 500
        assert info["kkt_feasibility"] <= 1e-8

    def test_multi_ap_mixed_activity(self):
        # one AP saturated, one interior; caps apply per AP independently
        v = np.array([2.0, 0.0, 0.1, 0.0], dtype=complex)
        prob = identity_power_problem(v, budgets=[1.0, 1.0])
        w, _ = solve_power(prob, np.zeros((1, 1, 4), dtype=complex))
        w = w.ravel()
        np.testing.assert_allclose(w[:2], [1.0, 0.0], atol=1e-6)
        np.testing.assert_allclose(w[2:], [0.1, 0.0], atol=1e-6)


class TestPowerGeneral:
    @pytest.mark.parametrize("seed", range(8))
    def test_random_problems_feasible_and_locally_optimal(self, seed):
        rng = np.random.default_rng(seed)
        prob = random_power_problem(rng)
        w, info = solve_power(prob, np.zeros_like(prob.xt))
        powers = prob.ap_powers(w)
        assert np.all(powers <= prob.budgets * (1.0 + 1e-8))
        # no feasible perturbation may beat the returned objective
        f = prob.objective(w)
        for _ in range(20):
            d = rng.normal(size=w.shape) + 1j * rng.normal(size=w.shape)
            cand = w + 1e-4 * d / np.linalg.norm(d)
            scale = np.sqrt(np.minimum(1.0, prob.budgets / np.maximum(prob.ap_powers(cand), 1e-300)))
            a_idx = np.repeat(np.arange(prob.num_aps), prob.n_rf)
            cand = cand * scale[a_idx][None, None, :]
            assert prob.objective(cand) >= f - 1e-7 * (1.0 + abs(f))

    def test_never_worse_than_feasible_start(self):
        rng = np.random.default_rng(99)
        prob = random_power_problem(rng)
        start = rng.normal(size=prob.xt.shape) + 1j * rng.normal(size=prob.xt.shape)
        scale = np.sqrt(np.minimum(1.0, prob.budgets / np.maximum(prob.ap_powers(start), 1e-300)))
        a_idx = np.repeat(np.arange(prob.num_aps), prob.n_rf)
        start = start * scale[a_idx][None, None, :]
        w, _ = solve_power(prob, start)
        assert prob.objective(w) <= prob.objective(start) + 1e-9

    def test_warm_start_agrees_with_cold(self):
        rng = np.random.default_rng(7)
        prob = random_power_problem(rng)
        w_cold, info = solve_power(prob, np.zeros_like(prob.xt))
        w_warm, _ = solve_power(prob, np.zeros_like(prob.xt), mu0=info["mu"])
        assert abs(prob.objective(w_warm) - prob.objective(w_cold)) <= 1e-6 * (
            1.0 + abs(prob.objective(w_cold))
        )

    def test_non_hermitian_quadratic_rejected(self):
        xi = np.zeros((1, 2, 2), dtype=complex)
        xi[0, 0, 1] = 1.0
        with pytest.raises(ParameterError):
            PowerSubproblem(xi=xi, xt=np.zeros((1, 1, 2), dtype=complex), zeta=0.0,
                            gram=np.eye(2, dtype=complex)[None, None], budgets=np.array([1.0]))

    def test_nonpositive_budget_rejected(self):
        with pytest.raises(ParameterError):
            PowerSubproblem(xi=np.eye(2, dtype=complex)[None],
                            xt=np.zeros((1, 1, 2), dtype=complex), zeta=0.0,
                            gram=np.eye(2, dtype=complex)[None, None],
                            budgets=np.array([0.0]))


class TestUnitModulusAnalytic:
    def test_phase_snaps_to_linear_term(self):
        # single entry, lin = 2 exp(j pi/4): optimum exp(j pi/4)
        prob = phase_problem([2.0 * np.exp(1j * np.pi / 4)])
        x, info = solve_unit_modulus(prob, np.array([[1.0 + 0j]]))
        assert abs(x[0, 0] - np.exp(1j * np.pi / 4)) <= 1e-6
        assert info["iterations"] <= 500

    def test_identity_quadratic_contributes_constant(self):
        # on the circle x^H x is fixed: solution depends on lin only
        lin = [1.0 - 1.0j, -2.0j, 0.5]
        x1, _ = solve_unit_modulus(phase_problem(lin, 1.0), np.ones((1, 3), dtype=complex))
        x5, _ = solve_unit_modulus(phase_problem(lin, 5.0), np.ones((1, 3), dtype=complex))
        want = np.array(lin) / np.abs(lin)
        np.testing.assert_allclose(x1[0], want, atol=1e-9)
        np.testing.assert_allclose(x5[0], want, atol=1e-9)


class TestUnitModulusGeneral:
    def random_problem(self, rng, b=3, n=12):
        basis = rng.normal(size=(b, n, n)) + 1j * rng.normal(size=(b, n, n))
        quad = np.einsum("bnp,bqp->bnq", basis, basis.conj()) / n
        lin = rng.normal(size=(b, n)) + 1j * rng.normal(size=(b, n))
        return UnitModulusSubproblem(quad=quad, lin=lin, offset=0.3)

    @pytest.mark.parametrize("seed", range(6))
    def test_descends_and_stays_unit_modulus(self, seed):
        rng = np.random.default_rng(seed)
        prob = self.random_problem(rng)
        x0 = np.exp(2j * np.pi * rng.random((3, 12)))
        x, _ = solve_unit_modulus(prob, x0)
        np.testing.assert_allclose(np.abs(x), 1.0, atol=1e-12)
        assert prob.objective(x) <= prob.objective(x0) + 1e-12

    @pytest.mark.parametrize("seed", range(6))
    def test_no_single_phase_improvement(self, seed):
        # rotating any single entry must not reduce the objective
        rng = np.random.default_rng(100 + seed)
        prob = self.random_problem(rng, b=2, n=8)
        x0 = np.exp(2j * np.pi * rng.random((2, 8)))
        x, _ = solve_unit_modulus(prob, x0)
        f = prob.objective(x)
        for b in range(2):
            for i in range(8):
                for ang in (1e-3, -1e-3, 0.3, -0.3):
                    cand = x.copy()
                    cand[b, i] *= np.exp(1j * ang)
                    assert prob.objective(cand) >= f - 1e-9 * (1.0 + abs(f))

    def test_restart_from_solution_is_stable(self):
        rng = np.random.default_rng(42)
        prob = self.random_problem(rng)
        x0 = np.exp(2j * np.pi * rng.random((3, 12)))
        x1, _ = solve_unit_modulus(prob, x0)
        f1 = prob.objective(x1)
        x2, info = solve_unit_modulus(prob, x1)
        f2 = prob.objective(x2)
        assert info["iterations"] <= 5
        assert f1 - 1e-9 * (1.0 + abs(f1)) <= f2 <= f1 + 1e-12

    def test_surrogate_value_is_offset_minus_objective(self):
        rng = np.random.default_rng(3)
        prob = self.random_problem(rng)
        x = np.exp(2j * np.pi * rng.random((3, 12)))
        assert prob.surrogate_value(x) == pytest.approx(0.3 - prob.objective(x), rel=1e-12)

    def test_dense_quad_is_block_diagonal(self):
        rng = np.random.default_rng(4)
        prob = self.random_problem(rng, b=2, n=3)
        dense = prob.dense_quad()
        assert dense.shape == (6, 6)
        assert np.all(dense[:3, 3:] == 0) and np.all(dense[3:, :3] == 0)
        np.testing.assert_array_equal(dense[:3, :3], prob.quad[0])

    def test_zero_start_entry_rejected(self):
        prob = phase_problem([1.0, 1.0])
        with pytest.raises(ParameterError):
            solve_unit_modulus(prob, np.array([[0.0 + 0j, 1.0 + 0j]]))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ParameterError):
            UnitModulusSubproblem(quad=np.eye(3, dtype=complex)[None],
                                  lin=np.zeros((1, 2), dtype=complex))


class TestDispatch:
    def test_routes_by_problem_type(self):
        rng = np.random.default_rng(1)
        pp = identity_power_problem(np.ones(2, dtype=complex), budgets=[4.0], n_rf=2)
        w, _ = solve_pds(pp, np.zeros((1, 1, 2), dtype=complex))
        np.testing.assert_allclose(w.ravel(), np.ones(2), atol=1e-6)
        up = phase_problem([1.0j])
        x, _ = solve_pds(up, np.ones((1, 1), dtype=complex))
        assert abs(x[0, 0] - 1.0j) <= 1e-6

    def test_unknown_type_rejected(self):
        with pytest.raises(ParameterError):
            solve_pds(object(), np.zeros(1), SolverOptions())
