import numpy as np
import pytest
from scipy import sparse

from tegnn import ipm, teprog
from tegnn.ipm import IPMConfig

from conftest import random_desk_instance, random_small_instance
from oracles import gaussian_solve, vertex_enumeration_optimum


def scalar_lp():
    """max x  s.t.  x <= 1, x >= 0 (one demand row only)."""
    a = sparse.csr_matrix(np.array([[1.0]]))
    return teprog.CanonicalLP(
        np.array([1.0]), a, np.array([1.0]), (("demand", 0),), ((0, 0),)
    )


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            IPMConfig(mu0=0.0)
        with pytest.raises(ValueError):
            IPMConfig(tau=1.0)
        with pytest.raises(ValueError):
            IPMConfig(epsilon=0.0)
        with pytest.raises(ValueError):
            IPMConfig(boundary_fraction=1.0)
        with pytest.raises(ValueError):
            IPMConfig(max_newton_per_mu=0)


class TestInitialPoint:
    def test_formula_on_single_path(self, single_path_instance):
        lp = teprog.build_lp(single_path_instance)
        # delta = 0.5 * min(1/1, 5000/1000) = 0.5
        assert ipm.initial_point(lp).tolist() == [0.5]

    @pytest.mark.parametrize("trial", range(40))
    def test_strictly_feasible_on_random_instances(self, trial):
        lp = teprog.build_lp(random_desk_instance(trial % 10))
        x0 = ipm.initial_point(lp)
        assert np.all(x0 > 0)
        assert np.all(lp.a @ x0 < lp.b)


class TestNewtonDirection:
    def test_scalar_example(self):
        # max x st x<=1, x>=0 at x=0.5, mu=1: g=1, H=-8, dx=0.125
        lp = scalar_lp()
        dx = ipm.newton_direction(lp, np.array([0.5]), 1.0)
        assert dx[0] == pytest.approx(0.125, abs=1e-12)

    def test_zero_gradient_gives_zero_direction(self):
        # the barrier optimum of max x - penalty sits where g = 0; at the
        # symmetric point of a [0,1] box with no objective, dx must vanish
        a = sparse.csr_matrix(np.array([[1.0]]))
        lp = teprog.CanonicalLP(
            np.array([0.0]), a, np.array([1.0]), (("demand", 0),), ((0, 0),)
        )
        dx = ipm.newton_direction(lp, np.array([0.5]), 1.0)
        assert dx[0] == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.parametrize("trial", range(25))
    def test_matches_independent_gaussian_elimination(self, trial):
        inst = random_small_instance(trial)
        lp = teprog.build_lp(inst)
        rng = np.random.default_rng(70_000 + trial)
        x0 = ipm.initial_point(lp)
        x = x0 * rng.uniform(0.5, 1.5, size=len(x0))
        s = lp.b - lp.a @ x
        assert np.all(s > 0) and np.all(x > 0)
        mu = float(rng.uniform(0.5, 2.0)) * max(1.0, lp.c.max())
        dx = ipm.newton_direction(lp, x, mu)
        a = lp.a.toarray()
        g = lp.c - mu * (a.T @ (1.0 / s)) + mu / x
        h = -mu * (a.T @ np.diag(1.0 / s**2) @ a + np.diag(1.0 / x**2))
        expected = gaussian_solve(h, -g)
        assert np.allclose(dx, expected, rtol=1e-10, atol=1e-12)
        # ascent direction whenever the gradient is nonzero
        if np.linalg.norm(g) > 0:
            assert g @ dx > 0


class TestLineSearch:
    def test_zero_direction_gives_unit_step(self):
        lp = scalar_lp()
        assert ipm.line_search(lp, np.array([0.5]), np.zeros(1)) == 1.0

    def test_scalar_boundary_cap(self):
        # x=0.5, dx=0.125, boundary at x=1: alpha_max=4, min(1, 0.99*4)=1
        lp = scalar_lp()
        alpha = ipm.line_search(lp, np.array([0.5]), np.array([0.125]), 0.99, mu=1.0)
        assert alpha == 1.0

    @pytest.mark.parametrize("trial", range(20))
    def test_post_step_strict_feasibility(self, trial):
        # 20 x 500 = 10^4 sampled Newton steps, all post-step points interior
        lp = teprog.build_lp(random_small_instance(trial))
        a = lp.a.toarray()
        rng = np.random.default_rng(80_000 + trial)
        x0 = ipm.initial_point(lp)
        steps = 0
        while steps < 500:
            x = x0 * rng.uniform(0.2, 1.8, size=len(x0))
            if np.any(lp.b - a @ x <= 0):
                continue
            mu = float(rng.uniform(1e-4, 2.0)) * max(1.0, lp.c.max())
            dx = ipm.newton_direction(lp, x, mu)
            alpha = ipm.line_search(lp, x, dx, 0.99, mu=mu)
            stepped = x + alpha * dx
            assert np.all(stepped > 0)
            assert np.all(lp.b - a @ stepped > 0)
            steps += 1


class TestSolve:
    def test_demand_bound_optimum(self, single_path_instance):
        traj = ipm.solve(teprog.build_lp(single_path_instance))
        assert traj.final_x[0] == pytest.approx(1.0, abs=1e-6)
        assert traj.final_objective == pytest.approx(1000.0, rel=1e-6)

    def test_capacity_bound_optimum(self, capacity_bound_instance):
        traj = ipm.solve(teprog.build_lp(capacity_bound_instance))
        assert traj.final_x[0] == pytest.approx(0.5, abs=1e-6)
        assert traj.final_objective == pytest.approx(500.0, rel=1e-6)

    @pytest.mark.parametrize("trial", range(25))
    def test_matches_vertex_enumeration_on_small_instances(self, trial):
        lp = teprog.build_lp(random_small_instance(trial))
        traj = ipm.solve(lp)
        best, _x = vertex_enumeration_optimum(lp)
        assert traj.final_objective == pytest.approx(best, rel=1e-6)

    def test_iteration_count_in_band(self):
        for trial in range(10):
            traj = ipm.solve(teprog.build_lp(random_desk_instance(trial)))
            assert 5 <= traj.iterations <= 20

    @pytest.mark.parametrize("trial", range(15))
    def test_trajectory_discipline(self, trial):
        lp = teprog.build_lp(random_desk_instance(trial))
        traj = ipm.solve(lp)
        objs = [obj for _x, _mu, obj in traj.iterates]
        tol = 1e-9 * abs(traj.final_objective)
        assert all(b - a >= -tol for a, b in zip(objs, objs[1:]))
        for x, _mu, _obj in traj.iterates:
            assert np.all(x > 0)
            assert np.all(lp.a @ x < lp.b)

    def test_scale_equivariance(self):
        # scaling demands and capacities by gamma scales the optimum by gamma
        # and leaves optimal ratios unchanged
        inst = random_desk_instance(4)
        lp = teprog.build_lp(inst)
        gamma = 3.7
        scaled = teprog.CanonicalLP(
            lp.c * gamma,
            sparse.csr_matrix(
                np.vstack(
                    [lp.a.toarray()[: lp.num_demand_rows], lp.a.toarray()[lp.num_demand_rows:] * gamma]
                )
            ),
            np.concatenate(
                [lp.b[: lp.num_demand_rows], lp.b[lp.num_demand_rows:] * gamma]
            ),
            lp.row_meta,
            lp.col_meta,
        )
        t1 = ipm.solve(lp)
        t2 = ipm.solve(scaled)
        assert t2.final_objective == pytest.approx(gamma * t1.final_objective, rel=1e-6)
        assert np.allclose(t2.final_x, t1.final_x, atol=1e-6)


class TestCertify:
    def test_solver_output_certifies(self):
        lp = teprog.build_lp(random_desk_instance(1))
        traj = ipm.solve(lp)
        assert traj.kkt.max_residual <= 1e-6

    def test_perturbed_solution_detected(self):
        lp = teprog.build_lp(random_desk_instance(2))
        traj = ipm.solve(lp)
        mu = traj.iterates[-1][1]
        perturbed = traj.final_x * 0.9 + 0.01
        report = ipm.certify(lp, perturbed, mu)
        assert report.max_residual >= 1e-2

    def test_zero_solution_has_large_residual(self):
        lp = teprog.build_lp(random_desk_instance(3))
        traj = ipm.solve(lp)
        report = ipm.certify(lp, np.zeros(lp.num_cols), traj.iterates[-1][1])
        assert report.max_residual > 1.0


class TestTrajectorySerialization:
    def test_round_trip(self):
        lp = teprog.build_lp(random_desk_instance(6))
        traj = ipm.solve(lp)
        back = ipm.trajectory_from_dict(ipm.trajectory_to_dict(traj))
        assert back.iterations == traj.iterations
        assert np.array_equal(back.final_x, traj.final_x)
        assert back.kkt.max_residual == traj.kkt.max_residual
        for (x1, m1, o1), (x2, m2, o2) in zip(traj.iterates, back.iterates):
            assert np.array_equal(x1, x2) and m1 == m2 and o1 == o2
