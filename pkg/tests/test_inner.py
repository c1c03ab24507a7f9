import numpy as np
import pytest

from pzobo.errors import InnerDivergence
from pzobo.harness import build_problem
from pzobo.inner import BatchPath, gd_inner, make_batch_path, sgd_inner
from pzobo.problems import quadratic_make


class TestGradientDescent:
    def test_fixed_point_is_preserved(self, quad10):
        x = quad10.initial_x(0)
        y_star = quad10.oracle(x)[0]
        for N in (0, 1, 5, 50):
            np.testing.assert_allclose(gd_inner(quad10, x, y_star, 0.05, N).y, y_star,
                                       atol=1e-13)

    def test_zero_steps_returns_start(self, quad10):
        y0 = np.arange(10.0)
        run = gd_inner(quad10, np.ones(10), y0, 0.1, 0, keep_trajectory=True)
        np.testing.assert_array_equal(run.y, y0)
        assert run.grad_calls == 0
        assert run.trajectory.shape == (1, 10)

    def test_exact_halving_contraction(self, toy_quadratic):
        # (I - alpha A) = 0.5 I with A = 2I, alpha = 0.25
        x = np.array([1.0, 1.0])
        y_star = toy_quadratic.oracle(x)[0]
        traj = gd_inner(toy_quadratic, x, np.zeros(2), 0.25, 8, keep_trajectory=True).trajectory
        dist = np.linalg.norm(traj - y_star, axis=1)
        np.testing.assert_allclose(dist[1:] / dist[:-1], 0.5, rtol=1e-12)

    def test_trajectory_length(self, quad10):
        run = gd_inner(quad10, np.zeros(10), np.zeros(10), 0.05, 7, keep_trajectory=True)
        assert run.trajectory.shape == (8, 10)
        np.testing.assert_array_equal(run.trajectory[-1], run.y)
        assert gd_inner(quad10, np.zeros(10), np.zeros(10), 0.05, 7).trajectory is None

    def test_linear_convergence_bound(self, quad10):
        x = quad10.initial_x(1)
        alpha = 1 / quad10.L_g
        y_star = quad10.oracle(x)[0]
        traj = gd_inner(quad10, x, np.zeros(10), alpha, 60, keep_trajectory=True).trajectory
        err = np.sum((traj - y_star) ** 2, axis=1)
        bound = (1 - alpha * quad10.mu_g) ** np.arange(61) * err[0]
        assert np.all(err <= bound * (1 + 1e-9) + 1e-28)

    def test_hr_residual_strictly_decreasing(self):
        prob = build_problem("hr-linear", 1)
        x = prob.initial_x(1)
        traj = gd_inner(prob, x, prob.initial_y(), 0.001, 20, keep_trajectory=True).trajectory
        res = [np.linalg.norm(prob.inner_grad_y(x, y)) for y in traj]
        assert np.all(np.diff(res) < 0)

    def test_affine_superposition(self, quad10):
        rng = np.random.default_rng(0)
        x, a, b = rng.standard_normal((3, 10))
        y = lambda z: gd_inner(quad10, z, np.zeros(10), 0.05, 30).y
        lhs = y(x + a + b) - y(x)
        rhs = (y(x + a) - y(x)) + (y(x + b) - y(x))
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_divergence_reports_step(self, quad10):
        with pytest.raises(InnerDivergence) as info:
            gd_inner(quad10, np.ones(10), np.ones(10), 10.0, 500)
        assert 1 <= info.value.step <= 500

    def test_rejects_bad_arguments(self, quad10):
        with pytest.raises(ValueError):
            gd_inner(quad10, np.zeros(10), np.zeros(10), 0.0, 5)
        with pytest.raises(ValueError):
            gd_inner(quad10, np.zeros(10), np.zeros(10), 0.1, -1)

    def test_stacked_runs_match_individual_runs(self, quad10):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((4, 10))
        stacked = gd_inner(quad10, X, np.zeros(10), 0.05, 12)
        for i in range(4):
            single = gd_inner(quad10, X[i], np.zeros(10), 0.05, 12).y
            np.testing.assert_allclose(stacked.y[i], single, rtol=1e-13, atol=1e-15)
        assert stacked.grad_calls == 4 * 12


class TestBatchPath:
    def test_structural_scan(self):
        path = make_batch_path(5, 10, 100, 16)
        assert len(path) == 10
        for batch in path:
            assert batch.size == 16
            assert np.unique(batch).size == 16
            assert batch.min() >= 0 and batch.max() < 100

    def test_deterministic_in_seed(self):
        a, b = make_batch_path(5, 10, 100, 16), make_batch_path(5, 10, 100, 16)
        assert all(np.array_equal(u, v) for u, v in zip(a, b))
        c = make_batch_path(6, 10, 100, 16)
        assert not all(np.array_equal(u, v) for u, v in zip(a, c))

    def test_key_gives_independent_paths(self):
        a = make_batch_path(5, 10, 100, 16, key=(0,))
        b = make_batch_path(5, 10, 100, 16, key=(1,))
        assert not all(np.array_equal(u, v) for u, v in zip(a, b))

    def test_full_batch(self):
        for batch in make_batch_path(0, 4, 12, 12):
            np.testing.assert_array_equal(batch, np.arange(12))

    @pytest.mark.parametrize("S", [0, 13])
    def test_rejects_bad_batch_size(self, S):
        with pytest.raises(ValueError):
            make_batch_path(0, 3, 12, S)


class TestSGD:
    def test_full_batch_path_reproduces_gd_bitwise(self, finite_sum_quad):
        prob = finite_sum_quad
        x = prob.initial_x(0)
        path = make_batch_path(0, 25, prob.m, prob.m)
        a = sgd_inner(prob, x, np.zeros(prob.d), 0.1, path).y
        b = gd_inner(prob, x, np.zeros(prob.d), 0.1, 25).y
        assert a.tobytes() == b.tobytes()

    def test_deterministic(self, finite_sum_quad):
        prob = finite_sum_quad
        path = make_batch_path(1, 30, prob.m, 4)
        x = prob.initial_x(0)
        a = sgd_inner(prob, x, np.zeros(prob.d), 0.1, path).y
        b = sgd_inner(prob, x, np.zeros(prob.d), 0.1, path).y
        assert a.tobytes() == b.tobytes()

    def test_shared_path_difference_depends_only_on_x(self, finite_sum_quad):
        # for affine dynamics the shared-path difference is linear in the shift
        prob = finite_sum_quad
        path = make_batch_path(2, 30, prob.m, 4)
        x = prob.initial_x(0)
        u = np.random.default_rng(0).standard_normal(prob.p)
        y = lambda z: sgd_inner(prob, z, np.zeros(prob.d), 0.1, path).y
        d1 = y(x + 1e-2 * u) - y(x)
        d2 = y(x + 2e-2 * u) - y(x)
        np.testing.assert_allclose(d2, 2 * d1, rtol=1e-8, atol=1e-14)

    def test_path_for_other_problem_rejected(self, finite_sum_quad):
        with pytest.raises(ValueError):
            sgd_inner(finite_sum_quad, np.zeros(6), np.zeros(5), 0.1, BatchPath([], 10, 2))

    def test_single_sample_error_bounded_and_decreasing(self):
        prob = quadratic_make(0, 4, 4, 4.0, m=32, spread=0.5)
        x = prob.initial_x(0)
        y_star = prob.oracle(x)[0]
        alpha = 0.5 / prob.L_max
        Ns = (1, 4, 16, 64)
        mse = []
        for N in Ns:
            errs = [np.sum((sgd_inner(prob, x, np.zeros(4), alpha,
                                      make_batch_path(9, N, prob.m, 1, key=(i,))).y - y_star) ** 2)
                    for i in range(200)]
            mse.append(np.mean(errs))
        assert np.all(np.isfinite(mse))
        assert np.all(np.diff(mse) < 0)
        assert mse[-1] < np.sum(y_star**2)
