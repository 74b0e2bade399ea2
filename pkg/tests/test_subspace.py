"""Tests for the multi-fidelity model-based active-subspace machinery."""

import warnings

import numpy as np
import pytest

from mfrom.dataset import DesignMatrix, sample_doe
from mfrom.subspace import (
    LinearDiscrepancy,
    MfLatentSurrogate,
    RbfSurrogate,
    SubspaceOptions,
    CovarianceEstimate,
    build_mf_surrogate,
    eigendecompose_select,
    estimate_covariance,
    find_active_subspace,
    fit_discrepancy,
    fit_linear_surrogate,
    fit_rbf,
    mf_gradient,
)

from conftest import principal_angle, unit_box


def _constant_rbf(value, d):
    """RBF surrogate that is identically `value` with zero kernel weights."""
    coeffs = np.zeros(d + 1)
    coeffs[0] = value
    return RbfSurrogate(centers=np.zeros((1, d)), weights=np.zeros(1),
                        trend_coeffs=coeffs)


class TestFitDiscrepancy:
    def test_zero_residual_target(self):
        x = sample_doe(unit_box(3), 10, seed=0)
        g = np.sin(x.values[:, 0])
        disc = fit_discrepancy(x, g, g)
        assert abs(disc.intercept) < 1e-12
        assert np.allclose(disc.slope, 0.0, atol=1e-12)

    def test_exact_linear_target(self):
        x = sample_doe(unit_box(4), 20, seed=1)
        g = np.cos(x.values[:, 1])
        h = g + 3.0 + 2.0 * x.values[:, 0]
        disc = fit_discrepancy(x, h, g)
        assert abs(disc.intercept - 3.0) < 1e-10
        assert np.allclose(disc.slope, [2.0, 0, 0, 0], atol=1e-10)
        # Normal-equations oracle on the augmented [1 X] system.
        aug = np.column_stack([np.ones(20), x.values])
        coef, _, _, _ = np.linalg.lstsq(aug, h - g, rcond=None)
        assert abs(disc.intercept - coef[0]) < 1e-10
        assert np.allclose(disc.slope, coef[1:], atol=1e-10)

    def test_symmetric_quadratic_three_points(self):
        x = DesignMatrix(values=np.array([[-1.0], [0.0], [1.0]]),
                         bounds=unit_box(1))
        g = np.zeros(3)
        h = x.values[:, 0] ** 2
        disc = fit_discrepancy(x, h, g)
        assert abs(disc.intercept - 2.0 / 3.0) < 1e-10
        assert abs(disc.slope[0]) < 1e-10

    def test_single_sample(self):
        disc = fit_discrepancy(np.array([[0.5, 0.5]]), np.array([3.0]),
                               np.array([1.0]))
        assert disc.intercept == 2.0
        assert np.allclose(disc.slope, 0.0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="sample count"):
            fit_discrepancy(np.zeros((3, 2)), np.zeros(3), np.zeros(4))

    def test_rank_deficient_warns_and_stays_bounded(self):
        # Fewer samples than d + 1: the unpenalized problem is underdetermined
        # and exact interpolants carry huge spurious slopes; the fit must warn
        # and keep the slope on the scale of the data.
        rng = np.random.default_rng(2)
        x = rng.uniform(-1, 1, size=(10, 20))
        h = np.sin(x[:, 0]) + 0.5
        with pytest.warns(UserWarning, match="rank-deficient"):
            disc = fit_discrepancy(x, h, np.zeros(10))
        assert np.linalg.norm(disc.slope) < 20.0

    def test_predict_and_gradient(self):
        disc = LinearDiscrepancy(intercept=1.5, slope=np.array([2.0, -1.0]))
        x = np.array([[1.0, 1.0], [0.0, 2.0]])
        assert np.allclose(disc.predict(x), [2.5, -0.5])
        assert np.allclose(disc.gradient(x), [[2.0, -1.0], [2.0, -1.0]])


class TestFitRbf:
    def test_constant_data(self):
        x = sample_doe(unit_box(2), 12, seed=3)
        surr = fit_rbf(x, np.full(12, 5.0))
        probe = sample_doe(unit_box(2), 20, seed=4).values
        assert np.allclose(surr.predict(probe), 5.0, atol=1e-8)
        assert np.allclose(surr.weights, 0.0, atol=1e-8)

    def test_linear_data_exact(self):
        x = DesignMatrix(values=np.linspace(-1, 1, 5)[:, None],
                         bounds=unit_box(1))
        g = 2.0 * x.values[:, 0] + 1.0
        surr = fit_rbf(x, g)
        probe = np.array([[-0.61], [0.37], [0.9]])
        assert np.allclose(surr.predict(probe),
                           2.0 * probe[:, 0] + 1.0, atol=1e-9)

    def test_interpolation(self):
        x = sample_doe(unit_box(3), 25, seed=5)
        g = np.sin(3 * x.values[:, 0]) * np.cos(x.values[:, 1])
        surr = fit_rbf(x, g)
        data_range = np.ptp(g)
        assert np.max(np.abs(surr.predict(x.values) - g)) < 1e-8 * data_range

    def test_side_conditions(self):
        x = sample_doe(unit_box(3), 25, seed=6)
        g = x.values[:, 0] ** 2 + x.values[:, 2]
        surr = fit_rbf(x, g)
        assert abs(np.sum(surr.weights)) < 1e-8
        assert np.max(np.abs(surr.weights @ surr.centers)) < 1e-8

    def test_duplicate_rows_rejected(self):
        vals = np.array([[0.1, 0.2], [0.1, 0.2], [0.5, 0.5]])
        with pytest.raises(ValueError, match="duplicate"):
            fit_rbf(DesignMatrix(values=vals, bounds=unit_box(2)), np.zeros(3))

    def test_underdetermined_warns_and_interpolates(self):
        # Sample count at or below d + 1 triggers the shrunk-tail branch;
        # interpolation must still hold exactly.
        rng = np.random.default_rng(7)
        pts = rng.uniform(-1, 1, size=(10, 15))
        g = np.sin(pts[:, 0])
        with pytest.warns(UserWarning, match="underdetermined RBF"):
            surr = fit_rbf(pts, g)
        assert np.max(np.abs(surr.predict(pts) - g)) < 1e-8 * np.ptp(g)
        assert np.linalg.norm(surr.trend_coeffs[1:]) < 20.0


class TestMfGradient:
    def test_linear_model_gradient_is_slope(self):
        d = 3
        model = MfLatentSurrogate(
            lf=_constant_rbf(7.0, d),
            disc=LinearDiscrepancy(intercept=0.5, slope=np.array([1.0, -2.0, 4.0])),
        )
        g = mf_gradient(model, np.array([0.3, -0.1, 0.8]))
        assert np.allclose(g, [1.0, -2.0, 4.0], atol=1e-14)

    def test_gradient_defined_at_center(self):
        x = sample_doe(unit_box(2), 15, seed=8)
        g = x.values[:, 0] ** 2
        model = MfLatentSurrogate(
            lf=fit_rbf(x, g),
            disc=LinearDiscrepancy(intercept=0.0, slope=np.zeros(2)),
        )
        grad = mf_gradient(model, x.values[4])
        assert np.all(np.isfinite(grad))

    def test_nonfinite_rejected(self):
        model = MfLatentSurrogate(
            lf=_constant_rbf(0.0, 2),
            disc=LinearDiscrepancy(intercept=0.0, slope=np.zeros(2)),
        )
        with pytest.raises(ValueError, match="finite"):
            mf_gradient(model, np.array([np.inf, 0.0]))

    def test_finite_difference_oracle(self):
        rng = np.random.default_rng(9)
        d = 4
        for trial in range(5):
            centers = rng.uniform(-1, 1, size=(12, d))
            model = MfLatentSurrogate(
                lf=RbfSurrogate(centers=centers,
                                weights=rng.standard_normal(12),
                                trend_coeffs=rng.standard_normal(d + 1)),
                disc=LinearDiscrepancy(intercept=rng.standard_normal(),
                                       slope=rng.standard_normal(d)),
            )
            for _ in range(10):
                x = rng.uniform(-1, 1, size=d)
                grad = mf_gradient(model, x)
                fd = np.zeros(d)
                step = 1e-6 * 2.0  # 1e-6 of the box width
                for j in range(d):
                    e = np.zeros(d)
                    e[j] = step
                    fd[j] = (model.predict((x + e)[None])[0]
                             - model.predict((x - e)[None])[0]) / (2 * step)
                assert np.max(np.abs(grad - fd)) < 1e-5 * max(
                    1.0, np.linalg.norm(grad)
                )


class TestEstimateCovariance:
    def test_constant_gradient_analytic(self):
        model = MfLatentSurrogate(
            lf=_constant_rbf(5.0, 2),
            disc=LinearDiscrepancy(intercept=0.0, slope=np.array([3.0, 4.0])),
        )
        cov = estimate_covariance(model, unit_box(2), n_mc=256, seed=0)
        assert np.allclose(cov.matrix, [[9.0, 12.0], [12.0, 16.0]], atol=1e-10)
        evals = np.linalg.eigvalsh(cov.matrix)
        assert abs(evals[-1] - 25.0) < 1e-10

    def test_coordinate_function(self):
        coeffs = np.array([0.0, 1.0, 0.0])  # g(x) = x_1
        model = MfLatentSurrogate(
            lf=RbfSurrogate(centers=np.zeros((1, 2)), weights=np.zeros(1),
                            trend_coeffs=coeffs),
            disc=LinearDiscrepancy(intercept=0.0, slope=np.zeros(2)),
        )
        n_mc = 1024
        cov = estimate_covariance(model, unit_box(2), n_mc=n_mc, seed=1)
        assert np.allclose(cov.matrix, [[1.0, 0.0], [0.0, 0.0]],
                           atol=2.0 / np.sqrt(n_mc))

    def test_determinism_per_seed(self):
        x = sample_doe(unit_box(2), 15, seed=10)
        model = MfLatentSurrogate(
            lf=fit_rbf(x, np.sin(x.values[:, 0])),
            disc=LinearDiscrepancy(intercept=0.0, slope=np.zeros(2)),
        )
        a = estimate_covariance(model, unit_box(2), n_mc=512, seed=3)
        b = estimate_covariance(model, unit_box(2), n_mc=512, seed=3)
        c = estimate_covariance(model, unit_box(2), n_mc=512, seed=4)
        assert np.array_equal(a.matrix, b.matrix)
        assert not np.array_equal(a.matrix, c.matrix)

    def test_monte_carlo_convergence(self):
        x = sample_doe(unit_box(2), 20, seed=11)
        g = np.sin(2 * x.values[:, 0]) + x.values[:, 1] ** 2
        model = MfLatentSurrogate(
            lf=fit_rbf(x, g),
            disc=LinearDiscrepancy(intercept=0.0, slope=np.zeros(2)),
        )
        mats = [
            estimate_covariance(model, unit_box(2), n_mc=n, seed=5).matrix
            for n in (512, 1024, 2048, 4096)
        ]
        diffs = [np.linalg.norm(mats[i + 1] - mats[i]) for i in range(3)]
        assert diffs[-1] < diffs[0]

    def test_psd_and_symmetry(self):
        rng = np.random.default_rng(12)
        centers = rng.uniform(-1, 1, size=(15, 3))
        model = MfLatentSurrogate(
            lf=RbfSurrogate(centers=centers, weights=rng.standard_normal(15),
                            trend_coeffs=rng.standard_normal(4)),
            disc=LinearDiscrepancy(intercept=0.0,
                                   slope=rng.standard_normal(3)),
        )
        cov = estimate_covariance(model, unit_box(3), n_mc=512, seed=6)
        assert np.array_equal(cov.matrix, cov.matrix.T)
        evals = np.linalg.eigvalsh(cov.matrix)
        assert evals[0] >= -1e-10 * evals[-1]

    def test_small_n_mc_rejected(self):
        model = MfLatentSurrogate(
            lf=_constant_rbf(0.0, 2),
            disc=LinearDiscrepancy(intercept=0.0, slope=np.zeros(2)),
        )
        with pytest.raises(ValueError, match="n_mc"):
            estimate_covariance(model, unit_box(2), n_mc=50, seed=0)


class TestEigendecomposeSelect:
    def test_diagonal_arithmetic(self):
        cov = CovarianceEstimate(matrix=np.diag([4.0, 1.0, 0.0]),
                                 n_mc=100, seed=0)
        sub = eigendecompose_select(cov, energy_threshold=0.95)
        assert sub.l == 2
        assert np.allclose(np.abs(sub.projector),
                           np.eye(3)[:, :2], atol=1e-12)

    def test_flat_spectrum_capped_with_no_gap(self):
        cov = CovarianceEstimate(matrix=np.eye(3), n_mc=100, seed=0)
        sub = eigendecompose_select(cov, energy_threshold=0.95, l_max=2)
        assert sub.l == 2
        assert sub.no_gap

    def test_rank_one_case(self):
        cov = CovarianceEstimate(
            matrix=np.array([[9.0, 12.0], [12.0, 16.0]]), n_mc=100, seed=0
        )
        sub = eigendecompose_select(cov, energy_threshold=0.99)
        assert sub.l == 1
        assert principal_angle(sub.projector[:, 0],
                               np.array([0.6, 0.8])) < 1e-8

    def test_nonfinite_rejected(self):
        cov = CovarianceEstimate(matrix=np.array([[np.nan, 0], [0, 1.0]]),
                                 n_mc=100, seed=0)
        with pytest.raises(ValueError, match="non-finite"):
            eigendecompose_select(cov)

    def test_l_max_bounds(self):
        cov = CovarianceEstimate(matrix=np.eye(2), n_mc=100, seed=0)
        with pytest.raises(ValueError, match="l_max"):
            eigendecompose_select(cov, l_max=3)

    def test_reduce_shapes(self):
        cov = CovarianceEstimate(matrix=np.diag([4.0, 1.0, 0.1]),
                                 n_mc=100, seed=0)
        sub = eigendecompose_select(cov, energy_threshold=0.7)
        x = np.random.default_rng(0).standard_normal((5, 3))
        assert sub.reduce(x).shape == (5, sub.l)


class TestFindActiveSubspace:
    def test_exact_ridge_recovery(self):
        rng = np.random.default_rng(13)
        d, m2, m1 = 10, 200, 40
        a = rng.standard_normal(d)
        a /= np.linalg.norm(a)
        x_lf = sample_doe(unit_box(d), m2, seed=14)
        x_hf = DesignMatrix(values=x_lf.values[:m1], bounds=x_lf.bounds)
        f = lambda pts: (pts @ a) ** 2
        sub = find_active_subspace(
            x_hf, f(x_hf.values), x_lf, f(x_lf.values), unit_box(d),
            SubspaceOptions(n_mc=2048, seed=0), linked_indices=np.arange(m1),
        )
        assert principal_angle(sub.projector[:, 0], a) < 0.05

    def test_constant_data_flags_no_gap(self):
        d = 3
        x_lf = sample_doe(unit_box(d), 30, seed=15)
        x_hf = DesignMatrix(values=x_lf.values[:10], bounds=x_lf.bounds)
        sub = find_active_subspace(
            x_hf, np.full(10, 2.0), x_lf, np.full(30, 2.0), unit_box(d),
            SubspaceOptions(n_mc=256, seed=0), linked_indices=np.arange(10),
        )
        assert sub.l == 1
        assert sub.no_gap
        assert np.max(sub.eigenvalues) < 1e-12

    def test_linear_discrepancy_plane(self):
        # h = g + 3 + 2 x_1 with g = sin(a.x): all multi-fidelity gradients
        # lie in span{a, e_1}, so the leading direction must too.
        rng = np.random.default_rng(16)
        d, m2, m1 = 6, 100, 40
        a = rng.standard_normal(d)
        a /= np.linalg.norm(a)
        x_lf = sample_doe(unit_box(d), m2, seed=17)
        x_hf = DesignMatrix(values=x_lf.values[:m1], bounds=x_lf.bounds)
        g = lambda pts: np.sin(pts @ a)
        h = g(x_hf.values) + 3.0 + 2.0 * x_hf.values[:, 0]
        sub = find_active_subspace(
            x_hf, h, x_lf, g(x_lf.values), unit_box(d),
            SubspaceOptions(n_mc=2048, seed=0), linked_indices=np.arange(m1),
        )
        e1 = np.zeros(d)
        e1[0] = 1.0
        plane = np.linalg.qr(np.column_stack([a, e1]))[0]
        w = sub.projector[:, 0]
        out_of_plane = w - plane @ (plane.T @ w)
        assert np.arcsin(np.clip(np.linalg.norm(out_of_plane), 0, 1)) < 0.05

    def test_rotation_equivariance(self):
        # For exactly-reproduced linear data the gradient field is constant,
        # so rotating the inputs must rotate the recovered direction exactly.
        rng = np.random.default_rng(18)
        d, m2, m1 = 5, 40, 12
        a = rng.standard_normal(d)
        a /= np.linalg.norm(a)
        q, r = np.linalg.qr(rng.standard_normal((d, d)))
        q = q * np.sign(np.diag(r))
        x_lf = rng.uniform(-0.7, 0.7, size=(m2, d))
        x_hf = x_lf[:m1]
        g = x_lf @ a
        opts = SubspaceOptions(n_mc=512, seed=0)
        sub = find_active_subspace(x_hf, g[:m1], x_lf, g, unit_box(d), opts,
                                   linked_indices=np.arange(m1))
        sub_rot = find_active_subspace(
            x_hf @ q.T, g[:m1], x_lf @ q.T, g, unit_box(d), opts,
            linked_indices=np.arange(m1),
        )
        assert sub.eigenvalues[0] / max(sub.eigenvalues[1], 1e-300) > 10
        assert principal_angle(sub_rot.projector[:, 0],
                               q @ sub.projector[:, 0]) < 1e-6

    def test_row_matching_without_indices(self):
        x_lf = sample_doe(unit_box(3), 20, seed=19)
        perm = np.array([5, 0, 11, 7])
        x_hf = DesignMatrix(values=x_lf.values[perm], bounds=x_lf.bounds)
        g = np.sin(x_lf.values[:, 0])
        model = build_mf_surrogate(x_hf, g[perm], x_lf, g)
        assert np.allclose(model.disc.slope, 0.0, atol=1e-10)

    def test_linear_surrogate_option(self):
        x = sample_doe(unit_box(3), 20, seed=20)
        g = 2.0 * x.values[:, 1] - 1.0
        surr = fit_linear_surrogate(x, g)
        assert abs(surr.intercept + 1.0) < 1e-10
        assert np.allclose(surr.slope, [0.0, 2.0, 0.0], atol=1e-10)
