"""Tests for ordinary and hierarchical Kriging."""

import numpy as np
import pytest

from mfrom.kriging import (
    KrigingOptions,
    _nll_and_grad,
    _sq_dists,
    fit_hk,
    fit_kriging,
    predict,
)

FAST = KrigingOptions(n_starts=4, maxiter=40, seed=0)


def _sites_1d(n, lo=-1.0, hi=1.0):
    return np.linspace(lo, hi, n)[:, None]


class TestFitKriging:
    def test_constant_data(self):
        with pytest.warns(UserWarning, match="constant"):
            model = fit_kriging(_sites_1d(5), np.full(5, 3.0), FAST)
        probe = np.array([[-0.3], [0.0], [2.0]])
        assert np.allclose(model.predict_batch(probe), 3.0)

    def test_interpolation_at_sites(self):
        sites = _sites_1d(7)
        y = np.sin(3 * sites[:, 0])
        model = fit_kriging(sites, y, FAST)
        pred = model.predict_batch(sites)
        tol = 10 * np.sqrt(model.nugget * model.sigma2) + 1e-8
        assert np.max(np.abs(pred - y)) <= tol

    def test_smooth_target_held_out(self):
        sites = _sites_1d(5)
        y = sites[:, 0] ** 2
        model = fit_kriging(sites, y, KrigingOptions(seed=0))
        mid = np.array([[-0.75], [-0.25], [0.25], [0.75]])
        err = np.abs(model.predict_batch(mid) - mid[:, 0] ** 2)
        assert np.max(err) < 0.05

    def test_duplicate_sites_rejected(self):
        sites = np.array([[0.0], [0.5], [0.5]])
        with pytest.raises(ValueError, match="duplicate"):
            fit_kriging(sites, np.array([0.0, 1.0, 2.0]), FAST)

    def test_too_few_sites(self):
        with pytest.raises(ValueError, match="at least 2"):
            fit_kriging(np.array([[0.0]]), np.array([1.0]), FAST)

    def test_far_field_approaches_trend(self):
        sites = _sites_1d(8)
        y = np.sin(2 * sites[:, 0]) + 5.0
        model = fit_kriging(sites, y, FAST)
        far = np.array([[1.0 + 20.0 * float(np.max(model.lengthscales))]])
        pred = float(model.predict_batch(far)[0])
        assert abs(pred - model.trend_mean) < 1e-3 * np.ptp(y)

    def test_symmetric_data_symmetric_prediction(self):
        sites = _sites_1d(9)
        y = sites[:, 0] ** 2  # even function on symmetric sites
        model = fit_kriging(sites, y, FAST)
        xs = np.array([0.33, 0.71, 0.15])
        left = model.predict_batch(-xs[:, None])
        right = model.predict_batch(xs[:, None])
        assert np.max(np.abs(left - right)) < 1e-8

    def test_determinism(self):
        rng = np.random.default_rng(0)
        sites = rng.uniform(-1, 1, size=(12, 2))
        y = np.sin(sites[:, 0]) * sites[:, 1]
        a = fit_kriging(sites, y, FAST)
        b = fit_kriging(sites, y, FAST)
        assert np.array_equal(a.lengthscales, b.lengthscales)
        probe = rng.uniform(-1, 1, size=(20, 2))
        assert np.array_equal(a.predict_batch(probe), b.predict_batch(probe))

    def test_likelihood_beats_random_hyperparameters(self):
        rng = np.random.default_rng(1)
        sites = rng.uniform(-1, 1, size=(10, 2))
        y = np.cos(2 * sites[:, 0]) + sites[:, 1]
        model = fit_kriging(sites, y, KrigingOptions(seed=0))
        sq = _sq_dists(sites, sites)
        span = sites.max(axis=0) - sites.min(axis=0)
        lo, hi = np.log(1e-2 * span), np.log(1e2 * span)
        for _ in range(20):
            draw = rng.uniform(lo, hi)
            nll, _ = _nll_and_grad(draw, sq, y, np.ones(10), model.nugget)
            assert model.log_likelihood >= -nll - 1e-8

    def test_dimension_mismatch_on_predict(self):
        model = fit_kriging(_sites_1d(5), np.sin(_sites_1d(5)[:, 0]), FAST)
        with pytest.raises(ValueError, match="dimension"):
            model.predict_batch(np.zeros((2, 3)))


class TestFitHk:
    def test_zero_lf_matches_ordinary_kriging(self):
        rng = np.random.default_rng(2)
        xi_hf = rng.uniform(-1, 1, size=(8, 1))
        xi_lf = rng.uniform(-1, 1, size=(30, 1))
        h = np.sin(2 * xi_hf[:, 0])
        with pytest.warns(UserWarning):
            hk = fit_hk(xi_hf, h, xi_lf, np.zeros(30), FAST)
        ok = fit_kriging(xi_hf, h, FAST)
        probe = rng.uniform(-1, 1, size=(100, 1))
        assert np.max(np.abs(hk.predict_batch(probe)
                             - ok.predict_batch(probe))) < 1e-8
        assert hk.fallback
        assert hk.alpha == 0.0

    def test_identical_fidelities_alpha_near_one(self):
        rng = np.random.default_rng(3)
        xi = rng.uniform(-1, 1, size=(15, 1))
        y = np.sin(3 * xi[:, 0]) + xi[:, 0]
        hk = fit_hk(xi, y, xi, y, FAST)
        assert abs(hk.alpha - 1.0) < 0.1
        pred = hk.predict_batch(xi)
        tol = 10 * np.sqrt(hk.hf_model.nugget
                           * max(hk.hf_model.sigma2, 1e-30)) + 1e-6
        assert np.max(np.abs(pred - y)) <= tol

    def test_scaling_recovery(self):
        alphas = []
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            xi_lf = rng.uniform(-1, 1, size=(30, 1))
            xi_hf = xi_lf[:6]
            g = np.sin(2 * xi_lf[:, 0]) + 2.0
            h = 2.0 * g[:6]
            hk = fit_hk(xi_hf, h, xi_lf, g, FAST)
            alphas.append(hk.alpha)
        med = float(np.median(alphas))
        assert 1.8 <= med <= 2.2

    def test_interpolates_hf_sites(self):
        rng = np.random.default_rng(4)
        xi_lf = rng.uniform(-1, 1, size=(25, 2))
        xi_hf = xi_lf[:7]
        g = np.sin(xi_lf[:, 0]) + 0.3 * xi_lf[:, 1]
        h = 1.5 * g[:7] + 0.2
        hk = fit_hk(xi_hf, h, xi_lf, g, FAST)
        pred = hk.predict_batch(xi_hf)
        tol = 10 * np.sqrt(hk.hf_model.nugget
                           * max(hk.hf_model.sigma2, 1e-30)) + 1e-8
        assert np.max(np.abs(pred - h)) <= tol

    def test_constant_hf_falls_back(self):
        rng = np.random.default_rng(5)
        xi_lf = rng.uniform(-1, 1, size=(20, 1))
        xi_hf = xi_lf[:5]
        g = np.sin(xi_lf[:, 0])
        with pytest.warns(UserWarning, match="constant"):
            hk = fit_hk(xi_hf, np.full(5, 2.0), xi_lf, g, FAST)
        assert hk.fallback
        assert np.allclose(hk.predict_batch(xi_hf), 2.0)

    def test_too_few_hf_sites(self):
        with pytest.raises(ValueError, match="at least 2"):
            fit_hk(np.array([[0.0]]), np.array([1.0]),
                   _sites_1d(5), np.sin(_sites_1d(5)[:, 0]), FAST)


class TestPredictHelper:
    def test_scalar_prediction(self):
        sites = _sites_1d(6)
        y = np.sin(sites[:, 0])
        model = fit_kriging(sites, y, FAST)
        val = predict(model, np.array([0.25]))
        assert isinstance(val, float)
        assert np.isfinite(val)
        assert val == float(model.predict_batch(np.array([[0.25]]))[0])
