"""Ordinary and hierarchical Kriging over reduced inputs.

Both model kinds share the same machinery: a squared-exponential ARD
correlation with a fixed relative nugget, a one-column trend basis (constant
for ordinary Kriging, the scaled low-fidelity predictor for hierarchical
Kriging), and lengthscales fitted by multi-start maximization of the
concentrated log-likelihood with analytic gradients.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import qmc

_CONST_TOL = 1e-13


@dataclass(frozen=True)
class KrigingOptions:
    n_starts: int = 8
    maxiter: int = 60
    seed: int = 0
    nugget: float = 1e-8  # relative diagonal jitter; data is noise-free


def _sq_dists(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Per-dimension squared differences, shape (n1, n2, l)."""
    d = x1[:, None, :] - x2[None, :, :]
    return d * d


def _correlation(sq: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * np.sum(sq / lengthscales**2, axis=2))


class KrigingModel:
    """Interpolating GP regression with a single trend basis column."""

    def __init__(self, sites, y, lengthscales, nugget, trend_model=None,
                 constant_value=None, log_likelihood=float("nan")):
        self.sites = np.atleast_2d(np.asarray(sites, dtype=np.float64))
        self.y = np.asarray(y, dtype=np.float64)
        self.lengthscales = np.asarray(lengthscales, dtype=np.float64)
        self.nugget = float(nugget)
        self.trend_model = trend_model  # None -> constant basis
        self.constant_value = constant_value
        self.log_likelihood = float(log_likelihood)
        self.beta = 0.0
        self.sigma2 = 0.0
        self.weights = np.zeros(len(self.y))
        if constant_value is None:
            self._finalize()

    @property
    def trend_mean(self) -> float:
        return self.beta

    def _basis(self, x: np.ndarray) -> np.ndarray:
        if self.trend_model is None:
            return np.ones(x.shape[0])
        return self.trend_model.predict_batch(x)

    def _finalize(self):
        n = self.sites.shape[0]
        sq = _sq_dists(self.sites, self.sites)
        r = _correlation(sq, self.lengthscales)
        r[np.diag_indices(n)] += self.nugget
        factor = cho_factor(r, lower=True)
        f = self._basis(self.sites)
        rinv_y = cho_solve(factor, self.y)
        rinv_f = cho_solve(factor, f)
        denom = float(f @ rinv_f)
        if denom <= 0:
            raise ValueError("trend basis is degenerate in the correlation metric")
        self.beta = float(f @ rinv_y) / denom
        resid = self.y - self.beta * f
        self.weights = cho_solve(factor, resid)
        self.sigma2 = float(resid @ self.weights) / n

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.sites.shape[1]:
            raise ValueError(
                "input dimension %d does not match model dimension %d"
                % (x.shape[1], self.sites.shape[1])
            )
        if self.constant_value is not None:
            return np.full(x.shape[0], self.constant_value)
        r = _correlation(_sq_dists(x, self.sites), self.lengthscales)
        return self.beta * self._basis(x) + r @ self.weights

    def predict(self, x) -> float:
        return float(self.predict_batch(np.atleast_2d(x))[0])


class HierarchicalKriging:
    """Two-stage multi-fidelity regression: a Kriging model of the
    low-fidelity data serves as the (scaled) trend of the high-fidelity fit."""

    def __init__(self, lf_model: KrigingModel, hf_model: KrigingModel,
                 fallback: bool = False):
        self.lf_model = lf_model
        self.hf_model = hf_model
        self.fallback = fallback

    @property
    def alpha(self) -> float:
        return 0.0 if self.fallback else self.hf_model.beta

    @property
    def omega(self) -> np.ndarray:
        return self.hf_model.weights

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        return self.hf_model.predict_batch(x)

    def predict(self, x) -> float:
        return self.hf_model.predict(x)


def _check_sites(x: np.ndarray):
    n = x.shape[0]
    if n >= 2:
        sq = np.sum(_sq_dists(x, x), axis=2)
        sq[np.diag_indices(n)] = np.inf
        scale = max(float(np.max(np.abs(x))), 1.0)
        if np.min(sq) <= (1e-12 * scale) ** 2:
            raise ValueError("duplicate sites (within 1e-12 tolerance)")


def _nll_and_grad(log_ls, sq, y, basis, nugget):
    n = len(y)
    ls = np.exp(log_ls)
    scaled = sq / ls**2
    corr = np.exp(-0.5 * np.sum(scaled, axis=2))
    r = corr + nugget * np.eye(n)
    try:
        factor = cho_factor(r, lower=True)
    except np.linalg.LinAlgError:
        return 1e12, np.zeros_like(log_ls)
    logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    rinv_y = cho_solve(factor, y)
    rinv_f = cho_solve(factor, basis)
    denom = float(basis @ rinv_f)
    if denom <= 0:
        return 1e12, np.zeros_like(log_ls)
    beta = float(basis @ rinv_y) / denom
    resid = y - beta * basis
    alpha = cho_solve(factor, resid)
    sigma2 = float(resid @ alpha) / n
    if sigma2 <= 0:
        sigma2 = 1e-300
    nll = 0.5 * (n * np.log(sigma2) + logdet)
    rinv = cho_solve(factor, np.eye(n))
    # dR/dlog(ls_j) = corr * sq_j / ls_j^2; concentrated beta and sigma2 are
    # optimal, so their implicit derivatives drop out (envelope theorem).
    grad = np.empty_like(log_ls)
    m = rinv - np.outer(alpha, alpha) / sigma2
    for j in range(len(log_ls)):
        dr = corr * scaled[:, :, j]
        grad[j] = 0.5 * float(np.sum(m * dr))
    return nll, grad


def _fit_lengthscales(sites, y, basis, options: KrigingOptions):
    n, l = sites.shape
    sq = _sq_dists(sites, sites)
    rng_span = sites.max(axis=0) - sites.min(axis=0)
    rng_span[rng_span <= 0] = 1.0
    lo = np.log(1e-2 * rng_span)
    hi = np.log(1e2 * rng_span)
    starts = [0.5 * (lo + hi)]
    if options.n_starts > 1:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            unit = qmc.LatinHypercube(l, seed=options.seed).random(options.n_starts - 1)
        starts.extend(lo + unit * (hi - lo))
    best = None
    for x0 in starts:
        res = optimize.minimize(
            _nll_and_grad, x0, args=(sq, y, basis, options.nugget),
            jac=True, method="L-BFGS-B",
            bounds=list(zip(lo, hi)),
            options={"maxiter": options.maxiter},
        )
        if best is None or res.fun < best.fun:
            best = res
    return np.exp(best.x), -float(best.fun)


def fit_kriging(xi, y, options: KrigingOptions = KrigingOptions()) -> KrigingModel:
    """Ordinary Kriging with constant trend and fitted ARD lengthscales."""
    sites = np.atleast_2d(np.asarray(xi, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    n = sites.shape[0]
    if n < 2:
        raise ValueError("need at least 2 training sites")
    if y.shape != (n,):
        raise ValueError("y length must match site count")
    _check_sites(sites)
    scale = max(float(np.max(np.abs(y))), 1.0)
    if float(np.ptp(y)) <= _CONST_TOL * scale:
        warnings.warn("constant training values: degenerate Kriging model",
                      stacklevel=2)
        return KrigingModel(sites, y, np.ones(sites.shape[1]), options.nugget,
                            constant_value=float(y[0]))
    ls, loglik = _fit_lengthscales(sites, y, np.ones(n), options)
    return KrigingModel(sites, y, ls, options.nugget, log_likelihood=loglik)


def fit_hk(xi_hf, h, xi_lf, g,
           options: KrigingOptions = KrigingOptions()) -> HierarchicalKriging:
    """Hierarchical Kriging: low-fidelity Kriging trend scaled by a
    generalized-least-squares factor, plus a high-fidelity residual process."""
    xi_hf = np.atleast_2d(np.asarray(xi_hf, dtype=np.float64))
    xi_lf = np.atleast_2d(np.asarray(xi_lf, dtype=np.float64))
    h = np.asarray(h, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if xi_hf.shape[0] < 2:
        raise ValueError("need at least 2 high-fidelity sites")
    lf_model = fit_kriging(xi_lf, g, options)
    if lf_model.constant_value is not None:
        warnings.warn("degenerate low-fidelity model; falling back to "
                      "ordinary Kriging on high-fidelity data", stacklevel=2)
        hf_model = fit_kriging(xi_hf, h, options)
        return HierarchicalKriging(lf_model, hf_model, fallback=True)
    _check_sites(xi_hf)
    scale = max(float(np.max(np.abs(h))), 1.0)
    if float(np.ptp(h)) <= _CONST_TOL * scale:
        warnings.warn("constant high-fidelity values: degenerate model",
                      stacklevel=2)
        hf_model = KrigingModel(xi_hf, h, np.ones(xi_hf.shape[1]),
                                options.nugget, constant_value=float(h[0]))
        return HierarchicalKriging(lf_model, hf_model, fallback=True)
    basis = lf_model.predict_batch(xi_hf)
    if float(np.ptp(basis)) <= _CONST_TOL * max(float(np.max(np.abs(basis))), 1.0):
        # LF predictions are flat at the HF sites: trend carries no signal.
        warnings.warn("low-fidelity trend flat at high-fidelity sites; "
                      "falling back to ordinary Kriging", stacklevel=2)
        hf_model = fit_kriging(xi_hf, h, options)
        return HierarchicalKriging(lf_model, hf_model, fallback=True)
    ls, loglik = _fit_lengthscales(xi_hf, h, basis, options)
    hf_model = KrigingModel(xi_hf, h, ls, options.nugget,
                            trend_model=lf_model, log_likelihood=loglik)
    return HierarchicalKriging(lf_model, hf_model)


def predict(model, xi) -> float:
    """Mean prediction of either model kind at one reduced-input point."""
    return model.predict(xi)
