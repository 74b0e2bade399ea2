"""Gradient-free multi-fidelity model-based active subspace discovery.

For one scalar latent coordinate, a cheap surrogate (cubic RBF on the
low-fidelity data plus a linear discrepancy fitted at linked points) supplies
gradients; the active subspace is spanned by the dominant eigenvectors of the
Monte-Carlo estimate of the gradient outer-product covariance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import qmc

from .dataset import DesignMatrix

# Eigen-gap ratio below which the selected subspace is flagged as dubious.
NO_GAP_RATIO = 10.0


@dataclass(frozen=True)
class LinearDiscrepancy:
    """delta(x) = intercept + slope . x"""

    intercept: float
    slope: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return self.intercept + x @ self.slope

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.broadcast_to(self.slope, (x.shape[0], self.slope.size)).copy()


@dataclass(frozen=True)
class LinearSurrogate(LinearDiscrepancy):
    """Plain linear model; usable as the low-fidelity surrogate when the
    literal linear-regression variant of the single-fidelity pipeline is
    requested."""


@dataclass(frozen=True)
class RbfSurrogate:
    """Cubic radial basis interpolant with a linear polynomial tail."""

    centers: np.ndarray  # (n, d)
    weights: np.ndarray  # (n,)
    trend_coeffs: np.ndarray  # (1 + d,): constant then linear terms

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        r = cdist(x, self.centers)
        vals = (r**3) @ self.weights
        vals += self.trend_coeffs[0] + x @ self.trend_coeffs[1:]
        return vals

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Gradient of the surrogate at each row of x, shape (n_pts, d).

        d/dx ||x - c||^3 = 3 ||x - c|| (x - c); the kernel term vanishes
        smoothly at its own center.
        """
        x = np.atleast_2d(x)
        diff = x[:, None, :] - self.centers[None, :, :]
        r = np.sqrt(np.sum(diff * diff, axis=2))
        grad = np.einsum("ij,ijk->ik", 3.0 * r * self.weights, diff)
        return grad + self.trend_coeffs[1:]


@dataclass(frozen=True)
class MfLatentSurrogate:
    """Additive-correction model h(x) ~ g_rbf(x) + delta_linear(x)."""

    lf: RbfSurrogate | LinearSurrogate
    disc: LinearDiscrepancy

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.lf.predict(x) + self.disc.predict(x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.lf.gradient(x) + self.disc.gradient(x)


@dataclass(frozen=True)
class CovarianceEstimate:
    matrix: np.ndarray  # (d, d) symmetric PSD
    n_mc: int
    seed: int

    @property
    def d(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class ActiveSubspace:
    eigenvalues: np.ndarray  # descending, length d
    eigenvectors: np.ndarray  # (d, d) orthogonal
    l: int
    no_gap: bool = False

    @property
    def projector(self) -> np.ndarray:
        return self.eigenvectors[:, : self.l]

    def reduce(self, x: np.ndarray) -> np.ndarray:
        """Project design rows into the active subspace, (n, d) -> (n, l)."""
        return np.atleast_2d(x) @ self.projector


@dataclass(frozen=True)
class SubspaceOptions:
    energy_threshold: float = 0.99
    l_max: int | None = None  # default min(d, 10)
    n_mc: int | None = None  # default max(4096, 200 * d)
    seed: int = 0
    lf_surrogate: str = "rbf"  # "rbf" or "linear"


def fit_discrepancy(x_linked: DesignMatrix | np.ndarray, h_vals: np.ndarray,
                    g_vals: np.ndarray) -> LinearDiscrepancy:
    """Least-squares linear fit of h - g over the linked designs.

    The slope is ridge-penalized with the penalty chosen by k-fold
    cross-validation.  For well-determined systems the selection picks a
    vanishing penalty and the fit is plain least squares; when the
    linked sample count is close to (or below) d + 1 the unpenalized
    problem is (nearly) rank-deficient and its minimum-norm solution
    carries a huge spurious slope that would dominate the gradient
    covariance, so the slope is shrunk toward zero instead.  (Leave-one-
    out is deliberately avoided: near m = d + 1 removing a single point
    barely perturbs the interpolation geometry and leave-one-out keeps
    preferring the spurious interpolant.)
    """
    x = x_linked.values if isinstance(x_linked, DesignMatrix) else np.atleast_2d(x_linked)
    h_vals = np.asarray(h_vals, dtype=np.float64)
    g_vals = np.asarray(g_vals, dtype=np.float64)
    m = x.shape[0]
    if m < 1 or h_vals.shape != (m,) or g_vals.shape != (m,):
        raise ValueError("x, h_vals, g_vals must share the sample count m1 >= 1")
    delta = h_vals - g_vals
    if m == 1:
        return LinearDiscrepancy(intercept=float(delta[0]), slope=np.zeros(x.shape[1]))
    x_mean = x.mean(axis=0)
    d_mean = float(delta.mean())
    xc = x - x_mean
    dc = delta - d_mean
    u, s, vt = np.linalg.svd(xc, full_matrices=False)
    tol = max(m, x.shape[1]) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    if rank < x.shape[1] or m < x.shape[1] + 1:
        warnings.warn(
            "discrepancy system is rank-deficient (rank %d < %d); "
            "slope shrunk by cross-validated ridge" % (rank + 1, x.shape[1] + 1),
            stacklevel=2,
        )
    if rank == 0:
        return LinearDiscrepancy(intercept=d_mean, slope=np.zeros(x.shape[1]))
    s = s[:rank]
    proj = u[:, :rank].T @ dc
    lambdas = np.concatenate([[0.0], np.geomspace(1e-8, 1e4, 49) * s[0] ** 2])
    best_lam = lambdas[np.argmin(_kfold_cv_scores(x, delta, lambdas))]
    slope = vt[:rank].T @ (s / (s**2 + best_lam) * proj)
    return LinearDiscrepancy(
        intercept=d_mean - float(slope @ x_mean), slope=slope
    )


def _kfold_cv_scores(x: np.ndarray, delta: np.ndarray,
                     lambdas: np.ndarray, n_folds: int = 5) -> np.ndarray:
    """Summed squared held-out error of the ridge linear fit for each
    penalty, over deterministic round-robin folds.  Each fold's SVD is
    computed once and reused across the penalty grid."""
    m = x.shape[0]
    n_folds = min(n_folds, m)
    scores = np.zeros(lambdas.size)
    idx = np.arange(m)
    for f in range(n_folds):
        hold = idx % n_folds == f
        xt, dt = x[~hold], delta[~hold]
        xo, do = x[hold], delta[hold]
        xt_mean = xt.mean(axis=0)
        dt_mean = dt.mean()
        u, s, vt = np.linalg.svd(xt - xt_mean, full_matrices=False)
        rank = int(np.sum(s > max(xt.shape) * np.finfo(np.float64).eps
                          * (s[0] if s.size else 0.0)))
        if rank == 0:
            scores += np.sum((do - dt_mean) ** 2)
            continue
        s_r = s[:rank]
        proj = u[:, :rank].T @ (dt - dt_mean)
        xo_c = (xo - xt_mean) @ vt[:rank].T
        for i, lam in enumerate(lambdas):
            coef = s_r / (s_r**2 + lam) * proj
            pred = dt_mean + xo_c @ coef
            scores[i] += float(np.sum((pred - do) ** 2))
    return scores


def fit_rbf(x: DesignMatrix | np.ndarray, g_vals: np.ndarray) -> RbfSurrogate:
    """Interpolating cubic RBF with linear tail via the augmented system."""
    pts = x.values if isinstance(x, DesignMatrix) else np.atleast_2d(x)
    g_vals = np.asarray(g_vals, dtype=np.float64)
    n, d = pts.shape
    if g_vals.shape != (n,):
        raise ValueError("g_vals length must match the design count")
    r = cdist(pts, pts)
    if n > 1 and np.min(r[~np.eye(n, dtype=bool)]) == 0.0:
        raise ValueError("duplicate design rows are not allowed in RBF fit")
    phi = r**3
    if n <= d + 1:
        # Fewer samples than linear-tail coefficients: the augmented system
        # is rank-deficient and its exact solutions carry arbitrarily large
        # tail slopes.  Fit the tail by cross-validated ridge instead and
        # let the kernel weights interpolate the residual (side conditions
        # do not bind in this regime).
        warnings.warn(
            "underdetermined RBF system (%d samples, %d-dim inputs); "
            "shrinking the linear tail by cross-validated ridge"
            % (n, d),
            stacklevel=2,
        )
        tail = fit_discrepancy(pts, g_vals, np.zeros(n))
        resid = g_vals - tail.predict(pts)
        weights = _solve_maybe_regularized(phi, resid, n)
        coeffs = np.concatenate([[tail.intercept], tail.slope])
        return RbfSurrogate(centers=pts.copy(), weights=weights,
                            trend_coeffs=coeffs)
    p = np.column_stack([np.ones(n), pts])
    sys = np.block([[phi, p], [p.T, np.zeros((d + 1, d + 1))]])
    rhs = np.concatenate([g_vals, np.zeros(d + 1)])
    sol = _solve_maybe_regularized(sys, rhs, n)
    return RbfSurrogate(centers=pts.copy(), weights=sol[:n], trend_coeffs=sol[n:])


def _solve_maybe_regularized(sys: np.ndarray, rhs: np.ndarray,
                             n: int) -> np.ndarray:
    cond = np.linalg.cond(sys)
    if not np.isfinite(cond) or cond > 1e14:
        scale = 1e-12 * np.trace(np.abs(sys[:n, :n])) / max(n, 1)
        scale = max(scale, 1e-12)
        warnings.warn(
            "near-singular RBF system (cond=%.2e); adding %.1e diagonal jitter"
            % (cond, scale),
            stacklevel=3,
        )
        sys = sys.copy()
        sys[:n, :n] += scale * np.eye(n)
    return np.linalg.solve(sys, rhs)


def fit_linear_surrogate(x: DesignMatrix | np.ndarray,
                         g_vals: np.ndarray) -> LinearSurrogate:
    """Least-squares linear model of the low-fidelity data."""
    pts = x.values if isinstance(x, DesignMatrix) else np.atleast_2d(x)
    g_vals = np.asarray(g_vals, dtype=np.float64)
    aug = np.column_stack([np.ones(pts.shape[0]), pts])
    coef, _, _, _ = np.linalg.lstsq(aug, g_vals, rcond=None)
    return LinearSurrogate(intercept=float(coef[0]), slope=coef[1:])


def mf_gradient(model: MfLatentSurrogate, x: np.ndarray) -> np.ndarray:
    """Gradient of the additive-correction surrogate at a single point."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    return model.gradient(x.reshape(1, -1))[0]


def estimate_covariance(model: MfLatentSurrogate, box, n_mc: int,
                        seed: int = 0, chunk: int = 512) -> CovarianceEstimate:
    """Quasi-Monte-Carlo estimate of the gradient outer-product covariance
    over a uniform density on the box."""
    box = np.asarray(box, dtype=np.float64)
    if n_mc < 100:
        raise ValueError("n_mc must be >= 100")
    d = box.shape[0]
    sampler = qmc.Sobol(d, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        unit = sampler.random(n_mc)
    pts = qmc.scale(unit, box[:, 0], box[:, 1])
    c = np.zeros((d, d))
    for start in range(0, n_mc, chunk):
        grads = model.gradient(pts[start : start + chunk])
        c += grads.T @ grads
    c /= n_mc
    c = 0.5 * (c + c.T)
    return CovarianceEstimate(matrix=c, n_mc=n_mc, seed=seed)


def eigendecompose_select(cov: CovarianceEstimate, energy_threshold: float = 0.99,
                          l_max: int | None = None) -> ActiveSubspace:
    """Eigendecompose the covariance and keep the smallest l reaching the
    cumulative-energy threshold, capped at l_max."""
    if not 0.0 < energy_threshold <= 1.0:
        raise ValueError("energy_threshold must be in (0, 1]")
    if not np.all(np.isfinite(cov.matrix)):
        raise ValueError("covariance matrix contains non-finite entries")
    d = cov.d
    if l_max is None:
        l_max = min(d, 10)
    if not 1 <= l_max <= d:
        raise ValueError("l_max must be in [1, d]")
    evals, evecs = np.linalg.eigh(cov.matrix)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    total = float(np.sum(np.clip(evals, 0.0, None)))
    # Gradient magnitudes below ~1e-12 are roundoff from a constant surrogate,
    # so eigenvalue mass below its square carries no directional information.
    if total <= 1e-24:
        l = 1
        no_gap = True
    else:
        cum = np.cumsum(np.clip(evals, 0.0, None)) / total
        l = int(np.searchsorted(cum, energy_threshold - 1e-12) + 1)
        l = min(max(l, 1), l_max)
        tail = evals[l] if l < d else 0.0
        no_gap = bool(
            (tail > 0 and evals[0] / tail < NO_GAP_RATIO) or evals[0] <= 0
        )
    return ActiveSubspace(eigenvalues=evals, eigenvectors=evecs, l=l, no_gap=no_gap)


def _match_rows(x_hf: np.ndarray, x_lf: np.ndarray) -> np.ndarray:
    index = {}
    for j in range(x_lf.shape[0]):
        index.setdefault(x_lf[j].tobytes(), j)
    linked = np.empty(x_hf.shape[0], dtype=np.intp)
    for i in range(x_hf.shape[0]):
        key = x_hf[i].tobytes()
        if key not in index:
            raise ValueError("HF design row %d has no matching LF design row" % i)
        linked[i] = index[key]
    return linked


def build_mf_surrogate(x_hf, h_vals, x_lf, g_vals, linked_indices=None,
                       lf_surrogate: str = "rbf") -> MfLatentSurrogate:
    """Fit the low-fidelity surrogate and linked-point linear discrepancy."""
    xh = x_hf.values if isinstance(x_hf, DesignMatrix) else np.atleast_2d(x_hf)
    xl = x_lf.values if isinstance(x_lf, DesignMatrix) else np.atleast_2d(x_lf)
    h_vals = np.asarray(h_vals, dtype=np.float64)
    g_vals = np.asarray(g_vals, dtype=np.float64)
    if linked_indices is None:
        linked_indices = _match_rows(xh, xl)
    if lf_surrogate == "rbf":
        lf = fit_rbf(xl, g_vals)
    elif lf_surrogate == "linear":
        lf = fit_linear_surrogate(xl, g_vals)
    else:
        raise ValueError("lf_surrogate must be 'rbf' or 'linear'")
    disc = fit_discrepancy(xh, h_vals, g_vals[linked_indices])
    return MfLatentSurrogate(lf=lf, disc=disc)


def find_active_subspace(x_hf, h_vals, x_lf, g_vals, box,
                         options: SubspaceOptions = SubspaceOptions(),
                         linked_indices=None) -> ActiveSubspace:
    """Full model-based pipeline: surrogate fit, gradient covariance
    estimation, eigendecomposition, and dimension selection."""
    box = np.asarray(box, dtype=np.float64)
    d = box.shape[0]
    model = build_mf_surrogate(
        x_hf, h_vals, x_lf, g_vals,
        linked_indices=linked_indices, lf_surrogate=options.lf_surrogate,
    )
    n_mc = options.n_mc if options.n_mc is not None else max(4096, 200 * d)
    cov = estimate_covariance(model, box, n_mc=n_mc, seed=options.seed)
    return eigendecompose_select(
        cov, energy_threshold=options.energy_threshold, l_max=options.l_max
    )
