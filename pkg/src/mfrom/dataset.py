"""Design-of-experiments sampling, multi-fidelity data containers, and
synthetic analytic field problems used as desk-scale benchmark stand-ins."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc


@dataclass(frozen=True)
class DesignMatrix:
    """m design points in a d-dimensional box; values has shape (m, d)."""

    values: np.ndarray
    bounds: np.ndarray  # (d, 2) per-dimension [lo, hi]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        bounds = np.asarray(self.bounds, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "bounds", bounds)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError("design matrix must be (m>=1, d>=1)")
        if bounds.shape != (values.shape[1], 2):
            raise ValueError("bounds must have shape (d, 2)")
        if not np.all(np.isfinite(values)):
            raise ValueError("design matrix contains non-finite entries")
        if np.any(bounds[:, 0] >= bounds[:, 1]):
            raise ValueError("invalid bounds: lo >= hi")
        lo, hi = bounds[:, 0], bounds[:, 1]
        if np.any(values < lo - 1e-12) or np.any(values > hi + 1e-12):
            raise ValueError("design values fall outside bounds")

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SnapshotMatrix:
    """Field solutions stored one column per sample; values (field_dim, n)."""

    values: np.ndarray
    fidelity_tag: str = ""
    cost_per_sample: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise ValueError("snapshot matrix must be 2-D (field_dim, n_samples)")
        if not np.all(np.isfinite(values)):
            raise ValueError("snapshot matrix contains non-finite entries")
        if self.cost_per_sample < 0:
            raise ValueError("cost_per_sample must be >= 0")

    @property
    def field_dim(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LinkedPartition:
    """Positions of the m1 low-fidelity samples that share designs with the
    high-fidelity set; the remaining m2 - m1 samples are unlinked."""

    n_linked: int
    n_total_lf: int
    linked_indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.linked_indices, dtype=np.intp)
        object.__setattr__(self, "linked_indices", idx)
        if not (self.n_total_lf > self.n_linked >= 1):
            raise ValueError("require m2 > m1 >= 1")
        if idx.shape != (self.n_linked,):
            raise ValueError("linked_indices length must equal n_linked")
        if len(set(idx.tolist())) != self.n_linked:
            raise ValueError("linked indices must be unique")
        if np.any(idx < 0) or np.any(idx >= self.n_total_lf):
            raise ValueError("linked index out of range")


def sample_doe(bounds, m: int, seed: int) -> DesignMatrix:
    """Sample m quasi-random points (scrambled Sobol) inside the box."""
    bounds = np.asarray(bounds, dtype=np.float64)
    if bounds.ndim != 2 or bounds.shape[1] != 2:
        raise ValueError("bounds must have shape (d, 2)")
    if np.any(bounds[:, 0] >= bounds[:, 1]):
        raise ValueError("invalid bounds: lo >= hi")
    if m < 1:
        raise ValueError("m must be >= 1")
    d = bounds.shape[0]
    sampler = qmc.Sobol(d, scramble=True, seed=seed)
    with warnings.catch_warnings():
        # Sobol balance warning for non-power-of-two m is expected here.
        warnings.simplefilter("ignore", UserWarning)
        unit = sampler.random(m)
    values = qmc.scale(unit, bounds[:, 0], bounds[:, 1])
    return DesignMatrix(values=values, bounds=bounds)


def _random_orthonormal_rows(k: int, d: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((d, k)))
    return q.T.copy()


@dataclass(frozen=True)
class SyntheticProblemSpec:
    """Analytic multi-fidelity field problem.

    Each latent mode r carries a ridge coefficient c_r(x) = (a_r.x)^2 + a_r.x
    and a sinusoidal spatial shape sin(r*pi*s) on a uniform 1-D mesh over
    [0, 1].  The low-fidelity model evaluates on a coarser mesh, scales the
    coefficients by (1 + lf_bias_r), and drops the trailing lf_mode_drop
    modes.
    """

    d: int
    k_true: int
    ridge_directions: np.ndarray  # (k_true, d), orthonormal rows
    mesh_hf: int
    mesh_lf: int
    lf_bias: np.ndarray  # (k_true,)
    lf_mode_drop: int = 1
    cost_hf: float = 1.0
    cost_lf: float = 0.1
    bounds: np.ndarray = None

    def __post_init__(self):
        a = np.asarray(self.ridge_directions, dtype=np.float64)
        bias = np.asarray(self.lf_bias, dtype=np.float64)
        object.__setattr__(self, "ridge_directions", a)
        object.__setattr__(self, "lf_bias", bias)
        if a.shape != (self.k_true, self.d):
            raise ValueError("ridge_directions must have shape (k_true, d)")
        gram = a @ a.T
        if np.max(np.abs(gram - np.eye(self.k_true))) > 1e-8:
            raise ValueError("ridge_directions must be mutually orthonormal")
        if bias.shape != (self.k_true,):
            raise ValueError("lf_bias must have length k_true")
        if not 0 <= self.lf_mode_drop < self.k_true:
            raise ValueError("require 0 <= lf_mode_drop < k_true")
        if not self.mesh_hf > self.mesh_lf >= self.k_true:
            raise ValueError("require mesh_hf > mesh_lf >= k_true")
        if self.bounds is None:
            object.__setattr__(
                self, "bounds", np.column_stack([-np.ones(self.d), np.ones(self.d)])
            )
        else:
            object.__setattr__(self, "bounds", np.asarray(self.bounds, dtype=np.float64))

    @classmethod
    def create(cls, d, k_true, mesh_hf, mesh_lf, seed=0, lf_bias=None,
               lf_mode_drop=1, cost_hf=1.0, cost_lf=0.1) -> "SyntheticProblemSpec":
        """Build a spec with random orthonormal ridge directions and the
        default per-mode bias 0.1 * r."""
        if lf_bias is None:
            lf_bias = 0.1 * np.arange(1, k_true + 1)
        return cls(
            d=d,
            k_true=k_true,
            ridge_directions=_random_orthonormal_rows(k_true, d, seed),
            mesh_hf=mesh_hf,
            mesh_lf=mesh_lf,
            lf_bias=np.asarray(lf_bias, dtype=np.float64),
            lf_mode_drop=lf_mode_drop,
            cost_hf=cost_hf,
            cost_lf=cost_lf,
        )

    def mode_shapes(self, fidelity: str) -> np.ndarray:
        """Spatial modes evaluated on the requested mesh, shape (nodes, k_true)."""
        n = self.mesh_hf if fidelity == "HF" else self.mesh_lf
        s = np.linspace(0.0, 1.0, n)
        r = np.arange(1, self.k_true + 1)
        return np.sin(np.pi * np.outer(s, r))

    def ridge_coefficients(self, designs: DesignMatrix) -> np.ndarray:
        """c_r(x) for every design, shape (k_true, m)."""
        proj = self.ridge_directions @ designs.values.T
        return proj**2 + proj


def evaluate_fields(spec: SyntheticProblemSpec, designs: DesignMatrix,
                    fidelity: str) -> SnapshotMatrix:
    """Evaluate the analytic multi-fidelity problem at the given designs."""
    if fidelity not in ("HF", "LF"):
        raise ValueError("fidelity must be 'HF' or 'LF'")
    if designs.d != spec.d:
        raise ValueError(
            "design dimension %d does not match problem dimension %d"
            % (designs.d, spec.d)
        )
    coeff = spec.ridge_coefficients(designs)
    phi = spec.mode_shapes(fidelity)
    if fidelity == "LF":
        keep = spec.k_true - spec.lf_mode_drop
        coeff = coeff[:keep] * (1.0 + spec.lf_bias[:keep])[:, None]
        phi = phi[:, :keep]
        cost = spec.cost_lf
    else:
        cost = spec.cost_hf
    return SnapshotMatrix(values=phi @ coeff, fidelity_tag=fidelity,
                          cost_per_sample=cost)


def make_linked_partition(hf_designs: DesignMatrix,
                          lf_designs: DesignMatrix) -> LinkedPartition:
    """Match each high-fidelity design row to its identical low-fidelity row."""
    if lf_designs.m <= hf_designs.m:
        raise ValueError("require m2 > m1 (more LF samples than HF)")
    if lf_designs.d != hf_designs.d:
        raise ValueError("design dimension mismatch between fidelities")
    index = {}
    for j in range(lf_designs.m):
        index.setdefault(lf_designs.values[j].tobytes(), j)
    linked = np.empty(hf_designs.m, dtype=np.intp)
    for i in range(hf_designs.m):
        key = hf_designs.values[i].tobytes()
        if key not in index:
            raise ValueError("HF design row %d has no matching LF design row" % i)
        linked[i] = index[key]
    return LinkedPartition(
        n_linked=hf_designs.m, n_total_lf=lf_designs.m, linked_indices=linked
    )
