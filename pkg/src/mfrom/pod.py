"""Proper orthogonal decomposition with energy-based truncation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import SnapshotMatrix

# Eigenvalues below this fraction of the largest are treated as numerical zero.
_RANK_TOL = 1e-14


@dataclass(frozen=True)
class PodBasis:
    """Truncated orthonormal modes of a mean-centered snapshot set.

    eigenvalues holds the full descending spectrum (squared singular values
    of the centered snapshots), not only the k retained entries.
    """

    modes: np.ndarray  # (field_dim, k)
    eigenvalues: np.ndarray
    mean_field: np.ndarray
    k: int
    ric_achieved: float

    @property
    def field_dim(self) -> int:
        return self.modes.shape[0]

    def truncate(self, k: int) -> "PodBasis":
        """Keep only the first k modes, recomputing the achieved energy ratio."""
        if not 1 <= k <= self.k:
            raise ValueError("truncation k must be in [1, %d]" % self.k)
        ric = float(np.sum(self.eigenvalues[:k]) / np.sum(self.eigenvalues))
        return PodBasis(
            modes=self.modes[:, :k],
            eigenvalues=self.eigenvalues,
            mean_field=self.mean_field,
            k=k,
            ric_achieved=ric,
        )


@dataclass(frozen=True)
class LatentSet:
    """Latent coordinates of snapshots in a basis; coords has shape (k, n)."""

    coords: np.ndarray
    basis_id: str = ""

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        object.__setattr__(self, "coords", coords)
        if coords.ndim != 2:
            raise ValueError("latent coords must be 2-D (k, n)")
        if not np.all(np.isfinite(coords)):
            raise ValueError("latent coords contain non-finite entries")

    @property
    def k(self) -> int:
        return self.coords.shape[0]

    @property
    def n(self) -> int:
        return self.coords.shape[1]


def _centered_svd(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Left singular vectors and singular values of a centered (p, n) matrix.

    Uses the method of snapshots (Gram matrix eigendecomposition) when the
    field dimension dominates the sample count; both paths agree to ~1e-9.
    """
    p, n = a.shape
    if p <= 4 * n:
        u, s, _ = np.linalg.svd(a, full_matrices=False)
        return u, s
    gram = a.T @ a
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    s = np.sqrt(evals)
    keep = s > _RANK_TOL * max(s[0], 1.0)
    u = np.zeros((p, n))
    u[:, keep] = (a @ evecs[:, keep]) / s[keep]
    return u, s


def fit_pod(snapshots: SnapshotMatrix, ric_threshold: float = 0.99,
            center: bool = True) -> PodBasis:
    """Fit a POD basis keeping the fewest modes whose cumulative eigenvalue
    energy reaches ric_threshold.

    The no-centering switch exists for diagnostics only; the trained
    pipelines always center.
    """
    if not 0.0 < ric_threshold <= 1.0:
        raise ValueError("ric_threshold must be in (0, 1]")
    if snapshots.n_samples < 2:
        raise ValueError("need at least 2 snapshots")
    y = snapshots.values
    mean = y.mean(axis=1) if center else np.zeros(y.shape[0])
    a = y - mean[:, None]
    u, s = _centered_svd(a)
    lam = s**2
    total = float(np.sum(lam))
    if total <= _RANK_TOL * max(1.0, float(np.max(np.abs(y))) ** 2):
        raise ValueError("degenerate snapshot set: all snapshots identical")
    cum = np.cumsum(lam) / total
    k = int(np.searchsorted(cum, ric_threshold - 1e-12) + 1)
    k = min(max(k, 1), int(np.sum(lam > _RANK_TOL * lam[0])))
    return PodBasis(
        modes=u[:, :k].copy(),
        eigenvalues=lam,
        mean_field=mean,
        k=k,
        ric_achieved=float(cum[k - 1]),
    )


def project(basis: PodBasis, snapshots: SnapshotMatrix,
            basis_id: str = "") -> LatentSet:
    """Latent coordinates of snapshots: modes^T (y - mean)."""
    if snapshots.field_dim != basis.field_dim:
        raise ValueError(
            "field dimension mismatch: snapshots %d vs basis %d"
            % (snapshots.field_dim, basis.field_dim)
        )
    coords = basis.modes.T @ (snapshots.values - basis.mean_field[:, None])
    return LatentSet(coords=coords, basis_id=basis_id)


def reconstruct(basis: PodBasis, latent: LatentSet,
                fidelity_tag: str = "") -> SnapshotMatrix:
    """Map latent coordinates back to fields: mean + modes @ coords."""
    if latent.k != basis.k:
        raise ValueError(
            "latent dimension %d does not match basis k=%d" % (latent.k, basis.k)
        )
    values = basis.mean_field[:, None] + basis.modes @ latent.coords
    return SnapshotMatrix(values=values, fidelity_tag=fidelity_tag)
