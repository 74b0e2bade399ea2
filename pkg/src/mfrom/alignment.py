"""Procrustes alignment of low-fidelity latent coordinates onto the
high-fidelity latent frame (translation, rotation/reflection, scaling)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .pod import LatentSet


@dataclass(frozen=True)
class AlignmentMap:
    """Similarity transform g = t * P @ (s - mu_lf) + mu_hf."""

    rotation: np.ndarray  # (k, k) orthogonal, reflections allowed
    scale: float
    mu_lf: np.ndarray
    mu_hf: np.ndarray
    singular_values: np.ndarray

    @property
    def k(self) -> int:
        return self.rotation.shape[0]

    def residual(self, s_linked: LatentSet, h: LatentSet) -> float:
        """Frobenius misfit of the fitted map on the linked sets."""
        g = apply_alignment(self, s_linked)
        return float(np.linalg.norm(g.coords - h.coords))


def procrustes_align(h: LatentSet, s_linked: LatentSet) -> AlignmentMap:
    """Fit the similarity transform mapping the linked low-fidelity latent
    set onto the high-fidelity one.

    Both sets are mean-centered; the rotation comes from the SVD of
    S_L @ H^T and the scale from trace(Sigma) / trace(S_L @ S_L^T).
    """
    if h.k != s_linked.k:
        raise ValueError("latent dimensions differ: %d vs %d" % (h.k, s_linked.k))
    if h.n != s_linked.n:
        raise ValueError("linked sample counts differ: %d vs %d" % (h.n, s_linked.n))
    k, m1 = h.k, h.n
    if m1 < k:
        warnings.warn(
            "alignment underdetermined: m1=%d linked samples < k=%d" % (m1, k),
            stacklevel=2,
        )
    mu_hf = h.coords.mean(axis=1)
    mu_lf = s_linked.coords.mean(axis=1)
    hc = h.coords - mu_hf[:, None]
    sc = s_linked.coords - mu_lf[:, None]
    denom = float(np.sum(sc * sc))  # trace(S_L S_L^T)
    if denom <= 0.0:
        raise ValueError("degenerate low-fidelity latent set: zero variance")
    u, sigma, vt = np.linalg.svd(sc @ hc.T)
    rotation = vt.T @ u.T
    scale = float(np.sum(sigma)) / denom
    return AlignmentMap(
        rotation=rotation,
        scale=scale,
        mu_lf=mu_lf,
        mu_hf=mu_hf,
        singular_values=sigma,
    )


def apply_alignment(amap: AlignmentMap, s: LatentSet) -> LatentSet:
    """Map low-fidelity latent coordinates into the high-fidelity frame."""
    if s.k != amap.k:
        raise ValueError("latent dimension %d does not match map k=%d" % (s.k, amap.k))
    g = amap.scale * (amap.rotation @ (s.coords - amap.mu_lf[:, None]))
    g += amap.mu_hf[:, None]
    return LatentSet(coords=g, basis_id="aligned:" + s.basis_id)
