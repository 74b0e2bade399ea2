"""End-to-end ROM pipelines and the single-file model archive.

Three variants are supported: the multi-fidelity pipeline with per-mode
active subspaces (MF_PCAS), its single-fidelity counterpart (PCAS), and the
alignment-only baseline regressing over the original input space (MA_ROM).
"""

from __future__ import annotations

import dataclasses
import json
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import io as mio
from .alignment import AlignmentMap, apply_alignment, procrustes_align
from .dataset import DesignMatrix, LinkedPartition, SnapshotMatrix
from .kriging import (
    HierarchicalKriging,
    KrigingModel,
    KrigingOptions,
    fit_hk,
    fit_kriging,
)
from .pod import LatentSet, PodBasis, fit_pod, project, reconstruct
from .subspace import ActiveSubspace, SubspaceOptions, find_active_subspace

ARCHIVE_MAGIC = b"MFRMv1"

VARIANTS = ("MF_PCAS", "PCAS", "MA_ROM")


@dataclass(frozen=True)
class RomConfig:
    ric: float = 0.99
    seed: int = 0
    subspace: SubspaceOptions = field(default_factory=SubspaceOptions)
    kriging: KrigingOptions = field(default_factory=KrigingOptions)
    pcas_surrogate: str = "rbf"  # "rbf" or "linear" (literal variant)


@dataclass
class RomModel:
    variant: str
    basis: PodBasis
    alignment: AlignmentMap | None
    subspaces: list[ActiveSubspace] | None
    regressors: list
    input_box: np.ndarray
    provenance: dict

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError("unknown variant %r" % self.variant)
        if len(self.regressors) != self.basis.k:
            raise ValueError("regressor count must equal basis k")
        if self.subspaces is not None and len(self.subspaces) != self.basis.k:
            raise ValueError("subspace count must equal basis k")

    @property
    def k(self) -> int:
        return self.basis.k

    @property
    def d(self) -> int:
        return self.input_box.shape[0]

    def is_extrapolation(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(
            np.any(x < self.input_box[:, 0]) or np.any(x > self.input_box[:, 1])
        )


def _derived_options(config: RomConfig) -> tuple[SubspaceOptions, KrigingOptions]:
    sub = dataclasses.replace(config.subspace, seed=config.seed)
    krig = dataclasses.replace(config.kriging, seed=config.seed)
    return sub, krig


def _aligned_latents(y, z, partition, ric):
    """Shared front end of the multi-fidelity variants: POD at both
    fidelities truncated to a common k, then Procrustes alignment."""
    basis_hf = fit_pod(y, ric)
    basis_lf = fit_pod(z, ric)
    k = min(basis_hf.k, basis_lf.k)
    basis_hf = basis_hf.truncate(k)
    basis_lf = basis_lf.truncate(k)
    h = project(basis_hf, y, basis_id="hf")
    s = project(basis_lf, z, basis_id="lf")
    s_linked = LatentSet(s.coords[:, partition.linked_indices], basis_id="lf")
    amap = procrustes_align(h, s_linked)
    g = apply_alignment(amap, s)
    return basis_hf, amap, h, g


def train_mf_pcas(y: SnapshotMatrix, z: SnapshotMatrix, x_hf: DesignMatrix,
                  x_lf: DesignMatrix, partition: LinkedPartition,
                  config: RomConfig = RomConfig()) -> RomModel:
    """Multi-fidelity pipeline: alignment, per-mode multi-fidelity active
    subspace, and per-mode hierarchical Kriging over the reduced inputs."""
    sub_opts, krig_opts = _derived_options(config)
    basis, amap, h, g = _aligned_latents(y, z, partition, config.ric)
    box = x_hf.bounds
    subspaces, regressors = [], []
    for i in range(basis.k):
        sub = find_active_subspace(
            x_hf, h.coords[i], x_lf, g.coords[i], box,
            options=sub_opts, linked_indices=partition.linked_indices,
        )
        xi_hf = sub.reduce(x_hf.values)
        xi_lf = sub.reduce(x_lf.values)
        reg = fit_hk(xi_hf, h.coords[i], xi_lf, g.coords[i], krig_opts)
        subspaces.append(sub)
        regressors.append(reg)
    return RomModel(
        variant="MF_PCAS",
        basis=basis,
        alignment=amap,
        subspaces=subspaces,
        regressors=regressors,
        input_box=box,
        provenance=_provenance(config, m1=x_hf.m, m2=x_lf.m),
    )


def train_pcas(y: SnapshotMatrix, x_hf: DesignMatrix,
               config: RomConfig = RomConfig()) -> RomModel:
    """Single-fidelity pipeline: POD, per-mode model-based active subspace
    from the high-fidelity data alone, and ordinary Kriging."""
    sub_opts, krig_opts = _derived_options(config)
    sub_opts = dataclasses.replace(sub_opts, lf_surrogate=config.pcas_surrogate)
    basis = fit_pod(y, config.ric)
    h = project(basis, y, basis_id="hf")
    box = x_hf.bounds
    m1 = x_hf.m
    subspaces, regressors = [], []
    for i in range(basis.k):
        sub = find_active_subspace(
            x_hf, h.coords[i], x_hf, h.coords[i], box,
            options=sub_opts, linked_indices=np.arange(m1),
        )
        xi = sub.reduce(x_hf.values)
        reg = fit_kriging(xi, h.coords[i], krig_opts)
        subspaces.append(sub)
        regressors.append(reg)
    return RomModel(
        variant="PCAS",
        basis=basis,
        alignment=None,
        subspaces=subspaces,
        regressors=regressors,
        input_box=box,
        provenance=_provenance(config, m1=m1, m2=m1),
    )


def train_ma_rom(y: SnapshotMatrix, z: SnapshotMatrix, x_hf: DesignMatrix,
                 x_lf: DesignMatrix, partition: LinkedPartition,
                 config: RomConfig = RomConfig()) -> RomModel:
    """Alignment-only baseline: hierarchical Kriging per mode over the
    original d-dimensional input space, no active subspace."""
    _, krig_opts = _derived_options(config)
    basis, amap, h, g = _aligned_latents(y, z, partition, config.ric)
    regressors = []
    for i in range(basis.k):
        reg = fit_hk(x_hf.values, h.coords[i], x_lf.values, g.coords[i], krig_opts)
        regressors.append(reg)
    return RomModel(
        variant="MA_ROM",
        basis=basis,
        alignment=amap,
        subspaces=None,
        regressors=regressors,
        input_box=x_hf.bounds,
        provenance=_provenance(config, m1=x_hf.m, m2=x_lf.m),
    )


def _provenance(config: RomConfig, m1: int, m2: int) -> dict:
    return {
        "m1": m1,
        "m2": m2,
        "tau": m2 / m1,
        "ric": config.ric,
        "seed": config.seed,
    }


def predict_latent(model: RomModel, designs: np.ndarray) -> LatentSet:
    """Predicted latent coordinates for design rows, shape (k, n)."""
    x = np.atleast_2d(np.asarray(designs, dtype=np.float64))
    if x.shape[1] != model.d:
        raise ValueError(
            "design dimension %d does not match model dimension %d"
            % (x.shape[1], model.d)
        )
    coords = np.empty((model.k, x.shape[0]))
    for i, reg in enumerate(model.regressors):
        xi = model.subspaces[i].reduce(x) if model.subspaces is not None else x
        coords[i] = reg.predict_batch(xi)
    return LatentSet(coords=coords, basis_id="predicted")


def predict_field(model: RomModel, x_star: np.ndarray) -> np.ndarray:
    """Predicted field for one out-of-sample design point."""
    x_star = np.asarray(x_star, dtype=np.float64).reshape(-1)
    if model.is_extrapolation(x_star):
        warnings.warn("design point outside the training box: extrapolating",
                      stacklevel=2)
    latent = predict_latent(model, x_star.reshape(1, -1))
    return reconstruct(model.basis, latent).values[:, 0]


def predict_fields(model: RomModel,
                   designs: np.ndarray) -> tuple[SnapshotMatrix, list[int]]:
    """Batch prediction; returns fields and the row indices that required
    extrapolation outside the training box."""
    x = np.atleast_2d(np.asarray(designs, dtype=np.float64))
    latent = predict_latent(model, x)
    fields = reconstruct(model.basis, latent, fidelity_tag="predicted")
    extrapolated = [i for i in range(x.shape[0]) if model.is_extrapolation(x[i])]
    return fields, extrapolated


# --------------------------------------------------------------------------
# Model archive: magic, u64 manifest length, JSON manifest, binary blocks.
# Arrays are float64 little-endian; the manifest records offset and shape of
# each block relative to the start of the data section.


class _BlockWriter:
    def __init__(self):
        self.blocks = []
        self.offset = 0

    def add(self, name: str, array: np.ndarray) -> dict:
        data = np.ascontiguousarray(np.asarray(array, dtype=np.float64))
        self.blocks.append((name, data))
        ref = {"__block__": name, "offset": self.offset, "shape": list(data.shape)}
        self.offset += data.nbytes
        return ref


def _kriging_doc(m: KrigingModel, w: _BlockWriter, prefix: str,
                 has_trend: bool) -> dict:
    return {
        "sites": w.add(prefix + "/sites", m.sites),
        "y": w.add(prefix + "/y", m.y),
        "lengthscales": w.add(prefix + "/lengthscales", m.lengthscales),
        "nugget": m.nugget,
        "constant_value": m.constant_value,
        "log_likelihood": m.log_likelihood,
        "has_trend": has_trend,
    }


def _regressor_doc(reg, w: _BlockWriter, prefix: str) -> dict:
    if isinstance(reg, HierarchicalKriging):
        return {
            "type": "hk",
            "fallback": reg.fallback,
            "lf": _kriging_doc(reg.lf_model, w, prefix + "/lf", has_trend=False),
            "hf": _kriging_doc(reg.hf_model, w, prefix + "/hf",
                               has_trend=reg.hf_model.trend_model is not None),
        }
    return {"type": "kriging",
            "model": _kriging_doc(reg, w, prefix + "/model", has_trend=False)}


def save_model(model: RomModel, path) -> None:
    w = _BlockWriter()
    manifest = {
        "variant": model.variant,
        "provenance": model.provenance,
        "input_box": w.add("input_box", model.input_box),
        "basis": {
            "modes": w.add("basis/modes", model.basis.modes),
            "eigenvalues": w.add("basis/eigenvalues", model.basis.eigenvalues),
            "mean_field": w.add("basis/mean_field", model.basis.mean_field),
            "k": model.basis.k,
            "ric_achieved": model.basis.ric_achieved,
            "field_dim": model.basis.field_dim,
        },
        "alignment": None,
        "subspaces": None,
        "regressors": [
            _regressor_doc(reg, w, "reg%d" % i)
            for i, reg in enumerate(model.regressors)
        ],
    }
    if model.alignment is not None:
        a = model.alignment
        manifest["alignment"] = {
            "rotation": w.add("alignment/rotation", a.rotation),
            "mu_lf": w.add("alignment/mu_lf", a.mu_lf),
            "mu_hf": w.add("alignment/mu_hf", a.mu_hf),
            "singular_values": w.add("alignment/sv", a.singular_values),
            "scale": a.scale,
            "k": a.k,
        }
    if model.subspaces is not None:
        manifest["subspaces"] = [
            {
                "eigenvalues": w.add("sub%d/eigenvalues" % i, s.eigenvalues),
                "eigenvectors": w.add("sub%d/eigenvectors" % i, s.eigenvectors),
                "l": s.l,
                "no_gap": s.no_gap,
            }
            for i, s in enumerate(model.subspaces)
        ]
    body = json.dumps(manifest).encode()
    payload = ARCHIVE_MAGIC + struct.pack("<Q", len(body)) + body
    payload += b"".join(data.tobytes() for _, data in w.blocks)
    mio.atomic_write(path, payload)


def _load_block(ref: dict, data: memoryview) -> np.ndarray:
    shape = tuple(ref["shape"])
    count = int(np.prod(shape)) if shape else 1
    start = ref["offset"]
    arr = np.frombuffer(data[start : start + 8 * count], dtype="<f8")
    return arr.reshape(shape).copy()


def _load_kriging(doc: dict, data, trend_model=None) -> KrigingModel:
    return KrigingModel(
        sites=_load_block(doc["sites"], data),
        y=_load_block(doc["y"], data),
        lengthscales=_load_block(doc["lengthscales"], data),
        nugget=doc["nugget"],
        trend_model=trend_model,
        constant_value=doc["constant_value"],
        log_likelihood=doc["log_likelihood"],
    )


def load_model(path) -> RomModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(ARCHIVE_MAGIC)] != ARCHIVE_MAGIC:
        raise mio.DataFormatError("%s: not a model archive (bad magic)" % path)
    (mlen,) = struct.unpack_from("<Q", raw, len(ARCHIVE_MAGIC))
    header_end = len(ARCHIVE_MAGIC) + 8
    manifest = json.loads(raw[header_end : header_end + mlen].decode())
    data = memoryview(raw)[header_end + mlen :]
    b = manifest["basis"]
    basis = PodBasis(
        modes=_load_block(b["modes"], data),
        eigenvalues=_load_block(b["eigenvalues"], data),
        mean_field=_load_block(b["mean_field"], data),
        k=b["k"],
        ric_achieved=b["ric_achieved"],
    )
    alignment = None
    if manifest["alignment"] is not None:
        a = manifest["alignment"]
        alignment = AlignmentMap(
            rotation=_load_block(a["rotation"], data),
            scale=a["scale"],
            mu_lf=_load_block(a["mu_lf"], data),
            mu_hf=_load_block(a["mu_hf"], data),
            singular_values=_load_block(a["singular_values"], data),
        )
    subspaces = None
    if manifest["subspaces"] is not None:
        subspaces = [
            ActiveSubspace(
                eigenvalues=_load_block(s["eigenvalues"], data),
                eigenvectors=_load_block(s["eigenvectors"], data),
                l=s["l"],
                no_gap=s["no_gap"],
            )
            for s in manifest["subspaces"]
        ]
    regressors = []
    for doc in manifest["regressors"]:
        if doc["type"] == "hk":
            lf = _load_kriging(doc["lf"], data)
            hf = _load_kriging(
                doc["hf"], data,
                trend_model=lf if doc["hf"]["has_trend"] else None,
            )
            regressors.append(HierarchicalKriging(lf, hf, fallback=doc["fallback"]))
        else:
            regressors.append(_load_kriging(doc["model"], data))
    return RomModel(
        variant=manifest["variant"],
        basis=basis,
        alignment=alignment,
        subspaces=subspaces,
        regressors=regressors,
        input_box=_load_block(manifest["input_box"], data),
        provenance=manifest["provenance"],
    )
