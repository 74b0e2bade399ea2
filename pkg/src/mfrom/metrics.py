"""Error metrics, the replication experiment runner, and cost accounting.

The total RMS field prediction error splits into orthogonal reconstruction
and regression components; both carry the same 1/n_v normalization so the
decomposition identity E^2 = E_RC^2 + E_RG^2 is exact.
"""

from __future__ import annotations

import csv
import io as _stdio
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rom
from .dataset import (
    DesignMatrix,
    LinkedPartition,
    SnapshotMatrix,
    SyntheticProblemSpec,
    evaluate_fields,
    sample_doe,
)
from .kriging import KrigingOptions
from .pod import LatentSet, PodBasis, project, reconstruct
from .subspace import SubspaceOptions

CSV_COLUMNS = ("method", "m1", "tau", "replication",
               "e_total", "e_rc", "e_rg", "cost_cpu_hr")


@dataclass(frozen=True)
class ErrorReport:
    e_total: float
    e_rc: float
    e_rg: float
    per_mode: np.ndarray
    n_v: int


@dataclass(frozen=True)
class CostLedger:
    """Training-data cost model.  Linked designs run both fidelity models,
    so their low-fidelity cost is included unless disabled."""

    cost_hf: float
    cost_lf: float
    include_linked_lf: bool = True

    def __post_init__(self):
        if self.cost_hf < 0 or self.cost_lf < 0:
            raise ValueError("costs must be >= 0")

    def total(self, m1: int, m2: int) -> float:
        lf_samples = m2 if self.include_linked_lf else m2 - m1
        return m1 * self.cost_hf + lf_samples * self.cost_lf


def prediction_error(truth: SnapshotMatrix, predicted: SnapshotMatrix) -> float:
    """RMS field prediction error over the held-out set."""
    if truth.values.shape != predicted.values.shape:
        raise ValueError("truth and prediction shapes differ")
    n_v = truth.n_samples
    if n_v < 1:
        raise ValueError("empty validation set")
    diff = truth.values - predicted.values
    return float(np.sqrt(np.sum(diff * diff) / n_v))


def reconstruction_error(basis: PodBasis, truth: SnapshotMatrix) -> float:
    """RMS error of the orthogonal projection onto the truncated basis."""
    if truth.field_dim != basis.field_dim:
        raise ValueError("field dimension mismatch")
    n_v = truth.n_samples
    if n_v < 1:
        raise ValueError("empty validation set")
    centered = truth.values - basis.mean_field[:, None]
    resid = centered - basis.modes @ (basis.modes.T @ centered)
    return float(np.sqrt(np.sum(resid * resid) / n_v))


def regression_error(basis: PodBasis, truth: SnapshotMatrix,
                     latent_pred: LatentSet) -> float:
    """RMS error of the predicted latent coordinates, measured in field
    space; equal to the latent-space misfit by orthonormality."""
    diff = _latent_misfit(basis, truth, latent_pred)
    return float(np.sqrt(np.sum(diff * diff) / truth.n_samples))


def per_mode_errors(basis: PodBasis, truth: SnapshotMatrix,
                    latent_pred: LatentSet) -> np.ndarray:
    """Per-mode regression errors; their squares sum to the total squared
    regression error."""
    diff = _latent_misfit(basis, truth, latent_pred)
    return np.sqrt(np.sum(diff * diff, axis=1) / truth.n_samples)


def _latent_misfit(basis, truth, latent_pred):
    if truth.field_dim != basis.field_dim:
        raise ValueError("field dimension mismatch")
    if latent_pred.k != basis.k or latent_pred.n != truth.n_samples:
        raise ValueError("latent prediction shape mismatch")
    exact = basis.modes.T @ (truth.values - basis.mean_field[:, None])
    return exact - latent_pred.coords


def error_report(basis: PodBasis, truth: SnapshotMatrix,
                 latent_pred: LatentSet) -> ErrorReport:
    """Full decomposition for predictions made through the given basis."""
    predicted = reconstruct(basis, latent_pred)
    return ErrorReport(
        e_total=prediction_error(truth, predicted),
        e_rc=reconstruction_error(basis, truth),
        e_rg=regression_error(basis, truth, latent_pred),
        per_mode=per_mode_errors(basis, truth, latent_pred),
        n_v=truth.n_samples,
    )


def training_cost(ledger: CostLedger, m1: int, tau: float) -> float:
    """CPU-hours to generate training data for m1 HF and tau*m1 LF samples."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    return ledger.total(m1, int(round(tau * m1)))


@dataclass(frozen=True)
class ExperimentConfig:
    problem: SyntheticProblemSpec
    m1_grid: tuple
    tau_grid: tuple
    ric: float = 0.99
    n_replications: int = 20
    n_validation: int = 100
    base_seed: int = 0
    methods: tuple = ("MF_PCAS", "PCAS")
    subspace: SubspaceOptions = field(default_factory=SubspaceOptions)
    kriging: KrigingOptions = field(default_factory=KrigingOptions)
    lf_budget: int | None = None

    def __post_init__(self):
        if not self.m1_grid or not self.tau_grid:
            raise ValueError("m1_grid and tau_grid must be non-empty")
        if any(m < 1 for m in self.m1_grid):
            raise ValueError("m1 values must be >= 1")
        if any(t <= 1 for t in self.tau_grid):
            raise ValueError("tau values must be > 1")
        if self.n_replications < 1 or self.n_validation < 1:
            raise ValueError("counts must be >= 1")
        for m in self.methods:
            if m not in rom.VARIANTS:
                raise ValueError("unknown method %r" % m)


@dataclass
class ExperimentReport:
    rows: list
    notices: list

    def summary(self) -> dict:
        """Nested method -> m1 -> tau -> aggregate statistics."""
        out = {}
        for row in self.rows:
            cell = (
                out.setdefault(row["method"], {})
                .setdefault(str(row["m1"]), {})
                .setdefault(str(row["tau"]), [])
            )
            cell.append(row)
        summary = {}
        for method, by_m1 in out.items():
            summary[method] = {}
            for m1, by_tau in by_m1.items():
                summary[method][m1] = {}
                for tau, rows in by_tau.items():
                    stats = {}
                    for key in ("e_total", "e_rc", "e_rg"):
                        vals = np.array([r[key] for r in rows])
                        stats["mean_" + key] = float(np.mean(vals))
                        stats["median_" + key] = float(np.median(vals))
                    stats["cost_cpu_hr"] = rows[0]["cost_cpu_hr"]
                    stats["n_replications"] = len(rows)
                    summary[method][m1][tau] = stats
        return summary

    def median_e_total(self, method: str, m1: int, tau: float) -> float:
        vals = [
            r["e_total"]
            for r in self.rows
            if r["method"] == method and r["m1"] == m1 and r["tau"] == tau
        ]
        if not vals:
            raise KeyError("no rows for (%s, m1=%d, tau=%s)" % (method, m1, tau))
        return float(np.median(vals))

    def to_json(self) -> str:
        return json.dumps(
            {"summary": self.summary(), "rows": self.rows, "notices": self.notices},
            indent=2,
        )

    def to_csv(self) -> str:
        buf = _stdio.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in sorted(
            self.rows, key=lambda r: (r["method"], r["m1"], r["tau"], r["replication"])
        ):
            writer.writerow(
                [row["method"], row["m1"], "%g" % row["tau"], row["replication"],
                 "%.17g" % row["e_total"], "%.17g" % row["e_rc"],
                 "%.17g" % row["e_rg"], "%.17g" % row["cost_cpu_hr"]]
            )
        return buf.getvalue()


def _replication_rows(config: ExperimentConfig, m1: int, rep: int) -> list:
    """All rows for one (m1, replication) pair across the tau grid.

    The LF design set is nested across tau (its prefix holds the linked HF
    designs) so increasing tau only adds unlinked samples.  The
    single-fidelity method depends on neither tau nor the LF data, so it is
    trained once and reported per cell.
    """
    spec = config.problem
    seq = np.random.SeedSequence([config.base_seed, int(m1), int(rep)])
    seed_hf, seed_lf, seed_val, seed_model = (int(s) for s in seq.generate_state(4))
    taus = sorted(config.tau_grid)
    m2_max = int(round(max(taus) * m1))
    x_hf = sample_doe(spec.bounds, m1, seed_hf)
    extra = sample_doe(spec.bounds, m2_max - m1, seed_lf)
    lf_all = np.vstack([x_hf.values, extra.values])
    x_val = sample_doe(spec.bounds, config.n_validation, seed_val)
    truth = evaluate_fields(spec, x_val, "HF")
    y = evaluate_fields(spec, x_hf, "HF")
    model_config = rom.RomConfig(
        ric=config.ric,
        seed=seed_model % (2**31),
        subspace=config.subspace,
        kriging=config.kriging,
    )
    ledger = CostLedger(cost_hf=spec.cost_hf, cost_lf=spec.cost_lf)

    def evaluate(model):
        latent = rom.predict_latent(model, x_val.values)
        return error_report(model.basis, truth, latent)

    rows = []
    pcas_report = None
    if "PCAS" in config.methods:
        pcas_report = evaluate(rom.train_pcas(y, x_hf, model_config))
    for tau in taus:
        m2 = int(round(tau * m1))
        if config.lf_budget is not None and m2 > config.lf_budget:
            continue
        x_lf = DesignMatrix(values=lf_all[:m2], bounds=spec.bounds)
        z = evaluate_fields(spec, x_lf, "LF")
        partition = LinkedPartition(
            n_linked=m1, n_total_lf=m2, linked_indices=np.arange(m1)
        )
        for method in config.methods:
            if method == "PCAS":
                report = pcas_report
                cost = m1 * spec.cost_hf
            else:
                if method == "MF_PCAS":
                    model = rom.train_mf_pcas(y, z, x_hf, x_lf, partition,
                                              model_config)
                else:
                    model = rom.train_ma_rom(y, z, x_hf, x_lf, partition,
                                             model_config)
                report = evaluate(model)
                cost = training_cost(ledger, m1, tau)
            rows.append({
                "method": method,
                "m1": int(m1),
                "tau": float(tau),
                "replication": int(rep),
                "e_total": report.e_total,
                "e_rc": report.e_rc,
                "e_rg": report.e_rg,
                "cost_cpu_hr": cost,
            })
    return rows


def run_experiment(config: ExperimentConfig, n_jobs: int = 1) -> ExperimentReport:
    """Replicated train/evaluate sweep over the (m1, tau) grid.

    Each (m1, replication) task derives its own seeds from the base seed, so
    results are independent of execution order and of n_jobs.
    """
    notices = []
    for m1 in config.m1_grid:
        for tau in config.tau_grid:
            m2 = int(round(tau * m1))
            if config.lf_budget is not None and m2 > config.lf_budget:
                notices.append(
                    "skipping cell m1=%d tau=%g: m2=%d exceeds LF budget %d"
                    % (m1, tau, m2, config.lf_budget)
                )
    tasks = [
        (m1, rep)
        for m1 in sorted(config.m1_grid)
        for rep in range(config.n_replications)
    ]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            chunks = list(
                pool.map(
                    _replication_rows,
                    [config] * len(tasks),
                    [t[0] for t in tasks],
                    [t[1] for t in tasks],
                )
            )
    else:
        chunks = [_replication_rows(config, m1, rep) for m1, rep in tasks]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r["method"], r["m1"], r["tau"], r["replication"]))
    return ExperimentReport(rows=rows, notices=notices)
