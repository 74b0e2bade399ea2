"""Command-line interface: ``mfrom gen|train|predict|eval|sweep``.

Configuration is a JSON document; command-line flags override file values.
Recognized config keys per command:

  gen:     problem {d, k_true, mesh_hf, mesh_lf, seed, lf_bias, lf_mode_drop,
           cost_hf, cost_lf}, m1, tau, out_dir
  train:   method, hf_designs, hf_snapshots, lf_designs, lf_snapshots,
           bounds (optional; inferred from designs otherwise), ric, tau,
           subspace {energy_threshold, l_max, n_mc}, kriging {n_starts,
           maxiter, nugget}, model_out
  sweep:   problem (as gen), m1_grid, tau_grid, ric, n_replications,
           n_validation, methods, subspace, kriging, lf_budget, out_json,
           out_csv

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import io as mio
from . import metrics, rom
from .dataset import (
    DesignMatrix,
    SnapshotMatrix,
    SyntheticProblemSpec,
    evaluate_fields,
    make_linked_partition,
    sample_doe,
)
from .kriging import KrigingOptions
from .subspace import SubspaceOptions

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    """Bad or missing configuration value (exit code 1)."""


def _log(args, msg):
    if not args.quiet:
        print(msg, file=sys.stderr)


def _load_config(args) -> dict:
    config = {}
    if args.config:
        try:
            with open(args.config) as fh:
                config = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError("config file not found: %s" % args.config) from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("invalid JSON in %s: %s" % (args.config, exc)) from exc
    if args.seed is not None:
        config["seed"] = args.seed
    return config


def _require(config: dict, key: str):
    if key not in config:
        raise ConfigError("missing required config key %r" % key)
    return config[key]


def _problem_from_config(doc: dict) -> SyntheticProblemSpec:
    try:
        return SyntheticProblemSpec.create(
            d=doc["d"],
            k_true=doc["k_true"],
            mesh_hf=doc["mesh_hf"],
            mesh_lf=doc["mesh_lf"],
            seed=doc.get("seed", 0),
            lf_bias=doc.get("lf_bias"),
            lf_mode_drop=doc.get("lf_mode_drop", 1),
            cost_hf=doc.get("cost_hf", 1.0),
            cost_lf=doc.get("cost_lf", 0.1),
        )
    except KeyError as exc:
        raise ConfigError("problem spec missing key %s" % exc) from exc


def _subspace_options(doc: dict, seed: int) -> SubspaceOptions:
    return SubspaceOptions(
        energy_threshold=doc.get("energy_threshold", 0.99),
        l_max=doc.get("l_max"),
        n_mc=doc.get("n_mc"),
        seed=seed,
        lf_surrogate=doc.get("lf_surrogate", "rbf"),
    )


def _kriging_options(doc: dict, seed: int) -> KrigingOptions:
    return KrigingOptions(
        n_starts=doc.get("n_starts", 8),
        maxiter=doc.get("maxiter", 60),
        seed=seed,
        nugget=doc.get("nugget", 1e-8),
    )


def _save_matrix(path, values, tag, use_csv):
    if use_csv:
        mio.save_matrix_csv(path, values, tag=tag)
    else:
        mio.save_matrix_binary(path, values)


def _load_matrix(path, use_csv):
    if use_csv:
        values, _ = mio.load_matrix_csv(path)
        return values
    return mio.load_matrix_binary(path)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def cmd_gen(args) -> int:
    config = _load_config(args)
    spec = _problem_from_config(_require(config, "problem"))
    m1 = int(_require(config, "m1"))
    tau = float(config.get("tau", 2.0))
    out_dir = _require(config, "out_dir")
    seed = int(config.get("seed", 0))
    m2 = int(round(tau * m1))
    if m2 <= m1:
        raise ConfigError("tau=%g gives m2=%d <= m1=%d" % (tau, m2, m1))
    os.makedirs(out_dir, exist_ok=True)
    x_hf = sample_doe(spec.bounds, m1, seed)
    extra = sample_doe(spec.bounds, m2 - m1, seed + 1)
    x_lf = DesignMatrix(
        values=np.vstack([x_hf.values, extra.values]), bounds=spec.bounds
    )
    y = evaluate_fields(spec, x_hf, "HF")
    z = evaluate_fields(spec, x_lf, "LF")
    ext = "csv" if args.csv else "bin"
    files = {
        "hf_designs": ("hf_designs.%s" % ext, x_hf.values, "design"),
        "hf_snapshots": ("hf_snapshots.%s" % ext, y.values, "HF"),
        "lf_designs": ("lf_designs.%s" % ext, x_lf.values, "design"),
        "lf_snapshots": ("lf_snapshots.%s" % ext, z.values, "LF"),
    }
    manifest = {
        "m1": m1,
        "m2": m2,
        "tau": tau,
        "seed": seed,
        "bounds": spec.bounds.tolist(),
        "cost_hf": spec.cost_hf,
        "cost_lf": spec.cost_lf,
        "files": {},
    }
    for key, (name, values, tag) in files.items():
        path = os.path.join(out_dir, name)
        _save_matrix(path, values, tag, args.csv)
        manifest["files"][key] = {"path": name, "sha256": _sha256(path)}
    manifest_path = os.path.join(out_dir, "manifest.json")
    mio.atomic_write(manifest_path, (json.dumps(manifest, indent=2) + "\n").encode())
    print(json.dumps(manifest, indent=2))
    return EXIT_OK


def _load_training_data(config, args):
    x_hf_vals = _load_matrix(_require(config, "hf_designs"), args.csv)
    y_vals = _load_matrix(_require(config, "hf_snapshots"), args.csv)
    if y_vals.shape[1] != x_hf_vals.shape[0]:
        raise mio.DataFormatError(
            "%s: snapshot count %d does not match design count %d"
            % (config["hf_snapshots"], y_vals.shape[1], x_hf_vals.shape[0])
        )
    method = config.get("method", "MF_PCAS")
    x_lf_vals = z_vals = None
    if method != "PCAS":
        x_lf_vals = _load_matrix(_require(config, "lf_designs"), args.csv)
        z_vals = _load_matrix(_require(config, "lf_snapshots"), args.csv)
        if z_vals.shape[1] != x_lf_vals.shape[0]:
            raise mio.DataFormatError(
                "%s: snapshot count %d does not match design count %d"
                % (config["lf_snapshots"], z_vals.shape[1], x_lf_vals.shape[0])
            )
    if "bounds" in config:
        bounds = np.asarray(config["bounds"], dtype=np.float64)
    else:
        stacked = (
            x_hf_vals if x_lf_vals is None else np.vstack([x_hf_vals, x_lf_vals])
        )
        bounds = np.column_stack([stacked.min(axis=0), stacked.max(axis=0)])
    x_hf = DesignMatrix(values=x_hf_vals, bounds=bounds)
    x_lf = None
    if x_lf_vals is not None:
        x_lf = DesignMatrix(values=x_lf_vals, bounds=bounds)
    return method, x_hf, y_vals, x_lf, z_vals


def cmd_train(args) -> int:
    config = _load_config(args)
    method, x_hf, y_vals, x_lf, z_vals = _load_training_data(config, args)
    if method not in rom.VARIANTS:
        raise ConfigError("unknown method %r" % method)
    if method == "PCAS" and "tau" in config:
        _log(args, "warning: tau ignored for PCAS")
    seed = int(config.get("seed", 0))
    rom_config = rom.RomConfig(
        ric=config.get("ric", 0.99),
        seed=seed,
        subspace=_subspace_options(config.get("subspace", {}), seed),
        kriging=_kriging_options(config.get("kriging", {}), seed),
        pcas_surrogate=config.get("pcas_surrogate", "rbf"),
    )
    y = SnapshotMatrix(values=y_vals, fidelity_tag="HF")
    if method == "PCAS":
        model = rom.train_pcas(y, x_hf, rom_config)
    else:
        z = SnapshotMatrix(values=z_vals, fidelity_tag="LF")
        partition = make_linked_partition(x_hf, x_lf)
        train = rom.train_mf_pcas if method == "MF_PCAS" else rom.train_ma_rom
        model = train(y, z, x_hf, x_lf, partition, rom_config)
    model_out = _require(config, "model_out")
    rom.save_model(model, model_out)
    _log(args, "wrote model archive %s (variant=%s, k=%d)"
         % (model_out, model.variant, model.k))
    return EXIT_OK


def cmd_predict(args) -> int:
    model = rom.load_model(args.model)
    designs = _load_matrix(args.designs, args.csv)
    if designs.shape[0] == 0:
        _save_matrix(args.out, np.empty((model.basis.field_dim, 0)),
                     "predicted", args.csv)
        mio.atomic_write(args.out + ".json",
                         json.dumps({"extrapolated": []}).encode())
        return EXIT_OK
    if designs.shape[1] != model.d:
        raise mio.DataFormatError(
            "%s: design dimension %d does not match model dimension %d"
            % (args.designs, designs.shape[1], model.d)
        )
    fields, extrapolated = rom.predict_fields(model, designs)
    _save_matrix(args.out, fields.values, "predicted", args.csv)
    sidecar = {"extrapolated": extrapolated}
    mio.atomic_write(args.out + ".json", json.dumps(sidecar).encode())
    if extrapolated:
        _log(args, "warning: %d design(s) outside training box" % len(extrapolated))
    return EXIT_OK


def cmd_eval(args) -> int:
    model = rom.load_model(args.model)
    designs = _load_matrix(args.designs, args.csv)
    truth_vals = _load_matrix(args.snapshots, args.csv)
    if designs.shape[0] == 0 or truth_vals.shape[1] == 0:
        raise mio.DataFormatError("empty validation set")
    if truth_vals.shape[1] != designs.shape[0]:
        raise mio.DataFormatError(
            "%s: snapshot count %d does not match design count %d"
            % (args.snapshots, truth_vals.shape[1], designs.shape[0])
        )
    truth = SnapshotMatrix(values=truth_vals, fidelity_tag="truth")
    latent = rom.predict_latent(model, designs)
    report = metrics.error_report(model.basis, truth, latent)
    doc = {
        "n_v": report.n_v,
        "e_total": report.e_total,
        "e_rc": report.e_rc,
        "e_rg": report.e_rg,
        "per_mode": report.per_mode.tolist(),
    }
    print("%-10s %14s" % ("metric", "value"))
    for key in ("e_total", "e_rc", "e_rg"):
        print("%-10s %14.6e" % (key, doc[key]))
    if args.out:
        mio.atomic_write(args.out, (json.dumps(doc, indent=2) + "\n").encode())
    return EXIT_OK


def _parallel_jobs(args) -> int:
    jobs = args.parallel
    cap = os.environ.get("MFROM_THREADS")
    if cap is not None:
        jobs = min(jobs, max(1, int(cap)))
    return max(1, jobs)


def cmd_sweep(args) -> int:
    config = _load_config(args)
    seed = int(config.get("seed", 0))
    exp = metrics.ExperimentConfig(
        problem=_problem_from_config(_require(config, "problem")),
        m1_grid=tuple(_require(config, "m1_grid")),
        tau_grid=tuple(_require(config, "tau_grid")),
        ric=config.get("ric", 0.99),
        n_replications=config.get("n_replications", 20),
        n_validation=config.get("n_validation", 100),
        base_seed=seed,
        methods=tuple(config.get("methods", ["MF_PCAS", "PCAS"])),
        subspace=_subspace_options(config.get("subspace", {}), seed),
        kriging=_kriging_options(config.get("kriging", {}), seed),
        lf_budget=config.get("lf_budget"),
    )
    report = metrics.run_experiment(exp, n_jobs=_parallel_jobs(args))
    for notice in report.notices:
        _log(args, "notice: " + notice)
    out_json = config.get("out_json", "sweep.json")
    out_csv = config.get("out_csv", "sweep.csv")
    mio.atomic_write(out_json, (report.to_json() + "\n").encode())
    mio.atomic_write(out_csv, report.to_csv().encode())
    _log(args, "wrote %s and %s (%d rows)" % (out_json, out_csv, len(report.rows)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfrom",
        description="Multi-fidelity parametric reduced-order models",
    )
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--csv", action="store_true",
                        help="read/write matrices as CSV instead of binary")
    parser.add_argument("--parallel", type=int, default=1, metavar="N",
                        help="worker processes for sweep replications")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress progress messages on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen", help="generate a synthetic multi-fidelity dataset")
    sub.add_parser("train", help="train a ROM variant from dataset files")

    p = sub.add_parser("predict", help="predict fields for design rows")
    p.add_argument("model")
    p.add_argument("designs")
    p.add_argument("out")

    p = sub.add_parser("eval", help="evaluate a model on held-out truth data")
    p.add_argument("model")
    p.add_argument("designs")
    p.add_argument("snapshots")
    p.add_argument("--out", default=None, help="write the report JSON here")

    sub.add_parser("sweep", help="run a replicated (m1, tau) experiment grid")
    return parser


_COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except (mio.DataFormatError, FileNotFoundError) as exc:
        print("data error: %s" % exc, file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print("data error: %s" % exc, file=sys.stderr)
        return EXIT_DATA
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
