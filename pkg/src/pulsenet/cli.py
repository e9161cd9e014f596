"""Command-line pipeline: ``gen``, ``train``, ``quantize``, ``eval``, ``compare-lut``, ``bloch``.

Every subcommand reads an optional JSON run config (``--config``); command
line flags override it. Exit codes: 0 success, 1 usage, 2 convergence or
threshold failure, 3 I/O (including missing upstream artifacts).
"""

import argparse
import copy
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import (
    LutBaseline,
    bloch_export,
    compare_nn_vs_lut,
    emit_report,
    file_sha256,
    fidelity_curve,
)
from .fixed_point import PRESETS, QuantizedModel, quantize_model, resource_report
from .mlp import SPECS, MlpModel, MlpSpec, TrainConfig, TrainingDivergedError, mse, train, train_qat
from .optimizer import ConvergenceError, Dataset, OptimizerConfig, generate_dataset, metadata_path, split_dataset
from .pulse import PulseConfig, constant_pulse

log = logging.getLogger("pulsenet")

EXIT_OK, EXIT_USAGE, EXIT_FAILED, EXIT_IO = 0, 1, 2, 3

DEFAULT_RUN_CONFIG = {
    "run_id": "run",
    "seed": 0,
    "jobs": 1,
    "pulse": PulseConfig().to_dict(),
    "optimizer": {},
    "grid_size": 101,
    "split_fractions": [0.6, 0.2, 0.2],
    "spec": "large",
    "qat_spec": "small",
    "train": {},
    "preset": "arty-mixed",
    "qat": True,
    "lut_entries": 11,
    "lut_grid": 100,
    "paths": {
        "dataset": "out/dataset.csv",
        "model": "out/model.json",
        "qat_float_model": "out/model-small.json",
        "qat_model": "out/model-qat.json",
        "quantized_model": "out/quantized.json",
        "resources": "out/resources.json",
        "reports": "out/reports",
    },
    "thresholds": {"min_predicted_golden": 0.99},
}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def load_config(path=None) -> dict:
    cfg = copy.deepcopy(DEFAULT_RUN_CONFIG)
    if path is None:
        return cfg
    try:
        user = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_IO) from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"config {path} is not valid JSON: {exc}", EXIT_USAGE) from exc
    unknown = set(user) - set(cfg)
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}", EXIT_USAGE)
    for key, val in user.items():
        if isinstance(cfg[key], dict) and isinstance(val, dict):
            cfg[key].update(val)
        else:
            cfg[key] = val
    return cfg


def _pulse_config(cfg) -> PulseConfig:
    return PulseConfig.from_dict(cfg["pulse"])


def _spec(value) -> MlpSpec:
    if isinstance(value, str):
        if value not in SPECS:
            raise CliError(f"unknown spec {value!r}; choose from {sorted(SPECS)}", EXIT_USAGE)
        return SPECS[value]
    return MlpSpec(tuple(value["hidden"]), name=value.get("name", "custom"))


def _train_config(cfg) -> TrainConfig:
    kw = {"seed": cfg["seed"], **cfg["train"]}
    return TrainConfig(**kw)


def _require(path, what) -> Path:
    path = Path(path)
    if not path.exists():
        raise CliError(f"missing {what}: {path}", EXIT_IO)
    return path


def _write_atomic(path, write):
    """Write via a temp file in the target directory, then rename."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=path.suffix)
        os.close(fd)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc
    try:
        write(Path(tmp))
        os.replace(tmp, path)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _write_json(path, payload):
    _write_atomic(path, lambda p: p.write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8"))


def _load_dataset(path) -> Dataset:
    return Dataset.from_csv(_require(path, "dataset"))


def _load_model(path) -> tuple:
    path = _require(path, "model file")
    data = json.loads(path.read_text(encoding="utf-8"))
    return MlpModel.from_dict(data), data.get("provenance", {})


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_gen(cfg) -> int:
    pcfg = _pulse_config(cfg)
    ocfg = OptimizerConfig(**{"seed": cfg["seed"], **cfg["optimizer"]})
    out = Path(cfg["paths"]["dataset"])
    # fail on an unwritable destination before spending time optimizing
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create {out.parent}: {exc}", EXIT_IO) from exc
    if not os.access(out.parent, os.W_OK):
        raise CliError(f"{out.parent} is not writable", EXIT_IO)
    try:
        ds = generate_dataset(cfg["grid_size"], ocfg, pcfg, jobs=cfg["jobs"])
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    ds = split_dataset(ds, cfg["split_fractions"], seed=cfg["seed"])
    ds.metadata["run_id"] = cfg["run_id"]

    def write_both(tmp):
        ds.to_csv(tmp)
        tmp_meta = metadata_path(tmp)
        os.replace(tmp_meta, metadata_path(out))

    _write_atomic(out, write_both)
    counts = {s: int(np.sum(ds.splits == s)) for s in ("train", "val", "test")}
    print(f"wrote {out} ({len(ds)} rows, split {counts}, min fidelity {ds.fidelities.min():.6f})")
    return EXIT_OK


def cmd_train(cfg) -> int:
    ds_path = cfg["paths"]["dataset"]
    ds = _load_dataset(ds_path)
    spec = _spec(cfg["spec"])
    try:
        model = train(spec, ds, _train_config(cfg))
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    out = cfg["paths"]["model"]
    payload = model.to_dict()
    payload["provenance"] = {"dataset": str(ds_path), "dataset_sha256": file_sha256(ds_path),
                             "seed": cfg["seed"], "tool_version": __version__}
    _write_json(out, payload)
    r = model.report
    print(f"wrote {out}: {spec.name} ({model.n_params} params), epochs {r['epochs']} (best {r['best_epoch']}), "
          f"test mse {r.get('test_mse', float('nan')):.3e}")
    return EXIT_OK


def cmd_quantize(cfg) -> int:
    ds_path = cfg["paths"]["dataset"]
    preset = cfg["preset"]
    if preset not in PRESETS:
        raise CliError(f"unknown preset {preset!r}; choose from {PRESETS}", EXIT_USAGE)
    paths = cfg["paths"]
    tcfg = _train_config(cfg)
    prov = {"dataset": str(ds_path), "seed": cfg["seed"], "preset": preset, "tool_version": __version__}

    if cfg["qat"]:
        ds = _load_dataset(ds_path)
        prov["dataset_sha256"] = file_sha256(ds_path)
        spec = _spec(cfg["qat_spec"])
        base_path = Path(paths["qat_float_model"])
        base = None
        if base_path.exists():
            base, base_prov = _load_model(base_path)
            if base_prov.get("dataset_sha256") != prov["dataset_sha256"] or base.spec.widths != spec.widths:
                base = None
        if base is None:
            base = train(spec, ds, tcfg)
            payload = base.to_dict()
            payload["provenance"] = dict(prov)
            _write_json(base_path, payload)
        model = train_qat(base.spec, ds, tcfg, preset=preset, init=base)
        payload = model.to_dict()
        payload["provenance"] = {**prov, "init_model_sha256": file_sha256(base_path)}
        _write_json(paths["qat_model"], payload)
        prov["model"] = str(paths["qat_model"])
        prov["model_sha256"] = file_sha256(paths["qat_model"])
        qm = quantize_model(model)
    else:
        model, _ = _load_model(paths["model"])
        prov["model"] = str(paths["model"])
        prov["model_sha256"] = file_sha256(paths["model"])
        qm = quantize_model(model, preset)

    payload = qm.to_dict()
    payload["provenance"] = prov
    _write_json(paths["quantized_model"], payload)
    rep = resource_report(qm)
    _write_json(paths["resources"], {**rep.to_dict(), "provenance": prov})
    print(rep.table())
    print(f"wrote {paths['quantized_model']} and {paths['resources']}")
    return EXIT_OK


def _predictor(cfg, engine):
    paths = cfg["paths"]
    if engine == "float":
        model, prov = _load_model(paths["model"])
        return model, prov, paths["model"]
    path = _require(paths["quantized_model"], "quantized model")
    data = json.loads(path.read_text(encoding="utf-8"))
    return QuantizedModel.from_dict(data), data.get("provenance", {}), path


def cmd_eval(cfg, engine="float", drop_smallest=0) -> int:
    ds_path = cfg["paths"]["dataset"]
    ds = _load_dataset(ds_path)
    model, model_prov, model_path = _predictor(cfg, engine)
    ds_hash = file_sha256(ds_path)
    prov = {"engine": engine, "model": str(model_path), "model_sha256": file_sha256(model_path),
            "dataset": str(ds_path), "dataset_sha256": ds_hash, "seed": cfg["seed"]}
    warnings = []
    trained_on = model_prov.get("dataset_sha256")
    if trained_on is not None and trained_on != ds_hash:
        warnings.append(f"model was trained on dataset {trained_on[:12]}..., evaluating on {ds_hash[:12]}...")
    prov["warnings"] = warnings
    prov["mse"] = {s: {"normalized": mse(model, ds, s), "unnormalized": mse(model, ds, s, normalized=False)}
                   for s in ("train", "val", "test") if ds.splits is not None and ds.mask(s).any()}
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)

    pcfg = _pulse_config(cfg)
    full = fidelity_curve(model, ds, pcfg=pcfg, name=f"fidelity-{engine}", provenance=prov)
    reports = [full]
    if ds.splits is not None:
        test_b, _ = ds.subset("test")
        reports.append(fidelity_curve(model, ds, grid=test_b, pcfg=pcfg, name=f"fidelity-{engine}-test",
                                      provenance=prov))
    if drop_smallest:
        reports.append(full.without_smallest(drop_smallest))
    result = emit_report(reports, cfg["paths"]["reports"], cfg["run_id"],
                         {k: v for k, v in cfg["thresholds"].items() if k != "min_nn"})
    for r in reports:
        s = r.summary()["f_predicted_golden"]
        print(f"{r.name}: predicted-golden min {s['min']:.6f} mean {s['mean']:.6f}")
    for v in result.violations:
        print(f"threshold violated: {v['report']} {v['threshold']} < {v['limit']} "
              f"(min {v['observed_min']:.6f})", file=sys.stderr)
    return result.exit_code


def cmd_compare_lut(cfg, engine="float") -> int:
    ds_path = cfg["paths"]["dataset"]
    ds = _load_dataset(ds_path)
    model, _, model_path = _predictor(cfg, engine)
    table = LutBaseline.from_dataset(ds, cfg["lut_entries"])
    grid = np.linspace(-np.pi, np.pi, cfg["lut_grid"])
    prov = {"engine": engine, "model": str(model_path), "model_sha256": file_sha256(model_path),
            "dataset": str(ds_path), "dataset_sha256": file_sha256(ds_path), "seed": cfg["seed"]}
    rep = compare_nn_vs_lut(model, table, grid, _pulse_config(cfg), provenance=prov)
    thresholds = {k: v for k, v in cfg["thresholds"].items() if k == "min_nn"}
    result = emit_report([rep], cfg["paths"]["reports"], cfg["run_id"], thresholds)
    for m, s in rep.summary().items():
        print(f"{m:12s} min {s['min']:.6f} mean {s['mean']:.6f}")
    return result.exit_code


def cmd_bloch(cfg, beta, source="model", samples=101) -> int:
    pcfg = _pulse_config(cfg)
    if not -np.pi <= beta <= np.pi:
        raise CliError("beta must lie in [-pi, pi]", EXIT_USAGE)
    source_prov = {}
    if source == "constant":
        alpha = constant_pulse(beta, pcfg)
    elif source == "dataset":
        ds_path = cfg["paths"]["dataset"]
        ds = _load_dataset(ds_path)
        i = int(np.argmin(np.abs(ds.betas - beta)))
        beta, alpha = float(ds.betas[i]), ds.alphas[i]
        source_prov = {"dataset": str(ds_path), "dataset_sha256": file_sha256(ds_path)}
    else:
        model, _, model_path = _predictor(cfg, "quantized" if source == "quantized" else "float")
        alpha = model.predict([beta])[0]
        source_prov = {"model": str(model_path), "model_sha256": file_sha256(model_path)}
    traj = bloch_export(alpha, beta, pcfg, samples)
    traj.name = f"bloch-{source}"
    traj.provenance = {"beta": beta, "source": source, "seed": cfg["seed"], **source_prov}
    emit_report([traj], cfg["paths"]["reports"], cfg["run_id"])
    print(f"final-state overlap with Rx({beta:.6f})|0>: {traj.final_overlap:.9f}")
    return EXIT_OK


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--seed", type=int)
    common.add_argument("--run-id")
    common.add_argument("--jobs", type=int)
    common.add_argument("--out-dir", help="put every artifact under this directory")
    common.add_argument("--dataset", help="dataset CSV path")
    common.add_argument("--model", help="float model JSON path")
    common.add_argument("--quantized-model", help="quantized model JSON path")
    common.add_argument("--reports", help="report output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="pulsenet", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="optimize pulses and write the dataset")
    g.add_argument("--grid-size", type=int)
    g.add_argument("--no-warm-start", action="store_true")

    t = sub.add_parser("train", parents=[common], help="train the float surrogate")
    t.add_argument("--spec", choices=sorted(SPECS))
    t.add_argument("--epochs", type=int)

    q = sub.add_parser("quantize", parents=[common], help="QAT + integer model + resource report")
    q.add_argument("--preset", choices=PRESETS)
    q.add_argument("--no-qat", action="store_true", help="post-training quantization of --model instead")

    e = sub.add_parser("eval", parents=[common], help="fidelity and MSE reports")
    e.add_argument("--engine", choices=("float", "quantized"), default="float")
    e.add_argument("--drop-smallest", type=int, default=0, help="also emit a view without the k smallest angles")

    c = sub.add_parser("compare-lut", parents=[common], help="network vs lookup-table baselines")
    c.add_argument("--engine", choices=("float", "quantized"), default="float")
    c.add_argument("--entries", type=int)
    c.add_argument("--grid", type=int)

    b = sub.add_parser("bloch", parents=[common], help="export a Bloch-sphere trajectory")
    b.add_argument("--beta", type=float, required=True)
    b.add_argument("--source", choices=("model", "quantized", "dataset", "constant"), default="model")
    b.add_argument("--samples", type=int, default=101)
    return p


def _apply_overrides(cfg, args):
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.run_id is not None:
        cfg["run_id"] = args.run_id
    if args.jobs is not None:
        cfg["jobs"] = args.jobs
    if args.out_dir is not None:
        base = Path(args.out_dir)
        for key, val in DEFAULT_RUN_CONFIG["paths"].items():
            cfg["paths"][key] = str(base / Path(val).name)
    for flag, key in (("dataset", "dataset"), ("model", "model"), ("quantized_model", "quantized_model"),
                      ("reports", "reports")):
        val = getattr(args, flag, None)
        if val is not None:
            cfg["paths"][key] = val
    if getattr(args, "grid_size", None) is not None:
        cfg["grid_size"] = args.grid_size
    if getattr(args, "no_warm_start", False):
        cfg["optimizer"]["warm_start"] = False
    if getattr(args, "spec", None) is not None:
        cfg["spec"] = args.spec
    if getattr(args, "epochs", None) is not None:
        cfg["train"]["max_epochs"] = args.epochs
    if getattr(args, "preset", None) is not None:
        cfg["preset"] = args.preset
    if getattr(args, "no_qat", False):
        cfg["qat"] = False
    if getattr(args, "entries", None) is not None:
        cfg["lut_entries"] = args.entries
    if getattr(args, "grid", None) is not None:
        cfg["lut_grid"] = args.grid
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "gen":
            return cmd_gen(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "quantize":
            return cmd_quantize(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.engine, args.drop_smallest)
        if args.command == "compare-lut":
            return cmd_compare_lut(cfg, args.engine)
        if args.command == "bloch":
            return cmd_bloch(cfg, args.beta, args.source, args.samples)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
