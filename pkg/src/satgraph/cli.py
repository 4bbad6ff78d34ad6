"""Command-line entry point.

Subcommands: train, eval, noise-sweep, synth, gradcheck. Every run
resolves a full configuration (defaults <- config file <- flags),
derives a run id from its hash, and embeds the resolved config in the
report it writes, so any report file can be fed back via --config to
reproduce the run byte for byte.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 anything
else. SATGRAPH_LOG={error,info,debug} controls stderr verbosity.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import sys

import numpy as np
import yaml

from .data import (LabeledDataset, SplitSpec, dataset_from_records, fit_scaler,
                   fit_vocab, generate_synthetic, inject_label_noise, label_of,
                   load_csv, load_schema, save_dataset_csv, split, split_indices)
from .errors import ConfigError, DataError
from .layers import ModelConfig
from .metrics import report_from_scores, spearman
from .plots import save_history_plot, save_sweep_plot
from .training import (TrainConfig, evaluate_scores, grad_check,
                       load_checkpoint, save_checkpoint, train)

log = logging.getLogger("satgraph")

ABLATIONS = ("full", "no-attention", "gcn-only")

DEFAULTS = {
    "model": {
        "hidden_dims": [32, 32],
        "activation": "relu",
        "readout": "mean",
        "attention": True,
        "leaky_slope": 0.2,
        "norm": "symmetric",
    },
    "train": {
        "epochs": 50,
        "learning_rate": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "epsilon": 1e-8,
        "batch_size": 32,
        "prob_floor": 1e-12,
        "seed": 42,
    },
    "split": {"train": 0.8, "val": 0.1, "test": 0.1, "stratified": True,
              "seed": None},
    "data": {"dataset": None, "schema": None},
    "synthetic": {"task": "motif", "n_graphs": 2000, "min_nodes": 8,
                  "max_nodes": 16},
    "noise": {"rate": 0.0, "seed": None},
    "sweep": {"rates": [0.0, 0.1, 0.2, 0.3, 0.4], "seeds": [0, 1, 2, 3, 4]},
    "gradcheck": {"trials": 10},
    "ablation": "full",
}


# ---------------------------------------------------------------------------
# config resolution

def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + str(key)!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path + str(key)!r} must be a mapping")
            out[key] = _merge(base[key], value, path + str(key) + ".")
        else:
            out[key] = value
    return out


def load_config_file(path) -> dict:
    """Read a config file; report files are accepted too (their embedded
    `config` block is used)."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping")
    if "config" in doc and isinstance(doc["config"], dict):
        doc = doc["config"]
    doc.pop("command", None)
    doc.pop("checkpoint", None)
    return doc


def resolve_config(command: str, args) -> tuple:
    """Produce (echo dict, out_dir). The echo is complete, post-ablation,
    and excludes the output directory so relocating runs keeps ids."""
    file_cfg = load_config_file(args.config) if args.config else {}
    out_dir = file_cfg.pop("out_dir", None)
    cfg = _merge(DEFAULTS, file_cfg)

    if getattr(args, "seed", None) is not None:
        cfg["train"]["seed"] = args.seed
    if getattr(args, "readout", None) is not None:
        cfg["model"]["readout"] = args.readout
    if getattr(args, "ablation", None) is not None:
        cfg["ablation"] = args.ablation
    if getattr(args, "rates", None) is not None:
        cfg["sweep"]["rates"] = args.rates
    if getattr(args, "seeds", None) is not None:
        cfg["sweep"]["seeds"] = args.seeds
    if getattr(args, "task", None) is not None:
        cfg["synthetic"]["task"] = args.task
    if getattr(args, "n_graphs", None) is not None:
        cfg["synthetic"]["n_graphs"] = args.n_graphs
    if getattr(args, "trials", None) is not None:
        cfg["gradcheck"]["trials"] = args.trials
    if getattr(args, "out", None) is not None:
        out_dir = args.out

    if cfg["ablation"] not in ABLATIONS:
        raise ConfigError(f"ablation must be one of {ABLATIONS}, got {cfg['ablation']!r}")
    if cfg["ablation"] in ("no-attention", "gcn-only"):
        cfg["model"]["attention"] = False
    if cfg["ablation"] == "gcn-only":
        cfg["model"]["readout"] = "mean"
    if cfg["split"]["seed"] is None:
        cfg["split"]["seed"] = cfg["train"]["seed"]
    if cfg["noise"]["seed"] is None:
        cfg["noise"]["seed"] = cfg["train"]["seed"]
    if (cfg["data"]["dataset"] is None) != (cfg["data"]["schema"] is None):
        raise ConfigError("data.dataset and data.schema must be given together")
    cfg["command"] = command
    return cfg, (out_dir or "runs")


def run_id_of(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def model_config_of(cfg: dict) -> ModelConfig:
    m = cfg["model"]
    return ModelConfig(hidden_dims=tuple(m["hidden_dims"]),
                       activation=m["activation"],
                       readout_mode=m["readout"],
                       attention_enabled=bool(m["attention"]),
                       leaky_slope=float(m["leaky_slope"]),
                       norm_scheme=m["norm"])


def train_config_of(cfg: dict) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(epochs=int(t["epochs"]),
                       learning_rate=float(t["learning_rate"]),
                       beta1=float(t["beta1"]), beta2=float(t["beta2"]),
                       epsilon=float(t["epsilon"]), seed=int(t["seed"]),
                       batch_size=int(t["batch_size"]),
                       prob_floor=float(t["prob_floor"]))


def split_spec_of(cfg: dict) -> SplitSpec:
    s = cfg["split"]
    return SplitSpec(train=float(s["train"]), val=float(s["val"]),
                     test=float(s["test"]), stratified=bool(s["stratified"]),
                     seed=int(s["seed"]))


def build_datasets(cfg: dict):
    """Materialize (train, val, test, info) per the resolved config."""
    spec = split_spec_of(cfg)
    info = {}
    if cfg["data"]["dataset"] is not None:
        schema = load_schema(cfg["data"]["schema"])
        records, load_report = load_csv(cfg["data"]["dataset"], schema)
        if not records:
            raise DataError(f"dataset {cfg['data']['dataset']} has no data rows")
        info["source"] = "csv"
        info["load"] = {"n_rows": load_report.n_rows,
                        "n_imputed": load_report.n_imputed,
                        "n_dropped": load_report.n_dropped}
        labels = [label_of(r, schema) for r in records]
        idx_train, idx_val, idx_test = split_indices(labels, spec)
        train_records = [records[i] for i in idx_train]
        vocab = scaler = None
        if schema.categorical_encoding == "embedding":
            vocab = fit_vocab(train_records, schema)
            scaler = fit_scaler(train_records, schema)
        parts = []
        for ids in (idx_train, idx_val, idx_test):
            if not ids:
                raise DataError(f"split produced an empty part from "
                                f"{len(records)} records")
            ds = dataset_from_records([records[i] for i in ids], schema,
                                      source="csv", embedding_vocab=vocab,
                                      scaler=scaler)
            ds.ids = tuple(ids)
            parts.append(ds)
        train_ds, val_ds, test_ds = parts
    else:
        syn = cfg["synthetic"]
        full = generate_synthetic(int(syn["n_graphs"]),
                                  (int(syn["min_nodes"]), int(syn["max_nodes"])),
                                  syn["task"], int(cfg["train"]["seed"]))
        info["source"] = "synthetic"
        train_ds, val_ds, test_ds = split(full, spec)
    info["n_train"] = len(train_ds.items)
    info["n_val"] = len(val_ds.items)
    info["n_test"] = len(test_ds.items)
    return train_ds, val_ds, test_ds, info


# ---------------------------------------------------------------------------
# deterministic file emission

def _write_yaml(doc: dict, path):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=True, default_flow_style=False)


def _write_history_csv(history, path):
    cols = ["epoch", "train_loss", "val_accuracy", "val_f1", "val_auc"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for row in history:
            cells = [str(row["epoch"])]
            for c in cols[1:]:
                cells.append(repr(row[c]) if c in row else "")
            fh.write(",".join(cells) + "\n")


SWEEP_COLUMNS = ["noise_rate", "seed", "accuracy", "precision", "f1", "auc"]


def _write_sweep_csv(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(SWEEP_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join([repr(float(r["noise_rate"])), str(r["seed"]),
                               repr(r["accuracy"]), repr(r["precision"]),
                               repr(r["f1"]),
                               "" if r["auc"] is None else repr(r["auc"])]) + "\n")


def _report_path(out_dir: str, run_id: str) -> str:
    return os.path.join(out_dir, f"report.{run_id}.txt")


# ---------------------------------------------------------------------------
# subcommands

def cmd_train(args) -> int:
    cfg, out_dir = resolve_config("train", args)
    run_id = run_id_of(cfg)
    os.makedirs(out_dir, exist_ok=True)
    mcfg = model_config_of(cfg)
    tcfg = train_config_of(cfg)

    train_ds, val_ds, test_ds, info = build_datasets(cfg)
    n_flipped = 0
    if cfg["noise"]["rate"] > 0:
        train_ds = inject_label_noise(train_ds, float(cfg["noise"]["rate"]),
                                      int(cfg["noise"]["seed"]))
        n_flipped = len(train_ds.flipped_ids)
    info["n_train_flipped"] = n_flipped

    log.info("training %s: %d train / %d val / %d test graphs",
             run_id, info["n_train"], info["n_val"], info["n_test"])
    params, history = train(train_ds, mcfg, tcfg, val_items=val_ds.items)
    scores, labels = evaluate_scores(params, mcfg, test_ds.items)
    metrics = report_from_scores(scores, labels)
    log.info("test metrics: acc %.4f f1 %.4f auc %s", metrics.accuracy,
             metrics.f1, "n/a" if metrics.auc is None else f"{metrics.auc:.4f}")

    history_csv = os.path.join(out_dir, f"history.{run_id}.csv")
    checkpoint = os.path.join(out_dir, f"checkpoint.{run_id}")
    history_png = os.path.join(out_dir, f"history.{run_id}.png")
    _write_history_csv(history, history_csv)
    save_checkpoint(checkpoint, params, cfg, tcfg.seed)
    save_history_plot(history, history_png)

    doc = {
        "config": cfg,
        "run_id": run_id,
        "seed": tcfg.seed,
        "dataset": info,
        "metrics": metrics.to_dict(),
        "history": {
            "epochs": len(history),
            "first_epoch_loss": history[0]["train_loss"] if history else None,
            "final_epoch_loss": history[-1]["train_loss"] if history else None,
        },
        "files": [os.path.basename(p) for p in
                  (history_csv, checkpoint, history_png)],
    }
    report = _report_path(out_dir, run_id)
    _write_yaml(doc, report)
    print(report)
    return 0


def _check_embedding_compat(params, dataset: LabeledDataset):
    for name, rows in sorted(dataset.embedding_rows.items()):
        table = params.embeddings.get(name)
        if table is None:
            raise DataError(f"checkpoint has no embedding table for field {name!r}")
        if table.shape[0] != rows:
            raise DataError(f"embedding table {name!r} has {table.shape[0]} rows, "
                            f"dataset needs {rows}")


def cmd_eval(args) -> int:
    params, ckpt_cfg, seed = load_checkpoint(args.checkpoint)
    if args.config:
        cfg, out_dir = resolve_config("eval", args)
    else:
        cfg = copy.deepcopy(ckpt_cfg)
        cfg["command"] = "eval"
        out_dir = args.out or "runs"
    cfg["checkpoint"] = args.checkpoint
    run_id = run_id_of(cfg)
    os.makedirs(out_dir, exist_ok=True)
    mcfg = model_config_of(cfg)

    _, _, test_ds, info = build_datasets(cfg)
    _check_embedding_compat(params, test_ds)
    scores, labels = evaluate_scores(params, mcfg, test_ds.items)
    metrics = report_from_scores(scores, labels)

    doc = {
        "config": cfg,
        "run_id": run_id,
        "seed": seed,
        "dataset": info,
        "metrics": metrics.to_dict(),
    }
    report = _report_path(out_dir, run_id)
    _write_yaml(doc, report)
    print(report)
    return 0


def cmd_noise_sweep(args) -> int:
    cfg, out_dir = resolve_config("noise-sweep", args)
    run_id = run_id_of(cfg)
    os.makedirs(out_dir, exist_ok=True)
    mcfg = model_config_of(cfg)
    tcfg = train_config_of(cfg)

    rates = [float(r) for r in cfg["sweep"]["rates"]]
    seeds = [int(s) for s in cfg["sweep"]["seeds"]]
    if not rates or not seeds:
        raise ConfigError("sweep needs at least one rate and one seed")
    for r in rates:
        if not 0.0 <= r <= 1.0:
            raise ConfigError(f"sweep rate {r} outside [0, 1]")

    train_ds, _, test_ds, info = build_datasets(cfg)
    rows = []
    for rate in rates:
        for seed in seeds:
            noisy = (inject_label_noise(train_ds, rate, seed)
                     if rate > 0 else train_ds)
            params, _ = train(noisy, mcfg, tcfg, val_items=None)
            scores, labels = evaluate_scores(params, mcfg, test_ds.items)
            m = report_from_scores(scores, labels)
            rows.append({"noise_rate": rate, "seed": seed,
                         "accuracy": m.accuracy, "precision": m.precision,
                         "f1": m.f1, "auc": m.auc})
            log.info("sweep rate %.2f seed %d: f1 %.4f", rate, seed, m.f1)

    mean_f1 = [{"rate": rate,
                "mean_f1": float(np.mean([r["f1"] for r in rows
                                          if r["noise_rate"] == rate]))}
               for rate in rates]
    rho = spearman([m["rate"] for m in mean_f1], [m["mean_f1"] for m in mean_f1])

    sweep_csv = os.path.join(out_dir, f"sweep.{run_id}.csv")
    sweep_png = os.path.join(out_dir, f"sweep.{run_id}.png")
    _write_sweep_csv(rows, sweep_csv)
    save_sweep_plot(rows, sweep_png)
    doc = {
        "config": cfg,
        "run_id": run_id,
        "seed": tcfg.seed,
        "dataset": info,
        "summary": {
            "per_rate_mean_f1": mean_f1,
            "spearman_rate_vs_mean_f1": rho,
            "n_rows": len(rows),
        },
        "files": [os.path.basename(sweep_csv), os.path.basename(sweep_png)],
    }
    report = _report_path(out_dir, run_id)
    _write_yaml(doc, report)
    print(report)
    return 0


def cmd_synth(args) -> int:
    cfg, out_dir = resolve_config("synth", args)
    os.makedirs(out_dir, exist_ok=True)
    syn = cfg["synthetic"]
    ds = generate_synthetic(int(syn["n_graphs"]),
                            (int(syn["min_nodes"]), int(syn["max_nodes"])),
                            syn["task"], int(cfg["train"]["seed"]))
    stem = f"{syn['task']}.seed{cfg['train']['seed']}"
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    schema_path = os.path.join(out_dir, f"{stem}.schema.yaml")
    save_dataset_csv(ds, csv_path, schema_path)
    print(csv_path)
    print(schema_path)
    return 0


def cmd_gradcheck(args) -> int:
    cfg, out_dir = resolve_config("gradcheck", args)
    run_id = run_id_of(cfg)
    os.makedirs(out_dir, exist_ok=True)
    mcfg = model_config_of(cfg)
    tcfg = train_config_of(cfg)
    trials = int(cfg["gradcheck"]["trials"])
    report = grad_check(mcfg, tcfg, trials)
    threshold = 1e-4
    ok = True
    for name in sorted(report):
        passed = report[name] < threshold
        ok = ok and passed
        print(f"{name:<12} rel_err {report[name]:.3e}  "
              f"{'pass' if passed else 'FAIL'}")
    print(f"gradcheck {'pass' if ok else 'FAIL'}: {len(report)} tensors, "
          f"{trials} trials, threshold {threshold:g}")
    doc = {
        "config": cfg,
        "run_id": run_id,
        "seed": tcfg.seed,
        "worst_relative_error": {k: float(v) for k, v in sorted(report.items())},
        "threshold": threshold,
        "passed": bool(ok),
    }
    _write_yaml(doc, _report_path(out_dir, run_id))
    if not ok:
        raise RuntimeError("gradient check failed (see per-tensor table)")
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch

def _floats_list(text: str):
    try:
        return [float(x) for x in text.split(",") if x.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {text!r}")


def _ints_list(text: str):
    try:
        return [int(x) for x in text.split(",") if x.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}")


def _add_common(p: argparse.ArgumentParser, readout: bool = True):
    p.add_argument("--config", help="YAML config file (or a report file; its "
                                    "embedded config is reused)")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--out", help="output directory (default runs/)")
    if readout:
        p.add_argument("--readout", choices=("mean", "max", "attention"),
                       help="readout mode override")
        p.add_argument("--ablation", choices=ABLATIONS,
                       help="model variant (overrides config)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="satgraph",
        description="Graph-based user-satisfaction classifier: training and "
                    "evaluation experiments on tabular feedback records.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and report test metrics")
    _add_common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("noise-sweep",
                       help="train across label-noise rates and summarize F1 decay")
    _add_common(p)
    p.add_argument("--rates", type=_floats_list,
                   help="comma-separated noise rates (overrides config)")
    p.add_argument("--seeds", type=_ints_list,
                   help="comma-separated noise seeds (overrides config)")
    p.set_defaults(fn=cmd_noise_sweep)

    p = sub.add_parser("synth", help="write a synthetic dataset as CSV + schema")
    _add_common(p, readout=False)
    p.add_argument("--task", choices=("motif", "distinguished-neighbor"))
    p.add_argument("--n-graphs", type=int, dest="n_graphs")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("gradcheck",
                       help="compare analytic gradients to finite differences")
    _add_common(p)
    p.add_argument("--trials", type=int)
    p.set_defaults(fn=cmd_gradcheck)
    return ap


def _setup_logging():
    level = os.environ.get("SATGRAPH_LOG", "info").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        raise ConfigError(f"SATGRAPH_LOG must be one of {sorted(levels)}, got {level!r}")
    logging.basicConfig(stream=sys.stderr, level=levels[level],
                        format="%(levelname)s %(message)s")


def main(argv=None) -> int:
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001  (CLI boundary)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
