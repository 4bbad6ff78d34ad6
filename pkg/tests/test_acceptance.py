"""End-to-end acceptance checks.

One test per contract criterion, each printing a PASS/FAIL line with the
measured numbers so a pytest run reads as a checklist. Wall-clock
budgets are asserted where the contract states them; everything runs
single-threaded.
"""

import os
import sys
import time

import numpy as np
import pytest
import yaml

from satgraph import cli
from satgraph.data import SplitSpec, generate_synthetic, split
from satgraph.graph import normalize_adjacency, permute_graph
from satgraph.layers import (ModelConfig, attention_aggregate,
                             attention_coefficients, gcn_forward,
                             init_params, model_forward)
from satgraph.linalg import Rng
from satgraph.metrics import report_from_scores, roc_auc
from satgraph.training import TrainConfig, evaluate_scores, train
from tests.conftest import ACCEPTANCE_LINES, random_graph
from tests.test_metrics import pairwise_auc


def announce(ok: bool, label: str, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(f"\n{line}", file=sys.__stdout__, flush=True)
    return ok


def only_report(out_dir) -> dict:
    names = [f for f in os.listdir(out_dir) if f.startswith("report.")]
    assert len(names) == 1, names
    with open(os.path.join(out_dir, names[0]), encoding="utf-8") as fh:
        return yaml.safe_load(fh)


def test_acceptance_1_gradient_check(tmp_path, capsys):
    cfg = tmp_path / "config.yaml"
    cfg.write_text(yaml.safe_dump({"model": {"hidden_dims": [8, 8]}}))
    out = tmp_path / "runs"
    t0 = time.monotonic()
    code = cli.main(["gradcheck", "--config", str(cfg), "--out", str(out),
                     "--readout", "attention", "--seed", "0",
                     "--trials", "10"])
    dt = time.monotonic() - t0
    capsys.readouterr()
    doc = only_report(out)
    worst = max(doc["worst_relative_error"].values())
    ok = code == 0 and doc["passed"] and worst < 1e-4 and dt < 60
    assert announce(ok, "gradient check",
                    f"10 trials, every tensor; worst rel err {worst:.2e} "
                    f"(< 1e-4) in {dt:.1f}s (< 60s)")


def test_acceptance_2_motif_learnability():
    t0 = time.monotonic()
    ds = generate_synthetic(2000, (8, 16), "motif", seed=42)
    train_ds, _, test_ds = split(ds, SplitSpec(seed=42))
    mcfg = ModelConfig()
    tcfg = TrainConfig(epochs=50, seed=42)
    params, _ = train(train_ds, mcfg, tcfg)
    scores, labels = evaluate_scores(params, mcfg, test_ds.items)
    rep = report_from_scores(scores, labels)
    dt = time.monotonic() - t0
    ok = rep.accuracy >= 0.95 and rep.auc is not None and rep.auc >= 0.98 \
        and dt < 300
    assert announce(ok, "motif learnability",
                    f"test acc {rep.accuracy:.4f} (>= 0.95), "
                    f"auc {rep.auc:.4f} (>= 0.98) in {dt:.0f}s (< 300s)")


def test_acceptance_3_attention_ablation_gap():
    def run(seed: int, attention: bool) -> float:
        ds = generate_synthetic(1000, (12, 24), "distinguished-neighbor",
                                seed=seed)
        train_ds, _, test_ds = split(ds, SplitSpec(seed=seed))
        mcfg = ModelConfig(hidden_dims=(16, 16), attention_enabled=attention)
        params, _ = train(train_ds, mcfg, TrainConfig(epochs=30, seed=seed))
        scores, labels = evaluate_scores(params, mcfg, test_ds.items)
        return report_from_scores(scores, labels).f1

    full = [run(seed, True) for seed in range(5)]
    plain = [run(seed, False) for seed in range(5)]
    gap = float(np.mean(full) - np.mean(plain))
    ok = gap >= 0.03
    assert announce(ok, "attention ablation gap",
                    f"mean F1 full {np.mean(full):.4f} vs "
                    f"convolution-only {np.mean(plain):.4f} over 5 seeds; "
                    f"gap {gap:+.4f} (>= 0.03)")


def test_acceptance_4_noise_decay_shape(tmp_path, capsys):
    out = tmp_path / "runs"
    t0 = time.monotonic()
    code = cli.main(["noise-sweep", "--seed", "42", "--out", str(out)])
    dt = time.monotonic() - t0
    capsys.readouterr()
    doc = only_report(out)
    by_rate = {m["rate"]: m["mean_f1"]
               for m in doc["summary"]["per_rate_mean_f1"]}
    drop = by_rate[0.0] - by_rate[0.4]
    rho = doc["summary"]["spearman_rate_vs_mean_f1"]
    n_rows = doc["summary"]["n_rows"]
    ok = (code == 0 and sorted(by_rate) == [0.0, 0.1, 0.2, 0.3, 0.4]
          and n_rows == 25 and drop >= 0.05 and rho <= -0.8 and dt < 1800)
    assert announce(ok, "noise decay shape",
                    f"5 rates x 5 seeds; mean F1 {by_rate[0.0]:.4f} -> "
                    f"{by_rate[0.4]:.4f} (drop {drop:.4f} >= 0.05), "
                    f"spearman {rho:.3f} (<= -0.8) in {dt:.0f}s (< 1800s)")


def test_acceptance_5_metric_oracles():
    rng = Rng(123, 0)
    worst_auc = 0.0
    exact = True
    for _ in range(1000):
        n = int(rng.integers(2, 51))
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = np.round(rng.random(n) * 4) / 4   # forced ties
        worst_auc = max(worst_auc,
                        abs(roc_auc(scores, labels) - pairwise_auc(scores, labels)))

        preds = (scores >= 0.5).astype(np.int64)
        rep = report_from_scores(scores, labels)
        tp = int(((preds == 1) & (labels == 1)).sum())
        fp = int(((preds == 1) & (labels == 0)).sum())
        fn = int(((preds == 0) & (labels == 1)).sum())
        tn = int(((preds == 0) & (labels == 0)).sum())
        acc = (tp + tn) / n
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        exact = exact and (rep.accuracy, rep.precision, rep.f1) == (acc, prec, f1) \
            and (rep.confusion.tp, rep.confusion.fp,
                 rep.confusion.fn, rep.confusion.tn) == (tp, fp, fn, tn)
    ok = worst_auc < 1e-12 and exact
    assert announce(ok, "metric oracle equivalence",
                    f"1000 instances with ties: rank-sum AUC vs pairwise "
                    f"oracle worst |diff| {worst_auc:.2e} (< 1e-12); "
                    f"acc/precision/F1 recounts exact: {exact}")


def test_acceptance_6_structural_invariance():
    rng = Rng(2024, 0)
    cfg = ModelConfig(hidden_dims=(8, 8))
    params = init_params(cfg, 6, Rng(17, 0))
    worst_pred = worst_sum = worst_equiv = 0.0
    for _ in range(100):
        g = random_graph(rng, n_lo=4, n_hi=12, d=6)
        probs, cache = model_forward(g, params, cfg)

        alpha = cache["attn"]["alpha"]
        sums = np.zeros(g.n)
        np.add.at(sums, cache["adj"].dst, alpha)
        worst_sum = max(worst_sum, float(np.abs(sums - 1.0).max()))

        for _ in range(10):
            p = rng.permutation(g.n)
            out, _ = model_forward(permute_graph(g, p), params, cfg)
            worst_pred = max(worst_pred, float(np.abs(out - probs).max()))

        adj = normalize_adjacency(g, "mean")
        W = rng.uniform(-1.0, 1.0, (6, 5))
        uniform = attention_coefficients(g.node_features, adj, W, np.zeros(10))
        diff = np.abs(attention_aggregate(g.node_features, adj, uniform, W)
                      - gcn_forward(g.node_features, adj, W))
        worst_equiv = max(worst_equiv, float(diff.max()))
    ok = worst_pred <= 1e-9 and worst_sum <= 1e-9 and worst_equiv <= 1e-12
    assert announce(ok, "structural invariance",
                    f"100 graphs x 10 permutations: predictions differ "
                    f"{worst_pred:.2e} (<= 1e-9); attention sums off by "
                    f"{worst_sum:.2e} (<= 1e-9); uniform-attention vs mean "
                    f"convolution {worst_equiv:.2e} (<= 1e-12)")


def test_acceptance_7_determinism_closure(tmp_path, capsys):
    cfg = tmp_path / "config.yaml"
    cfg.write_text(yaml.safe_dump({
        "model": {"hidden_dims": [8, 8]},
        "train": {"epochs": 5, "seed": 3, "batch_size": 16},
        "synthetic": {"n_graphs": 200, "min_nodes": 6, "max_nodes": 10},
    }))

    identical = True
    details = []
    for label, argv in (
        ("train", ["train", "--config", str(cfg)]),
        ("noise-sweep", ["noise-sweep", "--config", str(cfg),
                         "--rates", "0.0,0.3", "--seeds", "0,1"]),
    ):
        first = tmp_path / f"{label}-first"
        again = tmp_path / f"{label}-again"
        assert cli.main(argv + ["--out", str(first)]) == 0
        report_path = capsys.readouterr().out.strip().splitlines()[-1]
        # second run configured solely by the emitted report
        assert cli.main([argv[0], "--config", report_path,
                         "--out", str(again)]) == 0
        capsys.readouterr()
        names = sorted(os.listdir(first))
        same = names == sorted(os.listdir(again)) and all(
            (first / n).read_bytes() == (again / n).read_bytes()
            for n in names)
        identical = identical and same
        details.append(f"{label} {len(names)} files "
                       f"{'identical' if same else 'DIFFER'}")
    assert announce(identical, "determinism closure",
                    "reruns from emitted reports byte-identical ("
                    + "; ".join(details) + ")")
