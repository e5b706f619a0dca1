"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``; the lines are also
repeated in the terminal summary.
"""

import csv
import json
import math
import time

import numpy as np

from cmtpan import tensor as T
from cmtpan.attention import AttentionConfig, AttentionWeights, cm_msa, modulation_attention
from cmtpan.cli import main as cli
from cmtpan.data import synth_dataset
from cmtpan.loss import total_loss
from cmtpan.metrics import ergas, hqnr, q2n, sam
from cmtpan.model import forward, init_params, toy_config
from cmtpan.rng import Rng
from cmtpan.tensor import Tensor
from cmtpan.train import TrainConfig, bilinear_baseline, grad_check, predict_all, train
from cmtpan.transforms import dft2, dwt2_haar, idft2, idwt2_haar

import oracles
from conftest import ACCEPTANCE_LINES


def verdict(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{number}] {'PASS' if ok else 'FAIL'} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_1_gradient_fidelity():
    start = time.perf_counter()
    report = grad_check(toy_config(), tolerance=1e-4, size=8)
    elapsed = time.perf_counter() - start
    worst = report.worst
    ok = report.passed and elapsed < 60.0 and len(report.entries) == len(init_params(toy_config()))
    verdict(1, "gradient fidelity", ok,
            f"{len(report.entries)} parameters, worst {worst.name} rel err {worst.max_rel_error:.2e} "
            f"(< 1e-4), {elapsed:.1f} s (< 60 s)")


def test_2_modulation_identity():
    w = AttentionWeights.init(AttentionConfig(8, 2), Rng(0))
    w.pos_kernel = Tensor(Rng(1).normal(w.pos_kernel.shape, 0.3))
    x = Tensor(Rng(2).normal((16, 8)))
    attn_ok = np.array_equal(cm_msa(x, None, w, 4, 4).data, cm_msa(x, Tensor(np.ones((16, 8))), w, 4, 4).data)

    cfg = toy_config()
    params = init_params(cfg, 3)
    rng = Rng(4)
    for p in params.values():
        p.data = p.data + rng.normal(p.shape, 0.1)
    pan, lrms = rng.uniform((16, 16, 1)), rng.uniform((4, 4, 4))
    with T.no_grad():
        v1 = forward(pan, lrms, params, cfg, "v1").data
        ones = forward(pan, lrms, params, cfg, "full", force_ones=("ms", "pan")).data
        full = forward(pan, lrms, params, cfg, "full").data
    model_ok = np.array_equal(v1, ones) and not np.array_equal(v1, full)
    verdict(2, "modulation identity", attn_ok and model_ok,
            f"cm_msa(ones) bit-identical={attn_ok}, V1 == full with ones modulators bit-identical={model_ok}")


def test_3_transform_round_trips():
    worst_rt, worst_energy = 0.0, 0.0
    for seed in range(10):
        x = np.random.default_rng(seed).normal(size=(16, 16))
        f = dft2(x)
        worst_rt = max(worst_rt, np.abs(idft2(f).data - x).max())
        parseval = np.sum(np.abs(f.to_numpy()) ** 2) / x.size
        worst_energy = max(worst_energy, abs(parseval - np.sum(x**2)) / np.sum(x**2))
        p = dwt2_haar(x, 2)
        worst_rt = max(worst_rt, np.abs(idwt2_haar(p).data - x).max())
        haar_energy = sum(float(np.sum(b.data**2)) for _, b in p.subbands())
        worst_energy = max(worst_energy, abs(haar_energy - np.sum(x**2)) / np.sum(x**2))
    verdict(3, "transform round trips", worst_rt < 1e-10 and worst_energy < 1e-10,
            f"max reconstruction error {worst_rt:.1e} (< 1e-10), max relative energy error {worst_energy:.1e} (< 1e-10)")


def test_4_loss_decomposition():
    worst = 0.0
    positive = True
    for seed in range(20):
        rng = np.random.default_rng(seed)
        pi, gt = rng.uniform(size=(16, 16, 4)), rng.uniform(size=(16, 16, 4))
        b = total_loss(pi, gt).values()
        worst = max(worst, abs(b["total"] - (b["spa"] + 0.7 * b["fourier"] + 0.2 * b["wavelet"])))
        positive &= all(v > 0 for v in b.values())
    zero = total_loss(gt, gt.copy()).values()
    zero_ok = all(v == 0.0 for v in zero.values())
    verdict(4, "loss decomposition", worst < 1e-12 and positive and zero_ok,
            f"max |total - (spa + 0.7 F + 0.2 W)| = {worst:.1e} (< 1e-12), "
            f"all components > 0 on distinct inputs={positive}, all 0 on identical inputs={zero_ok}")


def test_5_metric_identities():
    x = np.random.default_rng(0).uniform(0.1, 1.0, size=(64, 64, 4))
    s, e, q = sam(x, x), ergas(x, x, 4), q2n(x, x)
    h = hqnr(0.0202, 0.0338)
    ok = abs(s) <= 1e-12 and abs(e) <= 1e-12 and abs(q - 1) <= 1e-12 and abs(h - 0.9467) <= 0.0005
    verdict(5, "metric identities", ok, f"sam={s:.1e} ergas={e:.1e} q2n-1={q - 1:.1e} hqnr(0.0202, 0.0338)={h:.5f}")


def test_6_overfit_sanity():
    cfg = toy_config()
    data = synth_dataset(4, 64, 4, 4, seed=0)
    start = time.perf_counter()
    result = train(data, cfg, TrainConfig(lr=5e-3, epochs=300, batch_size=4, lr_period=100, seed=0))
    elapsed = time.perf_counter() - start
    steps = result.step_losses
    reduction = 1.0 - steps[-1] / steps[0]
    fused = predict_all(result.params, cfg, data.samples)
    base = bilinear_baseline(data.samples, 4)
    e_model = np.mean([ergas(f, s.gt, 4) for f, s in zip(fused, data.samples)])
    e_base = np.mean([ergas(b, s.gt, 4) for b, s in zip(base, data.samples)])
    gain = 1.0 - e_model / e_base
    ok = len(steps) == 300 and reduction >= 0.9 and gain >= 0.2 and elapsed < 300
    verdict(6, "overfit sanity", ok,
            f"{len(steps)} steps, L_total {steps[0]:.4f} -> {steps[-1]:.4f} (reduction {reduction:.1%}, need >= 90%), "
            f"ERGAS {e_model:.3f} vs bilinear {e_base:.3f} ({gain:.1%} lower, need >= 20%), {elapsed:.0f} s (< 300 s)")


def test_7_ablation_harness(tmp_path):
    cfg = {"channels": 8, "heads": 2, "cmab_blocks": 1, "resnet_blocks_extract": 1,
           "resnet_blocks_aggregate": 1, "epochs": 3, "batch_size": 2, "lr": 3e-3, "seed": 0}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert cli(["synth-data", "--out", str(tmp_path / "red"), "--samples", "4", "--size", "32", "--seed", "0"]) == 0
    assert cli(["synth-data", "--out", str(tmp_path / "full"), "--samples", "3", "--size", "32", "--seed", "1",
                "--protocol", "full"]) == 0
    code = cli(["ablate", "--data-reduced", str(tmp_path / "red"), "--data-full", str(tmp_path / "full"),
                "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path / "abl")])
    with open(tmp_path / "abl" / "ablation_full.csv") as fh:
        rows = list(csv.DictReader(fh))
    audit = json.loads((tmp_path / "abl" / "audit.json").read_text())
    columns = ["variant", "D_lambda_mean", "D_lambda_std", "D_s_mean", "D_s_std", "HQNR_mean", "HQNR_std"]
    shape_ok = [r["variant"] for r in rows] == ["V1", "V2", "V3", "CMT"] and list(rows[0]) == columns
    finite = all(math.isfinite(float(r[c])) for r in rows for c in columns[1:])
    ok = code == 0 and shape_ok and finite and audit["v1_equals_full_with_ones_modulators"] and audit["identical_shuffle"]
    ordering = " > ".join(audit["hqnr_ordering"])
    verdict(7, "ablation harness", ok,
            f"rows {[r['variant'] for r in rows]}, D_lambda/D_s/HQNR mean+std columns, "
            f"V1 ones audit={audit['v1_equals_full_with_ones_modulators']}, shared shuffle={audit['identical_shuffle']}, "
            f"HQNR ordering (reported only) {ordering}")


def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_8_determinism(tmp_path):
    cfg = {"channels": 8, "heads": 2, "cmab_blocks": 1, "resnet_blocks_extract": 1,
           "resnet_blocks_aggregate": 1, "epochs": 3, "batch_size": 2, "seed": 7}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    trees = []
    for run in ("a", "b"):
        base = tmp_path / run
        assert cli(["synth-data", "--out", str(base / "data"), "--samples", "3", "--size", "32", "--seed", "11"]) == 0
        assert cli(["train", "--data", str(base / "data"), "--config", str(tmp_path / "cfg.json"),
                    "--out", str(base / "run")]) == 0
        assert cli(["eval", "--data", str(base / "data"), "--checkpoint", str(base / "run" / "checkpoint"),
                    "--out", str(base / "report.csv")]) == 0
        tree = _tree_bytes(base)
        # the effective config records the data path, which differs by construction
        tree.pop("run/effective_config.json")
        trees.append(tree)
    ok = trees[0] == trees[1] and len(trees[0]) > 10
    verdict(8, "determinism", ok, f"{len(trees[0])} files (dataset, checkpoint, loss CSV, report) byte-identical={ok}")


def test_9_oracle_equivalence():
    rng = np.random.default_rng(0)
    errs = {}
    a, b = rng.normal(size=(5, 7)), rng.normal(size=(7, 3))
    errs["matmul"] = np.abs(T.matmul(a, b).data - oracles.matmul(a, b)).max()
    x, k = rng.normal(size=(6, 5, 3)), rng.normal(size=(3, 3, 3, 2))
    errs["conv2d"] = np.abs(T.conv2d(Tensor(x), Tensor(k)).data - oracles.conv2d_same(x, k)).max()
    img = rng.normal(size=(6, 4, 2))
    errs["dft2"] = np.abs(dft2(img).to_numpy() - oracles.dft2(img)).max()
    img = rng.normal(size=(8, 8, 2))
    p = dwt2_haar(img, 1)
    ref = oracles.haar_level(img)
    got = (p.ll, p.details[0]["LH"], p.details[0]["HL"], p.details[0]["HH"])
    errs["dwt2_haar"] = max(np.abs(g.data - r).max() for g, r in zip(got, ref))
    q, kk, v, m = (rng.normal(size=(16, 4)) for _ in range(4))
    out = modulation_attention(Tensor(q), Tensor(kk), Tensor(m * v), Tensor([0.5])).data
    errs["modulation_attention"] = np.abs(out - oracles.modulation_attention(q, kk, m * v, math.exp(0.5))).max()
    tol = {"matmul": 1e-12, "conv2d": 1e-12, "dft2": 1e-10, "dwt2_haar": 1e-12, "modulation_attention": 1e-12}
    ok = all(errs[n] < tol[n] for n in tol)
    verdict(9, "oracle equivalence", ok, ", ".join(f"{n} {errs[n]:.1e} (< {tol[n]:g})" for n in tol))
