"""Acceptance suite: one printed pass/fail line per criterion.

Run with `pytest tests/test_acceptance.py -v -s`. The desk-scale
training criteria share three trained models (semi, supervised,
unsupervised) built once per session on the default synthetic survey:
200 traces x 512 impedance samples, resolution ratio 2, 30 Hz Ricker,
20 dB SNR, seed 1234, 20 labeled traces.
"""

import time

import numpy as np
import pytest

import impz.autodiff as ad
from impz.autodiff import Tensor
from impz import data as dat
from impz.forward_model import (
    ForwardModelConfig,
    extract_wavelet,
    synthesize,
    wavelet_peak_frequency,
)
from impz.gradcheck import check_many, composite_suite, default_suite
from impz.inverse_model import InverseModelConfig, invert_survey
from impz.layers import gru_cell_step
from impz.metrics import evaluate, pcc
from impz.training import TrainConfig, config_for_regime, train_loop

from reference_impls import (
    conv1d_loops,
    conv_transpose1d_loops,
    gru_cell_loops,
    matmul_loops,
    pcc_loops,
    r2_loops,
)

EPOCHS = 60
SEED = 1234


def report(num, desc, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"\nCRITERION {num} [{status}] {desc}" + (f" ({detail})" if detail else ""))
    assert ok, f"criterion {num} failed: {desc} {detail}"


@pytest.fixture(scope="module")
def acceptance_data():
    imp = dat.make_layered_model(200, 512, 12, seed=SEED)
    pair = dat.synthesize_survey(imp, f_peak_hz=30.0, noise_snr_db=20.0,
                                 resolution_ratio=2, seed=SEED)
    split = dat.pick_labeled_traces(200, 20)
    ds = dat.normalize(pair, split)
    return pair, split, ds


@pytest.fixture(scope="module")
def model_configs():
    return InverseModelConfig(), ForwardModelConfig()


def _train(acceptance_data, model_configs, regime):
    pair, split, ds = acceptance_data
    inv_cfg, fwd_cfg = model_configs
    cfg = TrainConfig(labeled_indices=split.labeled.tolist(), epochs=EPOCHS,
                      eval_every=5, seed=SEED)
    t0 = time.monotonic()
    result = train_loop(ds, split, config_for_regime(cfg, regime), inv_cfg, fwd_cfg)
    return result, time.monotonic() - t0


@pytest.fixture(scope="module")
def semi_run(acceptance_data, model_configs):
    return _train(acceptance_data, model_configs, "semi")


@pytest.fixture(scope="module")
def supervised_run(acceptance_data, model_configs):
    return _train(acceptance_data, model_configs, "supervised")


@pytest.fixture(scope="module")
def unsupervised_run(acceptance_data, model_configs):
    return _train(acceptance_data, model_configs, "unsupervised")


def test_criterion_1_gradient_integrity():
    t0 = time.monotonic()
    reports = check_many(default_suite(seed=0)) + check_many(composite_suite(seed=1))
    elapsed = time.monotonic() - t0
    worst = max(r.max_rel_err for r in reports)
    ok = all(r.passed for r in reports) and elapsed < 60.0
    report(1, "finite-difference gradients for every op and composite graphs",
           ok, f"max rel err {worst:.2e}, {elapsed:.1f}s")


def test_criterion_2_oracle_equivalence():
    rng = np.random.default_rng(7)
    t0 = time.monotonic()
    worst = 0.0

    for _ in range(100):
        B, Ci, Co = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
        K, dil, stride = int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(1, 3))
        pad = int(rng.integers(0, 3))
        L = int(rng.integers(dil * (K - 1) + 1, 12))
        x = rng.standard_normal((B, Ci, L))
        w = rng.standard_normal((Co, Ci, K))
        b = rng.standard_normal(Co)
        got = ad.conv1d(Tensor(x), Tensor(w), Tensor(b), dilation=dil,
                        padding=pad, stride=stride).values
        want = conv1d_loops(x, w, b, dilation=dil, padding=pad, stride=stride)
        worst = max(worst, np.abs(got - want).max())

    done = 0
    while done < 100:
        B, Ci, Co = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
        K, stride, pad = int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(0, 2))
        L = int(rng.integers(2, 9))
        if (L - 1) * stride + K - 2 * pad < 1:
            continue
        done += 1
        x = rng.standard_normal((B, Ci, L))
        w = rng.standard_normal((Ci, Co, K))
        got = ad.conv_transpose1d(Tensor(x), Tensor(w), stride=stride, padding=pad).values
        want = conv_transpose1d_loops(x, w, stride=stride, padding=pad)
        worst = max(worst, np.abs(got - want).max())

    for _ in range(100):
        B, Cin, H = int(rng.integers(1, 4)), int(rng.integers(1, 5)), int(rng.integers(1, 4))
        x = rng.standard_normal((B, Cin))
        h0 = rng.standard_normal((B, H))
        W = rng.standard_normal((Cin, 3 * H))
        U = rng.standard_normal((H, 3 * H))
        b = rng.standard_normal(3 * H)
        got = gru_cell_step(Tensor(x), Tensor(h0), Tensor(W), Tensor(U), Tensor(b)).values
        worst = max(worst, np.abs(got - gru_cell_loops(x, h0, W, U, b)).max())

    for _ in range(100):
        M, K2, N = rng.integers(1, 6), rng.integers(1, 6), rng.integers(1, 6)
        x = rng.standard_normal((M, K2))
        w = rng.standard_normal((K2, N))
        worst = max(worst, np.abs(ad.matmul(Tensor(x), Tensor(w)).values
                                  - matmul_loops(x, w)).max())

    from impz.metrics import pcc as pcc_fast, r2 as r2_fast
    for _ in range(100):
        n = int(rng.integers(3, 60))
        y = rng.standard_normal(n)
        e = y + rng.standard_normal(n)
        worst = max(worst, abs(pcc_fast(y, e) - pcc_loops(y, e)))
        worst = max(worst, abs(r2_fast(y, e) - r2_loops(y, e)))

    elapsed = time.monotonic() - t0
    ok = worst < 1e-12 and elapsed < 60.0
    report(2, "conv/deconv/GRU/matmul/PCC/r2 match brute-force oracles on 100+ cases",
           ok, f"max abs diff {worst:.2e}, {elapsed:.1f}s")


def test_criterion_3_adjoint_property():
    rng = np.random.default_rng(11)
    worst = 0.0
    checked = 0
    for K in (1, 2, 3, 4, 5):
        for stride in (1, 2, 3):
            for dil in (1, 2, 3):
                for pad in (0, 1, 2):
                    L = 24
                    if (L + 2 * pad - dil * (K - 1) - 1) % stride != 0:
                        continue
                    Lout = ad.conv_out_len(L, K, dil, pad, stride)
                    if Lout < 1:
                        continue
                    x = rng.standard_normal((2, 3, L))
                    w = rng.standard_normal((4, 3, K))
                    y = rng.standard_normal((2, 4, Lout))
                    cx = ad.conv1d(Tensor(x), Tensor(w), dilation=dil,
                                   padding=pad, stride=stride).values
                    cty = ad.conv_transpose1d(Tensor(y), Tensor(w), stride=stride,
                                              padding=pad, dilation=dil).values
                    worst = max(worst, abs(float((cx * y).sum()) - float((x * cty).sum())))
                    checked += 1
    ok = worst < 1e-10 and checked >= 40
    report(3, "transposed convolution is the exact adjoint across the config grid",
           ok, f"max defect {worst:.2e} over {checked} configs")


def test_criterion_4_desk_scale_training(acceptance_data, model_configs, semi_run):
    pair, split, ds = acceptance_data
    inv_cfg, _ = model_configs
    result, elapsed = semi_run
    train_rep, val_rep = evaluate(pair, split, result.store, inv_cfg, ds.stats)
    ok = (val_rep.pcc >= 0.90 and val_rep.r2 >= 0.75
          and train_rep.pcc >= val_rep.pcc - 0.05
          and elapsed <= 900.0)
    report(4, "semi-supervised training reaches validation PCC>=0.90, r2>=0.75",
           ok, f"val pcc {val_rep.pcc:.4f}, val r2 {val_rep.r2:.4f}, "
               f"train pcc {train_rep.pcc:.4f}, {elapsed:.0f}s/{EPOCHS} epochs")


def test_criterion_5_semi_supervision_signal(acceptance_data, model_configs,
                                             semi_run, supervised_run,
                                             unsupervised_run):
    pair, split, ds = acceptance_data
    inv_cfg, _ = model_configs

    def val_pcc(run):
        est = invert_survey(ds.seismic, inv_cfg, run[0].store)
        return pcc(ds.impedance[split.unlabeled], est[split.unlabeled])

    semi, sup, unsup = val_pcc(semi_run), val_pcc(supervised_run), val_pcc(unsupervised_run)
    ok = (semi >= sup - 0.02) and (unsup < 0.90)
    report(5, "semi matches supervised within 0.02; unsupervised alone falls short",
           ok, f"semi {semi:.4f}, supervised {sup:.4f}, unsupervised {unsup:.4f}")


def test_criterion_6_cli_determinism(tmp_path):
    from impz.cli import main

    prefix = tmp_path / "acc"
    assert main(["synth", "--traces", "64", "--samples", "128", "--seed", str(SEED),
                 "--out-prefix", str(prefix)]) == 0
    base = ["train", "--quiet",
            "--seismic", f"{prefix}_seismic.surv",
            "--impedance", f"{prefix}_impedance.surv",
            "--labeled", "8", "--epochs", "2", "--eval-every", "1",
            "--seed", str(SEED), "--gru-hidden", "4", "--lpa-channels", "4",
            "--regression-hidden", "4", "--feat-channels", "4",
            "--wavelet-length", "21"]
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert main(base + ["--out-dir", str(out1)]) == 0
    assert main(base + ["--out-dir", str(out2)]) == 0
    logs_equal = (out1 / "loss_log.csv").read_bytes() == (out2 / "loss_log.csv").read_bytes()
    ckpts_equal = (out1 / "checkpoint.impz").read_bytes() == (out2 / "checkpoint.impz").read_bytes()
    ok = logs_equal and ckpts_equal
    report(6, "identical train commands produce byte-identical logs and checkpoints",
           ok, f"logs_equal={logs_equal} checkpoints_equal={ckpts_equal}")


def test_criterion_7_forward_model_fidelity(acceptance_data, model_configs, semi_run):
    pair, split, ds = acceptance_data
    inv_cfg, fwd_cfg = model_configs
    store = semi_run[0].store

    est = invert_survey(ds.seismic, inv_cfg, store)
    d_hat = synthesize(Tensor(est[split.unlabeled][:, None, :]), fwd_cfg, store)
    seis_pcc = pcc(ds.seismic[split.unlabeled], d_hat.values[:, 0, :])

    wavelet = extract_wavelet(store, fwd_cfg)
    peak = wavelet_peak_frequency(wavelet, dt_ms=pair.impedance.dt_ms)
    ok = seis_pcc >= 0.90 and 0.7 * 30.0 <= peak <= 1.3 * 30.0
    report(7, "synthesized seismic correlates >=0.90; wavelet peak within 30% of 30 Hz",
           ok, f"seismic pcc {seis_pcc:.4f}, wavelet peak {peak:.1f} Hz")


def test_criterion_8_loss_algebra(rng):
    from impz.training import semi_supervised_loss

    worst = 0.0
    cases = [(0.2, 1.0)] + [tuple(rng.uniform(0, 4, size=2)) for _ in range(20)]
    for alpha, beta in cases:
        m_hat = Tensor(rng.standard_normal((3, 1, 16)))
        m = Tensor(rng.standard_normal((3, 1, 16)))
        d_hat = Tensor(rng.standard_normal((7, 1, 8)))
        d = Tensor(rng.standard_normal((7, 1, 8)))
        _, bd = semi_supervised_loss(m_hat, m, d_hat, d, alpha, beta)
        worst = max(worst, abs(bd.total - (alpha * bd.property_loss + beta * bd.seismic_loss)))
    ok = worst < 1e-12
    report(8, "total loss equals alpha*property + beta*seismic for all weights",
           ok, f"max defect {worst:.2e} over {len(cases)} weight pairs")
