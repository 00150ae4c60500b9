"""Correlation metrics, their brute-force references, and evaluation."""

import csv

import numpy as np
import pytest

from impz import data as dat
from impz.inverse_model import InverseModelConfig, add_inverse_params
from impz.metrics import band_fraction, evaluate, export_scatter, pcc, r2
from impz.params import ParamStore

from reference_impls import pcc_loops, r2_loops


class TestPcc:
    def test_perfect_correlation(self, rng):
        y = rng.standard_normal(50)
        assert pcc(y, y.copy()) == pytest.approx(1.0)

    def test_perfect_anticorrelation(self, rng):
        y = rng.standard_normal(50)
        assert pcc(y, -y) == pytest.approx(-1.0)

    def test_known_value(self):
        assert pcc([1.0, 2.0, 3.0], [1.0, 2.0, 4.0]) == pytest.approx(0.9819805060619659)

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError):
            pcc([1.0, 1.0], [1.0, 2.0])

    def test_invariant_to_positive_affine_transform(self, rng):
        y = rng.standard_normal(40)
        e = rng.standard_normal(40)
        assert pcc(y, e) == pytest.approx(pcc(y, 3.0 * e + 7.0), abs=1e-12)

    def test_matches_loop_oracle(self, rng):
        for _ in range(30):
            y = rng.standard_normal(rng.integers(3, 40))
            e = y + rng.standard_normal(y.shape)
            assert abs(pcc(y, e) - pcc_loops(y, e)) < 1e-12


class TestR2:
    def test_perfect_prediction(self, rng):
        y = rng.standard_normal(30)
        assert r2(y, y.copy()) == pytest.approx(1.0)

    def test_mean_prediction_scores_zero(self, rng):
        y = rng.standard_normal(30)
        assert r2(y, np.full_like(y, y.mean())) == pytest.approx(0.0, abs=1e-12)

    def test_known_value(self):
        assert r2([1.0, 2.0, 3.0], [1.0, 2.0, 4.0]) == pytest.approx(0.5)

    def test_not_affine_invariant(self, rng):
        y = rng.standard_normal(40)
        e = y + 0.1 * rng.standard_normal(40)
        assert abs(r2(y, e) - r2(y, 3.0 * e + 7.0)) > 1e-3

    def test_matches_loop_oracle(self, rng):
        for _ in range(30):
            y = rng.standard_normal(rng.integers(3, 40))
            e = y + rng.standard_normal(y.shape)
            assert abs(r2(y, e) - r2_loops(y, e)) < 1e-12


class TestEvaluate:
    def build(self, rng):
        imp = dat.make_layered_model(16, 32, 4, seed=8)
        pair = dat.synthesize_survey(imp, resolution_ratio=2, seed=8,
                                     wavelet_length=21)
        split = dat.pick_labeled_traces(16, 4)
        ds = dat.normalize(pair, split)
        cfg = InverseModelConfig(gru_hidden=2, lpa_channels=2, dilation_set=(1, 2),
                                 upsample_factor=2, regression_hidden=2)
        store = ParamStore()
        add_inverse_params(store, cfg, rng)
        return pair, split, ds, cfg, store

    def test_report_counts_and_sigma(self, rng):
        pair, split, ds, cfg, store = self.build(rng)
        train_rep, val_rep = evaluate(pair, split, store, cfg, ds.stats)
        assert (train_rep.split, val_rep.split) == ("training", "validation")
        assert train_rep.n_traces == 4 and val_rep.n_traces == 12
        assert val_rep.sigma_ai == pytest.approx(pair.impedance.values[split.unlabeled].std())
        assert -1.0 <= val_rep.pcc <= 1.0 and val_rep.r2 <= 1.0

    def test_read_only(self, rng):
        pair, split, ds, cfg, store = self.build(rng)
        before = store.state_bytes()
        evaluate(pair, split, store, cfg, ds.stats)
        assert store.state_bytes() == before

    def test_metric_identity_on_truth(self):
        y = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert pcc(y, y.copy()) == pytest.approx(1.0)
        assert r2(y, y.copy()) == pytest.approx(1.0)


class TestScatterExport:
    def test_perfect_prediction_full_band(self, rng, tmp_path):
        y = rng.standard_normal(100)
        frac = export_scatter(y, y.copy(), tmp_path / "s.csv")
        assert frac == 1.0

    def test_two_sigma_offset_empty_band(self, rng, tmp_path):
        y = rng.standard_normal(100)
        off = y + 2.0 * y.std()
        frac = export_scatter(y, off, tmp_path / "s.csv")
        assert frac == 0.0

    def test_csv_round_trip(self, rng, tmp_path):
        y = rng.standard_normal(17)
        e = y + 0.1 * rng.standard_normal(17)
        path = tmp_path / "s.csv"
        export_scatter(y, e, path)
        with open(path) as f:
            comments = [next(f), next(f)]
            rows = list(csv.DictReader(f))
        assert comments[0].startswith("# sigma_ai=")
        got_true = np.array([float(r["true"]) for r in rows])
        got_est = np.array([float(r["estimated"]) for r in rows])
        np.testing.assert_array_equal(got_true, y)
        np.testing.assert_array_equal(got_est, e)

    def test_band_fraction_direct(self):
        assert band_fraction([0.0, 0.0], [0.5, 3.0], 1.0) == 0.5
