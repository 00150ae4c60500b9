"""Evaluation: Pearson correlation, coefficient of determination, scatter export.

Both metrics pool every sample of every trace in a split (a per-trace
averaged variant is available behind a flag). ``evaluate`` inverts the
survey read-only and reports labeled and validation splits separately.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import NormStats, Split, SurveyPair
from .inverse_model import InverseModelConfig, invert_survey
from .params import ParamStore


@dataclass
class MetricsReport:
    split: str
    pcc: float
    r2: float
    n_traces: int
    sigma_ai: float


def pcc(y, y_hat, per_trace: bool = False) -> float:
    """Pearson correlation between targets and estimates.

    Pooled over all samples by default; per_trace averages the
    correlation of each trace instead.
    """
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {y_hat.shape}")
    if per_trace:
        return float(np.mean([pcc(a, b) for a, b in zip(y, y_hat)]))
    a = y.ravel() - y.mean()
    b = y_hat.ravel() - y_hat.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0.0:
        raise ValueError("zero variance input to pcc")
    return float((a * b).sum() / denom)


def r2(y, y_hat, per_trace: bool = False) -> float:
    """Coefficient of determination 1 - SS_res / SS_tot (can be negative)."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {y_hat.shape}")
    if per_trace:
        return float(np.mean([r2(a, b) for a, b in zip(y, y_hat)]))
    res = y.ravel() - y_hat.ravel()
    tot = y.ravel() - y.mean()
    ss_tot = (tot * tot).sum()
    if ss_tot == 0.0:
        raise ValueError("zero total sum of squares in r2")
    return float(1.0 - (res * res).sum() / ss_tot)


def evaluate(pair: SurveyPair, split: Split, store: ParamStore,
             inv_cfg: InverseModelConfig, stats: NormStats,
             workers: int = 1, per_trace: bool = False
             ) -> tuple[MetricsReport, MetricsReport]:
    """Invert all traces and score each split in physical units."""
    est_norm = invert_survey(stats.normalize_seismic(pair.seismic.values),
                             inv_cfg, store, workers=workers)
    est = stats.denormalize_ai(est_norm)
    true = pair.impedance.values
    reports = []
    for name, idx in (("training", split.labeled), ("validation", split.unlabeled)):
        reports.append(MetricsReport(
            split=name,
            pcc=pcc(true[idx], est[idx], per_trace=per_trace),
            r2=r2(true[idx], est[idx], per_trace=per_trace),
            n_traces=len(idx),
            sigma_ai=float(true[idx].std()),
        ))
    return reports[0], reports[1]


def band_fraction(y, y_hat, sigma: float) -> float:
    """Fraction of estimates within one sigma of the target."""
    y = np.asarray(y).ravel()
    y_hat = np.asarray(y_hat).ravel()
    return float(np.mean(np.abs(y_hat - y) <= sigma))


def export_scatter(y, y_hat, path) -> float:
    """Write (true, estimated) pairs as CSV; returns the band fraction.

    Header comments carry sigma of the true values and the fraction of
    points within one sigma.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.shape != y_hat.shape:
        raise ValueError("scatter inputs must have equal size")
    sigma = float(y.std())
    frac = band_fraction(y, y_hat, sigma)
    with open(path, "w", newline="") as f:
        f.write(f"# sigma_ai={sigma!r}\n")
        f.write(f"# band_fraction={frac!r}\n")
        writer = csv.writer(f)
        writer.writerow(["true", "estimated"])
        for a, b in zip(y, y_hat):
            writer.writerow([repr(float(a)), repr(float(b))])
    return frac
