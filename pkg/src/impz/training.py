"""Joint semi-supervised optimization of the inverse and forward models.

Every step's batch contains all labeled traces plus a chunk of
unlabeled traces sampled without replacement within the epoch. The
total loss is alpha * property misfit (labeled impedance, MSE) plus
beta * seismic misfit (reconstruction of every batch trace, MSE).
Supervised and unsupervised regimes zero one of the two weights.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward
from .data import NormalizedSurvey, Split
from .forward_model import ForwardModelConfig, add_forward_params, synthesize
from .inverse_model import (
    InverseModelConfig,
    add_inverse_params,
    invert,
    invert_survey,
)
from .metrics import pcc
from .params import ParamStore, adam_step

REGIMES = ("semi", "supervised", "unsupervised")


class TrainingDivergedError(RuntimeError):
    """Raised when the loss goes non-finite; never propagated silently."""


@dataclass
class TrainConfig:
    labeled_indices: list
    alpha: float = 0.2
    beta: float = 1.0
    batch_unlabeled: int = 16
    epochs: int = 120
    lr: float = 0.005
    seed: int = 1234
    regime: str = "semi"
    eval_every: int = 5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be non-negative")
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        if len(self.labeled_indices) == 0:
            raise ValueError("labeled_indices must be non-empty")

    @property
    def effective_alpha(self) -> float:
        return 0.0 if self.regime == "unsupervised" else self.alpha

    @property
    def effective_beta(self) -> float:
        return 0.0 if self.regime == "supervised" else self.beta


@dataclass
class LossBreakdown:
    property_loss: float
    seismic_loss: float
    total: float


@dataclass
class EvalRecord:
    epoch: int
    train_pcc: float
    val_pcc: float


@dataclass
class TrainResult:
    store: ParamStore              # best-validation-PCC parameters
    loss_history: list = field(default_factory=list)   # (step, epoch, LossBreakdown)
    eval_history: list = field(default_factory=list)   # EvalRecord
    best_val_pcc: float = float("nan")
    best_epoch: int = -1


@dataclass
class Batch:
    seismic: np.ndarray        # [B, 1, L], labeled traces first
    impedance_labeled: np.ndarray  # [n_labeled, 1, L']
    n_labeled: int
    indices: np.ndarray


def semi_supervised_loss(m_hat_lab, m_lab, d_hat_all, d_all,
                         alpha: float, beta: float):
    """Weighted property + seismic MSE; returns (total Tensor, LossBreakdown)."""
    if alpha > 0 and (m_hat_lab.shape[0] == 0 or np.size(m_lab) == 0):
        raise ValueError("property term requires labeled traces when alpha > 0")
    property_loss = ad.mse(m_hat_lab, m_lab)
    seismic_loss = ad.mse(d_hat_all, d_all)
    total = ad.add(ad.scale(property_loss, alpha), ad.scale(seismic_loss, beta))
    breakdown = LossBreakdown(
        property_loss=property_loss.item(),
        seismic_loss=seismic_loss.item(),
        total=total.item(),
    )
    return total, breakdown


def make_batches(split: Split, batch_unlabeled: int,
                 rng: np.random.Generator) -> list[np.ndarray]:
    """One epoch of batch index lists: labeled traces first in each batch,
    unlabeled traces shuffled and chunked without replacement."""
    order = rng.permutation(split.unlabeled)
    if batch_unlabeled <= 0 or len(order) == 0:
        chunks = [np.array([], dtype=int)]
    else:
        chunks = [order[i:i + batch_unlabeled] for i in range(0, len(order), batch_unlabeled)]
    return [np.concatenate([split.labeled, chunk]).astype(int) for chunk in chunks]


def assemble_batch(dataset: NormalizedSurvey, split: Split,
                   indices: np.ndarray) -> Batch:
    n_lab = len(split.labeled)
    return Batch(
        seismic=dataset.seismic[indices][:, None, :],
        impedance_labeled=dataset.impedance[indices[:n_lab]][:, None, :],
        n_labeled=n_lab,
        indices=indices,
    )


def train_step(batch: Batch, store: ParamStore, cfg: TrainConfig,
               inv_cfg: InverseModelConfig, fwd_cfg: ForwardModelConfig) -> LossBreakdown:
    """One optimization step over both models; returns the pre-update loss."""
    d = Tensor(batch.seismic)
    m_lab = Tensor(batch.impedance_labeled)
    with Tape():
        m_hat = invert(d, inv_cfg, store)
        d_hat = synthesize(m_hat, fwd_cfg, store)
        m_hat_lab = ad.slice_axis(m_hat, 0, 0, batch.n_labeled)
        total, breakdown = semi_supervised_loss(
            m_hat_lab, m_lab, d_hat, d,
            cfg.effective_alpha, cfg.effective_beta,
        )
        if not np.isfinite(breakdown.total):
            raise TrainingDivergedError(
                f"non-finite loss at step {store.step}: "
                f"property={breakdown.property_loss} seismic={breakdown.seismic_loss}"
            )
        backward(total)
    adam_step(store, lr=cfg.lr, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2,
              eps=cfg.adam_eps)
    return breakdown


def init_models(inv_cfg: InverseModelConfig, fwd_cfg: ForwardModelConfig,
                seed: int) -> ParamStore:
    """Fresh parameter store for both models; draw order is fixed."""
    ss = np.random.SeedSequence(seed)
    init_ss, _ = ss.spawn(2)
    rng = np.random.default_rng(init_ss)
    store = ParamStore()
    add_inverse_params(store, inv_cfg, rng)
    add_forward_params(store, fwd_cfg, rng)
    return store


def _split_pcc(dataset: NormalizedSurvey, split: Split, store: ParamStore,
               inv_cfg: InverseModelConfig) -> tuple[float, float]:
    est = invert_survey(dataset.seismic, inv_cfg, store)
    train = pcc(dataset.impedance[split.labeled], est[split.labeled])
    val = pcc(dataset.impedance[split.unlabeled], est[split.unlabeled])
    return train, val


def train_loop(dataset: NormalizedSurvey, split: Split, cfg: TrainConfig,
               inv_cfg: InverseModelConfig, fwd_cfg: ForwardModelConfig,
               loss_log_path=None, verbose: bool = False) -> TrainResult:
    """Run the full schedule; keeps the best-validation-PCC snapshot.

    Deterministic for a fixed config: parameter init, batch order, and
    the evaluation cadence all derive from cfg.seed.
    """
    if inv_cfg.upsample_factor != dataset.resolution_ratio:
        raise ValueError(
            f"model upsample factor {inv_cfg.upsample_factor} does not match "
            f"dataset resolution ratio {dataset.resolution_ratio}"
        )
    store = init_models(inv_cfg, fwd_cfg, cfg.seed)
    ss = np.random.SeedSequence(cfg.seed)
    _, batch_ss = ss.spawn(2)
    batch_rng = np.random.default_rng(batch_ss)

    result = TrainResult(store=store)
    best_snapshot = store.snapshot()
    best_val = -np.inf
    best_epoch = -1
    step = 0

    log_file = open(loss_log_path, "w", newline="") if loss_log_path else None
    writer = None
    if log_file:
        writer = csv.writer(log_file)
        writer.writerow(["step", "epoch", "property_loss", "seismic_loss", "total"])

    try:
        for epoch in range(cfg.epochs):
            for indices in make_batches(split, cfg.batch_unlabeled, batch_rng):
                batch = assemble_batch(dataset, split, indices)
                breakdown = train_step(batch, store, cfg, inv_cfg, fwd_cfg)
                step += 1
                result.loss_history.append((step, epoch, breakdown))
                if writer:
                    writer.writerow([step, epoch, repr(breakdown.property_loss),
                                     repr(breakdown.seismic_loss), repr(breakdown.total)])
            last = epoch == cfg.epochs - 1
            if last or (epoch + 1) % cfg.eval_every == 0:
                train_pcc, val_pcc = _split_pcc(dataset, split, store, inv_cfg)
                result.eval_history.append(EvalRecord(epoch, train_pcc, val_pcc))
                if verbose:
                    print(f"epoch {epoch + 1}/{cfg.epochs} "
                          f"total={result.loss_history[-1][2].total:.5f} "
                          f"train_pcc={train_pcc:.4f} val_pcc={val_pcc:.4f}")
                if val_pcc > best_val:
                    best_val = val_pcc
                    best_epoch = epoch
                    best_snapshot = store.snapshot()
    finally:
        if log_file:
            log_file.close()

    store.load_values(best_snapshot)
    result.best_val_pcc = float(best_val) if np.isfinite(best_val) else float("nan")
    result.best_epoch = best_epoch
    return result


def config_for_regime(cfg: TrainConfig, regime: str) -> TrainConfig:
    """Same budget and seeds, different loss regime."""
    return replace(cfg, regime=regime)
