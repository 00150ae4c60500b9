"""Learned inversion network: seismic trace in, impedance trace out.

Four submodules run in sequence. A stacked bidirectional GRU captures
the slowly varying trend, parallel dilated conv blocks capture local
reflection patterns, their sum is upsampled to impedance resolution by
strided transposed convolutions, and a final GRU plus per-step linear
map regresses to one output channel. Output length is
upsample_factor times the input length.
"""

from __future__ import annotations

from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import (
    ConvBlockSpec,
    DeconvBlockSpec,
    GRUSpec,
    conv_block,
    deconv_block,
    gru_sequence,
    init_conv_block,
    init_deconv_block,
    init_gru,
    init_linear,
    linear,
)
from .params import ParamStore

LPA_KERNEL = 5
MERGE_KERNEL = 3
DECONV_KERNEL = 4
SEQ_LAYERS = 3


@dataclass(frozen=True)
class InverseModelConfig:
    gru_hidden: int = 8           # per direction
    lpa_channels: int = 8         # per dilation branch
    dilation_set: tuple = (1, 3, 6)
    upsample_factor: int = 2
    regression_hidden: int = 8    # per direction

    def __post_init__(self):
        u = self.upsample_factor
        if u < 1 or (u & (u - 1)) != 0:
            raise ValueError(f"upsample_factor must be a power of two, got {u}")
        if not self.dilation_set:
            raise ValueError("dilation_set must be non-empty")

    @property
    def trunk_channels(self) -> int:
        return 2 * self.gru_hidden

    @property
    def n_upsample_stages(self) -> int:
        return int(self.upsample_factor).bit_length() - 1

    @property
    def receptive_span(self) -> int:
        return max(self.dilation_set) * (LPA_KERNEL - 1) + 1

    def seq_spec(self, layer: int) -> GRUSpec:
        in_size = 1 if layer == 0 else self.trunk_channels
        return GRUSpec(in_size, self.gru_hidden, bidirectional=True)

    def branch_spec(self, dilation: int) -> ConvBlockSpec:
        return ConvBlockSpec(1, self.lpa_channels, LPA_KERNEL, dilation)

    def merge_spec(self) -> ConvBlockSpec:
        return ConvBlockSpec(self.lpa_channels * len(self.dilation_set),
                             self.trunk_channels, MERGE_KERNEL, 1)

    def upsample_spec(self) -> DeconvBlockSpec:
        return DeconvBlockSpec(self.trunk_channels, self.trunk_channels,
                               DECONV_KERNEL, stride=2)

    def regression_spec(self) -> GRUSpec:
        return GRUSpec(self.trunk_channels, self.regression_hidden, bidirectional=True)


def add_inverse_params(store: ParamStore, cfg: InverseModelConfig,
                       rng: np.random.Generator, prefix: str = "inv") -> None:
    """Register all inversion parameters; draw order is fixed."""
    for layer in range(SEQ_LAYERS):
        init_gru(store, f"{prefix}.seq.l{layer}", cfg.seq_spec(layer), rng)
    for i, d in enumerate(cfg.dilation_set):
        init_conv_block(store, f"{prefix}.lpa.b{i}", cfg.branch_spec(d), rng)
    init_conv_block(store, f"{prefix}.lpa.merge", cfg.merge_spec(), rng)
    for stage in range(cfg.n_upsample_stages):
        init_deconv_block(store, f"{prefix}.up.s{stage}", cfg.upsample_spec(), rng)
    init_gru(store, f"{prefix}.reg.gru", cfg.regression_spec(), rng)
    init_linear(store, f"{prefix}.reg.out", 2 * cfg.regression_hidden, 1, rng)


def sequence_modeling(d, cfg: InverseModelConfig, store: ParamStore,
                      prefix: str = "inv") -> Tensor:
    """Stacked bidirectional GRUs over d[B, 1, L] -> [B, C1, L]."""
    y = d
    for layer in range(SEQ_LAYERS):
        y = gru_sequence(y, cfg.seq_spec(layer), store, f"{prefix}.seq.l{layer}")
    return y


def local_pattern_analysis(d, cfg: InverseModelConfig, store: ParamStore,
                           prefix: str = "inv") -> Tensor:
    """Parallel dilated conv blocks, channel-concatenated then merged."""
    if d.shape[2] < cfg.receptive_span:
        raise ValueError(
            f"trace length {d.shape[2]} shorter than receptive span {cfg.receptive_span}"
        )
    branches = [
        conv_block(d, cfg.branch_spec(dil), store, f"{prefix}.lpa.b{i}")
        for i, dil in enumerate(cfg.dilation_set)
    ]
    merged = ad.concat(branches, axis=1) if len(branches) > 1 else branches[0]
    return conv_block(merged, cfg.merge_spec(), store, f"{prefix}.lpa.merge")


def branch_merge(low, high) -> Tensor:
    """Elementwise sum of the trend and local-pattern branches."""
    if low.shape != high.shape:
        raise ValueError(f"branch shapes differ: {low.shape} vs {high.shape}")
    return ad.add(low, high)


def upsample(x, cfg: InverseModelConfig, store: ParamStore,
             prefix: str = "inv") -> Tensor:
    """Stride-2 deconv stages; passthrough when upsample_factor is 1."""
    y = x
    for stage in range(cfg.n_upsample_stages):
        y = deconv_block(y, cfg.upsample_spec(), store, f"{prefix}.up.s{stage}")
    return y


def regression_head(x, cfg: InverseModelConfig, store: ParamStore,
                    prefix: str = "inv") -> Tensor:
    """One bidirectional GRU then a per-step linear map to one channel."""
    y = gru_sequence(x, cfg.regression_spec(), store, f"{prefix}.reg.gru")
    return linear(y, store[f"{prefix}.reg.out.W"], store[f"{prefix}.reg.out.b"])


def invert(d, cfg: InverseModelConfig, store: ParamStore,
           prefix: str = "inv") -> Tensor:
    """Full pipeline: d[B, 1, L] -> impedance estimate [B, 1, u*L]."""
    trend = sequence_modeling(d, cfg, store, prefix)
    local = local_pattern_analysis(d, cfg, store, prefix)
    merged = branch_merge(trend, local)
    up = upsample(merged, cfg, store, prefix)
    return regression_head(up, cfg, store, prefix)


def invert_survey(seismic: np.ndarray, cfg: InverseModelConfig, store: ParamStore,
                  chunk: int = 32, workers: int = 1,
                  prefix: str = "inv") -> np.ndarray:
    """Invert normalized traces [N, L] -> [N, u*L] without recording a tape.

    Chunks are independent; with workers > 1 they run on a thread pool
    (read-only parameter access). Results are order-stable either way.
    """
    n = seismic.shape[0]
    spans = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]

    def run(span):
        lo, hi = span
        batch = Tensor(seismic[lo:hi][:, None, :])
        return invert(batch, cfg, store, prefix).values[:, 0, :]

    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, spans))
    else:
        parts = [run(s) for s in spans]
    return np.concatenate(parts, axis=0)
