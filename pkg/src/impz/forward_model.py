"""Learned seismic synthesis: impedance estimate in, seismic trace out.

Two conv blocks extract features from the impedance trace; a single
plain strided convolution (no norm, no activation) maps them to one
seismic channel, so its kernel stays interpretable as a wavelet.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import ConvBlockSpec, conv_block, init_conv_block, uniform_init
from .params import ParamStore


@dataclass(frozen=True)
class ForwardModelConfig:
    feat_channels: int = 8
    feat_kernel: int = 5
    wavelet_kernel_length: int = 51
    downsample_stride: int = 2

    def __post_init__(self):
        if self.wavelet_kernel_length % 2 == 0:
            raise ValueError("wavelet_kernel_length must be odd")
        if self.downsample_stride < 1:
            raise ValueError("downsample_stride must be >= 1")

    def feat_spec(self, layer: int) -> ConvBlockSpec:
        in_ch = 1 if layer == 0 else self.feat_channels
        return ConvBlockSpec(in_ch, self.feat_channels, self.feat_kernel, 1)


def add_forward_params(store: ParamStore, cfg: ForwardModelConfig,
                       rng: np.random.Generator, prefix: str = "fwd") -> None:
    init_conv_block(store, f"{prefix}.feat0", cfg.feat_spec(0), rng)
    init_conv_block(store, f"{prefix}.feat1", cfg.feat_spec(1), rng)
    K = cfg.wavelet_kernel_length
    fan_in = cfg.feat_channels * K
    store.add(f"{prefix}.wave.w", uniform_init(rng, (1, cfg.feat_channels, K), fan_in))
    store.add(f"{prefix}.wave.b", np.zeros(1))


def synthesize(m_hat, cfg: ForwardModelConfig, store: ParamStore,
               prefix: str = "fwd") -> Tensor:
    """Map impedance m_hat[B, 1, L'] to seismic [B, 1, L'/stride]."""
    length = m_hat.shape[2]
    s = cfg.downsample_stride
    if length % s != 0:
        raise ValueError(f"trace length {length} not divisible by stride {s}")
    y = conv_block(m_hat, cfg.feat_spec(0), store, f"{prefix}.feat0")
    y = conv_block(y, cfg.feat_spec(1), store, f"{prefix}.feat1")
    pad = (cfg.wavelet_kernel_length - 1) // 2
    return ad.conv1d(y, store[f"{prefix}.wave.w"], store[f"{prefix}.wave.b"],
                     dilation=1, padding=pad, stride=s)


def extract_wavelet(store: ParamStore, cfg: ForwardModelConfig,
                    prefix: str = "fwd") -> np.ndarray:
    """Channel-summed kernel of the final convolution, as a 1-D signal."""
    name = f"{prefix}.wave.w"
    if name not in store:
        raise KeyError(f"no wavelet parameters under prefix '{prefix}'")
    w = store[name].values  # [1, feat_channels, K]
    return w.sum(axis=(0, 1))


def wavelet_peak_frequency(wavelet: np.ndarray, dt_ms: float, n_fft: int = 4096) -> float:
    """Dominant frequency (Hz) of a sampled wavelet via zero-padded rFFT."""
    spectrum = np.abs(np.fft.rfft(wavelet, n=n_fft))
    freqs = np.fft.rfftfreq(n_fft, d=dt_ms / 1000.0)
    return float(freqs[int(np.argmax(spectrum))])
