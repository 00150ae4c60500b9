"""Composite network blocks: GRU stacks, conv/deconv blocks, linear head.

Parameters live in a ParamStore under dotted prefixes, e.g. a
bidirectional GRU at prefix "p" owns p.fw.W, p.fw.U, p.fw.b and the
same under p.bw. Forward functions are pure given (store, prefix).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .params import ParamStore


@dataclass(frozen=True)
class GRUSpec:
    input_size: int
    hidden_size: int
    bidirectional: bool = True

    def __post_init__(self):
        if self.input_size < 1 or self.hidden_size < 1:
            raise ValueError("GRU sizes must be >= 1")

    @property
    def out_channels(self) -> int:
        return self.hidden_size * (2 if self.bidirectional else 1)


@dataclass(frozen=True)
class ConvBlockSpec:
    """Conv -> group norm -> tanh, length preserving (odd kernel)."""

    in_ch: int
    out_ch: int
    kernel: int
    dilation: int = 1
    groups: int = 0  # 0 picks out_ch//4 (min 1)

    def __post_init__(self):
        if self.kernel % 2 == 0:
            raise ValueError("conv block kernel must be odd for same padding")
        if self.dilation < 1:
            raise ValueError("dilation must be >= 1")
        g = self.norm_groups
        if self.out_ch % g != 0:
            raise ValueError(f"out_ch {self.out_ch} not divisible by groups {g}")

    @property
    def norm_groups(self) -> int:
        return self.groups if self.groups else max(1, self.out_ch // 4)

    @property
    def padding(self) -> int:
        return self.dilation * (self.kernel - 1) // 2


@dataclass(frozen=True)
class DeconvBlockSpec:
    """Transposed conv -> group norm -> tanh; output length = stride * L."""

    in_ch: int
    out_ch: int
    kernel: int
    stride: int
    groups: int = 0

    def __post_init__(self):
        if self.kernel < self.stride or (self.kernel - self.stride) % 2 != 0:
            raise ValueError(
                f"kernel {self.kernel} cannot realize exact x{self.stride} upsampling"
            )
        g = self.norm_groups
        if self.out_ch % g != 0:
            raise ValueError(f"out_ch {self.out_ch} not divisible by groups {g}")

    @property
    def norm_groups(self) -> int:
        return self.groups if self.groups else max(1, self.out_ch // 4)

    @property
    def padding(self) -> int:
        return (self.kernel - self.stride) // 2


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------------------
# parameter registration
# ---------------------------------------------------------------------------

def init_gru(store: ParamStore, prefix: str, spec: GRUSpec,
             rng: np.random.Generator) -> None:
    directions = ("fw", "bw") if spec.bidirectional else ("fw",)
    for d in directions:
        store.add(f"{prefix}.{d}.W",
                  uniform_init(rng, (spec.input_size, 3 * spec.hidden_size), spec.input_size))
        store.add(f"{prefix}.{d}.U",
                  uniform_init(rng, (spec.hidden_size, 3 * spec.hidden_size), spec.hidden_size))
        store.add(f"{prefix}.{d}.b", np.zeros(3 * spec.hidden_size))


def init_conv_block(store: ParamStore, prefix: str, spec: ConvBlockSpec,
                    rng: np.random.Generator) -> None:
    fan_in = spec.in_ch * spec.kernel
    store.add(f"{prefix}.w", uniform_init(rng, (spec.out_ch, spec.in_ch, spec.kernel), fan_in))
    store.add(f"{prefix}.b", np.zeros(spec.out_ch))
    store.add(f"{prefix}.gamma", np.ones(spec.out_ch))
    store.add(f"{prefix}.beta", np.zeros(spec.out_ch))


def init_deconv_block(store: ParamStore, prefix: str, spec: DeconvBlockSpec,
                      rng: np.random.Generator) -> None:
    fan_in = spec.in_ch * spec.kernel
    store.add(f"{prefix}.w", uniform_init(rng, (spec.in_ch, spec.out_ch, spec.kernel), fan_in))
    store.add(f"{prefix}.b", np.zeros(spec.out_ch))
    store.add(f"{prefix}.gamma", np.ones(spec.out_ch))
    store.add(f"{prefix}.beta", np.zeros(spec.out_ch))


def init_linear(store: ParamStore, prefix: str, in_features: int, out_features: int,
                rng: np.random.Generator) -> None:
    store.add(f"{prefix}.W", uniform_init(rng, (in_features, out_features), in_features))
    store.add(f"{prefix}.b", np.zeros(out_features))


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------

def gru_cell_step(x_t, h_prev, W, U, b) -> Tensor:
    """Single GRU step for x_t[B, Cin] and h_prev[B, H].

    Gates z (update), r (reset) and candidate n follow
        z = sigmoid(W_z x + U_z h + b_z)
        r = sigmoid(W_r x + U_r h + b_r)
        n = tanh(W_n x + r * (U_n h) + b_n)
        h = (1 - z) * n + z * h_prev
    with the reset gate applied to the recurrent term before addition.
    """
    gx = ad.add(ad.matmul(x_t, W), b)
    return ad.gru_cell(gx, h_prev, U)


def _gru_direction(seq: Tensor, W, U, b, hidden: int, reverse_time: bool) -> Tensor:
    # seq is [B, L, Cin]; returns [B, L, H] in original time order
    if reverse_time:
        seq = ad.reverse(seq, axis=1)
    B, L, _ = seq.shape
    gx_all = ad.add(ad.matmul(seq, W), b)  # [B, L, 3H]
    h = Tensor(np.zeros((B, hidden)))
    states = []
    for t in range(L):
        gx_t = ad.index_axis(gx_all, 1, t)
        h = ad.gru_cell(gx_t, h, U)
        states.append(h)
    out = ad.stack(states, axis=1)  # [B, L, H]
    if reverse_time:
        out = ad.reverse(out, axis=1)
    return out


def _gru_bidirectional(seq: Tensor, store: ParamStore, prefix: str,
                       hidden: int) -> Tensor:
    # both directions advance in lockstep on a leading axis: index 0 walks
    # forward time, index 1 walks the time-reversed sequence
    B, L, _ = seq.shape
    seq2 = ad.stack([seq, ad.reverse(seq, axis=1)], axis=0)        # [2, B, L, C]
    W2 = ad.stack([store[f"{prefix}.fw.W"], store[f"{prefix}.bw.W"]], axis=0)
    U2 = ad.stack([store[f"{prefix}.fw.U"], store[f"{prefix}.bw.U"]], axis=0)
    b2 = ad.stack([store[f"{prefix}.fw.b"], store[f"{prefix}.bw.b"]], axis=0)
    W2 = ad.reshape(W2, (2, 1) + W2.shape[1:])                     # broadcast over B
    b2 = ad.reshape(b2, (2, 1, 1, b2.shape[-1]))
    gx_all = ad.add(ad.matmul(seq2, W2), b2)                       # [2, B, L, 3H]
    h = Tensor(np.zeros((2, B, hidden)))
    states = []
    for t in range(L):
        gx_t = ad.index_axis(gx_all, 2, t)
        h = ad.gru_cell(gx_t, h, U2)
        states.append(h)
    out = ad.stack(states, axis=2)                                 # [2, B, L, H]
    fw = ad.index_axis(out, 0, 0)
    bw = ad.reverse(ad.index_axis(out, 0, 1), axis=1)
    return ad.concat([fw, bw], axis=2)                             # [B, L, 2H]


def gru_sequence(x, spec: GRUSpec, store: ParamStore, prefix: str) -> Tensor:
    """Run a (bi)directional GRU over x[B, C, L]; zero initial states.

    Bidirectional output concatenates the forward half then the
    reversed-time half along channels, giving [B, 2H, L].
    """
    if x.shape[1] != spec.input_size:
        raise ValueError(f"gru_sequence expects {spec.input_size} channels, got {x.shape[1]}")
    seq = ad.transpose(x, (0, 2, 1))  # [B, L, C]
    if spec.bidirectional:
        out = _gru_bidirectional(seq, store, prefix, spec.hidden_size)
    else:
        out = _gru_direction(seq, store[f"{prefix}.fw.W"], store[f"{prefix}.fw.U"],
                             store[f"{prefix}.fw.b"], spec.hidden_size, reverse_time=False)
    return ad.transpose(out, (0, 2, 1))  # [B, H', L]


def conv_block(x, spec: ConvBlockSpec, store: ParamStore, prefix: str) -> Tensor:
    y = ad.conv1d(x, store[f"{prefix}.w"], store[f"{prefix}.b"],
                  dilation=spec.dilation, padding=spec.padding, stride=1)
    y = ad.group_norm(y, store[f"{prefix}.gamma"], store[f"{prefix}.beta"],
                      groups=spec.norm_groups)
    return ad.tanh(y)


def deconv_block(x, spec: DeconvBlockSpec, store: ParamStore, prefix: str) -> Tensor:
    y = ad.conv_transpose1d(x, store[f"{prefix}.w"], store[f"{prefix}.b"],
                            stride=spec.stride, padding=spec.padding)
    y = ad.group_norm(y, store[f"{prefix}.gamma"], store[f"{prefix}.beta"],
                      groups=spec.norm_groups)
    return ad.tanh(y)


def linear(x, W, b) -> Tensor:
    """Per-time-step affine map of channels: x[B, C, L] -> [B, N, L]."""
    seq = ad.transpose(x, (0, 2, 1))
    out = ad.add(ad.matmul(seq, W), b)
    return ad.transpose(out, (0, 2, 1))
