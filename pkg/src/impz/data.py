"""Synthetic surveys, trace physics, normalization, and survey files.

A survey file is magic b"SURV1", a little-endian uint32 header length,
a UTF-8 JSON header {kind, n_traces, n_samples, dt_ms, dx_m,
endianness, dtype}, then the trace-major float64 raster.

The procedural generator builds a laterally correlated layered
impedance model and synthesizes seismic from it: normal-incidence
reflectivity, convolution with a Ricker wavelet, decimation to seismic
sampling, additive Gaussian noise at a requested SNR.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

SURVEY_MAGIC = b"SURV1"

AI_MIN = 2000.0
AI_MAX = 14000.0


class SurveyFormatError(ValueError):
    """Raised for bad magic, truncated payloads, or header mismatches."""


@dataclass
class TraceSet:
    """A survey raster: n_traces rows of n_samples, plus sampling metadata."""

    kind: str                 # "seismic" or "impedance"
    values: np.ndarray        # [n_traces, n_samples] float64
    dt_ms: float
    dx_m: float = 12.5

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("TraceSet values must be 2-D [n_traces, n_samples]")
        if self.kind not in ("seismic", "impedance"):
            raise ValueError(f"unknown trace kind {self.kind!r}")
        if self.kind == "impedance" and not np.all(self.values > 0):
            raise ValueError("impedance values must be strictly positive")

    @property
    def n_traces(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]


@dataclass
class SurveyPair:
    seismic: TraceSet
    impedance: TraceSet
    resolution_ratio: int

    def __post_init__(self):
        if self.seismic.n_traces != self.impedance.n_traces:
            raise ValueError("seismic and impedance trace counts differ")
        if self.impedance.n_samples != self.resolution_ratio * self.seismic.n_samples:
            raise ValueError(
                f"impedance samples {self.impedance.n_samples} != "
                f"{self.resolution_ratio} x seismic samples {self.seismic.n_samples}"
            )


@dataclass
class Split:
    labeled: np.ndarray
    unlabeled: np.ndarray


@dataclass
class NormStats:
    """Invertible normalization constants; impedance stats use labeled traces only."""

    seis_mean: float
    seis_std: float
    ai_min: float
    ai_max: float

    def normalize_seismic(self, x: np.ndarray) -> np.ndarray:
        return (x - self.seis_mean) / self.seis_std

    def denormalize_seismic(self, x: np.ndarray) -> np.ndarray:
        return x * self.seis_std + self.seis_mean

    def normalize_ai(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * (x - self.ai_min) / (self.ai_max - self.ai_min) - 1.0

    def denormalize_ai(self, x: np.ndarray) -> np.ndarray:
        return (x + 1.0) * (self.ai_max - self.ai_min) / 2.0 + self.ai_min

    def to_dict(self) -> dict:
        return {"seis_mean": self.seis_mean, "seis_std": self.seis_std,
                "ai_min": self.ai_min, "ai_max": self.ai_max}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(d["seis_mean"], d["seis_std"], d["ai_min"], d["ai_max"])


@dataclass
class NormalizedSurvey:
    """Survey in model units: standardized seismic, [-1, 1]-scaled impedance."""

    seismic: np.ndarray     # [N, L]
    impedance: np.ndarray   # [N, L * ratio]
    resolution_ratio: int
    stats: NormStats = field(repr=False, default=None)


# ---------------------------------------------------------------------------
# physics primitives
# ---------------------------------------------------------------------------

def ricker(f_peak_hz: float, dt_ms: float, length: int) -> np.ndarray:
    """Centered Ricker wavelet w(t) = (1 - 2 pi^2 f^2 t^2) exp(-pi^2 f^2 t^2)."""
    if f_peak_hz <= 0:
        raise ValueError("peak frequency must be positive")
    if length % 2 == 0:
        raise ValueError("wavelet length must be odd")
    t = (np.arange(length) - (length - 1) / 2) * (dt_ms / 1000.0)
    a = (np.pi * f_peak_hz * t) ** 2
    return (1.0 - 2.0 * a) * np.exp(-a)


def reflectivity(ai: np.ndarray) -> np.ndarray:
    """Normal-incidence reflectivity r_t = (ai_{t+1} - ai_t)/(ai_{t+1} + ai_t).

    Works on the last axis; output is one sample shorter.
    """
    ai = np.asarray(ai, dtype=np.float64)
    if not np.all(ai > 0):
        raise ValueError("impedance must be strictly positive")
    upper = ai[..., :-1]
    lower = ai[..., 1:]
    return (lower - upper) / (lower + upper)


# ---------------------------------------------------------------------------
# procedural survey generation
# ---------------------------------------------------------------------------

def make_layered_model(n_traces: int, n_samples: int, n_layers: int,
                       seed: int, dt_ms: float = 1.0, dx_m: float = 12.5,
                       with_fault: bool = True) -> TraceSet:
    """Laterally smooth layered impedance model, deterministic per seed.

    Interfaces dip gently and undulate coherently across traces; one
    optional fault offsets every interface past a random position. AI
    is piecewise constant per trace within [2000, 14000].
    """
    if n_traces < 1 or n_samples < 4:
        raise ValueError("degenerate survey size")
    if n_layers < 2:
        raise ValueError("need at least 2 layers")
    rng = np.random.default_rng(seed)

    base = np.linspace(0, n_samples, n_layers + 1)[1:-1]
    base = base + rng.uniform(-0.25, 0.25, size=base.shape) * (n_samples / n_layers)

    x = np.arange(n_traces, dtype=np.float64)
    xc = x - (n_traces - 1) / 2.0
    depths = np.empty((n_layers - 1, n_traces))
    for i, b in enumerate(base):
        dip = rng.uniform(-0.04, 0.04) * n_samples / max(n_traces, 1)
        amp = rng.uniform(0.0, 0.015) * n_samples
        phase = rng.uniform(0, 2 * np.pi)
        cycles = rng.uniform(0.5, 2.0)
        depths[i] = b + dip * xc + amp * np.sin(2 * np.pi * cycles * x / max(n_traces, 1) + phase)

    if with_fault and n_traces >= 8:
        fault_at = int(rng.uniform(0.35, 0.65) * n_traces)
        throw = rng.choice([-1.0, 1.0]) * rng.uniform(0.02, 0.04) * n_samples
        depths[:, fault_at:] += throw

    depths = np.clip(np.round(depths), 1, n_samples - 1).astype(int)
    depths = np.maximum.accumulate(depths, axis=0)

    ai = np.linspace(AI_MIN + 800.0, AI_MAX - 1500.0, n_layers)
    ai = ai + rng.normal(0.0, 0.05 * (AI_MAX - AI_MIN), size=n_layers)
    ai = np.clip(ai, AI_MIN, AI_MAX)
    for i in range(1, n_layers):  # keep adjacent layers distinguishable
        if abs(ai[i] - ai[i - 1]) < 150.0:
            nudged = ai[i - 1] + 300.0
            if nudged > AI_MAX:
                nudged = ai[i - 1] - 300.0
            ai[i] = nudged

    values = np.empty((n_traces, n_samples))
    for j in range(n_traces):
        bounds = np.concatenate([[0], depths[:, j], [n_samples]])
        for layer in range(n_layers):
            values[j, bounds[layer]:bounds[layer + 1]] = ai[layer]
    return TraceSet(kind="impedance", values=values, dt_ms=dt_ms, dx_m=dx_m)


def synthesize_survey(impedance: TraceSet, f_peak_hz: float = 30.0,
                      noise_snr_db: float | None = 20.0,
                      resolution_ratio: int = 2, seed: int = 0,
                      wavelet_length: int = 101) -> SurveyPair:
    """Generate the paired seismic for an impedance model.

    Per trace: reflectivity at impedance sampling, convolution with a
    Ricker wavelet, decimation by resolution_ratio, additive Gaussian
    noise sized so the survey-average SNR matches noise_snr_db
    (None means noiseless).
    """
    n = impedance.n_samples
    if resolution_ratio < 1 or n % resolution_ratio != 0:
        raise ValueError(f"resolution_ratio {resolution_ratio} does not divide {n}")
    w = ricker(f_peak_hz, impedance.dt_ms, wavelet_length)
    r = reflectivity(impedance.values)
    r = np.concatenate([r, np.zeros((impedance.n_traces, 1))], axis=1)

    half = (wavelet_length - 1) // 2
    clean = np.empty_like(r)
    for j in range(impedance.n_traces):
        clean[j] = np.convolve(r[j], w, mode="full")[half:half + n]
    clean = clean[:, ::resolution_ratio]

    if noise_snr_db is None or np.isinf(noise_snr_db):
        noisy = clean
    else:
        rng = np.random.default_rng(seed)
        signal_power = float(np.mean(clean ** 2))
        sigma = np.sqrt(signal_power * 10.0 ** (-noise_snr_db / 10.0)) if signal_power > 0 else 1.0
        noisy = clean + rng.normal(0.0, sigma, size=clean.shape)

    seismic = TraceSet(kind="seismic", values=noisy,
                       dt_ms=impedance.dt_ms * resolution_ratio, dx_m=impedance.dx_m)
    return SurveyPair(seismic=seismic, impedance=impedance,
                      resolution_ratio=resolution_ratio)


def pick_labeled_traces(n_traces: int, n_labeled: int) -> Split:
    """Evenly spaced labeled trace indices spanning the survey.

    index_i = round_half_up(i * (n_traces - 1) / (n_labeled - 1)); a
    single labeled trace sits in the middle.
    """
    if not 1 <= n_labeled <= n_traces:
        raise ValueError(f"n_labeled {n_labeled} out of range for {n_traces} traces")
    if n_labeled == 1:
        labeled = np.array([int(np.floor((n_traces - 1) / 2 + 0.5))])
    else:
        pos = np.arange(n_labeled) * (n_traces - 1) / (n_labeled - 1)
        labeled = np.floor(pos + 0.5).astype(int)
    mask = np.ones(n_traces, dtype=bool)
    mask[labeled] = False
    return Split(labeled=labeled, unlabeled=np.flatnonzero(mask))


def normalize(pair: SurveyPair, split: Split) -> NormalizedSurvey:
    """Standardize seismic by survey stats; min-max impedance to [-1, 1]
    using labeled traces only (validation impedance never leaks in)."""
    seis = pair.seismic.values
    std = float(seis.std())
    if std == 0.0:
        raise ValueError("seismic has zero variance")
    lab_ai = pair.impedance.values[split.labeled]
    ai_min = float(lab_ai.min())
    ai_max = float(lab_ai.max())
    if ai_max == ai_min:
        raise ValueError("labeled impedance is constant; cannot scale")
    stats = NormStats(seis_mean=float(seis.mean()), seis_std=std,
                      ai_min=ai_min, ai_max=ai_max)
    return NormalizedSurvey(
        seismic=stats.normalize_seismic(seis),
        impedance=stats.normalize_ai(pair.impedance.values),
        resolution_ratio=pair.resolution_ratio,
        stats=stats,
    )


# ---------------------------------------------------------------------------
# survey files
# ---------------------------------------------------------------------------

def save_survey(path, ts: TraceSet) -> None:
    header = {
        "kind": ts.kind,
        "n_traces": ts.n_traces,
        "n_samples": ts.n_samples,
        "dt_ms": ts.dt_ms,
        "dx_m": ts.dx_m,
        "endianness": "little",
        "dtype": "f64",
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(SURVEY_MAGIC)
        f.write(struct.pack("<I", len(hb)))
        f.write(hb)
        f.write(np.ascontiguousarray(ts.values, dtype="<f8").tobytes())


def load_survey(path) -> TraceSet:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:5] != SURVEY_MAGIC:
        raise SurveyFormatError(f"bad magic in {path}")
    if len(raw) < 9:
        raise SurveyFormatError("truncated header length")
    (hlen,) = struct.unpack("<I", raw[5:9])
    if len(raw) < 9 + hlen:
        raise SurveyFormatError("truncated header")
    try:
        header = json.loads(raw[9:9 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise SurveyFormatError(f"unreadable header: {e}") from e
    if header.get("dtype") != "f64" or header.get("endianness") != "little":
        raise SurveyFormatError("unsupported dtype or endianness")
    n_traces = int(header["n_traces"])
    n_samples = int(header["n_samples"])
    payload = raw[9 + hlen:]
    expected = n_traces * n_samples * 8
    if len(payload) != expected:
        raise SurveyFormatError(
            f"payload is {len(payload)} bytes, header implies {expected}"
        )
    values = np.frombuffer(payload, dtype="<f8").reshape(n_traces, n_samples).copy()
    return TraceSet(kind=header["kind"], values=values,
                    dt_ms=float(header["dt_ms"]), dx_m=float(header["dx_m"]))
