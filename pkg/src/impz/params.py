"""Named trainable parameters, the Adam update, and checkpoint files.

Checkpoint layout: magic b"IMPZ1", a little-endian uint32 byte length,
a UTF-8 JSON header, then raw little-endian float64 payloads. The
header lists parameters sorted by name; for each one the payload holds
its values followed, when moments are included, by the Adam first and
second moment arrays. Saving the same store twice produces identical
bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .autodiff import Tensor

MAGIC = b"IMPZ1"


class CheckpointFormatError(ValueError):
    """Raised for bad magic, truncated payloads, or header mismatches."""


class ParamStore:
    """Mapping of unique names to requires-grad tensors plus Adam state."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, values) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(np.array(values, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        self._m[name] = np.zeros(t.values.shape)
        self._v[name] = np.zeros(t.values.shape)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def n_values(self) -> int:
        return sum(t.values.size for t in self._params.values())

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        """Copy of all parameter values (not the optimizer state)."""
        return {name: t.values.copy() for name, t in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, arr in values.items():
            t = self._params[name]
            if t.values.shape != arr.shape:
                raise ValueError(f"shape mismatch loading {name}")
            t.values[...] = arr

    def state_bytes(self) -> bytes:
        """Concatenated parameter bytes, for cheap equality checks."""
        return b"".join(
            np.ascontiguousarray(self._params[n].values).tobytes()
            for n in sorted(self._params)
        )


def adam_step(store: ParamStore, lr: float = 0.005, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update over every parameter; clears grads after."""
    missing = [n for n, t in store._params.items() if t.grad is None]
    if missing:
        raise RuntimeError(f"adam_step before backward: missing grads for {missing[:3]}")
    store.step += 1
    t = store.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in store._params.items():
        g = p.grad
        m = store._m[name]
        v = store._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.values -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        p.grad = None


def save_checkpoint(path, store: ParamStore, extra: dict | None = None,
                    with_moments: bool = True) -> None:
    names = sorted(store._params)
    header = {
        "dtype": "f64",
        "step": store.step,
        "with_moments": bool(with_moments),
        "params": [{"name": n, "shape": list(store._params[n].values.shape)} for n in names],
        "extra": extra if extra is not None else {},
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for n in names:
            f.write(np.ascontiguousarray(store._params[n].values, dtype="<f8").tobytes())
            if with_moments:
                f.write(np.ascontiguousarray(store._m[n], dtype="<f8").tobytes())
                f.write(np.ascontiguousarray(store._v[n], dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ParamStore, dict]:
    """Read a checkpoint back into a fresh store; returns (store, extra)."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:5] != MAGIC:
        raise CheckpointFormatError(f"bad magic in {path}")
    if len(raw) < 9:
        raise CheckpointFormatError("truncated header length")
    (hlen,) = struct.unpack("<I", raw[5:9])
    if len(raw) < 9 + hlen:
        raise CheckpointFormatError("truncated header")
    try:
        header = json.loads(raw[9:9 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"unreadable header: {e}") from e
    if header.get("dtype") != "f64":
        raise CheckpointFormatError(f"unsupported dtype {header.get('dtype')!r}")

    store = ParamStore()
    store.step = int(header["step"])
    with_moments = bool(header["with_moments"])
    offset = 9 + hlen
    for entry in header["params"]:
        name = entry["name"]
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        arrays = []
        n_arrays = 3 if with_moments else 1
        for _ in range(n_arrays):
            chunk = raw[offset:offset + nbytes]
            if len(chunk) != nbytes:
                raise CheckpointFormatError(f"truncated payload for {name}")
            arrays.append(np.frombuffer(chunk, dtype="<f8").reshape(shape).copy())
            offset += nbytes
        store.add(name, arrays[0])
        if with_moments:
            store._m[name] = arrays[1]
            store._v[name] = arrays[2]
    if offset != len(raw):
        raise CheckpointFormatError("trailing bytes after payload")
    return store, header.get("extra", {})
