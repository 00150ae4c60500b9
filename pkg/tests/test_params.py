"""ParamStore, Adam, and checkpoint file round-trips."""

import numpy as np
import pytest

import impz.autodiff as ad
from impz.autodiff import Tape, Tensor, backward
from impz.params import (
    CheckpointFormatError,
    ParamStore,
    adam_step,
    load_checkpoint,
    save_checkpoint,
)


def small_store(rng):
    store = ParamStore()
    store.add("a.w", rng.standard_normal((3, 2)))
    store.add("a.b", np.zeros(2))
    store.add("z.scalar", rng.standard_normal(()))
    return store


class TestParamStore:
    def test_duplicate_name_rejected(self, rng):
        store = small_store(rng)
        with pytest.raises(ValueError):
            store.add("a.w", np.zeros(1))

    def test_snapshot_restores(self, rng):
        store = small_store(rng)
        snap = store.snapshot()
        store["a.w"].values += 5.0
        store.load_values(snap)
        np.testing.assert_array_equal(store["a.w"].values, snap["a.w"])


class TestAdam:
    def test_zero_grads_leave_params_unchanged(self, rng):
        store = small_store(rng)
        before = store.snapshot()
        for t in store.tensors():
            t.grad = np.zeros(t.values.shape)
        adam_step(store, lr=0.1)
        for name, arr in before.items():
            np.testing.assert_array_equal(store[name].values, arr)

    def test_first_step_size_is_learning_rate(self):
        # with g=1 the bias-corrected first step is lr/(1 + eps)
        store = ParamStore()
        p = store.add("p", np.array([1.0]))
        p.grad = np.ones(1)
        adam_step(store, lr=0.001)
        delta = 1.0 - store["p"].values[0]
        assert abs(delta - 0.001) < 1e-10
        assert p.grad is None  # cleared after the update

    def test_missing_grads_error(self, rng):
        store = small_store(rng)
        with pytest.raises(RuntimeError):
            adam_step(store)

    def test_two_runs_bit_identical(self, rng):
        def run():
            r = np.random.default_rng(3)
            store = ParamStore()
            w = store.add("w", r.standard_normal((4, 1)))
            x = Tensor(r.standard_normal((8, 4)))
            y = r.standard_normal((8, 1))
            for _ in range(2):
                with Tape():
                    backward(ad.mse(ad.matmul(x, w), y))
                adam_step(store, lr=0.01)
            return store.state_bytes()

        assert run() == run()


class TestCheckpoint:
    def test_save_load_save_byte_identical(self, rng, tmp_path):
        store = small_store(rng)
        store.step = 7
        store._m["a.w"] += 0.25
        extra = {"note": "roundtrip", "values": [1, 2, 3]}
        p1 = tmp_path / "one.impz"
        p2 = tmp_path / "two.impz"
        save_checkpoint(p1, store, extra=extra)
        loaded, extra2 = load_checkpoint(p1)
        save_checkpoint(p2, loaded, extra=extra2)
        assert p1.read_bytes() == p2.read_bytes()
        assert extra2 == extra
        assert loaded.step == 7
        np.testing.assert_array_equal(loaded._m["a.w"], store._m["a.w"])
        for name in store.names():
            np.testing.assert_array_equal(loaded[name].values, store[name].values)

    def test_without_moments(self, rng, tmp_path):
        store = small_store(rng)
        path = tmp_path / "nm.impz"
        save_checkpoint(path, store, with_moments=False)
        loaded, _ = load_checkpoint(path)
        np.testing.assert_array_equal(loaded._m["a.w"], 0.0)

    def test_bad_magic_rejected(self, rng, tmp_path):
        store = small_store(rng)
        path = tmp_path / "ck.impz"
        save_checkpoint(path, store)
        raw = bytearray(path.read_bytes())
        raw[:5] = b"NOPE!"
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(path)

    def test_truncated_payload_rejected(self, rng, tmp_path):
        store = small_store(rng)
        path = tmp_path / "ck.impz"
        save_checkpoint(path, store)
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(path)

    def test_trailing_bytes_rejected(self, rng, tmp_path):
        store = small_store(rng)
        path = tmp_path / "ck.impz"
        save_checkpoint(path, store)
        with open(path, "ab") as f:
            f.write(b"\x00" * 8)
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(path)
