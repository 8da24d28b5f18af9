"""Layer modules, dropout behavior, checkpoint round-trips."""

import numpy as np
import pytest

from icuseq.nn import (
    CheckpointError,
    Dropout,
    EmbeddingTable,
    LayerNorm,
    Linear,
    Module,
    Tensor,
    grad_check,
    load_params,
    save_params,
)


class TwoLayer(Module):
    def __init__(self, rng, dtype=np.float64):
        super().__init__()
        self.fc1 = Linear(4, 8, rng, dtype=dtype)
        self.fc2 = Linear(8, 1, rng, dtype=dtype)

    def forward(self, x):
        return self.fc2(self.fc1(x).gelu())


class TestModule:
    def test_named_parameters_are_stable_and_prefixed(self):
        m = TwoLayer(np.random.default_rng(0))
        names = [n for n, _ in m.named_parameters()]
        assert names == ["fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"]

    def test_state_dict_roundtrip(self):
        rng = np.random.default_rng(1)
        a, b = TwoLayer(rng), TwoLayer(np.random.default_rng(2))
        b.load_state_dict(a.state_dict())
        x = Tensor(np.ones((1, 4)))
        np.testing.assert_array_equal(a(x).data, b(x).data)

    def test_load_rejects_bad_shape(self):
        m = TwoLayer(np.random.default_rng(3))
        state = m.state_dict()
        state["fc1.weight"] = np.zeros((2, 2))
        with pytest.raises(ValueError):
            m.load_state_dict(state)

    def test_train_eval_propagates(self):
        m = TwoLayer(np.random.default_rng(4))
        m.eval()
        assert not m.fc1.training
        m.train()
        assert m.fc2.training


class TestLinear:
    def test_linear_gradcheck(self):
        rng = np.random.default_rng(5)
        lin = Linear(3, 2, rng, dtype=np.float64)
        x = Tensor(rng.normal(size=(4, 3)))
        err = grad_check(lambda: (lin(x) ** 2).sum(), lin.parameters())
        assert err < 1e-6

    def test_bias_starts_zero(self):
        lin = Linear(3, 2, np.random.default_rng(6))
        np.testing.assert_array_equal(lin.bias.data, np.zeros(2, dtype=np.float32))


class TestLayerNormModule:
    def test_gradcheck(self):
        rng = np.random.default_rng(7)
        ln = LayerNorm(5, dtype=np.float64)
        x = Tensor(rng.normal(size=(3, 5)))
        err = grad_check(lambda: (ln(x) ** 2).sum(), ln.parameters())
        assert err < 1e-6


class TestDropout:
    def test_p_zero_is_identity(self):
        d = Dropout(0.0, np.random.default_rng(8))
        x = Tensor(np.arange(12.0).reshape(3, 4))
        np.testing.assert_array_equal(d(x).data, x.data)

    def test_eval_mode_is_identity(self):
        d = Dropout(0.5, np.random.default_rng(9))
        d.eval()
        x = Tensor(np.arange(12.0).reshape(3, 4))
        np.testing.assert_array_equal(d(x).data, x.data)

    def test_empirical_keep_rate(self):
        p = 0.3
        d = Dropout(p, np.random.default_rng(10))
        x = Tensor(np.ones(100_000))
        kept = np.count_nonzero(d(x).data) / 100_000
        assert abs(kept - (1 - p)) < 0.01

    def test_kept_entries_scaled(self):
        d = Dropout(0.5, np.random.default_rng(11))
        y = d(Tensor(np.ones(1000))).data
        assert set(np.unique(y)) == {0.0, 2.0}

    def test_invalid_rate(self):
        with pytest.raises(ValueError):
            Dropout(1.0, np.random.default_rng(12))


class TestEmbeddingTable:
    def test_lookup_rows(self):
        t = EmbeddingTable(5, 3, np.random.default_rng(13))
        ids = np.array([4, 0, 4])
        out = t(ids)
        np.testing.assert_array_equal(out.data, t.table.data[ids])

    def test_out_of_range_raises(self):
        t = EmbeddingTable(5, 3, np.random.default_rng(14))
        with pytest.raises(IndexError):
            t(np.array([5]))

    def test_gradcheck_with_repeats(self):
        t = EmbeddingTable(4, 3, np.random.default_rng(15), dtype=np.float64)
        ids = np.array([1, 1, 3])
        err = grad_check(lambda: (t(ids) ** 2).sum(), t.parameters())
        assert err < 1e-6


class TestCheckpointFormat:
    def test_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(16)
        named = {"enc.w": rng.normal(size=(3, 4)).astype(np.float32),
                 "enc.b": rng.normal(size=4).astype(np.float32),
                 "scalar": np.float32(2.5).reshape(())}
        path = tmp_path / "params.bin"
        save_params(path, named)
        back = load_params(path)
        assert set(back) == set(named)
        for k in named:
            np.testing.assert_array_equal(back[k], np.asarray(named[k], dtype=np.float32))

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPExxxxxxxx")
        with pytest.raises(CheckpointError):
            load_params(path)

    def test_float64_stored_as_32(self, tmp_path):
        path = tmp_path / "p.bin"
        save_params(path, {"x": np.array([1.0, 2.0], dtype=np.float64)})
        assert load_params(path)["x"].dtype == np.float32


def test_forward_deterministic_given_seed():
    def run():
        rng = np.random.default_rng(99)
        m = TwoLayer(rng, dtype=np.float32)
        drop = Dropout(0.2, np.random.default_rng(100))
        x = Tensor(np.ones((5, 4), dtype=np.float32))
        return drop(m(x)).data
    np.testing.assert_array_equal(run(), run())
