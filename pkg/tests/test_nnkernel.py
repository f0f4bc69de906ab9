"""Gradient fidelity, freeze integrity and optimizer behavior of the kernel."""

import numpy as np
import pytest

from deskagent import nn
from deskagent.nn import (
    AdamW,
    OptimConfig,
    ParamStore,
    Tensor,
    grad_check,
)


def rng(seed=0):
    return np.random.default_rng(seed)


class TestPrimitives:
    def test_linear_identity(self):
        store = ParamStore()
        lin = nn.Linear(store, "l", 3, 3, rng())
        lin.w.data = np.eye(3)
        lin.b.data = np.zeros(3)
        x = np.array([1.0, -2.0, 0.5])
        out = lin(Tensor(x))
        np.testing.assert_allclose(out.data, x)

    def test_softmax_uniform(self):
        v = 7
        out = nn.softmax(Tensor(np.zeros(v)))
        np.testing.assert_allclose(out.data, np.full(v, 1.0 / v))

    def test_cross_entropy_onehot_correct(self):
        logits = Tensor(np.array([[100.0, 0.0, 0.0]]))
        loss = nn.softmax_cross_entropy(logits, np.array([0]))
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_cross_entropy_uniform_is_log_v(self):
        v = 11
        logits = Tensor(np.zeros((4, v)))
        loss = nn.softmax_cross_entropy(logits, np.array([0, 3, 5, 10]))
        assert loss.item() == pytest.approx(np.log(v))

    def test_shape_error(self):
        with pytest.raises(nn.ShapeError):
            _ = Tensor(np.ones((2, 3))) @ Tensor(np.ones((4, 5)))


class TestGradients:
    """Every primitive passes centered finite differences at <= 1e-6."""

    def _check(self, build, seed=0, h=1e-5, tol=1e-6):
        store = ParamStore()
        f = build(store, rng(seed))
        err = grad_check(f, store, h=h, rng=rng(seed + 1))
        assert err <= tol, f"max rel err {err:.3e}"

    def test_quadratic_closed_form(self):
        store = ParamStore()
        theta = store.add("theta", np.array([1.0, 2.0]))
        loss = (store["theta"] * store["theta"]).sum()
        loss.backward()
        np.testing.assert_allclose(theta.grad, [2.0, 4.0])
        err = grad_check(lambda s: (s["theta"] * s["theta"]).sum(), store)
        assert err < 1e-8

    def test_linear(self):
        def build(store, r):
            lin = nn.Linear(store, "l", 4, 3, r)
            x = r.normal(size=(5, 4))
            return lambda s: (lin(Tensor(x)).tanh() ** 2).sum()
        self._check(build)

    def test_embedding(self):
        def build(store, r):
            emb = nn.Embedding(store, "e", 6, 4, r)
            idx = np.array([0, 2, 2, 5])
            return lambda s: (emb(idx) ** 2).sum()
        self._check(build)

    def test_layernorm(self):
        def build(store, r):
            ln = nn.LayerNorm(store, "ln", 6)
            w = store.add("w", r.normal(size=(3, 6)))
            return lambda s: (ln(s["w"]).silu()).sum()
        self._check(build)

    def test_causal_attention(self):
        def build(store, r):
            att = nn.CausalSelfAttention(store, "a", 6, r)
            x = r.normal(size=(4, 6))
            return lambda s: (att(Tensor(x)) ** 2).sum()
        self._check(build)

    def test_transformer_block(self):
        def build(store, r):
            blk = nn.TransformerBlock(store, "b", 6, r, d_ff=8)
            x = r.normal(size=(3, 6))
            return lambda s: (blk(Tensor(x)) ** 2).mean()
        self._check(build)

    def test_gru_cell(self):
        def build(store, r):
            cell = nn.GRUCell(store, "g", 4, 5, r)
            x = Tensor(r.normal(size=(2, 4)))
            h = Tensor(r.normal(size=(2, 5)))
            return lambda s: (cell(x, cell(x, h)) ** 2).sum()
        self._check(build)

    def test_softmax_cross_entropy_grad(self):
        def build(store, r):
            w = store.add("w", r.normal(size=(5, 7)))
            t = np.array([1, 0, 6, 3, 2])
            m = np.array([1.0, 0.0, 1.0, 1.0, 0.0])
            return lambda s: nn.softmax_cross_entropy(s["w"] * 1.3, t, m)
        self._check(build)

    def test_mse_grad(self):
        def build(store, r):
            w = store.add("w", r.normal(size=(4, 3)))
            tgt = r.normal(size=(4, 3))
            return lambda s: nn.mse(s["w"].tanh(), tgt)
        self._check(build)

    def test_frozen_params_skipped(self):
        store = ParamStore()
        store.add("a", np.array([1.0]))
        store.add("b", np.array([2.0]), frozen=True)
        assert store.trainable() == ["a"]
        err = grad_check(lambda s: (s["a"] * s["b"]).sum(), store)
        assert err < 1e-8


class TestOptimizer:
    def test_zero_grad_no_change(self):
        store = ParamStore()
        store.add("w", np.array([1.0, 2.0]))
        opt = AdamW(store, OptimConfig(lr=1e-2))
        before = store["w"].data.copy()
        loss = (store["w"] * 0.0).sum()
        loss.backward()
        opt.step()
        np.testing.assert_array_equal(store["w"].data, before)

    def test_descent_direction(self):
        store = ParamStore()
        store.add("w", np.array([3.0]))
        opt = AdamW(store, OptimConfig(lr=1e-2))
        loss = store["w"].sum()
        loss.backward()
        opt.step()
        assert store["w"].data[0] < 3.0

    def test_frozen_byte_identical(self):
        store = ParamStore()
        store.add("frozen.w", np.array([1.5, 2.5]), frozen=True)
        store.add("live.w", np.array([1.0]))
        h0 = store.subset_hash("frozen")
        opt = AdamW(store, OptimConfig(lr=0.1, weight_decay=0.01))
        for _ in range(25):
            store.zero_grad()
            loss = (store["live.w"] * store["frozen.w"]).sum() ** 2
            loss.backward()
            opt.step()
        assert store.subset_hash("frozen") == h0
        assert store["live.w"].data[0] != 1.0

    def test_deterministic_trajectory(self):
        def run():
            store = ParamStore()
            r = rng(42)
            lin = nn.Linear(store, "l", 3, 1, r)
            opt = AdamW(store, OptimConfig(lr=1e-2))
            x = r.normal(size=(8, 3))
            y = r.normal(size=(8, 1))
            for _ in range(10):
                store.zero_grad()
                nn.mse(lin(Tensor(x)), y).backward()
                opt.step()
            return store.subset_hash()
        assert run() == run()


class TestCheckpoint:
    def test_roundtrip_byte_identical(self, tmp_path):
        store = ParamStore()
        r = rng(3)
        store.add("a.w", r.normal(size=(4, 2)))
        store.add("b.w", r.normal(size=(3,)), frozen=True)
        p1, p2 = tmp_path / "c1.ckpt", tmp_path / "c2.ckpt"
        nn.save_checkpoint(p1, {"m": store}, meta={"note": "x"})
        loaded, meta = nn.load_checkpoint(p1)
        assert meta == {"note": "x"}
        assert loaded["m"].frozen == {"b.w"}
        nn.save_checkpoint(p2, loaded, meta=meta)
        assert p1.read_bytes() == p2.read_bytes()

    def test_corruption_detected(self, tmp_path):
        store = ParamStore()
        store.add("w", np.ones(4))
        p = tmp_path / "c.ckpt"
        nn.save_checkpoint(p, {"m": store})
        raw = bytearray(p.read_bytes())
        raw[-1] ^= 0xFF
        p.write_bytes(bytes(raw))
        with pytest.raises(nn.CheckpointError):
            nn.load_checkpoint(p)
