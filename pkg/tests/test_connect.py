"""Feature modulation: identity at init, FiLM math, similarity oracle."""

import numpy as np
import pytest

from deskagent.connect import (ConnectConfig, Connector, SimilarityError,
                               condition_similarity)
from deskagent.nn import ParamStore, ShapeError, grad_check


@pytest.fixture()
def conn():
    store = ParamStore()
    return Connector(store, ConnectConfig())


class TestFilm:
    def test_identity_at_init(self, conn):
        rng = np.random.default_rng(0)
        e = rng.normal(size=64)
        gamma, beta = conn.film_params(e)
        assert np.array_equal(gamma, np.ones(442))
        assert np.array_equal(beta, np.zeros(442))

    def test_modulate_oracle(self, conn):
        f = np.array([[1.0, 2.0], [3.0, 4.0]])
        gamma = np.array([2.0, 0.5])
        beta = np.array([-1.0, 1.0])
        out = conn.modulate(f, gamma, beta)
        assert np.array_equal(out, [[1.0, 2.0], [5.0, 3.0]])

    def test_modulate_shape_mismatch(self, conn):
        with pytest.raises(ShapeError):
            conn.modulate(np.ones((2, 3)), np.ones(2), np.ones(2))

    def test_nonzero_weights_change_condition(self, conn):
        rng = np.random.default_rng(1)
        conn.store["con.gamma.w"].data[:] = rng.normal(size=(64, 442)) * 0.1
        e = rng.normal(size=64)
        f = rng.normal(size=(16, 442))
        pr = rng.normal(size=4)
        on = conn.make_condition(e, f, pr, modulation=True)
        off = conn.make_condition(e, f, pr, modulation=False)
        assert on.shape == (446,)
        assert not np.allclose(on, off)
        # proprio tail passes through untouched
        assert np.array_equal(on[-4:], pr)

    def test_modulation_off_ignores_embedding(self, conn):
        rng = np.random.default_rng(2)
        conn.store["con.beta.w"].data[:] = rng.normal(size=(64, 442))
        f = rng.normal(size=(16, 442))
        pr = rng.normal(size=4)
        a = conn.make_condition(rng.normal(size=64), f, pr, modulation=False)
        b = conn.make_condition(rng.normal(size=64), f, pr, modulation=False)
        assert np.array_equal(a, b)

    def test_gradients(self, conn):
        rng = np.random.default_rng(3)
        for n in conn.store.names():
            conn.store[n].data[:] = rng.normal(size=conn.store[n].shape) * 0.1
        e = rng.normal(size=64)
        f = rng.normal(size=(16, 442))
        pr = rng.normal(size=4)
        tgt = rng.normal(size=446)

        def loss(_):
            c = conn.make_condition(e, f, pr, differentiable=True)
            return ((c - tgt) ** 2).mean()

        assert grad_check(loss, conn.store, rng=np.random.default_rng(4)) < 1e-6


class TestSimilarity:
    def test_known_angles(self):
        m = condition_similarity([np.array([1.0, 0.0]),
                                  np.array([0.0, 2.0]),
                                  np.array([3.0, 0.0]),
                                  np.array([-1.0, 0.0])])
        assert m[0, 1] == 0.0
        assert m[0, 2] == pytest.approx(1.0)
        assert m[0, 3] == pytest.approx(-1.0)
        assert np.array_equal(np.diag(m), np.ones(4))
        assert np.array_equal(m, m.T)

    def test_zero_vector_raises(self):
        with pytest.raises(SimilarityError):
            condition_similarity([np.ones(3), np.zeros(3)])

    def test_identical_inputs_give_exact_unity(self):
        v = np.random.default_rng(5).normal(size=446)
        m = condition_similarity([v, v.copy(), v.copy()])
        assert np.array_equal(m, np.ones((3, 3)))
