"""Tests for the LSTM and memory-augmented encoders.

The memory-update algebra has exact anchors: a one-hot attention row
replaces exactly one memory slot with the written vector; a uniform row
(forced by a zero read state) retrieves the column mean; every updated
coordinate is a convex blend of the old slot value and the written value.
"""

import numpy as np
import numpy.testing as npt
import pytest

from nsesimp import autodiff as ad
from nsesimp import encoders, layers
from nsesimp.autodiff import Tape, Tensor, backward
from nsesimp.errors import DimensionError, UsageError


def make_embeddings(rng, T=4, D=3):
    return Tensor(rng.normal(size=(T, D)))


class TestLstmEncoder:
    def test_single_token_shape(self):
        rng = np.random.default_rng(0)
        p = encoders.LstmEncoderParams.create(3, rng)
        out = encoders.lstm_encode(p, make_embeddings(rng, T=1))
        assert out.states.shape == (1, 3)
        assert out.final_h.shape == (3,)
        assert out.final_c.shape == (3,)

    def test_zero_params_zero_states(self):
        rng = np.random.default_rng(1)
        p = encoders.LstmEncoderParams.create(3, rng, forget_bias=0.0)
        for _, t in p.named_params():
            t.data[:] = 0.0
        out = encoders.lstm_encode(p, make_embeddings(rng))
        npt.assert_allclose(out.states.data, 0.0, atol=1e-15)

    def test_order_sensitivity(self):
        rng = np.random.default_rng(2)
        p = encoders.LstmEncoderParams.create(3, rng)
        emb = make_embeddings(rng)
        fwd = encoders.lstm_encode(p, emb).states.data
        rev = encoders.lstm_encode(p, Tensor(emb.data[::-1])).states.data
        assert not np.allclose(fwd[-1], rev[-1])

    def test_empty_input(self):
        p = encoders.LstmEncoderParams.create(3, np.random.default_rng(0))
        with pytest.raises(UsageError):
            encoders.lstm_encode(p, Tensor(np.zeros((0, 3))))
        with pytest.raises(DimensionError):
            encoders.lstm_encode(p, Tensor(np.zeros(3)))

    def test_final_state_is_last_row(self):
        rng = np.random.default_rng(3)
        p = encoders.LstmEncoderParams.create(3, rng)
        out = encoders.lstm_encode(p, make_embeddings(rng))
        npt.assert_array_equal(out.states.data[-1], out.final_h.data)

    def test_dropout_only_in_training(self):
        rng = np.random.default_rng(4)
        p = encoders.LstmEncoderParams.create(3, rng)
        emb = make_embeddings(rng)
        a = encoders.lstm_encode(p, emb, dropout_rate=0.5, training=False).states.data
        b = encoders.lstm_encode(p, emb).states.data
        npt.assert_array_equal(a, b)
        c = encoders.lstm_encode(
            p, emb, dropout_rate=0.5, training=True, rng=np.random.default_rng(9)
        ).states.data
        assert not np.array_equal(b, c)


class TestMemoryAlgebra:
    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(5)
        memory = Tensor(rng.normal(size=(6, 4)))
        read_h = Tensor(rng.normal(size=4))
        weights, _ = encoders.memory_retrieve(read_h, memory)
        assert abs(weights.data.sum() - 1.0) <= 1e-12
        assert np.all(weights.data > 0)

    def test_zero_read_state_gives_column_mean(self):
        rng = np.random.default_rng(6)
        memory = Tensor(rng.normal(size=(5, 3)))
        weights, summary = encoders.memory_retrieve(Tensor(np.zeros(3)), memory)
        npt.assert_allclose(weights.data, 0.2)
        npt.assert_allclose(summary.data, memory.data.mean(axis=0), atol=1e-12)

    def test_single_slot_retrieves_itself(self):
        rng = np.random.default_rng(7)
        memory = Tensor(rng.normal(size=(1, 4)))
        read_h = Tensor(rng.normal(size=4))
        weights, summary = encoders.memory_retrieve(read_h, memory)
        npt.assert_allclose(weights.data, [1.0])
        npt.assert_allclose(summary.data, memory.data[0], atol=1e-12)

    def test_one_hot_update_replaces_single_row(self):
        rng = np.random.default_rng(8)
        memory = Tensor(rng.normal(size=(4, 3)))
        written = Tensor(rng.normal(size=3))
        onehot = np.zeros(4)
        onehot[2] = 1.0
        updated = encoders.memory_update(memory, Tensor(onehot), written).data
        npt.assert_allclose(updated[2], written.data, atol=1e-15)
        for i in (0, 1, 3):
            npt.assert_array_equal(updated[i], memory.data[i])

    def test_update_is_convex_per_coordinate(self):
        rng = np.random.default_rng(9)
        memory = Tensor(rng.normal(size=(5, 4)))
        written = Tensor(rng.normal(size=4))
        w = rng.random(5)
        updated = encoders.memory_update(memory, Tensor(w), written).data
        lo = np.minimum(memory.data, written.data)
        hi = np.maximum(memory.data, written.data)
        assert np.all(updated >= lo - 1e-12)
        assert np.all(updated <= hi + 1e-12)

    def test_dimension_errors(self):
        memory = Tensor(np.zeros((4, 3)))
        with pytest.raises(DimensionError):
            encoders.memory_retrieve(Tensor(np.zeros(4)), memory)
        with pytest.raises(DimensionError):
            encoders.memory_update(memory, Tensor(np.zeros(3)), Tensor(np.zeros(3)))
        with pytest.raises(DimensionError):
            encoders.memory_update(memory, Tensor(np.zeros(4)), Tensor(np.zeros(4)))


class TestNseEncoder:
    def test_initial_memory_is_embeddings(self):
        rng = np.random.default_rng(10)
        emb = make_embeddings(rng)
        state = encoders.nse_initial_state(emb, 3)
        assert state.memory is emb

    def test_output_shapes(self):
        rng = np.random.default_rng(11)
        p = encoders.NseEncoderParams.create(3, rng)
        out = encoders.nse_encode(p, make_embeddings(rng, T=5, D=3))
        assert out.states.shape == (5, 3)
        assert out.memory.shape == (5, 3)
        assert out.final_h.shape == (3,)

    def test_trace_collection(self):
        rng = np.random.default_rng(12)
        p = encoders.NseEncoderParams.create(3, rng)
        emb = make_embeddings(rng, T=4, D=3)
        plain = encoders.nse_encode(p, emb)
        assert plain.slot_weights == [] and plain.memory_steps == []
        traced = encoders.nse_encode(p, emb, keep_trace=True)
        assert len(traced.slot_weights) == 4
        assert len(traced.memory_steps) == 4
        for w in traced.slot_weights:
            assert w.shape == (4,)
            assert abs(w.sum() - 1.0) <= 1e-12

    def test_determinism_without_dropout(self):
        rng = np.random.default_rng(13)
        p = encoders.NseEncoderParams.create(3, rng)
        emb = make_embeddings(rng)
        a = encoders.nse_encode(p, emb).states.data
        b = encoders.nse_encode(p, emb).states.data
        npt.assert_array_equal(a, b)

    def test_empty_input(self):
        p = encoders.NseEncoderParams.create(3, np.random.default_rng(0))
        with pytest.raises(UsageError):
            encoders.nse_encode(p, Tensor(np.zeros((0, 3))))

    def test_gradient_check_small(self):
        rng = np.random.default_rng(14)
        p = encoders.NseEncoderParams.create(3, rng)
        emb = Tensor(rng.normal(size=(3, 3)) * 0.5, requires_grad=True)
        weight = Tensor(rng.normal(size=(3, 3)))

        def f():
            out = encoders.nse_encode(p, emb)
            return ad.sum_all(ad.mul(out.states, weight))

        params = [t for _, t in p.named_params()] + [emb]
        names = [n for n, _ in p.named_params()] + ["emb"]
        report = ad.grad_check(f, params, tol=1e-4, names=names)
        assert report.ok, report.failures
