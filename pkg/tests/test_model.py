"""Tests for model construction and the teacher-forced forward pass."""

import numpy as np
import numpy.testing as npt
import pytest

from nsesimp import model as M
from nsesimp.data import BOS_ID
from nsesimp.errors import ConfigError


class TestBuildModel:
    def test_lstm_and_nse_kinds(self):
        rng = np.random.default_rng(0)
        for kind in ("lstm", "nse"):
            m = M.build_model(kind, 4, 7, 9, rng)
            assert m.encoder_kind == kind
            assert m.dim == 4
            assert m.src_vocab_size == 7
            assert m.tgt_vocab_size == 9

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            M.build_model("gru", 4, 7, 7, np.random.default_rng(0))

    def test_bad_dims(self):
        with pytest.raises(ConfigError):
            M.build_model("lstm", 0, 7, 7, np.random.default_rng(0))
        with pytest.raises(ConfigError):
            M.build_model("lstm", 4, 3, 7, np.random.default_rng(0))

    def test_param_names_unique(self):
        m = M.build_model("nse", 4, 7, 7, np.random.default_rng(1))
        names = [n for n, _ in m.named_params()]
        assert len(names) == len(set(names))
        assert all(t.requires_grad for t in m.params())

    def test_zero_grads(self):
        m = M.build_model("lstm", 4, 7, 7, np.random.default_rng(2))
        for t in m.params():
            t.grad = np.zeros_like(t.data)
        m.zero_grads()
        assert all(t.grad is None for t in m.params())


class TestEncodeDispatch:
    def test_lstm_has_no_memory(self):
        m = M.build_model("lstm", 4, 7, 7, np.random.default_rng(3))
        enc = M.encode(m, [4, 5, 6])
        assert enc.states.shape == (3, 4)
        assert enc.memory is None

    def test_nse_exposes_memory(self):
        m = M.build_model("nse", 4, 7, 7, np.random.default_rng(4))
        enc = M.encode(m, [4, 5, 6], keep_trace=True)
        assert enc.memory.shape == (3, 4)
        assert len(enc.slot_weights) == 3


class TestTeacherLogits:
    def test_shape_and_determinism(self):
        m = M.build_model("lstm", 4, 7, 9, np.random.default_rng(5))
        enc = M.encode(m, [4, 5])
        logits = M.teacher_logits(m, enc, [BOS_ID, 4, 5])
        assert logits.shape == (3, 9)
        again = M.teacher_logits(m, enc, [BOS_ID, 4, 5])
        npt.assert_array_equal(logits.data, again.data)

    def test_matches_session_first_step(self):
        m = M.build_model("nse", 4, 7, 7, np.random.default_rng(6))
        enc = M.encode(m, [4, 5, 6])
        logits = M.teacher_logits(m, enc, [BOS_ID])
        session = M.DecodeSession(m, [4, 5, 6])
        log_probs, _, _ = session.step(session.start())
        import nsesimp.autodiff as ad
        from nsesimp.autodiff import Tensor

        expected = ad.log_softmax_rows(Tensor(logits.data[0])).data
        npt.assert_allclose(log_probs, expected, atol=1e-14)
