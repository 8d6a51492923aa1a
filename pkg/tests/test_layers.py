import numpy as np
import pytest
from helpers import lstm_step_oracle
from hypothesis import given, settings
from hypothesis import strategies as st

from growprune.errors import ParameterError, ShapeError
from growprune.layers import (
    ScLayer,
    build_cell,
    dropout,
    hlstm_step,
    hlstm_unroll,
    sc_forward,
)
from growprune.numerics import MaskedMatrix


def _zero_cell(input_width=3, state_width=4, hidden_width=4):
    rng = np.random.default_rng(0)
    cell = build_cell(input_width, state_width, hidden_width, 0.0, rng)
    for gate in cell.gates.values():
        gate.hidden_w.values[:] = 0.0
        gate.out_w.values[:] = 0.0
        gate.hidden_b[:] = 0.0
        gate.out_b[:] = 0.0
    return cell


class TestDropout:
    def test_rate_zero_is_identity(self):
        x = np.arange(8.0)
        out = dropout(x, 0.0, "train", np.random.default_rng(0))
        assert np.array_equal(out, x)

    def test_eval_mode_is_identity(self):
        x = np.arange(8.0)
        assert np.array_equal(dropout(x, 0.9, "eval"), x)

    def test_rate_out_of_range(self):
        with pytest.raises(ParameterError):
            dropout(np.zeros(3), 1.0, "train", np.random.default_rng(0))
        with pytest.raises(ParameterError):
            dropout(np.zeros(3), -0.1, "train", np.random.default_rng(0))

    def test_bad_mode(self):
        with pytest.raises(ParameterError):
            dropout(np.zeros(3), 0.5, "predict")

    def test_large_sample_mean_is_preserved(self):
        # law of large numbers: inverted dropout keeps the expectation
        rng = np.random.default_rng(42)
        x = np.ones(100_000)
        out = dropout(x, 0.2, "train", rng)
        assert 0.98 <= out.mean() <= 1.02

    def test_survivors_are_scaled(self):
        rng = np.random.default_rng(3)
        out = dropout(np.ones(1000), 0.5, "train", rng)
        survivors = out[out != 0.0]
        assert np.all(survivors == 2.0)


class TestScForward:
    def test_eval_identity_relu(self):
        layer = ScLayer(MaskedMatrix.dense(np.eye(2)), np.zeros(2), "relu", 0.2)
        out = sc_forward(layer, np.array([-1.0, 2.0]), "eval")
        assert out.tolist() == [0.0, 2.0]

    def test_train_with_rate_zero_equals_eval(self):
        rng = np.random.default_rng(0)
        layer = ScLayer(MaskedMatrix.dense(rng.standard_normal((3, 4))),
                        rng.standard_normal(3), "relu", 0.0)
        x = rng.standard_normal(4)
        train = sc_forward(layer, x, "train", np.random.default_rng(1))
        ev = sc_forward(layer, x, "eval")
        assert np.array_equal(train, ev)

    def test_dropout_expectation_matches_eval(self):
        # Monte-Carlo over 10^4 seeds: mean train output ≈ eval output within 2%
        rng = np.random.default_rng(5)
        layer = ScLayer(MaskedMatrix.dense(rng.uniform(0.5, 1.5, (4, 6))),
                        np.zeros(4), "relu", 0.5)
        x = rng.uniform(0.5, 1.0, 6)
        ev = sc_forward(layer, x, "eval")
        draw = np.random.default_rng(123)
        acc = np.zeros(4)
        trials = 10_000
        for _ in range(trials):
            acc += sc_forward(layer, x, "train", draw)
        mc = acc / trials
        assert np.all(np.abs(mc - ev) <= 0.02 * np.abs(ev))

    def test_shape_error(self):
        layer = ScLayer(MaskedMatrix.dense(np.zeros((2, 3))), np.zeros(2), None, 0.0)
        with pytest.raises(ShapeError):
            sc_forward(layer, np.zeros(4), "eval")


class TestHlstmStep:
    def test_zero_cell_zero_state(self):
        cell = _zero_cell()
        h, c = hlstm_step(cell, np.zeros(3), np.zeros(4), np.zeros(4), "eval")
        assert np.array_equal(c, np.zeros(4))
        assert np.array_equal(h, np.zeros(4))

    def test_zero_cell_carries_half_cell_state(self):
        cell = _zero_cell()
        c_prev = np.array([1.0, -2.0, 0.5, 4.0])
        h, c = hlstm_step(cell, np.zeros(3), np.zeros(4), c_prev, "eval")
        assert np.allclose(c, 0.5 * c_prev, rtol=1e-15)
        assert np.allclose(h, 0.5 * np.tanh(0.5 * c_prev), rtol=1e-15)

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(17)
        cell = build_cell(3, 4, 4, 0.0, rng)
        x = rng.standard_normal(3)
        h0 = rng.standard_normal(4)
        c0 = rng.standard_normal(4)
        h, c = hlstm_step(cell, x, h0, c0, "eval")
        h_ref, c_ref = lstm_step_oracle(cell, x, h0, c0)
        assert np.allclose(h, h_ref, rtol=1e-12, atol=1e-12)
        assert np.allclose(c, c_ref, rtol=1e-12, atol=1e-12)

    def test_shape_errors(self):
        cell = _zero_cell()
        with pytest.raises(ShapeError):
            hlstm_step(cell, np.zeros(5), np.zeros(4), np.zeros(4), "eval")
        with pytest.raises(ShapeError):
            hlstm_step(cell, np.zeros(3), np.zeros(2), np.zeros(4), "eval")

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_gate_ranges_and_state_bound(self, seed):
        rng = np.random.default_rng(seed)
        cell = build_cell(3, 4, 4, 0.0, rng)
        x = 10.0 * rng.standard_normal(3)
        h0 = np.tanh(rng.standard_normal(4))
        c0 = 3.0 * rng.standard_normal(4)
        h, c = hlstm_step(cell, x, h0, c0, "eval")
        assert np.all(np.abs(c) <= np.abs(c0) + 1.0)
        assert np.all((h > -1.0) & (h < 1.0))


class TestHlstmUnroll:
    def test_single_step_equals_step_from_zero_state(self):
        rng = np.random.default_rng(21)
        cell = build_cell(3, 4, 4, 0.0, rng)
        x = rng.standard_normal((1, 3))
        h_unroll = hlstm_unroll(cell, x, "eval")
        h_step, _ = hlstm_step(cell, x[0], np.zeros(4), np.zeros(4), "eval")
        assert np.array_equal(h_unroll, h_step)

    def test_zero_cell_gives_zero_output(self):
        cell = _zero_cell()
        seq = np.random.default_rng(0).standard_normal((7, 3))
        assert np.array_equal(hlstm_unroll(cell, seq, "eval"), np.zeros(4))

    def test_matches_manual_composition(self):
        rng = np.random.default_rng(23)
        cell = build_cell(3, 4, 4, 0.0, rng)
        seq = rng.standard_normal((60, 3))
        h = np.zeros(4)
        c = np.zeros(4)
        for t in range(60):
            h, c = hlstm_step(cell, seq[t], h, c, "eval")
        assert np.allclose(hlstm_unroll(cell, seq, "eval"), h, rtol=1e-12, atol=1e-14)

    def test_empty_sequence_rejected(self):
        cell = _zero_cell()
        with pytest.raises(ParameterError):
            hlstm_unroll(cell, np.zeros((0, 3)), "eval")
