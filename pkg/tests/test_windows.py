"""Tests for window construction, the hold baseline, NMSE, and window IO."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csipred import nn, windows


def trace(values, t_csi=4, doppler=10.0, profile="TDL-A"):
    return windows.EffSinrTrace(values_db=np.asarray(values, dtype=float),
                                t_csi=t_csi, doppler_hz=doppler,
                                channel_profile=profile)


class TestBuildWindows:
    def test_hand_enumerated_example(self):
        # len = 17, t_csi = 4, p = 2: anchors 8 and 12
        vals = np.arange(17.0)
        samples = windows.build_windows(trace(vals), p=2)
        assert [s.anchor_slot for s in samples] == [8, 12]
        np.testing.assert_array_equal(samples[0].x, [8.0, 4.0, 0.0])
        np.testing.assert_array_equal(samples[0].y, [9.0, 10.0, 11.0])
        np.testing.assert_array_equal(samples[1].x, [12.0, 8.0, 4.0])
        np.testing.assert_array_equal(samples[1].y, [13.0, 14.0, 15.0])

    def test_constant_trace(self):
        samples = windows.build_windows(trace(np.full(40, 3.3)), p=3)
        for s in samples:
            assert (s.x == 3.3).all()
            assert (s.y == 3.3).all()

    def test_rejects_t_csi_one(self):
        with pytest.raises(ValueError, match="t_csi"):
            windows.build_windows(trace(np.zeros(40), t_csi=1), p=2)

    def test_rejects_short_trace(self):
        need = windows.min_trace_length(2, 4)
        with pytest.raises(ValueError, match="too short"):
            windows.build_windows(trace(np.zeros(need - 1)), p=2)

    def test_rejects_nonfinite_trace(self):
        with pytest.raises(ValueError):
            trace([0.0, np.nan, 1.0])

    @given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(2, 5),
           st.integers(0, 30))
    @settings(max_examples=60, deadline=None)
    def test_window_alignment(self, seed, p, t_csi, extra):
        # encode the slot index as the trace value so alignment is checkable
        # by value inspection
        n = windows.min_trace_length(p, t_csi) + extra
        vals = np.arange(n, dtype=float)
        samples = windows.build_windows(trace(vals, t_csi=t_csi), p=p)
        assert len(samples) >= 1
        for s in samples:
            np.testing.assert_array_equal(
                s.x, s.anchor_slot - np.arange(p + 1) * t_csi)
            np.testing.assert_array_equal(
                s.y, s.anchor_slot + 1 + np.arange(t_csi - 1))

    def test_stack_samples(self):
        samples = windows.build_windows(trace(np.arange(33.0)), p=2)
        x, y = windows.stack_samples(samples)
        assert x.shape == (len(samples), 3)
        assert y.shape == (len(samples), 3)


class TestHoldBaseline:
    def test_newest_first_example(self):
        np.testing.assert_array_equal(
            windows.hold_baseline(np.array([5.0, 3.0, 1.0]), 4),
            [5.0, 5.0, 5.0])

    def test_constant_window(self):
        np.testing.assert_array_equal(
            windows.hold_baseline(np.full(3, 2.5), 4), [2.5, 2.5, 2.5])

    def test_hold_on_constant_trace_hits_floor(self):
        samples = windows.build_windows(trace(np.full(40, 1.7)), p=2)
        preds = [windows.hold_baseline(s.x, 4) for s in samples]
        targets = [s.y for s in samples]
        assert windows.nmse_db(preds, targets) == windows.NMSE_FLOOR_DB

    def test_empty_window_rejected(self):
        with pytest.raises(ValueError):
            windows.hold_baseline(np.array([]), 4)


class TestNmse:
    def test_perfect_prediction_floor(self):
        y = [np.array([1.0, 2.0])]
        assert windows.nmse_db(y, y) == windows.NMSE_FLOOR_DB

    def test_zero_prediction_is_zero_db(self):
        y = [np.array([1.0, -2.0, 3.0])]
        p = [np.zeros(3)]
        assert windows.nmse_db(p, y) == pytest.approx(0.0, abs=1e-12)

    def test_doubled_prediction_is_zero_db(self):
        y = [np.array([1.0, -2.0, 3.0])]
        p = [2.0 * y[0]]
        assert windows.nmse_db(p, y) == pytest.approx(0.0, abs=1e-12)

    def test_all_zero_targets_rejected(self):
        with pytest.raises(ValueError, match="all-zero"):
            windows.nmse_db([np.zeros(3)], [np.zeros(3)])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            windows.nmse_db([np.zeros(3)], [np.zeros(4)])

    @given(st.integers(0, 2**32 - 1),
           st.floats(0.01, 100.0), st.booleans())
    @settings(max_examples=50, deadline=None)
    def test_scale_invariance(self, seed, scale, flip):
        rng = np.random.default_rng(seed)
        y = rng.normal(size=(5, 3))
        p = y + rng.normal(scale=0.3, size=(5, 3))
        if flip:
            scale = -scale
        a = windows.nmse_db(list(p), list(y))
        b = windows.nmse_db(list(p * scale), list(y * scale))
        assert a == pytest.approx(b, abs=1e-9)


def tiny_model(kind="dnn"):
    rng = np.random.default_rng(0)
    x = rng.normal(loc=7.0, size=(60, 3))
    y = rng.normal(loc=7.0, size=(60, 3))
    data = nn.ArrayDataset(x_train=x, y_train=y, x_val=x, y_val=y)
    return nn.train(kind, 4, data, nn.TrainConfig(epochs=3, seed=0)).model


class TestPredict:
    def test_zero_param_dense_outputs_train_mean(self):
        model = tiny_model()
        zeroed = nn.PredictorModel(
            kind="dnn",
            params=nn.DenseParams(w1=np.zeros_like(model.params.w1),
                                  b1=np.zeros_like(model.params.b1),
                                  w2=np.zeros_like(model.params.w2),
                                  b2=np.zeros_like(model.params.b2)),
            input_dim=model.input_dim, hidden_dim=model.hidden_dim,
            output_dim=model.output_dim, norm_mean=model.norm_mean,
            norm_std=model.norm_std)
        out = windows.predict(zeroed, np.array([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(out, model.norm_mean, rtol=1e-12)

    def test_deterministic(self):
        model = tiny_model("lstm")
        x = np.array([5.0, 6.0, 7.0])
        a = windows.predict(model, x)
        b = windows.predict(model, x)
        assert a.tobytes() == b.tobytes()

    def test_wrong_length_rejected(self):
        model = tiny_model()
        with pytest.raises(ValueError):
            windows.predict(model, np.zeros(5))

    @pytest.mark.parametrize("kind", ["dnn", "lstm"])
    def test_batch_matches_single(self, kind):
        model = tiny_model(kind)
        rng = np.random.default_rng(1)
        x = rng.normal(loc=7.0, size=(9, 3))
        batch = windows.predict_batch(model, x)
        for i in range(9):
            np.testing.assert_allclose(batch[i], windows.predict(model, x[i]),
                                       rtol=1e-10)

    def test_model_trained_on_constant_trace_predicts_it(self):
        c = 6.25
        samples = windows.build_windows(trace(np.full(200, c)), p=2)
        x, y = windows.stack_samples(samples)
        data = nn.ArrayDataset(x_train=x, y_train=y, x_val=x, y_val=y)
        model = nn.train("dnn", 4, data,
                         nn.TrainConfig(epochs=30, seed=0)).model
        out = windows.predict(model, samples[0].x)
        assert np.abs(out - c).max() < 0.1


class TestWindowIo:
    def test_roundtrip(self, tmp_path):
        samples = windows.build_windows(trace(np.arange(60.0)), p=2)
        path = tmp_path / "w.wsmp"
        windows.save_windows(samples, path)
        loaded = windows.load_windows(path)
        assert len(loaded) == len(samples)
        for a, b in zip(samples, loaded):
            np.testing.assert_array_equal(a.x, b.x)
            np.testing.assert_array_equal(a.y, b.y)
            assert a.anchor_slot == b.anchor_slot

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "w.wsmp"
        path.write_bytes(b"JUNK" + b"\0" * 16)
        with pytest.raises(ValueError):
            windows.load_windows(path)

    def test_csv_export(self, tmp_path):
        samples = windows.build_windows(trace(np.arange(60.0)), p=1)
        path = tmp_path / "w.csv"
        windows.export_windows_csv(samples, path)
        lines = path.read_text().strip().splitlines()
        header = lines[0].split(",")
        assert header[0] == "anchor_slot"
        assert len(lines) == len(samples) + 1
        assert len(lines[1].split(",")) == len(header)
