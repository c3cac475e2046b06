"""Sliding-window dataset construction, inference, and NMSE scoring.

Turns a per-slot effective-SINR trace into (history, future) pairs: the
input holds the effective SINR at the current and the P previous report
instants (newest first), the target holds the T_CSI - 1 intermediate
slots until the next report. Also provides the hold (no-prediction)
baseline and the pooled NMSE metric.
"""

from dataclasses import dataclass
import struct

import numpy as np

from .nn import PredictorModel, dense_forward, lstm_forward

NMSE_FLOOR_DB = -100.0


@dataclass(frozen=True)
class EffSinrTrace:
    """Per-slot effective SINR (dB) from one channel realization."""

    values_db: np.ndarray
    t_csi: int
    doppler_hz: float
    channel_profile: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.values_db)):
            raise ValueError("trace contains non-finite values")


@dataclass(frozen=True)
class WindowSample:
    """x: reports at slots n, n-T_CSI, ..., n-P*T_CSI (newest first, dB);
    y: true values at slots n+1 .. n+T_CSI-1; anchor_slot: n."""

    x: np.ndarray
    y: np.ndarray
    anchor_slot: int


def min_trace_length(p: int, t_csi: int) -> int:
    # anchor p*t_csi plus t_csi - 1 future slots
    return p * t_csi + t_csi


def build_windows(trace: EffSinrTrace, p: int) -> list:
    """One WindowSample per report instant with full history and targets."""
    t_csi = trace.t_csi
    if t_csi < 2:
        raise ValueError(
            "t_csi must be >= 2: with per-slot reporting there are no "
            "intermediate slots to predict")
    if p < 1:
        raise ValueError("history length p must be >= 1")
    values = np.asarray(trace.values_db, dtype=float)
    need = min_trace_length(p, t_csi)
    if len(values) < need:
        raise ValueError(
            f"trace too short: {len(values)} slots, need at least {need} "
            f"for p={p}, t_csi={t_csi}")
    samples = []
    for anchor in range(p * t_csi, len(values) - (t_csi - 1), t_csi):
        x = values[anchor - np.arange(p + 1) * t_csi]
        y = values[anchor + 1:anchor + t_csi]
        samples.append(WindowSample(x=x, y=y, anchor_slot=anchor))
    return samples


def stack_samples(samples) -> tuple[np.ndarray, np.ndarray]:
    """Stack WindowSamples into (X, Y) arrays for training."""
    x = np.stack([s.x for s in samples])
    y = np.stack([s.y for s in samples])
    return x, y


def predict(model: PredictorModel, x: np.ndarray) -> np.ndarray:
    """De-normalized dB predictions for one input window (newest first)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.input_dim,):
        raise ValueError(f"input length {x.shape[0] if x.ndim == 1 else x.shape}"
                         f" does not match model input_dim={model.input_dim}")
    xn = (x - model.norm_mean) / model.norm_std
    if model.kind == "dnn":
        out = dense_forward(model.params, xn)
    else:
        # the recurrent net consumes time forward: oldest sample first
        out = lstm_forward(model.params, xn[::-1])
    return out * model.norm_std + model.norm_mean


def predict_batch(model: PredictorModel, x: np.ndarray) -> np.ndarray:
    """Vectorized predict over rows of x (N, P+1)."""
    from .nn import dense_forward_batch, _lstm_forward_batch

    x = np.asarray(x, dtype=float)
    xn = (x - model.norm_mean) / model.norm_std
    if model.kind == "dnn":
        out = dense_forward_batch(model.params, xn)
    else:
        out, _ = _lstm_forward_batch(model.params, xn[:, ::-1])
    return out * model.norm_std + model.norm_mean


def hold_baseline(x: np.ndarray, t_csi: int) -> np.ndarray:
    """No-prediction policy: repeat the newest report for all future slots."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("empty input window")
    return np.full(t_csi - 1, x[0])


def nmse_db(preds, targets) -> float:
    """Pooled NMSE in dB: 10*log10(sum||y - yhat||^2 / sum||y||^2),
    floored at -100 dB. Inputs are lists of vectors (or 2-D arrays)."""
    p = np.concatenate([np.ravel(np.asarray(v, dtype=float)) for v in preds])
    t = np.concatenate([np.ravel(np.asarray(v, dtype=float)) for v in targets])
    if p.shape != t.shape:
        raise ValueError("prediction and target shapes differ")
    signal = float(np.sum(t * t))
    if signal == 0.0:
        raise ValueError("all-zero targets: NMSE normalization undefined")
    err = float(np.sum((t - p) ** 2))
    if err == 0.0:
        return NMSE_FLOOR_DB
    return max(10.0 * np.log10(err / signal), NMSE_FLOOR_DB)


# ---------------------------------------------------------------------------
# window dataset serialization

_WSMP_MAGIC = b"WSMP"
_WSMP_VERSION = 1


def save_windows(samples, path) -> None:
    """Binary WSMP format: magic, version u32, n_samples/p/t_csi u32, then
    per sample the anchor slot as f64 followed by the f64 x and y vectors."""
    if not samples:
        raise ValueError("no samples to write")
    p = len(samples[0].x) - 1
    t_csi = len(samples[0].y) + 1
    with open(path, "wb") as f:
        f.write(_WSMP_MAGIC)
        f.write(struct.pack("<4I", _WSMP_VERSION, len(samples), p, t_csi))
        for s in samples:
            f.write(struct.pack("<d", float(s.anchor_slot)))
            f.write(np.ascontiguousarray(s.x, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(s.y, dtype="<f8").tobytes())


def load_windows(path) -> list:
    with open(path, "rb") as f:
        if f.read(4) != _WSMP_MAGIC:
            raise ValueError("not a WSMP window file")
        version, n, p, t_csi = struct.unpack("<4I", f.read(16))
        if version != _WSMP_VERSION:
            raise ValueError(f"unsupported WSMP version {version}")
        data = np.frombuffer(f.read(), dtype="<f8")
    per = 1 + (p + 1) + (t_csi - 1)
    if data.size != n * per:
        raise ValueError("window payload size mismatch")
    data = data.reshape(n, per)
    return [WindowSample(x=row[1:p + 2].copy(), y=row[p + 2:].copy(),
                         anchor_slot=int(row[0]))
            for row in data]


def export_windows_csv(samples, path) -> None:
    """Debug CSV: one row per sample (anchor, x..., y...)."""
    if not samples:
        raise ValueError("no samples to write")
    p = len(samples[0].x) - 1
    t_csi = len(samples[0].y) + 1
    header = (["anchor_slot"]
              + [f"x{k}" for k in range(p + 1)]
              + [f"y{k}" for k in range(1, t_csi)])
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for s in samples:
            row = [str(s.anchor_slot)] + [repr(v) for v in s.x] \
                + [repr(v) for v in s.y]
            f.write(",".join(row) + "\n")
