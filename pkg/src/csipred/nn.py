"""Minimal dense / LSTM network engine for effective-SINR forecasting.

Implements the two predictor architectures (single-hidden-layer ReLU
network and single-layer LSTM with a linear head), exact gradients via
backpropagation (through time for the LSTM), Adam training with seeded
shuffling, a FLOPs counter, and binary model serialization. Everything
runs in float64 for determinism and gradient-check fidelity.
"""

from dataclasses import dataclass, fields, replace
import hashlib
import json
import struct

import numpy as np

GATE_NAMES = ("input", "forget", "output", "candidate")


@dataclass
class DenseParams:
    """w1: (D, P) hidden weights, b1: (D,), w2: (T, D) output head, b2: (T,)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class LstmParams:
    """Single-layer LSTM over a scalar input sequence plus a linear head.

    Gate axis 0 is ordered (input, forget, output, candidate):
    wx: (4, D) input-to-hidden, wh: (4, D, D) hidden-to-hidden,
    b: (4, D) gate biases, w_out: (T, D), b_out: (T,).
    """

    wx: np.ndarray
    wh: np.ndarray
    b: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 256
    learning_rate: float = 1e-3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class PredictorModel:
    """Trained predictor: parameters plus architecture and dB normalization."""

    kind: str  # "dnn" | "lstm"
    params: DenseParams | LstmParams
    input_dim: int
    hidden_dim: int
    output_dim: int
    norm_mean: float
    norm_std: float


@dataclass
class TrainReport:
    model: PredictorModel
    train_loss: list  # per-epoch MSE in dB^2 (de-normalized)
    val_loss: list


@dataclass
class ArrayDataset:
    """Stacked window samples: x (N, P) inputs, y (N, T) targets, in dB."""

    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray


def _param_arrays(params):
    return {f.name: getattr(params, f.name) for f in fields(params)}


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------------------
# forward passes

def dense_forward(params: DenseParams, x: np.ndarray) -> np.ndarray:
    """W2 @ relu(W1 @ x + b1) + b2 for a single input vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.w1.shape[1],):
        raise ValueError(f"input length {x.shape} does not match "
                         f"P={params.w1.shape[1]}")
    h = np.maximum(params.w1 @ x + params.b1, 0.0)
    return params.w2 @ h + params.b2


def dense_forward_batch(params: DenseParams, x: np.ndarray) -> np.ndarray:
    a = x @ params.w1.T + params.b1
    return np.maximum(a, 0.0) @ params.w2.T + params.b2


def lstm_step(params: LstmParams, x_t: float, h_prev: np.ndarray,
              c_prev: np.ndarray):
    """One LSTM cell update; returns (h, c)."""
    a = x_t * params.wx + h_prev @ np.transpose(params.wh, (0, 2, 1)) + params.b
    i, f, o = _sigmoid(a[0]), _sigmoid(a[1]), _sigmoid(a[2])
    g = np.tanh(a[3])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


def lstm_forward(params: LstmParams, x: np.ndarray) -> np.ndarray:
    """Run the cell over a scalar sequence (oldest first) from zero states,
    then apply the linear head to the final hidden state."""
    x = np.asarray(x, dtype=float)
    d = params.wx.shape[1]
    h = np.zeros(d)
    c = np.zeros(d)
    for x_t in x:
        h, c = lstm_step(params, float(x_t), h, c)
    return params.w_out @ h + params.b_out


def _lstm_forward_batch(params: LstmParams, x: np.ndarray):
    """Batched unroll; x is (B, P) oldest-first. Returns (y, cache)."""
    bsz, seq = x.shape
    d = params.wx.shape[1]
    h = np.zeros((bsz, d))
    c = np.zeros((bsz, d))
    cache = []
    # flatten the gate axis into one (D, 4D) matmul per step
    wh_flat = np.transpose(params.wh, (2, 0, 1)).reshape(d, 4 * d)
    wx_flat = params.wx.reshape(4 * d)
    b_flat = params.b.reshape(4 * d)
    for t in range(seq):
        x_t = x[:, t]
        a = np.outer(x_t, wx_flat) + h @ wh_flat + b_flat
        a = a.reshape(bsz, 4, d)
        i, f, o = _sigmoid(a[:, 0]), _sigmoid(a[:, 1]), _sigmoid(a[:, 2])
        g = np.tanh(a[:, 3])
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        cache.append((x_t, h, c, i, f, o, g, tanh_c))
        h, c = h_new, c_new
    y = h @ params.w_out.T + params.b_out
    return y, (h, cache)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError("pred and target shapes differ")
    return float(np.mean((target - pred) ** 2))


# ---------------------------------------------------------------------------
# gradients

def _dense_gradients(params: DenseParams, x: np.ndarray, y: np.ndarray):
    bsz, t_out = y.shape
    a = x @ params.w1.T + params.b1
    hidden = np.maximum(a, 0.0)
    pred = hidden @ params.w2.T + params.b2
    loss = float(np.mean((y - pred) ** 2))
    d_pred = 2.0 * (pred - y) / (t_out * bsz)
    d_hidden = d_pred @ params.w2
    d_a = d_hidden * (a > 0)
    grads = DenseParams(
        w1=d_a.T @ x,
        b1=d_a.sum(axis=0),
        w2=d_pred.T @ hidden,
        b2=d_pred.sum(axis=0),
    )
    return grads, loss


def _lstm_gradients(params: LstmParams, x: np.ndarray, y: np.ndarray):
    bsz, t_out = y.shape
    pred, (h_last, cache) = _lstm_forward_batch(params, x)
    loss = float(np.mean((y - pred) ** 2))
    d_pred = 2.0 * (pred - y) / (t_out * bsz)

    g_wx = np.zeros_like(params.wx)
    g_wh = np.zeros_like(params.wh)
    g_b = np.zeros_like(params.b)
    g_w_out = d_pred.T @ h_last
    g_b_out = d_pred.sum(axis=0)

    d = params.wx.shape[1]
    wh_rows = params.wh.reshape(4 * d, d)  # row (g, d) -> column e
    dh = d_pred @ params.w_out
    dc = np.zeros_like(h_last)
    for x_t, h_prev, c_prev, i, f, o, g, tanh_c in reversed(cache):
        do = dh * tanh_c
        dc = dc + dh * o * (1.0 - tanh_c ** 2)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc_prev = dc * f
        da = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            do * o * (1.0 - o),
            dg * (1.0 - g ** 2),
        ], axis=1)  # (B, 4D) ordered (gate, unit)
        g_wx += (x_t @ da).reshape(4, d)
        g_wh += (da.T @ h_prev).reshape(4, d, d)
        g_b += da.sum(axis=0).reshape(4, d)
        dh = da @ wh_rows
        dc = dc_prev
    grads = LstmParams(wx=g_wx, wh=g_wh, b=g_b, w_out=g_w_out, b_out=g_b_out)
    return grads, loss


def loss_and_gradients(params, x: np.ndarray, y: np.ndarray):
    """(grads, loss): mean gradient of mse_loss over a batch; x (B, P),
    y (B, T)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise ValueError("batch must be non-empty with matching x/y counts")
    if isinstance(params, DenseParams):
        return _dense_gradients(params, x, y)
    if isinstance(params, LstmParams):
        return _lstm_gradients(params, x, y)
    raise TypeError(f"unsupported parameter type {type(params)!r}")


def gradients(params, x: np.ndarray, y: np.ndarray):
    """Mean gradient of mse_loss over a batch; x (B, P), y (B, T)."""
    return loss_and_gradients(params, x, y)[0]


def batch_loss(params, x: np.ndarray, y: np.ndarray) -> float:
    if isinstance(params, DenseParams):
        pred = dense_forward_batch(params, x)
    else:
        pred, _ = _lstm_forward_batch(params, x)
    return mse_loss(pred, y)


# ---------------------------------------------------------------------------
# initialization / optimizer / training

def init_dense(p: int, d: int, t_out: int, rng: np.random.Generator) -> DenseParams:
    s1 = 1.0 / np.sqrt(p)
    s2 = 1.0 / np.sqrt(d)
    return DenseParams(
        w1=rng.uniform(-s1, s1, (d, p)),
        b1=np.zeros(d),
        w2=rng.uniform(-s2, s2, (t_out, d)),
        b2=np.zeros(t_out),
    )


def init_lstm(d: int, t_out: int, rng: np.random.Generator) -> LstmParams:
    s = 1.0 / np.sqrt(1 + d)
    sh = 1.0 / np.sqrt(d)
    b = np.zeros((4, d))
    b[1] = 1.0  # forget-gate bias trick
    return LstmParams(
        wx=rng.uniform(-s, s, (4, d)),
        wh=rng.uniform(-s, s, (4, d, d)),
        b=b,
        w_out=rng.uniform(-sh, sh, (t_out, d)),
        b_out=np.zeros(t_out),
    )


class Adam:
    def __init__(self, params, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in _param_arrays(params).items()}
        self.v = {k: np.zeros_like(v) for k, v in _param_arrays(params).items()}

    def step(self, params, grads):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        updates = {}
        for k, g in _param_arrays(grads).items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            m_hat = self.m[k] / b1c
            v_hat = self.v[k] / b2c
            updates[k] = (getattr(params, k)
                          - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return replace(params, **updates)


def train(model_kind: str, d: int, data: ArrayDataset,
          cfg: TrainConfig) -> TrainReport:
    """Train a predictor with Adam on z-scored dB inputs/targets.

    Losses are reported in dB^2 of the SINR domain. Deterministic for a
    fixed (seed, data, cfg).
    """
    if model_kind not in ("dnn", "lstm"):
        raise ValueError(f"unknown model kind {model_kind!r}")
    x_train = np.asarray(data.x_train, dtype=float)
    y_train = np.asarray(data.y_train, dtype=float)
    x_val = np.asarray(data.x_val, dtype=float)
    y_val = np.asarray(data.y_val, dtype=float)
    if len(x_train) == 0 or len(x_val) == 0:
        raise ValueError("train and validation sets must be non-empty")

    pooled = np.concatenate([x_train.ravel(), y_train.ravel()])
    mean = float(pooled.mean())
    std = float(pooled.std())
    if std < 1e-12:
        std = 1.0
    xn, yn = (x_train - mean) / std, (y_train - mean) / std
    xv, yv = (x_val - mean) / std, (y_val - mean) / std
    if model_kind == "lstm":
        # window inputs are newest-first; the recurrent net consumes time
        # forward, matching predict() in the windowing module
        xn = xn[:, ::-1]
        xv = xv[:, ::-1]

    p = x_train.shape[1]
    t_out = y_train.shape[1]
    rng = np.random.default_rng(cfg.seed)
    if model_kind == "dnn":
        params = init_dense(p, d, t_out, rng)
    else:
        params = init_lstm(d, t_out, rng)
    opt = Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)

    n = len(xn)
    scale = std * std
    train_losses = []
    val_losses = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = xn[idx], yn[idx]
            grads, loss = loss_and_gradients(params, xb, yb)
            epoch_loss += loss * len(idx)
            params = opt.step(params, grads)
        train_losses.append(epoch_loss / n * scale)
        val_losses.append(batch_loss(params, xv, yv) * scale)

    model = PredictorModel(kind=model_kind, params=params, input_dim=p,
                           hidden_dim=d, output_dim=t_out,
                           norm_mean=mean, norm_std=std)
    return TrainReport(model=model, train_loss=train_losses,
                       val_loss=val_losses)


def count_flops(model_kind: str, p: int, d: int, t_csi: int) -> int:
    """Closed-form per-inference FLOP count (multiply-adds counted as 2)."""
    if p < 1 or d < 1 or t_csi < 1:
        raise ValueError("dimensions must be positive")
    head = 2 * d * t_csi + t_csi
    if model_kind == "dnn":
        return 2 * p * d + d + head
    if model_kind == "lstm":
        return p * (4 * (2 * d + 2 * d * d + d) + 9 * d) + head
    raise ValueError(f"unknown model kind {model_kind!r}")


# ---------------------------------------------------------------------------
# serialization

_CSIP_MAGIC = b"CSIP"
_CSIP_VERSION = 1
_KIND_CODE = {"dnn": 0, "lstm": 1}
_KIND_NAME = {v: k for k, v in _KIND_CODE.items()}


def _param_blob(params) -> bytes:
    return b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes()
                    for v in _param_arrays(params).values())


def save_model(model: PredictorModel, path, metadata: dict | None = None) -> None:
    """Write a model to the binary CSIP format plus a JSON sidecar.

    Header: magic "CSIP", version u32, kind u32 (0 = dnn, 1 = lstm),
    P, D, T u32, norm mean/std f64; then parameters as little-endian f64
    in field order (dnn: w1 b1 w2 b2; lstm: wx wh b w_out b_out), each
    row-major.
    """
    with open(path, "wb") as f:
        f.write(_CSIP_MAGIC)
        f.write(struct.pack("<5I", _CSIP_VERSION, _KIND_CODE[model.kind],
                            model.input_dim, model.hidden_dim,
                            model.output_dim))
        f.write(struct.pack("<2d", model.norm_mean, model.norm_std))
        f.write(_param_blob(model.params))
    sidecar = {
        "kind": model.kind,
        "input_dim": model.input_dim,
        "hidden_dim": model.hidden_dim,
        "output_dim": model.output_dim,
    }
    if metadata:
        sidecar.update(metadata)
    with open(str(path) + ".meta.json", "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")


def load_model(path) -> PredictorModel:
    with open(path, "rb") as f:
        if f.read(4) != _CSIP_MAGIC:
            raise ValueError("not a CSIP model file")
        version, kind_code, p, d, t_out = struct.unpack("<5I", f.read(20))
        if version != _CSIP_VERSION:
            raise ValueError(f"unsupported CSIP version {version}")
        mean, std = struct.unpack("<2d", f.read(16))
        data = np.frombuffer(f.read(), dtype="<f8")
    kind = _KIND_NAME[kind_code]
    if kind == "dnn":
        shapes = [("w1", (d, p)), ("b1", (d,)), ("w2", (t_out, d)),
                  ("b2", (t_out,))]
        cls = DenseParams
    else:
        shapes = [("wx", (4, d)), ("wh", (4, d, d)), ("b", (4, d)),
                  ("w_out", (t_out, d)), ("b_out", (t_out,))]
        cls = LstmParams
    arrays = {}
    offset = 0
    for name, shape in shapes:
        size = int(np.prod(shape))
        arrays[name] = data[offset:offset + size].reshape(shape).copy()
        offset += size
    if offset != data.size:
        raise ValueError("parameter payload size mismatch")
    params = cls(**arrays)
    return PredictorModel(kind=kind, params=params, input_dim=p,
                          hidden_dim=d, output_dim=t_out,
                          norm_mean=mean, norm_std=std)


def dataset_hash(data: ArrayDataset) -> str:
    """Stable hash of a dataset's contents, for model provenance."""
    h = hashlib.sha256()
    for arr in (data.x_train, data.y_train, data.x_val, data.y_val):
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()[:16]
