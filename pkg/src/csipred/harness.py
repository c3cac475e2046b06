"""End-to-end experiment engine.

Dataset generation from seeded channel realizations, Doppler sweeps for
prediction NMSE, hidden-size complexity sweeps, and the slot-level
throughput simulation comparing stale, predictive, and genie CQI
policies. All runs are deterministic given the config and seeds.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
import hashlib
import math
import os

import numpy as np

from . import linkadapt, nn, windows
from .channel import FadingConfig, FadingProcess, load_tdl_profile

SLOT_CHUNK = 2048
SYMBOLS_PER_SLOT = 14
SUBCARRIERS_PER_RB = 12


class ConfigError(ValueError):
    """Raised for unparsable or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """All experiment parameters; defaults follow the standard setup
    (12.5 dB SNR, 52 RBs at 15 kHz, 4x4 MIMO, TDL-A/D at 300 ns,
    T_CSI = 4 slots of 1 ms)."""

    snr_db: float = 12.5
    scs_hz: float = 15000.0
    n_rb: int = 52
    bandwidth: str = "10MHz"
    doppler_list_hz: tuple = (1.0, 5.0, 10.0, 20.0, 30.0)
    delay_spread_ns: float = 300.0
    n_tx: int = 4
    n_rx: int = 4
    n_layers: int = 4
    profiles: tuple = ("TDL-A", "TDL-D")
    t_csi: int = 4
    slot_ms: float = 1.0
    train_size: int = 40000
    val_size: int = 10000
    test_size: int = 2000
    seed: int = 1
    history_p: int = 16
    hidden_dim: int = 16
    epochs: int = 200
    batch_size: int = 256
    learning_rate: float = 1e-3
    slots_per_realization: int = 2048
    bler_target: float = 0.1
    cqi_table_path: str = ""

    def __post_init__(self):
        if min(self.train_size, self.val_size, self.test_size) <= 0:
            raise ConfigError("dataset sizes must be > 0")
        if self.t_csi < 2:
            raise ConfigError("t_csi must be >= 2")
        if self.slot_ms <= 0 or self.scs_hz <= 0 or self.n_rb < 1:
            raise ConfigError("invalid grid parameters")

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    @property
    def slot_duration_s(self) -> float:
        return self.slot_ms * 1e-3

    def cqi_table(self) -> linkadapt.CqiTable:
        if self.cqi_table_path:
            return linkadapt.load_cqi_table(self.cqi_table_path)
        return linkadapt.default_cqi_table(bler_target=self.bler_target)

    def train_config(self, seed: int | None = None) -> nn.TrainConfig:
        return nn.TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                              learning_rate=self.learning_rate,
                              seed=self.seed if seed is None else seed)

    def config_hash(self) -> str:
        text = repr([(f.name, getattr(self, f.name))
                     for f in fields(self)])
        return hashlib.sha256(text.encode()).hexdigest()[:16]


_TUPLE_FLOAT_KEYS = {"doppler_list_hz"}
_TUPLE_STR_KEYS = {"profiles"}


def _parse_value(key: str, raw: str, kind):
    raw = raw.strip()
    try:
        if key in _TUPLE_FLOAT_KEYS:
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if key in _TUPLE_STR_KEYS:
            return tuple(v.strip() for v in raw.split(",") if v.strip())
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def parse_config(path: str | None = None, overrides=()) -> ExperimentConfig:
    """Build an ExperimentConfig from a key = value file plus overrides.

    Lines are ``key = value``; '#' starts a comment. ``overrides`` is an
    iterable of "key=value" strings applied after the file.
    """
    defaults = ExperimentConfig()
    kinds = {f.name: type(getattr(defaults, f.name)) for f in fields(defaults)}
    values = {}
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as f:
            for lineno, line in enumerate(f, 1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                if "=" not in text:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, raw = (s.strip() for s in text.split("=", 1))
                if key not in kinds:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                values[key] = _parse_value(key, raw, kinds[key])
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value: {item!r}")
        key, raw = (s.strip() for s in item.split("=", 1))
        if key not in kinds:
            raise ConfigError(f"unknown override key {key!r}")
        values[key] = _parse_value(key, raw, kinds[key])
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def write_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as f:
        for fld in fields(cfg):
            value = getattr(cfg, fld.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            f.write(f"{fld.name} = {value}\n")


# ---------------------------------------------------------------------------
# link-state simulation

@dataclass(frozen=True)
class SlotLinkState:
    """Per-slot link-adaptation ground truth for one realization."""

    eff_db: np.ndarray         # selected-CQI effective SINR per slot
    cqi: np.ndarray            # selected CQI per slot (0..15)
    per_cqi_eff_db: np.ndarray  # (n_slots, 15) effective SINR per beta


def _eesm_batch(gamma: np.ndarray, beta: float) -> np.ndarray:
    """eesm over the trailing axes of gamma (slots, layers, rbs)."""
    flat = gamma.reshape(gamma.shape[0], -1)
    gmin = flat.min(axis=1)
    with np.errstate(under="ignore"):
        mean = np.exp(-(flat - gmin[:, None]) / beta).mean(axis=1)
    return gmin - beta * np.log(mean)


def _feasible(eff_db: np.ndarray, table: linkadapt.CqiTable) -> np.ndarray:
    """(n_slots, 15) boolean feasibility under the BLER target."""
    mids = np.array([e.bler_mid_db for e in table.entries])
    slopes = np.array([e.bler_slope_db for e in table.entries])
    z = (eff_db - mids) / slopes
    return 1.0 / (1.0 + np.exp(np.minimum(z, 500.0))) <= table.bler_target


def simulate_link_state(cfg: ExperimentConfig, profile_name: str,
                        doppler_hz: float, seed: int,
                        n_slots: int) -> SlotLinkState:
    """Channel realization -> per-slot SINR grids -> per-CQI effective
    SINR and selected CQI, streamed in slot chunks."""
    profile = load_tdl_profile(profile_name, cfg.delay_spread_ns)
    fading = FadingConfig(doppler_hz=doppler_hz, n_slots=n_slots, seed=seed,
                          slot_duration_s=cfg.slot_duration_s,
                          n_tx=cfg.n_tx, n_rx=cfg.n_rx)
    proc = FadingProcess(profile, fading, n_rb=cfg.n_rb, scs_hz=cfg.scs_hz)
    table = cfg.cqi_table()
    betas = np.array([e.beta for e in table.entries])
    rho = cfg.snr_linear
    n_layers = cfg.n_layers
    eye = np.eye(n_layers)

    per_cqi = np.empty((n_slots, len(betas)))
    for a in range(0, n_slots, SLOT_CHUNK):
        b = min(a + SLOT_CHUNK, n_slots)
        h = proc.slab(a, b)[:, :, :, :n_layers]
        gram = np.einsum("qnij,qnik->qnjk", h.conj(), h)
        inv = np.linalg.inv(eye + rho * gram)
        diag = np.real(np.einsum("qnii->qni", inv))
        gamma = np.maximum(1.0 / diag - 1.0, 1e-300)  # (q, rb, layer)
        gamma = np.transpose(gamma, (0, 2, 1))
        for j, beta in enumerate(betas):
            per_cqi[a:b, j] = _eesm_batch(gamma, beta)

    per_cqi_db = 10.0 * np.log10(per_cqi)
    feasible = _feasible(per_cqi_db, table)
    # highest feasible index per slot; 0 when none
    idx = np.arange(1, 16)
    cqi = np.where(feasible.any(axis=1),
                   (feasible * idx).max(axis=1), 0).astype(int)
    eff_db = np.where(cqi >= 1,
                      per_cqi_db[np.arange(n_slots), np.maximum(cqi - 1, 0)],
                      per_cqi_db[:, 0])
    return SlotLinkState(eff_db=eff_db, cqi=cqi, per_cqi_eff_db=per_cqi_db)


def eff_sinr_trace(cfg: ExperimentConfig, profile_name: str,
                   doppler_hz: float, seed: int,
                   n_slots: int) -> windows.EffSinrTrace:
    state = simulate_link_state(cfg, profile_name, doppler_hz, seed, n_slots)
    return windows.EffSinrTrace(values_db=state.eff_db, t_csi=cfg.t_csi,
                                doppler_hz=doppler_hz,
                                channel_profile=profile_name)


# ---------------------------------------------------------------------------
# dataset generation

_SPLIT_CODES = {"train": 1, "val": 2, "test": 3}
_PROFILE_CODES = {"TDL-A": 1, "TDL-D": 2}


def realization_seed(base_seed: int, profile: str, doppler_hz: float,
                     split: str, index: int) -> int:
    """Deterministic, split-disjoint realization seed."""
    ss = np.random.SeedSequence([base_seed,
                                 _PROFILE_CODES.get(profile.upper(), 99),
                                 int(round(doppler_hz * 1000)),
                                 _SPLIT_CODES[split], index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class DatasetSplit:
    train: list
    val: list
    test: list
    provenance: dict = field(default_factory=dict)

    def as_arrays(self) -> nn.ArrayDataset:
        x_train, y_train = windows.stack_samples(self.train)
        x_val, y_val = windows.stack_samples(self.val)
        return nn.ArrayDataset(x_train=x_train, y_train=y_train,
                               x_val=x_val, y_val=y_val)

    def test_arrays(self):
        return windows.stack_samples(self.test)


def generate_dataset(cfg: ExperimentConfig, profile: str,
                     doppler_hz: float) -> DatasetSplit:
    """Window datasets from independent realizations, one seed range per
    split so no channel randomness is shared across splits."""
    p, t = cfg.history_p, cfg.t_csi
    per_real = (cfg.slots_per_realization - 1 - p * t - (t - 1)) // t + 1
    if per_real < 1:
        raise ConfigError(
            f"slots_per_realization={cfg.slots_per_realization} yields no "
            f"windows for p={p}, t_csi={t}; increase realization length")

    sizes = {"train": cfg.train_size, "val": cfg.val_size,
             "test": cfg.test_size}
    splits = {}
    seeds_used = {}
    for split, size in sizes.items():
        n_real = math.ceil(size / per_real)
        samples = []
        seeds = []
        for r in range(n_real):
            seed = realization_seed(cfg.seed, profile, doppler_hz, split, r)
            seeds.append(seed)
            trace = eff_sinr_trace(cfg, profile, doppler_hz, seed,
                                   cfg.slots_per_realization)
            samples.extend(windows.build_windows(trace, p))
        splits[split] = samples[:size]
        seeds_used[split] = seeds
    provenance = {
        "profile": profile,
        "doppler_hz": doppler_hz,
        "seeds": seeds_used,
        "config_hash": cfg.config_hash(),
    }
    return DatasetSplit(train=splits["train"], val=splits["val"],
                        test=splits["test"], provenance=provenance)


# ---------------------------------------------------------------------------
# sweeps

@dataclass(frozen=True)
class SweepRecord:
    profile: str
    doppler_hz: float
    model: str
    d: int
    p: int
    t_csi: int
    nmse_db: float
    flops: int
    throughput_mbps: float
    baseline_mbps: float
    seed: int


def _nan_record(**kw) -> SweepRecord:
    base = dict(nmse_db=float("nan"), flops=0,
                throughput_mbps=float("nan"), baseline_mbps=float("nan"))
    base.update(kw)
    return SweepRecord(**base)


def evaluate_nmse(model: nn.PredictorModel, x_test: np.ndarray,
                  y_test: np.ndarray) -> float:
    preds = windows.predict_batch(model, x_test)
    return windows.nmse_db([preds], [y_test])


def hold_nmse(x_test: np.ndarray, y_test: np.ndarray) -> float:
    preds = np.repeat(x_test[:, :1], y_test.shape[1], axis=1)
    return windows.nmse_db([preds], [y_test])


def train_predictor(cfg: ExperimentConfig, kind: str, dataset: DatasetSplit,
                    d: int | None = None,
                    seed: int | None = None) -> nn.TrainReport:
    return nn.train(kind, cfg.hidden_dim if d is None else d,
                    dataset.as_arrays(), cfg.train_config(seed))


def nmse_sweep_point(cfg: ExperimentConfig, profile: str, doppler: float,
                     model_kinds=("dnn", "lstm"), d: int | None = None) -> list:
    """Train and score each model kind at one (profile, doppler) condition;
    the hold baseline is recorded alongside."""
    d = cfg.hidden_dim if d is None else d
    dataset = generate_dataset(cfg, profile, doppler)
    x_test, y_test = dataset.test_arrays()
    base = dict(profile=profile, doppler_hz=doppler, p=cfg.history_p,
                t_csi=cfg.t_csi, seed=cfg.seed)
    records = [_nan_record(model="hold", d=0,
                           nmse_db=hold_nmse(x_test, y_test), **base)]
    for kind in model_kinds:
        report = train_predictor(cfg, kind, dataset, d=d)
        records.append(_nan_record(
            model=kind, d=d,
            nmse_db=evaluate_nmse(report.model, x_test, y_test),
            flops=nn.count_flops(kind, cfg.history_p + 1, d, cfg.t_csi - 1),
            **base))
    return records


def run_nmse_sweep(cfg: ExperimentConfig, model_kinds=("dnn", "lstm"),
                   d: int | None = None, profiles=None, dopplers=None,
                   jobs: int = 1, progress=None) -> list:
    """Per (profile, doppler): train each model kind on that condition,
    evaluate test NMSE, and record the hold baseline. ``jobs > 1`` runs
    sweep points in parallel processes; the merge order is fixed."""
    points = [(profile, doppler)
              for profile in (profiles or cfg.profiles)
              for doppler in (dopplers or cfg.doppler_list_hz)]
    if jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            grouped = list(pool.map(
                nmse_sweep_point,
                [cfg] * len(points),
                [p for p, _ in points],
                [f for _, f in points],
                [model_kinds] * len(points),
                [d] * len(points)))
    else:
        grouped = [nmse_sweep_point(cfg, profile, doppler, model_kinds, d)
                   for profile, doppler in points]
    records = []
    for group in grouped:
        records.extend(group)
        if progress:
            for rec in group:
                progress(rec)
    return records


def run_complexity_sweep(cfg: ExperimentConfig, d_list=(2, 4, 8, 16, 32),
                         model_kinds=("dnn", "lstm"), profile="TDL-A",
                         doppler_hz=10.0, progress=None) -> list:
    """NMSE vs FLOPs over hidden sizes at one fixed channel condition."""
    dataset = generate_dataset(cfg, profile, doppler_hz)
    x_test, y_test = dataset.test_arrays()
    records = []
    for kind in model_kinds:
        for d in d_list:
            report = train_predictor(cfg, kind, dataset, d=d)
            rec = _nan_record(
                profile=profile, doppler_hz=doppler_hz, model=kind, d=d,
                p=cfg.history_p, t_csi=cfg.t_csi, seed=cfg.seed,
                nmse_db=evaluate_nmse(report.model, x_test, y_test),
                flops=nn.count_flops(kind, cfg.history_p + 1, d,
                                     cfg.t_csi - 1))
            records.append(rec)
            if progress:
                progress(rec)
    return records


# ---------------------------------------------------------------------------
# throughput simulation

POLICIES = ("stale", "dnn", "lstm", "oracle")


def run_throughput_sim(cfg: ExperimentConfig, policy: str, doppler_hz: float,
                       n_slots: int, model: nn.PredictorModel | None = None,
                       profile: str = "TDL-A", channel_seed: int | None = None,
                       success_seed: int = 0x5EED) -> float:
    """Slot-level throughput (Mbps) of one CQI policy.

    Ground truth, CQI decisions, and Bernoulli success draws as follows:
    the policy picks a decision effective SINR per slot (stale report,
    model prediction, or the true value for the genie), the CQI is the
    highest entry meeting the BLER target at that decision value, and
    the transport block succeeds with probability 1 - BLER evaluated at
    the true effective SINR under the chosen CQI's own beta. The success
    RNG stream is independent of the channel seed so paired-policy
    comparisons share both randomness sources.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    if policy in ("dnn", "lstm") and model is None:
        raise ValueError(f"policy {policy!r} requires a trained model")
    if channel_seed is None:
        channel_seed = realization_seed(cfg.seed, profile, doppler_hz,
                                        "test", 0)
    state = simulate_link_state(cfg, profile, doppler_hz, channel_seed,
                                n_slots)
    table = cfg.cqi_table()
    t = cfg.t_csi
    slots = np.arange(n_slots)
    report_slot = (slots // t) * t

    decision_db = state.eff_db[report_slot].copy()  # stale / report value
    if policy == "oracle":
        decision_db = state.eff_db.copy()
    elif policy in ("dnn", "lstm"):
        p = model.input_dim - 1
        first_anchor = p * t
        anchors = np.arange(first_anchor, n_slots, t)
        if len(anchors):
            x = state.eff_db[anchors[:, None] - np.arange(p + 1) * t]
            preds = windows.predict_batch(model, x)  # (n_anchors, t-1)
            for m in range(1, t):
                q = anchors + m
                valid = q < n_slots
                decision_db[q[valid]] = preds[valid, m - 1]
        # slots before the first full history window stay on the stale value

    # highest feasible CQI at the decision value
    mids = np.array([e.bler_mid_db for e in table.entries])
    slopes = np.array([e.bler_slope_db for e in table.entries])
    feas = 1.0 / (1.0 + np.exp(
        np.minimum((decision_db[:, None] - mids) / slopes, 500.0)))
    feas = feas <= table.bler_target
    cqi = np.where(feas.any(axis=1),
                   (feas * np.arange(1, 16)).max(axis=1), 0).astype(int)

    # success probability at the true effective SINR of the chosen CQI
    true_eff = state.per_cqi_eff_db[slots, np.maximum(cqi - 1, 0)]
    entry_mid = mids[np.maximum(cqi - 1, 0)]
    entry_slope = slopes[np.maximum(cqi - 1, 0)]
    bler = 1.0 / (1.0 + np.exp(
        np.minimum((true_eff - entry_mid) / entry_slope, 500.0)))
    p_ok = np.where(cqi >= 1, 1.0 - bler, 0.0)

    rng = np.random.default_rng(success_seed)
    success = rng.random(n_slots) < p_ok

    se = np.array([0.0] + [e.spectral_efficiency for e in table.entries])
    re_per_slot = cfg.n_layers * cfg.n_rb * SUBCARRIERS_PER_RB * SYMBOLS_PER_SLOT
    bits = np.where(success, se[cqi] * re_per_slot, 0.0).sum()
    duration_s = n_slots * cfg.slot_duration_s
    return float(bits / duration_s / 1e6)


# ---------------------------------------------------------------------------
# reporting

CSV_HEADER = ("profile,doppler_hz,model,D,P,t_csi,nmse_db,flops,"
              "throughput_mbps,baseline_mbps,seed")


def _fmt(value) -> str:
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def emit_report(records, out_dir, stem: str = "sweep") -> tuple[str, str]:
    """Write one CSV row per record plus a human-readable summary.

    Returns (csv_path, summary_path).
    """
    if not records:
        raise ValueError("no records to report")
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    txt_path = os.path.join(out_dir, f"{stem}.txt")
    try:
        with open(csv_path, "w") as f:
            f.write(CSV_HEADER + "\n")
            for r in records:
                f.write(",".join([
                    r.profile, _fmt(r.doppler_hz), r.model, str(r.d),
                    str(r.p), str(r.t_csi), _fmt(r.nmse_db), str(r.flops),
                    _fmt(r.throughput_mbps), _fmt(r.baseline_mbps),
                    str(r.seed)]) + "\n")
        with open(txt_path, "w") as f:
            f.write(f"{'profile':8s} {'doppler':>8s} {'model':>6s} "
                    f"{'D':>4s} {'nmse_db':>9s} {'flops':>8s} "
                    f"{'tput_mbps':>10s}\n")
            for r in records:
                nmse = "" if math.isnan(r.nmse_db) else f"{r.nmse_db:9.3f}"
                tput = ("" if math.isnan(r.throughput_mbps)
                        else f"{r.throughput_mbps:10.3f}")
                f.write(f"{r.profile:8s} {r.doppler_hz:8.1f} {r.model:>6s} "
                        f"{r.d:4d} {nmse:>9s} {r.flops:8d} {tput:>10s}\n")
    except OSError as exc:
        raise OSError(f"failed writing report under {out_dir}: {exc}") from exc
    return csv_path, txt_path
