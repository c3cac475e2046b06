"""Time-varying TDL MIMO channel generation.

Generates per-slot, per-RB frequency-domain channel matrices for the
3GPP tapped-delay-line profiles TDL-A (NLOS) and TDL-D (LOS), with
Doppler-induced fading from a sum-of-sinusoids Clarke model, plus the
post-equalization MMSE SINR and the stale-CSI slot mapping.
"""

from dataclasses import dataclass
import struct

import numpy as np

N_SINUSOIDS = 32
LOS_ANGLE = np.pi / 4  # Doppler angle of the deterministic LOS component


class UnsupportedProfileError(ValueError):
    """Raised for an unknown TDL profile name."""


class DegenerateChannelError(ValueError):
    """Raised when H^H H is too ill-conditioned for MMSE inversion."""


# TR 38.901 Table 7.7.2-1 (TDL-A): (normalized delay, power dB)
_TDL_A_TAPS = [
    (0.0000, -13.4),
    (0.3819, 0.0),
    (0.4025, -2.2),
    (0.5868, -4.0),
    (0.4610, -6.0),
    (0.5375, -8.2),
    (0.6708, -9.9),
    (0.5750, -10.5),
    (0.7618, -7.5),
    (1.5375, -15.9),
    (1.8978, -6.6),
    (2.2242, -16.7),
    (2.1718, -12.4),
    (2.4942, -15.2),
    (2.5119, -10.8),
    (3.0582, -11.3),
    (4.0810, -12.7),
    (4.4579, -16.2),
    (4.5695, -18.3),
    (4.7966, -18.9),
    (5.0066, -16.6),
    (5.3043, -19.9),
    (9.6586, -29.7),
]

# TR 38.901 Table 7.7.2-4 (TDL-D). The first tap combines the LOS path
# (-0.2 dB) and its Rayleigh part (-13.5 dB) into one Rician tap of
# ~0 dB total power; the 13.3 dB K-factor splits it again at generation.
_TDL_D_K_FACTOR_DB = 13.3
_TDL_D_FIRST_TAP_POWER_DB = 10.0 * np.log10(10 ** (-0.02) + 10 ** (-1.35))
_TDL_D_TAPS = [
    (0.0, _TDL_D_FIRST_TAP_POWER_DB),
    (0.035, -18.8),
    (0.612, -21.0),
    (1.363, -22.8),
    (1.405, -17.9),
    (1.804, -20.1),
    (2.596, -21.9),
    (1.775, -22.9),
    (4.042, -27.8),
    (7.937, -23.6),
    (9.424, -24.8),
    (9.708, -30.0),
    (12.525, -27.7),
]


@dataclass(frozen=True)
class TapProfile:
    """Normalized power-delay profile of a TDL variant.

    ``taps`` holds (normalized_delay, power_db, is_los) triples with the
    powers already normalized to unit total linear power and the delays
    sorted strictly increasing. Absolute delays are the normalized values
    scaled by ``delay_spread_ns``.
    """

    name: str
    taps: tuple
    k_factor_db: float | None
    delay_spread_ns: float

    @property
    def n_taps(self) -> int:
        return len(self.taps)

    @property
    def delays_s(self) -> np.ndarray:
        return np.array([t[0] for t in self.taps]) * self.delay_spread_ns * 1e-9

    @property
    def powers_linear(self) -> np.ndarray:
        return 10.0 ** (np.array([t[1] for t in self.taps]) / 10.0)

    @property
    def los_flags(self) -> np.ndarray:
        return np.array([t[2] for t in self.taps], dtype=bool)


@dataclass(frozen=True)
class FadingConfig:
    """Doppler / dimension / seed settings for one channel realization."""

    doppler_hz: float
    n_slots: int
    seed: int
    slot_duration_s: float = 1e-3
    n_tx: int = 4
    n_rx: int = 4

    def __post_init__(self):
        if self.doppler_hz < 0:
            raise ValueError("doppler_hz must be >= 0")
        if self.n_slots < 1:
            raise ValueError("n_slots must be >= 1")
        if self.n_tx < 1 or self.n_rx < 1:
            raise ValueError("antenna counts must be >= 1")


@dataclass(frozen=True)
class ChannelSlotSeries:
    """Per-slot per-RB frequency-domain channel, indexed [slot][rb][rx][tx]."""

    h: np.ndarray
    n_rb: int
    scs_hz: float

    def __post_init__(self):
        if self.h.ndim != 4 or self.h.shape[1] != self.n_rb:
            raise ValueError("h must be [slot][rb][rx][tx] with rb == n_rb")


@dataclass(frozen=True)
class SinrGrid:
    """Per-layer, per-RB linear post-equalization SINR."""

    gamma: np.ndarray
    n_layers: int

    def __post_init__(self):
        if self.gamma.shape[0] != self.n_layers:
            raise ValueError("gamma must be [layer][rb]")
        if not np.all(np.isfinite(self.gamma)) or np.any(self.gamma <= 0):
            raise ValueError("SINR entries must be finite and > 0")


def load_tdl_profile(name: str, delay_spread_ns: float) -> TapProfile:
    """Build a TapProfile for ``name`` in {"TDL-A", "TDL-D"}.

    Powers are normalized to unit total linear power and taps sorted by
    delay (the 38.901 tables list them unsorted).
    """
    if delay_spread_ns <= 0:
        raise ValueError("delay_spread_ns must be > 0")
    key = name.upper()
    if key == "TDL-A":
        raw, k_db, los_first = _TDL_A_TAPS, None, False
    elif key == "TDL-D":
        raw, k_db, los_first = _TDL_D_TAPS, _TDL_D_K_FACTOR_DB, True
    else:
        raise UnsupportedProfileError(f"unknown TDL profile: {name!r}")

    los = [los_first and d == 0.0 for d, _ in raw]
    order = np.argsort([d for d, _ in raw], kind="stable")
    powers = np.array([p for _, p in raw])
    total_db = 10.0 * np.log10(np.sum(10.0 ** (powers / 10.0)))
    taps = tuple(
        (raw[i][0], raw[i][1] - total_db, los[i]) for i in order
    )
    return TapProfile(name=key, taps=taps, k_factor_db=k_db,
                      delay_spread_ns=float(delay_spread_ns))


class FadingProcess:
    """Seeded sum-of-sinusoids fading generator for one realization.

    All randomness (sinusoid rotations and phases) is drawn once at
    construction, so any time slab can be evaluated deterministically and
    in any chunking without changing the result.
    """

    def __init__(self, profile: TapProfile, cfg: FadingConfig,
                 n_rb: int = 52, scs_hz: float = 15e3):
        self.profile = profile
        self.cfg = cfg
        self.n_rb = n_rb
        self.scs_hz = scs_hz

        rng = np.random.default_rng(cfg.seed)
        n_taps = profile.n_taps
        shape = (n_taps, cfg.n_rx, cfg.n_tx)
        # arrival angles on a jittered half-period grid: cos is injective on
        # [0, pi), so all sinusoid frequencies are distinct and long-run
        # per-entry power converges to 1 instead of beating forever; the
        # equal spacing makes the lag autocorrelation a spectrally accurate
        # quadrature of the Clarke/Jakes J0 curve
        rot = rng.uniform(0.0, 1.0, shape)
        self._psi = rng.uniform(0.0, 2.0 * np.pi, shape + (N_SINUSOIDS,))
        angles = np.pi * (np.arange(N_SINUSOIDS) + rot[..., None]) / N_SINUSOIDS
        self._omega = 2.0 * np.pi * cfg.doppler_hz * np.cos(angles)

        powers = profile.powers_linear
        los = profile.los_flags
        diffuse = powers.copy()
        self._los_amp = None
        if los.any():
            k_lin = 10.0 ** (profile.k_factor_db / 10.0)
            idx = int(np.flatnonzero(los)[0])
            diffuse[idx] = powers[idx] / (k_lin + 1.0)
            self._los_idx = idx
            self._los_amp = np.sqrt(powers[idx] * k_lin / (k_lin + 1.0))
            self._los_omega = 2.0 * np.pi * cfg.doppler_hz * np.cos(LOS_ANGLE)
            self._los_phase = rng.uniform(0.0, 2.0 * np.pi,
                                          (cfg.n_rx, cfg.n_tx))
        self._amp = np.sqrt(diffuse)

        # frequency response sampled at the center subcarrier of each RB
        freqs = (np.arange(n_rb) * 12 + 6) * scs_hz
        self._steer = np.exp(-2j * np.pi * np.outer(profile.delays_s, freqs))

    def tap_gains(self, q0: int, q1: int) -> np.ndarray:
        """Unit-power complex tap gains, shape [tap][rx][tx][slot]."""
        dt = self.cfg.slot_duration_s
        out = np.empty(self._omega.shape[:3] + (q1 - q0,), dtype=complex)
        # evaluate the sinusoids chunk-wise via a unit-phasor geometric
        # progression (much cheaper than exp of the full phase tensor);
        # chunks are aligned to absolute slot multiples so any slab
        # decomposition yields bit-identical values
        chunk = 512
        step = np.exp(1j * self._omega * dt)
        for a in range(q0 - q0 % chunk, q1, chunk):
            lo, hi = max(a, q0), min(a + chunk, q1)
            start = np.exp(1j * (self._omega * (a * dt) + self._psi))
            phasors = np.broadcast_to(step[..., None],
                                      step.shape + (hi - a,)).copy()
            phasors[..., 0] = start
            phasors = np.cumprod(phasors, axis=-1)
            # accumulate the sinusoid axis left to right: numpy's pairwise
            # reduction blocks differently depending on array shape, which
            # would break the bit-identical slab decomposition guarantee
            summed = phasors[..., 0, :].copy()
            for k in range(1, N_SINUSOIDS):
                summed += phasors[..., k, :]
            out[..., lo - q0:hi - q0] = (
                summed[..., lo - a:] / np.sqrt(N_SINUSOIDS))
        g = out * self._amp[:, None, None, None]
        if self._los_amp is not None:
            t = np.arange(q0, q1) * dt
            g[self._los_idx] += self._los_amp * np.exp(
                1j * (self._los_omega * t + self._los_phase[..., None]))
        return g

    def slab(self, q0: int, q1: int) -> np.ndarray:
        """Frequency-domain channel for slots [q0, q1), shape [slot][rb][rx][tx]."""
        g = self.tap_gains(q0, q1)
        return np.einsum("lrtq,ln->qnrt", g, self._steer)


def generate_fading(profile: TapProfile, cfg: FadingConfig,
                    n_rb: int = 52, scs_hz: float = 15e3) -> ChannelSlotSeries:
    """Generate a full ChannelSlotSeries (deterministic for a fixed seed)."""
    proc = FadingProcess(profile, cfg, n_rb=n_rb, scs_hz=scs_hz)
    return ChannelSlotSeries(h=proc.slab(0, cfg.n_slots), n_rb=n_rb,
                             scs_hz=scs_hz)


_COND_LIMIT = 1e12


def per_rb_sinr(h_rb: np.ndarray, snr_linear: float, n_layers: int) -> np.ndarray:
    """Per-layer MMSE post-equalization SINR for one RB's channel matrix.

    SINR_l = 1 / [(I + rho * H^H H)^-1]_ll - 1 with rho = snr_linear.
    Layers map to the first ``n_layers`` transmit columns of H.
    """
    h_rb = np.asarray(h_rb)
    if snr_linear <= 0:
        raise ValueError("snr_linear must be > 0")
    if n_layers > min(h_rb.shape):
        raise ValueError("n_layers exceeds min(rx, tx)")
    h = h_rb[:, :n_layers]
    gram = h.conj().T @ h
    if np.linalg.cond(gram) > _COND_LIMIT:
        raise DegenerateChannelError("H^H H condition number exceeds 1e12")
    inv = np.linalg.inv(np.eye(n_layers) + snr_linear * gram)
    return 1.0 / np.real(np.diag(inv)) - 1.0


def mmse_sinr_grid(h_slot: np.ndarray, snr_linear: float,
                   n_layers: int) -> SinrGrid:
    """Vectorized per_rb_sinr over one slot, returning a SinrGrid.

    ``h_slot`` has shape [rb][rx][tx]; the result gamma is [layer][rb].
    """
    h = np.asarray(h_slot)[:, :, :n_layers]
    gram = np.einsum("nij,nik->njk", h.conj(), h)
    eye = np.eye(n_layers)
    inv = np.linalg.inv(eye + snr_linear * gram)
    diag = np.real(np.einsum("nii->ni", inv))
    gamma = (1.0 / diag - 1.0).T
    # guard against roundoff producing exact zeros on degenerate layers
    gamma = np.maximum(gamma, 1e-300)
    return SinrGrid(gamma=gamma, n_layers=n_layers)


def stale_channel_slot(q: int, t_csi: int) -> int:
    """Slot index of the CSI report in effect at slot q."""
    if q < 0 or t_csi < 1:
        raise ValueError("require q >= 0 and t_csi >= 1")
    return (q // t_csi) * t_csi


_CHSS_MAGIC = b"CHSS"
_CHSS_VERSION = 1


def export_series(series: ChannelSlotSeries, path) -> None:
    """Write a ChannelSlotSeries to the binary CHSS format.

    Layout: magic "CHSS", version u32, then n_slots, n_rb, n_rx, n_tx as
    little-endian u32, followed by interleaved (re, im) f64 pairs in
    [slot][rb][rx][tx] order.
    """
    n_slots, n_rb, n_rx, n_tx = series.h.shape
    with open(path, "wb") as f:
        f.write(_CHSS_MAGIC)
        f.write(struct.pack("<5I", _CHSS_VERSION, n_slots, n_rb, n_rx, n_tx))
        f.write(np.ascontiguousarray(series.h, dtype=np.complex128)
                .astype("<c16", copy=False).tobytes())


def import_series(path, scs_hz: float = 15e3) -> ChannelSlotSeries:
    """Read a ChannelSlotSeries written by export_series."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _CHSS_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {_CHSS_MAGIC!r}")
        version, n_slots, n_rb, n_rx, n_tx = struct.unpack("<5I", f.read(20))
        if version != _CHSS_VERSION:
            raise ValueError(f"unsupported CHSS version {version}")
        data = np.frombuffer(f.read(), dtype="<c16")
    h = data.reshape(n_slots, n_rb, n_rx, n_tx).astype(np.complex128)
    return ChannelSlotSeries(h=h, n_rb=n_rb, scs_hz=scs_hz)
