"""EESM effective-SINR compression and CQI selection.

Compresses a per-layer/per-RB SINR grid into a single effective SINR
with a CQI-dependent calibration beta, maps effective SINR to block
error rate through a parametric logistic family, and picks the highest
CQI meeting the BLER target.
"""

from dataclasses import dataclass

import numpy as np

from .channel import SinrGrid

# TS 38.214 Table 5.2.2.1-2 spectral efficiencies, CQI 1..15
_SPECTRAL_EFFICIENCY = [
    0.1523, 0.2344, 0.3770, 0.6016, 0.8770,
    1.1758, 1.4766, 1.9141, 2.4063, 2.7305,
    3.3223, 3.9023, 4.5234, 5.1152, 5.5547,
]

DEFAULT_BLER_TARGET = 0.1
_BLER_MID_START_DB = -6.0
_BLER_MID_STEP_DB = 1.9
_BLER_SLOPE_DB = 0.5


@dataclass(frozen=True)
class CqiEntry:
    index: int
    beta: float
    spectral_efficiency: float
    bler_mid_db: float
    bler_slope_db: float


@dataclass(frozen=True)
class CqiTable:
    entries: tuple
    bler_target: float = DEFAULT_BLER_TARGET

    def __post_init__(self):
        if len(self.entries) != 15:
            raise ValueError("CqiTable needs exactly 15 entries")
        if [e.index for e in self.entries] != list(range(1, 16)):
            raise ValueError("CQI indices must be 1..15 contiguous")
        if not 0.0 < self.bler_target < 1.0:
            raise ValueError("bler_target must be in (0, 1)")
        se = [e.spectral_efficiency for e in self.entries]
        mid = [e.bler_mid_db for e in self.entries]
        if any(b <= a for a, b in zip(se, se[1:])):
            raise ValueError("spectral efficiency must increase with index")
        if any(b <= a for a, b in zip(mid, mid[1:])):
            raise ValueError("bler_mid_db must increase with index")
        if any(e.beta <= 0 for e in self.entries):
            raise ValueError("beta must be > 0")

    def entry(self, cqi: int) -> CqiEntry:
        if not 1 <= cqi <= 15:
            raise ValueError(f"CQI index out of range: {cqi}")
        return self.entries[cqi - 1]


@dataclass(frozen=True)
class EffectiveSinr:
    value_db: float
    cqi: int  # 0 means no feasible CQI


def default_cqi_table(bler_target: float = DEFAULT_BLER_TARGET) -> CqiTable:
    """Built-in table: 38.214 efficiencies, placeholder beta = max(0.25, SE),
    logistic BLER midpoints 1.9 dB apart from -6 dB, 0.5 dB slope."""
    entries = tuple(
        CqiEntry(index=i + 1,
                 beta=max(0.25, se),
                 spectral_efficiency=se,
                 bler_mid_db=_BLER_MID_START_DB + _BLER_MID_STEP_DB * i,
                 bler_slope_db=_BLER_SLOPE_DB)
        for i, se in enumerate(_SPECTRAL_EFFICIENCY)
    )
    return CqiTable(entries=entries, bler_target=bler_target)


def load_cqi_table(path) -> CqiTable:
    """Load a CqiTable from a plain-text file.

    One line per CQI: ``index beta se mid_db slope_db`` (comma or
    whitespace separated), plus an optional ``bler_target <value>`` line.
    '#' starts a comment.
    """
    rows = {}
    target = DEFAULT_BLER_TARGET
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.replace(",", " ").split()
            if parts[0] == "bler_target":
                target = float(parts[-1])
                continue
            if len(parts) != 5:
                raise ValueError(
                    f"{path}:{lineno}: expected 'index beta se mid slope'")
            idx = int(parts[0])
            rows[idx] = CqiEntry(index=idx, beta=float(parts[1]),
                                 spectral_efficiency=float(parts[2]),
                                 bler_mid_db=float(parts[3]),
                                 bler_slope_db=float(parts[4]))
    entries = tuple(rows[i] for i in sorted(rows))
    return CqiTable(entries=entries, bler_target=target)


def eesm(grid: SinrGrid | np.ndarray, beta: float) -> float:
    """Effective SINR (linear) of a SINR grid for calibration beta.

    gamma_eff = -beta * ln(mean(exp(-gamma / beta))). Evaluated relative
    to the grid minimum so that large-beta grids do not lose precision;
    exponent underflow simply clamps terms to zero.
    """
    if beta <= 0:
        raise ValueError("beta must be > 0")
    gamma = grid.gamma if isinstance(grid, SinrGrid) else np.asarray(grid)
    if gamma.size == 0:
        raise ValueError("empty SINR grid")
    gmin = gamma.min()
    arg = np.maximum((gamma - gmin) / beta, 0.0)
    with np.errstate(under="ignore"):
        mean = np.exp(-arg).mean()
    return float(gmin - beta * np.log(mean))


def bler(gamma_eff_db: float, entry: CqiEntry) -> float:
    """Logistic BLER curve: 1 at low SINR, 0 far above bler_mid_db."""
    z = (gamma_eff_db - entry.bler_mid_db) / entry.bler_slope_db
    # guard exp overflow for very low SINR
    if z < -500:
        return 1.0
    return float(1.0 / (1.0 + np.exp(z)))


def select_cqi(grid: SinrGrid | np.ndarray, table: CqiTable) -> EffectiveSinr:
    """Highest CQI whose own-beta effective SINR meets the BLER target.

    Returns cqi = 0 (with the beta of CQI 1 used for the reported value)
    when no entry is feasible.
    """
    best = None
    for entry in table.entries:
        val_db = 10.0 * np.log10(eesm(grid, entry.beta))
        if bler(val_db, entry) <= table.bler_target:
            best = EffectiveSinr(value_db=float(val_db), cqi=entry.index)
    if best is None:
        val_db = 10.0 * np.log10(eesm(grid, table.entries[0].beta))
        return EffectiveSinr(value_db=float(val_db), cqi=0)
    return best


def cqi_from_eff_sinr(gamma_eff_db: float, table: CqiTable) -> int:
    """Highest feasible CQI for a scalar effective SINR (0 if none).

    Decision rule used by the throughput policies, where only the scalar
    effective SINR (reported, predicted, or true) is available.
    """
    best = 0
    for entry in table.entries:
        if bler(gamma_eff_db, entry) <= table.bler_target:
            best = entry.index
    return best


def spectral_efficiency(cqi: int, table: CqiTable | None = None) -> float:
    """Bits per resource element for a CQI index (0 = no transmission)."""
    if cqi == 0:
        return 0.0
    if not 1 <= cqi <= 15:
        raise ValueError(f"CQI index out of range: {cqi}")
    if table is None:
        return _SPECTRAL_EFFICIENCY[cqi - 1]
    return table.entry(cqi).spectral_efficiency
