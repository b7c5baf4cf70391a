"""OFDM resource layout: data / pilot / null partition and the grouping permutation.

Allocation is done in centered (negative-to-positive frequency) order and then
converted to DFT bin order, so ``data_idx`` lists DFT bins in ascending
frequency.  Grouped order is ``[data | pilot | null]``; ``perm[g]`` is the
physical (DFT bin) index of grouped slot ``g``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

PILOT_SEED = 0x5EED


@dataclass(frozen=True)
class GridConfig:
    n_subcarriers: int = 64
    cp_len: int = 16
    guard_per_side: int = 4
    dc_nulls: int = 2
    pilot_count: int = 8
    symbols_per_frame: int = 8
    subcarrier_spacing_hz: float = 120e3
    carrier_freq_hz: float = 3.6e9

    def __post_init__(self):
        counts = (self.n_subcarriers, self.cp_len, self.guard_per_side,
                  self.dc_nulls, self.pilot_count, self.symbols_per_frame)
        if any(int(c) != c or c < 0 for c in counts):
            raise ValueError("grid counts must be non-negative integers")
        if self.n_subcarriers < 1 or self.symbols_per_frame < 1:
            raise ValueError("need at least one subcarrier and one symbol")
        if not self.subcarrier_spacing_hz > 0:
            raise ValueError("subcarrier spacing must be positive")
        if not self.carrier_freq_hz > 0:
            raise ValueError("carrier frequency must be positive")
        if self.n_data <= 0:
            raise ValueError(f"no data subcarriers left (N_data = {self.n_data})")

    @property
    def n_data(self) -> int:
        return (self.n_subcarriers - 2 * self.guard_per_side
                - self.dc_nulls - self.pilot_count)

    @property
    def n_null(self) -> int:
        return 2 * self.guard_per_side + self.dc_nulls

    @property
    def symbol_duration(self) -> float:
        """Useful symbol duration T = 1/Δf."""
        return 1.0 / self.subcarrier_spacing_hz

    @property
    def cp_duration(self) -> float:
        return self.cp_len * self.symbol_duration / self.n_subcarriers

    @property
    def total_symbol_duration(self) -> float:
        """T_o = T + T_cp."""
        return self.symbol_duration + self.cp_duration

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GridConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown grid config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "GridConfig":
        data = json.loads(Path(path).read_text())
        # config files may nest the grid under "grid"
        return cls.from_dict(data.get("grid", data))


CONFIG_1 = GridConfig(64, 16, 4, 2, 8, 8)
CONFIG_2 = GridConfig(128, 32, 8, 2, 16, 8)
CONFIG_3 = GridConfig(256, 64, 16, 2, 16, 8)


@dataclass(frozen=True, eq=False)
class ResourceGrid:
    config: GridConfig
    data_idx: np.ndarray
    pilot_idx: np.ndarray
    null_idx: np.ndarray
    perm: np.ndarray
    inv_perm: np.ndarray = field(repr=False)
    pilot_symbols: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.config.n_subcarriers

    @property
    def n_data(self) -> int:
        return len(self.data_idx)

    @property
    def active_idx(self) -> np.ndarray:
        """Data and pilot bins, ascending DFT index."""
        return np.sort(np.concatenate([self.data_idx, self.pilot_idx]))

    def active_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[self.data_idx] = True
        mask[self.pilot_idx] = True
        return mask

    def dense_permutation(self) -> np.ndarray:
        """Dense P with physical = P @ grouped."""
        P = np.zeros((self.n, self.n))
        P[self.perm, np.arange(self.n)] = 1.0
        return P


def centered_to_bin(c, n: int):
    """Centered position c (0 = most negative frequency) -> DFT bin."""
    return (np.asarray(c) - n // 2) % n


def build_grid(config: GridConfig) -> ResourceGrid:
    n = config.n_subcarriers
    ng, ndc, npil = config.guard_per_side, config.dc_nulls, config.pilot_count

    centered = np.arange(n)
    null_c = set(range(ng)) | set(range(n - ng, n))
    dc_start = n // 2 - ndc // 2
    null_c |= set(range(dc_start, dc_start + ndc))
    interior = np.array([c for c in centered if c not in null_c], dtype=int)

    if npil > 0:
        stride = len(interior) // npil
        if stride < 1:
            raise ValueError("pilot spacing < 1: too many pilots for the interior")
        pilot_c = interior[np.arange(npil) * stride]
    else:
        pilot_c = np.array([], dtype=int)
    pilot_set = set(pilot_c.tolist())
    data_c = np.array([c for c in interior if c not in pilot_set], dtype=int)
    null_c = np.array(sorted(null_c), dtype=int)

    data_idx = centered_to_bin(data_c, n)
    pilot_idx = centered_to_bin(pilot_c, n)
    null_idx = centered_to_bin(null_c, n)
    perm = np.concatenate([data_idx, pilot_idx, null_idx]).astype(np.intp)
    if len(np.unique(perm)) != n:
        raise AssertionError("index sets do not partition the band")
    inv_perm = np.empty(n, dtype=np.intp)
    inv_perm[perm] = np.arange(n)

    for a in (data_idx, pilot_idx, null_idx, perm, inv_perm):
        a.setflags(write=False)
    pilots = pilot_sequence(npil)
    pilots.setflags(write=False)
    return ResourceGrid(config, data_idx, pilot_idx, null_idx, perm, inv_perm, pilots)


def pilot_sequence(n: int, seed: int = PILOT_SEED) -> np.ndarray:
    """Fixed unit-modulus QPSK pilot values."""
    rng = np.random.default_rng(seed)
    q = rng.integers(0, 4, size=n)
    return np.exp(1j * (np.pi / 4 + np.pi / 2 * q))


def permute(grid: ResourceGrid, grouped: np.ndarray) -> np.ndarray:
    """Grouped order -> physical order along the last axis."""
    grouped = np.asarray(grouped)
    if grouped.shape[-1] != grid.n:
        raise ValueError(f"expected length {grid.n}, got {grouped.shape[-1]}")
    return grouped[..., grid.inv_perm]


def inverse_permute(grid: ResourceGrid, physical: np.ndarray) -> np.ndarray:
    physical = np.asarray(physical)
    if physical.shape[-1] != grid.n:
        raise ValueError(f"expected length {grid.n}, got {physical.shape[-1]}")
    return physical[..., grid.perm]
