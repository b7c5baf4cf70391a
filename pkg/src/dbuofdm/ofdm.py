"""Transmit/receive chain x = IDFT(U s) + CP, PAPR metrics and DFT-s-OFDM baselines.

Frequency grids are stored symbol-major: shape ``(..., M, N)`` with the last
axis in DFT bin order.  All DFTs are unitary (``norm="ortho"``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import modem
from .grid import ResourceGrid, pilot_sequence
from .unitary import UnitaryTransform


@dataclass
class Frame:
    freq_grid: np.ndarray        # (..., M, N) physical order, before U
    time_samples: np.ndarray     # (..., M, N + N_cp)
    payload_bits: np.ndarray     # (..., M, N_data * bits_per_symbol)


def build_freq_grid(grid: ResourceGrid, data_symbols: np.ndarray) -> np.ndarray:
    """Place data symbols (..., M, N_data) and the fixed pilots on an N-wide grid."""
    data_symbols = np.asarray(data_symbols)
    if data_symbols.shape[-1] != grid.n_data:
        raise ValueError(f"expected {grid.n_data} data symbols per OFDM symbol")
    S = np.zeros(data_symbols.shape[:-1] + (grid.n,), dtype=complex)
    S[..., grid.data_idx] = data_symbols
    S[..., grid.pilot_idx] = grid.pilot_symbols
    return S


def random_frame(grid: ResourceGrid, const: modem.Constellation, rng: np.random.Generator,
                 transform: UnitaryTransform | None = None, lead: tuple = ()) -> Frame:
    m = grid.config.symbols_per_frame
    bits = modem.random_bits(rng, lead + (m, grid.n_data * const.bits_per_symbol))
    S = build_freq_grid(grid, modem.map_bits(bits, const))
    return Frame(S, modulate(S, transform, grid.config.cp_len), bits)


def add_cp(body: np.ndarray, cp_len: int) -> np.ndarray:
    if cp_len == 0:
        return body.copy()
    return np.concatenate([body[..., -cp_len:], body], axis=-1)


def modulate(S, transform: UnitaryTransform | None = None, cp_len: int = 0) -> np.ndarray:
    """Per OFDM symbol: unitary IDFT of U s, then a cyclic prefix."""
    S = np.asarray(S, dtype=complex)
    if transform is not None:
        if S.shape[-1] != transform.grid.n:
            raise ValueError("grid width does not match the transform")
        if np.any(S[..., transform.grid.null_idx] != 0):
            raise ValueError("null subcarriers must carry zero")
        S = transform.apply(S)
    body = np.fft.ifft(S, axis=-1, norm="ortho")
    return add_cp(body, cp_len)


def demodulate(y, n_subcarriers: int, cp_len: int) -> np.ndarray:
    """Strip the CP and apply the unitary DFT per symbol."""
    y = np.asarray(y)
    if y.shape[-1] != n_subcarriers + cp_len:
        raise ValueError(f"expected symbols of length {n_subcarriers + cp_len}, got {y.shape[-1]}")
    return np.fft.fft(y[..., cp_len:], axis=-1, norm="ortho")


def papr_db(x, axis: int = -1) -> np.ndarray:
    """10 log10(peak power / mean power) along ``axis``."""
    p = np.abs(np.asarray(x)) ** 2
    if p.shape[axis] == 0:
        raise ValueError("empty signal")
    mean = p.mean(axis=axis)
    if np.any(mean == 0):
        raise ValueError("zero-energy signal has no PAPR")
    return 10.0 * np.log10(p.max(axis=axis) / mean)


def ccdf(papr_samples, thresholds) -> np.ndarray:
    """Fraction of samples strictly above each threshold."""
    s = np.sort(np.asarray(papr_samples, dtype=float).ravel())
    if s.size == 0:
        raise ValueError("no PAPR samples")
    t = np.asarray(thresholds, dtype=float)
    return (s.size - np.searchsorted(s, t, side="right")) / s.size


def papr_at_ccdf(papr_samples, prob: float) -> float:
    """Smallest threshold whose CCDF is <= prob (the usual read-off point)."""
    s = np.sort(np.asarray(papr_samples, dtype=float).ravel())
    # round first so (1 - 0.05) * 100 lands on 95, not 95.00000000000001
    k = int(np.ceil(round((1.0 - prob) * s.size, 9))) - 1
    return float(s[min(max(k, 0), s.size - 1)])


def papr_loss(bodies, target_db: float, hardness: int = 2) -> float:
    """Mean of ReLU(PAPR - target)^p over all OFDM symbol bodies (CP excluded)."""
    if hardness not in (1, 2):
        raise ValueError("hardness must be 1 or 2")
    pd = papr_db(bodies)
    if pd.size == 0:
        raise ValueError("empty batch")
    e = np.maximum(pd - target_db, 0.0)
    return float(np.mean(e ** hardness))


def oversample(S, factor: int) -> np.ndarray:
    """Time samples at L x Nyquist: zero-pad the centered spectrum, scale by sqrt(L)."""
    if int(factor) != factor or factor < 1:
        raise ValueError("oversampling factor must be a positive integer")
    S = np.asarray(S, dtype=complex)
    n = S.shape[-1]
    if factor == 1:
        return np.fft.ifft(S, axis=-1, norm="ortho")
    big = np.zeros(S.shape[:-1] + (factor * n,), dtype=complex)
    half = n // 2
    big[..., :half] = S[..., :half]
    big[..., factor * n - (n - half):] = S[..., half:]
    return np.sqrt(factor) * np.fft.ifft(big, axis=-1, norm="ortho")


# DFT-spread OFDM baselines -----------------------------------------------------

def dfts_layout(grid: ResourceGrid, pilot_mode: str) -> tuple[np.ndarray, int]:
    """Bins that carry spread data and the number of data-bearing symbols."""
    m = grid.config.symbols_per_frame
    if pilot_mode == "comb":
        return grid.data_idx, m
    if pilot_mode == "block":
        if m < 2:
            raise ValueError("block pilots need at least two symbols per frame")
        active = np.concatenate([grid.data_idx, grid.pilot_idx])
        # ascending frequency order, matching the data_idx convention
        centered = (active - grid.n // 2) % grid.n
        return active[np.argsort(centered)], m - 1
    raise ValueError(f"pilot_mode must be 'block' or 'comb', got {pilot_mode!r}")


def dfts_freq_grid(data, grid: ResourceGrid, pilot_mode: str) -> np.ndarray:
    """Frequency grid (..., M, N) of a DFT-s-OFDM frame.

    comb:  every symbol spreads N_data symbols onto the data bins; the comb
           pilots are punctured into their own bins.
    block: symbol 0 is a DFT-spread pilot sequence over all active bins; the
           remaining M-1 symbols spread N_data + N_p data symbols each.
    """
    bins, n_sym = dfts_layout(grid, pilot_mode)
    data = np.asarray(data, dtype=complex)
    if data.shape[-2:] != (n_sym, len(bins)):
        raise ValueError(f"expected data shape (..., {n_sym}, {len(bins)}), got {data.shape}")
    spread = np.fft.fft(data, axis=-1, norm="ortho")
    lead = data.shape[:-2]
    S = np.zeros(lead + (grid.config.symbols_per_frame, grid.n), dtype=complex)
    if pilot_mode == "comb":
        S[..., bins] = spread
        S[..., grid.pilot_idx] = grid.pilot_symbols
    else:
        S[..., 0, bins] = np.fft.fft(pilot_sequence(len(bins)), norm="ortho")
        S[..., 1:, bins] = spread
    return S


def dfts_modulate(data, grid: ResourceGrid, pilot_mode: str) -> np.ndarray:
    return modulate(dfts_freq_grid(data, grid, pilot_mode), None, grid.config.cp_len)
