"""Monte Carlo curves: PAPR CCDF, uncoded BER/BLER and sensing MSE.

Trials are processed in fixed-size chunks.  Chunk ``c`` of curve point ``s``
draws from ``default_rng([seed, s, c])``, so results depend only on
``(config, seed)`` and never on the worker count.  Early stopping is decided
in chunk order after each wave of parallel chunks, which keeps it
deterministic as well.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.optimize import linear_sum_assignment

from . import equalize, modem, ofdm, sensing
from .channel import TapChannel, apply_channel, crandn, snr_to_noise_var
from .grid import GridConfig, ResourceGrid, pilot_sequence
from .trainer import draw_scene
from .unitary import HouseholderParams, UdataApplier

log = logging.getLogger(__name__)

BASELINES = ("ofdm", "dfts-block", "dfts-comb")


# waveform schemes ------------------------------------------------------------------------

class Scheme:
    """A frame format: which REs carry data and how data is precoded.

    ``data_rows`` are the OFDM symbols that carry payload, ``data_bins`` the
    bins used in those symbols, and ``precode``/``unprecode`` act on the last
    axis of the (..., rows, bins) data array.
    """

    name = "scheme"

    def __init__(self, grid: ResourceGrid):
        self.grid = grid
        self.data_bins = grid.data_idx
        self.data_rows = np.arange(grid.config.symbols_per_frame)

    @property
    def payload_shape(self) -> tuple:
        return (len(self.data_rows), len(self.data_bins))

    def precode(self, x):
        return x

    def unprecode(self, y):
        return y

    @property
    def noise_blocks(self) -> tuple:
        """Groups of bins whose noise is mixed together by ``unprecode``."""
        return (len(self.data_bins),)

    def freq_grid(self, data) -> np.ndarray:
        """Full (..., M, N) transmit grid including pilots."""
        S = ofdm.build_freq_grid(self.grid, np.zeros(data.shape[:-2] + (self.grid.config.symbols_per_frame,
                                                                          self.grid.n_data)))
        S[..., self.data_rows[:, None], self.data_bins] = self.precode(data)
        return S


class OfdmScheme(Scheme):
    name = "ofdm"

    @property
    def noise_blocks(self) -> tuple:
        return (1,) * len(self.data_bins)


class DbuScheme(Scheme):
    name = "dbu"

    def __init__(self, grid: ResourceGrid, params: HouseholderParams):
        super().__init__(grid)
        if params.n_data != grid.n_data:
            raise ValueError(f"model has N_data={params.n_data}, grid has {grid.n_data}")
        self.params = params
        self.applier = UdataApplier(params)

    def precode(self, x):
        return self.applier.forward(x)

    def unprecode(self, y):
        return self.applier.adjoint(y)

    @property
    def noise_blocks(self) -> tuple:
        return tuple(self.params.blocks)


class DftsScheme(Scheme):
    def __init__(self, grid: ResourceGrid, pilot_mode: str):
        super().__init__(grid)
        self.pilot_mode = pilot_mode
        self.name = f"dfts-{pilot_mode}"
        bins, n_sym = ofdm.dfts_layout(grid, pilot_mode)
        self.data_bins = bins
        m = grid.config.symbols_per_frame
        self.data_rows = np.arange(m - n_sym, m)

    def precode(self, x):
        return np.fft.fft(x, axis=-1, norm="ortho")

    def unprecode(self, y):
        return np.fft.ifft(y, axis=-1, norm="ortho")

    def freq_grid(self, data) -> np.ndarray:
        return ofdm.dfts_freq_grid(data, self.grid, self.pilot_mode)


def make_scheme(grid: ResourceGrid, baseline: str | None = None,
                params: HouseholderParams | None = None) -> Scheme:
    if params is not None:
        return DbuScheme(grid, params)
    if baseline == "ofdm":
        return OfdmScheme(grid)
    if baseline in ("dfts-block", "dfts-comb"):
        return DftsScheme(grid, baseline.split("-")[1])
    raise ValueError(f"unknown baseline {baseline!r}; choose from {BASELINES}")


def random_payload(rng, scheme: Scheme, const, n_frames: int):
    rows, bins = scheme.payload_shape
    bits = modem.random_bits(rng, (n_frames, rows, bins * const.bits_per_symbol))
    return bits, modem.map_bits(bits, const)


# parallel chunk runner ----------------------------------------------------------------------

def _run_chunks(fn, args_list, jobs: int):
    if jobs <= 1 or len(args_list) <= 1:
        return [fn(*a) for a in args_list]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, *zip(*args_list)))


def default_jobs() -> int:
    import os
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


# PAPR -------------------------------------------------------------------------------------

@dataclass
class PaprResult:
    samples: np.ndarray
    thresholds: np.ndarray
    ccdf: np.ndarray

    def papr_at(self, prob: float) -> float:
        return ofdm.papr_at_ccdf(self.samples, prob)


def ccdf_table(samples, step_db: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    lo = np.floor(samples.min() / step_db) * step_db
    hi = np.ceil(samples.max() / step_db) * step_db
    thr = np.round(np.arange(lo, hi + step_db / 2, step_db), 10)
    return thr, ofdm.ccdf(samples, thr)


def _papr_chunk(scheme, modulation, frames, oversample, seed, chunk):
    rng = np.random.default_rng([seed, 0, chunk])
    const = modem.constellation(modulation)
    _, sym = random_payload(rng, scheme, const, frames)
    x = ofdm.oversample(scheme.freq_grid(sym), oversample)
    return ofdm.papr_db(x).ravel()


def run_papr_ccdf(scheme: Scheme, trials: int, oversample: int = 1, modulation="16qam",
                  seed: int = 0, jobs: int = 1, chunk_frames: int = 1000) -> PaprResult:
    """Per-symbol PAPR of ``trials`` transmitted OFDM symbols and their CCDF.

    Every transmitted symbol counts, pilot symbols of block-pilot frames
    included.
    """
    if trials < 1000:
        raise ValueError("PAPR CCDF needs at least 1000 symbols")
    m = scheme.grid.config.symbols_per_frame
    frames = -(-trials // m)
    sizes = [min(chunk_frames, frames - i) for i in range(0, frames, chunk_frames)]
    args = [(scheme, modulation, n, oversample, seed, c) for c, n in enumerate(sizes)]
    samples = np.concatenate(_run_chunks(_papr_chunk, args, jobs))[:trials]
    thr, cc = ccdf_table(samples)
    return PaprResult(samples, thr, cc)


# BER / BLER ---------------------------------------------------------------------------------

def clopper_pearson(k: int, n: int, conf: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    a = 1 - conf
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


@dataclass
class LinkPoint:
    snr_db: float
    trials: int
    bits: int
    bit_errors: int
    block_errors: int

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else float("nan")

    @property
    def bler(self) -> float:
        return self.block_errors / self.trials if self.trials else float("nan")

    @property
    def ber_ci(self) -> tuple[float, float]:
        return clopper_pearson(self.bit_errors, self.bits)

    @property
    def bler_ci(self) -> tuple[float, float]:
        return clopper_pearson(self.block_errors, self.trials)


def estimate_channel_ls(Y, scheme: Scheme) -> np.ndarray:
    """Pilot-based channel estimate (..., N) from the received frame (..., M, N)."""
    grid = scheme.grid
    if isinstance(scheme, DftsScheme) and scheme.pilot_mode == "block":
        bins = scheme.data_bins
        ref = np.fft.fft(pilot_sequence(len(bins)), norm="ortho")
        lam = np.zeros(Y.shape[:-2] + (grid.n,), dtype=complex)
        lam[..., bins] = Y[..., 0, bins] / ref
        return lam
    return equalize.ls_channel_estimate(Y, grid).mean(axis=-2)


def link_chunk(scheme, modulation, frames, snr_db, seed, point, chunk, csi="genie"):
    """Simulate ``frames`` frames; returns (bits, bit_errors, block_errors)."""
    rng = np.random.default_rng([seed, point, chunk])
    const = modem.constellation(modulation)
    grid = scheme.grid
    cp = grid.config.cp_len
    bits, sym = random_payload(rng, scheme, const, frames)
    tx = ofdm.modulate(scheme.freq_grid(sym), None, cp)
    taps = crandn(rng, (frames, 2))
    nv = float(snr_to_noise_var(snr_db))
    ch = TapChannel.from_taps(taps, grid.n)
    rx = apply_channel(tx, ch, nv, rng, cp)
    Y = ofdm.demodulate(rx, grid.n, cp)
    lam = ch.freq_response if csi == "genie" else estimate_channel_ls(Y, scheme)
    lam_d = lam[:, None, scheme.data_bins]
    g = equalize.mmse_gains(lam_d, nv)
    Yd = Y[:, scheme.data_rows[:, None], scheme.data_bins]
    s_hat = scheme.unprecode(g * Yd)
    hat_bits = modem.hard_demap(s_hat, const)
    err = hat_bits != bits
    return bits.size, int(err.sum()), int(err.reshape(frames, -1).any(axis=-1).sum())


def run_ber_bler(scheme: Scheme, snr_list, modulation="qpsk", min_errors: int = 100,
                 min_blocks: int = 0, max_blocks: int = 100_000, seed: int = 0, jobs: int = 1,
                 chunk_frames: int = 500, csi: str = "genie") -> list[LinkPoint]:
    """Uncoded BER and frame BLER over two-ray block fading.

    Each SNR point runs until at least ``min_errors`` bit errors and
    ``min_errors`` block errors (and ``min_blocks`` blocks) are collected, or
    ``max_blocks`` blocks have been simulated.
    """
    if csi not in ("genie", "ls"):
        raise ValueError("csi must be 'genie' or 'ls'")
    out = []
    for p, snr in enumerate(snr_list):
        blocks = nbits = bit_err = blk_err = 0
        chunk = 0
        done = False
        while not done:
            wave = []
            for _ in range(max(jobs, 1)):
                n = min(chunk_frames, max_blocks - blocks - sum(w[2] for w in wave))
                if n <= 0:
                    break
                wave.append((scheme, modulation, n, float(snr), seed, p, chunk, csi))
                chunk += 1
            if not wave:
                break
            for args, (nb, be, ke) in zip(wave, _run_chunks(link_chunk, wave, jobs)):
                blocks += args[2]
                nbits += nb
                bit_err += be
                blk_err += ke
                if (bit_err >= min_errors and blk_err >= min_errors and blocks >= min_blocks) \
                        or blocks >= max_blocks:
                    done = True
                    break
        out.append(LinkPoint(float(snr), blocks, nbits, bit_err, blk_err))
    return out


def write_link_csv(points, path, metric: str = "bler", header: str | None = None) -> None:
    """CSV with the interval of ``metric`` ('ber' or 'bler') in ci_lo/ci_hi."""
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        w = csv.writer(fh)
        w.writerow(["snr_db", "trials", "bit_errors", "ber", "block_errors", "bler", "ci_lo", "ci_hi"])
        for pt in points:
            lo, hi = pt.ber_ci if metric == "ber" else pt.bler_ci
            w.writerow([pt.snr_db, pt.trials, pt.bit_errors, repr(pt.ber), pt.block_errors,
                        repr(pt.bler), repr(lo), repr(hi)])


# sensing ------------------------------------------------------------------------------------

@dataclass
class SensePoint:
    snr_db: float
    trials: int
    true_rv: np.ndarray     # (trials, L, 2) range [m], velocity [m/s], strongest path first
    est_rv: np.ndarray      # (trials, L, 2) estimates matched to the true paths
    range_ci: tuple = field(default=(np.nan, np.nan))
    vel_ci: tuple = field(default=(np.nan, np.nan))

    @property
    def range_sq(self) -> np.ndarray:
        return (self.est_rv[..., 0] - self.true_rv[..., 0]) ** 2

    @property
    def vel_sq(self) -> np.ndarray:
        return (self.est_rv[..., 1] - self.true_rv[..., 1]) ** 2

    @property
    def range_mse(self) -> float:
        return float(self.range_sq.mean())

    @property
    def vel_mse(self) -> float:
        return float(self.vel_sq.mean())


def bootstrap_ci(per_trial, rng, n_boot: int = 1000, conf: float = 0.95) -> tuple[float, float]:
    x = np.asarray(per_trial, dtype=float)
    idx = rng.integers(0, len(x), size=(n_boot, len(x)))
    means = x[idx].mean(axis=1)
    a = (1 - conf) / 2
    return float(np.quantile(means, a)), float(np.quantile(means, 1 - a))


def match_paths(est_rv, true_rv) -> np.ndarray:
    """Permutation of estimates minimizing the total squared (range, velocity) error."""
    cost = ((est_rv[:, None, :] - true_rv[None, :, :]) ** 2).sum(-1)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(len(true_rv), dtype=int)
    perm[cols] = rows
    return perm


def sensing_trial(scheme: Scheme, const, cfg: GridConfig, search, n_paths: int, nv: float,
                  rng, hard: bool):
    """One frame: (true, matched estimate) arrays of shape (L, 2) in (m, m/s)."""
    betas, taus, nus = draw_scene(rng, cfg, n_paths)
    _, sym = random_payload(rng, scheme, const, 1)
    Sbar = scheme.freq_grid(sym)[0]
    n = np.arange(cfg.n_subcarriers)
    m = np.arange(cfg.symbols_per_frame)
    A = np.exp(-2j * np.pi * n[:, None] * cfg.subcarrier_spacing_hz * taus[None, :])
    B = np.exp(2j * np.pi * m[:, None] * cfg.total_symbol_duration * nus[None, :])
    Y = Sbar * ((B * betas) @ A.T) + crandn(rng, Sbar.shape, nv)
    mask = np.broadcast_to(Sbar != 0, Sbar.shape) & active_mask_2d(scheme)
    Z = sensing.matched_demod(Y, Sbar, mask)
    found = sensing.sic_extract(Z, search, cfg, n_paths, mask=mask, hard=hard)
    est = np.stack(sensing.to_range_velocity(np.array([f[0] for f in found]),
                                             np.array([f[1] for f in found]),
                                             cfg.carrier_freq_hz), -1)
    tru = np.stack(sensing.to_range_velocity(taus, nus, cfg.carrier_freq_hz), -1)
    return tru, est[match_paths(est, tru)]


def active_mask_2d(scheme: Scheme) -> np.ndarray:
    g = scheme.grid
    return np.broadcast_to(g.active_mask(), (g.config.symbols_per_frame, g.n))


def _sense_chunk(scheme, modulation, n_trials, snr_db, n_paths, gamma, hard, seed, point, chunk):
    rng = np.random.default_rng([seed, point, chunk])
    const = modem.constellation(modulation)
    cfg = scheme.grid.config
    search = sensing.default_search_grid(cfg, gamma)
    nv = float(snr_to_noise_var(snr_db))
    tru, est = zip(*(sensing_trial(scheme, const, cfg, search, n_paths, nv, rng, hard)
                     for _ in range(n_trials)))
    return np.array(tru), np.array(est)


def run_sensing(scheme: Scheme, snr_list, trials: int, n_paths: int = 3, modulation="qpsk",
                seed: int = 0, jobs: int = 1, hard: bool = False,
                gamma: float = sensing.DEFAULT_GAMMA0, chunk_trials: int = 50) -> list[SensePoint]:
    """Range and velocity MSE over random separated multipath scenes.

    Estimated paths are matched to the true ones by minimum total squared
    error before scoring.  Intervals are percentile bootstrap over trials.
    """
    out = []
    for p, snr in enumerate(snr_list):
        sizes = [min(chunk_trials, trials - i) for i in range(0, trials, chunk_trials)]
        args = [(scheme, modulation, n, float(snr), n_paths, gamma, hard, seed, p, c)
                for c, n in enumerate(sizes)]
        res = _run_chunks(_sense_chunk, args, jobs)
        pt = SensePoint(float(snr), trials, np.concatenate([a for a, _ in res]),
                        np.concatenate([b for _, b in res]))
        boot = np.random.default_rng([seed, p, 0xB007])
        pt.range_ci = bootstrap_ci(pt.range_sq.mean(axis=1), boot)
        pt.vel_ci = bootstrap_ci(pt.vel_sq.mean(axis=1), boot)
        out.append(pt)
    return out


def write_sense_csv(points, path, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        w = csv.writer(fh)
        w.writerow(["snr_db", "trials", "range_mse", "vel_mse",
                    "range_ci_lo", "range_ci_hi", "vel_ci_lo", "vel_ci_hi"])
        for pt in points:
            w.writerow([pt.snr_db, pt.trials, repr(pt.range_mse), repr(pt.vel_mse),
                        repr(pt.range_ci[0]), repr(pt.range_ci[1]),
                        repr(pt.vel_ci[0]), repr(pt.vel_ci[1])])


def write_sense_paths_csv(points, path, header: str | None = None) -> None:
    """One row per trial and path (paths in order of true strength)."""
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        w = csv.writer(fh)
        w.writerow(["snr_db", "trial", "path", "range_true_m", "range_est_m", "vel_true_mps", "vel_est_mps"])
        for pt in points:
            for t in range(pt.trials):
                for l in range(pt.true_rv.shape[1]):
                    w.writerow([pt.snr_db, t, l, repr(float(pt.true_rv[t, l, 0])),
                                repr(float(pt.est_rv[t, l, 0])), repr(float(pt.true_rv[t, l, 1])),
                                repr(float(pt.est_rv[t, l, 1]))])


def papr_csv(result: PaprResult, path, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        w = csv.writer(fh)
        w.writerow(["threshold_db", "ccdf"])
        for t, c in zip(result.thresholds, result.ccdf):
            w.writerow([f"{t:.6g}", f"{c:.6g}"])
