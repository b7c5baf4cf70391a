"""Two-ray Rayleigh block fading, AWGN, and the delay-Doppler sensing channel."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import GridConfig


def crandn(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian samples with the given variance."""
    s = np.sqrt(var / 2.0)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Per-trial generator, independent of evaluation order."""
    return np.random.default_rng([seed, trial])


def snr_to_noise_var(snr_db) -> np.ndarray:
    """sigma_0^2 for unit symbol energy."""
    return 10.0 ** (-np.asarray(snr_db, dtype=float) / 10.0)


@dataclass
class TapChannel:
    taps: np.ndarray            # (..., L)
    freq_response: np.ndarray   # (..., N)

    @classmethod
    def from_taps(cls, taps, n_subcarriers: int) -> "TapChannel":
        taps = np.asarray(taps, dtype=complex)
        if taps.shape[-1] > n_subcarriers:
            raise ValueError("more taps than subcarriers")
        return cls(taps, np.fft.fft(taps, n=n_subcarriers, axis=-1))


def draw_tworay(rng: np.random.Generator, n_subcarriers: int, size=()) -> TapChannel:
    """Taps at sample delays 0 and 1, each CN(0, 1), independently."""
    size = (size,) if isinstance(size, int) else tuple(size)
    return TapChannel.from_taps(crandn(rng, size + (2,)), n_subcarriers)


def apply_channel(samples, ch: TapChannel, noise_var: float,
                  rng: np.random.Generator | None = None, cp_len: int | None = None) -> np.ndarray:
    """Linear convolution over the CP-extended symbol stream plus AWGN.

    ``samples`` is (..., M, N + N_cp); the taps broadcast over the leading
    axes (one channel per frame).
    """
    x = np.asarray(samples, dtype=complex)
    h = np.asarray(ch.taps, dtype=complex)
    n_taps = h.shape[-1]
    if cp_len is not None and n_taps > cp_len + 1:
        raise ValueError(f"{n_taps} taps exceed the CP memory ({cp_len} samples)")
    lead, (m, sym_len) = x.shape[:-2], x.shape[-2:]
    stream = x.reshape(lead + (m * sym_len,))
    hb = np.broadcast_to(h, lead + (n_taps,))
    y = hb[..., :1] * stream
    for l in range(1, n_taps):
        y[..., l:] += hb[..., l:l + 1] * stream[..., :-l]
    if noise_var > 0:
        if rng is None:
            raise ValueError("noise requested without an RNG")
        y = y + crandn(rng, y.shape, noise_var)
    return y.reshape(x.shape)


# sensing -------------------------------------------------------------------------

@dataclass
class Echo:
    beta: complex
    tau: float      # seconds
    nu: float       # Hz


@dataclass
class PathSet:
    paths: list

    def __len__(self):
        return len(self.paths)

    @property
    def betas(self) -> np.ndarray:
        return np.array([p.beta for p in self.paths], dtype=complex)

    @property
    def taus(self) -> np.ndarray:
        return np.array([p.tau for p in self.paths], dtype=float)

    @property
    def nus(self) -> np.ndarray:
        return np.array([p.nu for p in self.paths], dtype=float)

    def validate(self, cfg: GridConfig) -> None:
        for p in self.paths:
            if not 0 <= p.tau < cfg.cp_duration:
                raise ValueError(f"delay {p.tau} outside [0, T_cp)")
            if abs(p.nu) >= 1.0 / (2 * cfg.total_symbol_duration):
                raise ValueError(f"Doppler {p.nu} is ambiguous")

    def to_dict(self) -> dict:
        return {"paths": [{"beta": [float(np.real(p.beta)), float(np.imag(p.beta))],
                           "tau_s": float(p.tau), "nu_hz": float(p.nu)} for p in self.paths]}

    @classmethod
    def from_dict(cls, d: dict) -> "PathSet":
        return cls([Echo(complex(*p["beta"]), float(p["tau_s"]), float(p["nu_hz"]))
                    for p in d["paths"]])

    @classmethod
    def load(cls, path) -> "PathSet":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


def steering(tau, nu, cfg: GridConfig) -> tuple[np.ndarray, np.ndarray]:
    """Delay steering a(tau) (length N) and Doppler steering b(nu) (length M)."""
    n = np.arange(cfg.n_subcarriers)
    m = np.arange(cfg.symbols_per_frame)
    a = np.exp(-2j * np.pi * n * cfg.subcarrier_spacing_hz * tau)
    b = np.exp(2j * np.pi * m * cfg.total_symbol_duration * nu)
    return a, b


def sensing_observe(Sbar, paths: PathSet, noise_var: float, cfg: GridConfig,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Y[m, n] = sum_l beta_l Sbar[m, n] a_n(tau_l) b_m(nu_l) + W[m, n].

    ``Sbar`` is the (M, N) effective grid in DFT bin order; row m is symbol m.
    Subcarrier n here is the DFT bin index, so the delay phase follows the
    bin number.
    """
    Sbar = np.asarray(Sbar, dtype=complex)
    resp = np.zeros_like(Sbar)
    for p in paths.paths:
        a, b = steering(p.tau, p.nu, cfg)
        resp += p.beta * np.outer(b, a)
    Y = Sbar * resp
    if noise_var > 0:
        if rng is None:
            raise ValueError("noise requested without an RNG")
        Y = Y + crandn(rng, Y.shape, noise_var)
    return Y
