"""Delay-Doppler estimation from a known OFDM frame.

Observation matrices are (M, N): row m is OFDM symbol m, column n is DFT bin n.
A path contributes ``beta * b_m(nu) * a_n(tau)`` with the steering vectors of
:func:`dbuofdm.channel.steering`; the correlation therefore uses ``conj(a)``
on the delay axis so an on-grid path sums coherently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import steering
from .grid import GridConfig

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_GAMMA0 = 50.0


@dataclass(frozen=True, eq=False)
class SearchGrid:
    taus: np.ndarray       # (N_tau,) seconds, ascending
    nus: np.ndarray        # (N_nu,) Hz, ascending
    gamma: float = DEFAULT_GAMMA0
    auto_scale: bool = True  # effective temperature gamma / max(L)

    def __post_init__(self):
        for g in (self.taus, self.nus):
            if len(g) == 0 or np.any(np.diff(g) <= 0):
                raise ValueError("search grids must be nonempty and strictly increasing")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @property
    def tau_step(self) -> float:
        return float(self.taus[1] - self.taus[0]) if len(self.taus) > 1 else 0.0

    @property
    def nu_step(self) -> float:
        return float(self.nus[1] - self.nus[0]) if len(self.nus) > 1 else 0.0


def default_search_grid(cfg: GridConfig, gamma: float = DEFAULT_GAMMA0,
                        tau_factor: int = 4, nu_factor: int = 4) -> SearchGrid:
    """4 N_cp delays over [0, T_cp) and 4 M Dopplers over [-1/(2T_o), 1/(2T_o))."""
    n_tau = max(tau_factor * cfg.cp_len, 1)
    n_nu = nu_factor * cfg.symbols_per_frame
    taus = np.arange(n_tau) * (cfg.cp_duration / n_tau)
    span = 1.0 / cfg.total_symbol_duration
    nus = -span / 2 + np.arange(n_nu) * (span / n_nu)
    return SearchGrid(taus, nus, gamma)


def steering_matrices(search: SearchGrid, cfg: GridConfig) -> tuple[np.ndarray, np.ndarray]:
    """A (N, N_tau) = conj delay steering columns, B (M, N_nu) = Doppler steering columns."""
    n = np.arange(cfg.n_subcarriers)[:, None]
    m = np.arange(cfg.symbols_per_frame)[:, None]
    A = np.exp(2j * np.pi * n * cfg.subcarrier_spacing_hz * search.taus[None, :])
    B = np.exp(2j * np.pi * m * cfg.total_symbol_duration * search.nus[None, :])
    return A, B


def matched_demod(Y, Sbar, mask=None) -> np.ndarray:
    """Z = Y conj(Sbar) / |Sbar| on active REs, zero elsewhere."""
    Y = np.asarray(Y, dtype=complex)
    Sbar = np.asarray(Sbar, dtype=complex)
    mag = np.abs(Sbar)
    if mask is None:
        mask = mag > 0
    mask = np.asarray(mask, dtype=bool) & (mag > 0)
    safe = np.where(mask, mag, 1.0)
    return np.where(mask, Y * Sbar.conj() / safe, 0.0)


def likelihood_map(Z, search: SearchGrid, cfg: GridConfig, mats=None) -> np.ndarray:
    """L[j, i] = |b(nu_j)^H Z conj(a(tau_i))|^2, shape (N_nu, N_tau)."""
    A, B = mats if mats is not None else steering_matrices(search, cfg)
    return np.abs(B.conj().T @ np.asarray(Z) @ A) ** 2


def soft_argmax(L, search: SearchGrid, gamma: float | None = None, hard: bool = False):
    """Softmax-weighted expectation of (tau, nu) over the search grid.

    Returns ``(tau_hat, nu_hat, p)`` with ``p`` shaped like ``L``.  With
    ``hard=True`` the weights collapse onto the grid argmax.
    """
    L = np.asarray(L, dtype=float)
    if hard:
        p = np.zeros_like(L)
        p[np.unravel_index(np.argmax(L), L.shape)] = 1.0
    else:
        g = search.gamma if gamma is None else gamma
        top = L.max()
        if search.auto_scale and gamma is None:
            g = g / top if top > 0 else 0.0
        w = np.exp(g * (L - top))
        p = w / w.sum()
    tau_hat = float(np.sum(p.sum(axis=0) * search.taus))
    nu_hat = float(np.sum(p.sum(axis=1) * search.nus))
    return tau_hat, nu_hat, p


def sic_extract(Z, search: SearchGrid, cfg: GridConfig, n_paths: int, mask=None,
                hard: bool = False, return_residual: bool = False):
    """Successive interference cancellation: strongest path first.

    Each round estimates (tau, nu) from the residual's likelihood map, fits
    beta by least squares over the active REs and subtracts that path.
    """
    if n_paths < 1:
        raise ValueError("need at least one path")
    Z = np.array(Z, dtype=complex)
    mask = (np.abs(Z) > 0) if mask is None else np.asarray(mask, dtype=bool)
    Z = np.where(mask, Z, 0.0)
    count = mask.sum()
    mats = steering_matrices(search, cfg)
    out = []
    for _ in range(n_paths):
        L = likelihood_map(Z, search, cfg, mats)
        tau, nu, _ = soft_argmax(L, search, hard=hard)
        a, b = steering(tau, nu, cfg)
        template = np.outer(b, a) * mask
        beta = np.vdot(template, Z) / count if count else 0.0
        Z = Z - beta * template
        out.append((tau, nu, complex(beta)))
    if return_residual:
        return out, Z
    return out


def to_range_velocity(tau, nu, carrier_freq: float):
    """r = c tau / 2, v = lambda_c nu / 2."""
    if not carrier_freq > 0:
        raise ValueError("carrier frequency must be positive")
    lam = SPEED_OF_LIGHT / carrier_freq
    return SPEED_OF_LIGHT * np.asarray(tau) / 2.0, lam * np.asarray(nu) / 2.0


def sensing_loss(est_rv, true_rv) -> float:
    """(1/2L) sum[(r_hat - r)^2 + (v_hat - v)^2], paths matched by position."""
    est = np.asarray(est_rv, dtype=float).reshape(-1, 2)
    tru = np.asarray(true_rv, dtype=float).reshape(-1, 2)
    if est.shape != tru.shape:
        raise ValueError("estimate and truth path counts differ")
    return float(np.sum((est - tru) ** 2) / (2 * len(est)))
