"""One-tap MMSE equalization and symbol recovery through U_data^H."""

from __future__ import annotations

import logging

import numpy as np

from .grid import ResourceGrid
from .unitary import UdataApplier

log = logging.getLogger(__name__)


def mmse_gains(lam, noise_var) -> np.ndarray:
    """g = conj(lambda) / (|lambda|^2 + sigma^2); zero where both vanish."""
    lam = np.asarray(lam, dtype=complex)
    nv = np.asarray(noise_var, dtype=float)
    if np.any(nv < 0):
        raise ValueError("noise variance must be non-negative")
    den = np.abs(lam) ** 2 + nv
    dead = den == 0
    if np.any(dead):
        log.warning("%d subcarrier(s) with zero gain and zero noise; gain set to 0", int(dead.sum()))
    return np.where(dead, 0.0, lam.conj() / np.where(dead, 1.0, den))


def effective_noise_var(g, noise_var, blocks) -> np.ndarray:
    """Per-subcarrier post-recovery noise variance for soft demapping.

    ``noise_var`` must broadcast against ``g``.

    After U_data^H the noise is mixed within each block, so each entry gets
    the block mean of sigma^2 |g_n|^2 (a diagonal approximation).
    """
    p = np.asarray(noise_var, dtype=float) * np.abs(g) ** 2
    out = np.empty_like(p)
    lo = 0
    for nb in blocks:
        out[..., lo:lo + nb] = p[..., lo:lo + nb].mean(axis=-1, keepdims=True)
        lo += nb
    return out


def recover(Y_data, g, udata: UdataApplier, noise_var: float = 0.0):
    """s_hat = U_data^H (g * Y_data) and the per-entry effective noise variance."""
    Y_data = np.asarray(Y_data, dtype=complex)
    g = np.asarray(g)
    if Y_data.shape[-1] != udata.n_data or g.shape[-1] != udata.n_data:
        raise ValueError("data width does not match the applier")
    s_hat = udata.adjoint(g * Y_data)
    nv = effective_noise_var(np.broadcast_to(g, Y_data.shape), noise_var, udata.params.blocks)
    return s_hat, nv


def ls_channel_estimate(Y, grid: ResourceGrid) -> np.ndarray:
    """Least-squares estimate on the comb pilots, linearly interpolated.

    Y is (..., N) in bin order; interpolation runs over centered frequency so
    the DC gap does not wrap.  Edges are held constant.
    """
    Y = np.asarray(Y, dtype=complex)
    if len(grid.pilot_idx) == 0:
        raise ValueError("grid has no pilots")
    n = grid.n
    pc = (grid.pilot_idx - n // 2) % n
    order = np.argsort(pc)
    pc = pc[order]
    h_p = (Y[..., grid.pilot_idx] / grid.pilot_symbols)[..., order]
    allc = np.arange(n)
    flat = h_p.reshape(-1, len(pc))
    est = np.stack([np.interp(allc, pc, r.real) + 1j * np.interp(allc, pc, r.imag) for r in flat])
    est = est.reshape(h_p.shape[:-1] + (n,))
    bins = (allc - n // 2) % n
    out = np.empty_like(est)
    out[..., bins] = est
    return out
