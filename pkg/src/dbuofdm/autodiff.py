"""Torch mirror of the training losses, used only for reverse-mode gradients.

Each function reproduces the numpy reference chain in :mod:`dbuofdm.trainer`
operation by operation (double precision, same clamps, same softmax
temperature rule) on a batch drawn by :func:`dbuofdm.trainer.draw_batch`.
"""

from __future__ import annotations

import numpy as np
import torch

from . import sensing
from .modem import CLAMP_EPS
from .unitary import NEAR_ZERO

CDTYPE = torch.complex128
RDTYPE = torch.float64


def _c(x) -> torch.Tensor:
    return torch.as_tensor(np.array(x, dtype=complex), dtype=CDTYPE)


def unpack_torch(theta: torch.Tensor, k_factors: int, blocks):
    """Per-block unit reflection rows (application order 1..K) and the phases."""
    us, i = [], 0
    for nb in blocks:
        rows = []
        for _ in range(k_factors):
            v = torch.complex(theta[i:i + nb], theta[i + nb:i + 2 * nb])
            i += 2 * nb
            nrm = torch.linalg.vector_norm(v)
            if float(nrm.detach()) < NEAR_ZERO:
                rows.append(torch.zeros_like(v))
            else:
                rows.append(v.conj() / nrm)
        us.append(rows)
    return us, theta[i:]


def udata_apply(x: torch.Tensor, us, d: torch.Tensor, blocks, adjoint: bool = False):
    """U_data (or its adjoint) over the last axis of a complex tensor."""
    phase = torch.polar(torch.ones_like(d), d)
    if adjoint:
        x = x * phase.conj()
    segs, lo = [], 0
    for b, nb in enumerate(blocks):
        seg = x[..., lo:lo + nb]
        rows = us[b] if adjoint else us[b][::-1]
        for u in rows:
            alpha = seg @ u.conj()
            seg = seg - 2.0 * alpha[..., None] * u
        segs.append(seg)
        lo += nb
    x = torch.cat(segs, dim=-1) if segs else x
    if not adjoint:
        x = x * phase
    return x


def _scatter(base: np.ndarray, idx: np.ndarray, values: torch.Tensor) -> torch.Tensor:
    out = _c(base).clone()
    out[..., torch.as_tensor(np.array(idx))] = values
    return out


def papr_loss(prob, us, d, batch) -> torch.Tensor:
    from . import ofdm
    grid, cfg = prob.grid, prob.cfg
    y = udata_apply(_c(batch["symbols"]), us, d, prob.blocks)
    S = _scatter(ofdm.build_freq_grid(grid, batch["symbols"]), grid.data_idx, y)
    body = torch.fft.ifft(S, dim=-1, norm="ortho")
    p = body.real ** 2 + body.imag ** 2
    pd = 10.0 * torch.log10(p.max(dim=-1).values / p.mean(dim=-1))
    e = torch.clamp(pd - cfg.target_db, min=0.0)
    return torch.mean(e ** cfg.hardness)


def _soft_demap(y, nv, const) -> torch.Tensor:
    pts = _c(const.points)
    diff = y[..., None] - pts
    metric = -(diff.real ** 2 + diff.imag ** 2) / nv[..., None]
    metric = metric - metric.max(dim=-1, keepdim=True).values
    w = torch.exp(metric)
    w = w / w.sum(dim=-1, keepdim=True)
    p1 = w @ torch.as_tensor(const.labels.astype(float), dtype=RDTYPE)
    p1 = torch.clamp(p1, CLAMP_EPS, 1.0 - CLAMP_EPS)
    return p1.reshape(*y.shape[:-1], -1)


def comm_loss(prob, us, d, batch) -> torch.Tensor:
    nv0 = torch.as_tensor(batch["noise_var"], dtype=RDTYPE)[:, None, None]
    lam = _c(batch["lam"])[:, None, :]
    Y = lam * udata_apply(_c(batch["symbols"]), us, d, prob.blocks) + _c(batch["noise"])
    g = lam.conj() / (lam.real ** 2 + lam.imag ** 2 + nv0)
    s_hat = udata_apply(g * Y, us, d, prob.blocks, adjoint=True)
    # block-averaged effective noise variance
    p = nv0 * (g.real ** 2 + g.imag ** 2)
    p = p.expand(Y.shape)
    parts, lo = [], 0
    for nb in prob.blocks:
        parts.append(p[..., lo:lo + nb].mean(dim=-1, keepdim=True).expand(*p.shape[:-1], nb))
        lo += nb
    nv = torch.cat(parts, dim=-1)
    probs = torch.clamp(_soft_demap(s_hat, nv, prob.const), CLAMP_EPS, 1 - CLAMP_EPS)
    bits = torch.as_tensor(batch["bits"].astype(float), dtype=RDTYPE)
    return -torch.mean(bits * torch.log2(probs) + (1 - bits) * torch.log2(1 - probs))


def sense_loss(prob, us, d, batch) -> torch.Tensor:
    from . import ofdm
    grid, cfg, search = prob.grid, prob.cfg.grid, prob.search
    n_paths = prob.cfg.n_paths
    y = udata_apply(_c(batch["symbols"]), us, d, prob.blocks)
    Sbar = _scatter(ofdm.build_freq_grid(grid, batch["symbols"]), grid.data_idx, y)
    n = np.arange(cfg.n_subcarriers)
    m = np.arange(cfg.symbols_per_frame)
    df, t_o = cfg.subcarrier_spacing_hz, cfg.total_symbol_duration
    A = np.exp(-2j * np.pi * n[:, None] * df * batch["taus"][:, None, :])
    B = np.exp(2j * np.pi * m[:, None] * t_o * batch["nus"][:, None, :])
    resp = _c(np.einsum("fl,fml,fnl->fmn", batch["betas"], B, A))
    Y = Sbar * resp + _c(batch["noise"])
    mask = torch.as_tensor(np.broadcast_to(grid.active_mask(), Sbar.shape[-2:]).copy())
    mag = torch.abs(Sbar)
    live = mask & (mag > 0)
    Z = torch.where(live, Y * Sbar.conj() / torch.where(live, mag, torch.ones_like(mag)),
                    torch.zeros_like(Y))
    count = float(mask.sum())
    As, Bs = (_c(M) for M in sensing.steering_matrices(search, cfg))
    taus = torch.as_tensor(search.taus, dtype=RDTYPE)
    nus = torch.as_tensor(search.nus, dtype=RDTYPE)
    nt = torch.as_tensor(n, dtype=RDTYPE)
    mt = torch.as_tensor(m, dtype=RDTYPE)
    maskc = mask.to(CDTYPE)
    est_t, est_n = [], []
    for _ in range(n_paths):
        C = Bs.conj().T @ Z @ As
        L = C.real ** 2 + C.imag ** 2                       # (F, N_nu, N_tau)
        top = L.amax(dim=(-2, -1), keepdim=True)
        gam = search.gamma / top if search.auto_scale else search.gamma
        w = torch.exp(gam * (L - top))
        p = w / w.sum(dim=(-2, -1), keepdim=True)
        tau = (p.sum(dim=-2) * taus).sum(dim=-1)
        nu = (p.sum(dim=-1) * nus).sum(dim=-1)
        a = torch.exp(torch.complex(torch.zeros_like(tau[:, None] * nt),
                                    -2 * np.pi * df * tau[:, None] * nt))
        b = torch.exp(torch.complex(torch.zeros_like(nu[:, None] * mt),
                                    2 * np.pi * t_o * nu[:, None] * mt))
        tmpl = b[:, :, None] * a[:, None, :] * maskc
        beta = (tmpl.conj() * Z).sum(dim=(-2, -1)) / count
        Z = Z - beta[:, None, None] * tmpl
        est_t.append(tau)
        est_n.append(nu)
    c = sensing.SPEED_OF_LIGHT
    lam_c = c / cfg.carrier_freq_hz
    r_hat = c * torch.stack(est_t, -1) / 2
    v_hat = lam_c * torch.stack(est_n, -1) / 2
    r = torch.as_tensor(c * batch["taus"] / 2, dtype=RDTYPE)
    v = torch.as_tensor(lam_c * batch["nus"] / 2, dtype=RDTYPE)
    per = ((r_hat - r) ** 2 + (v_hat - v) ** 2).sum(dim=-1) / (2 * n_paths)
    return per.mean()


LOSSES = {"papr": papr_loss, "comm": comm_loss, "sense": sense_loss}


def loss_and_grad(prob, theta: np.ndarray, batch: dict) -> tuple[float, np.ndarray]:
    t = torch.tensor(theta, dtype=RDTYPE, requires_grad=True)
    us, d = unpack_torch(t, prob.cfg.k_factors, prob.blocks)
    loss = prob.cfg.loss_weight * LOSSES[prob.cfg.task](prob, us, d, batch)
    loss.backward()
    return float(loss.detach()), t.grad.numpy().copy()
