"""End-to-end training of the Householder parameters.

The real parameter vector is laid out block by block, factor by factor as
``[Re v, Im v]``, followed by the phase vector d.  Every loss evaluation is a
pure function of ``(theta, batch seed)``: all randomness of a batch is drawn
up front by :func:`draw_batch`, and both the numpy reference chain and the
torch mirror (used for analytic gradients) consume the same draws.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import equalize, modem, ofdm, sensing
from .channel import crandn, snr_to_noise_var
from .grid import GridConfig, ResourceGrid, build_grid
from .unitary import HouseholderParams, UdataApplier, save_model, split_blocks

log = logging.getLogger(__name__)

TASKS = ("papr", "comm", "sense")


class NumericFailure(RuntimeError):
    pass


@dataclass
class TrainConfig:
    task: str = "papr"
    grid: GridConfig = field(default_factory=GridConfig)
    k_factors: int = 16
    n_blocks: int = 1
    batch_size: int = 256
    steps: int = 500
    learning_rate: float = 0.01
    seed: int = 0
    loss_weight: float = 1.0
    target_db: float = 6.0
    hardness: int = 2
    snr_db: list = field(default_factory=lambda: [10.0])
    modulation: str = "16qam"
    n_paths: int = 3
    gamma0: float = sensing.DEFAULT_GAMMA0
    gradient: str = "analytic"
    fd_step: float = 1e-4
    init_scale: float = 1.0

    def __post_init__(self):
        if isinstance(self.grid, dict):
            self.grid = GridConfig.from_dict(self.grid)
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if self.k_factors < 0 or self.batch_size < 1 or self.steps < 0:
            raise ValueError("counts must be non-negative (batch >= 1)")
        if not self.learning_rate > 0 or not self.fd_step > 0:
            raise ValueError("learning rate and FD step must be positive")
        if self.hardness not in (1, 2):
            raise ValueError("hardness must be 1 or 2")
        if self.gradient not in ("analytic", "fd"):
            raise ValueError("gradient must be 'analytic' or 'fd'")
        self.snr_db = [float(s) for s in np.atleast_1d(self.snr_db)]
        modem.constellation(self.modulation)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = self.grid.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


# parameter vector ----------------------------------------------------------------------

def param_size(k_factors: int, blocks) -> int:
    return sum(2 * k_factors * nb for nb in blocks) + sum(blocks)


def pack(params: HouseholderParams) -> np.ndarray:
    parts = []
    for vb in params.v:
        for row in vb:
            parts.append(row.real)
            parts.append(row.imag)
    parts.append(params.d)
    return np.concatenate([np.asarray(p, dtype=float) for p in parts]) if parts else np.zeros(0)


def unpack(theta, k_factors: int, blocks) -> HouseholderParams:
    theta = np.asarray(theta, dtype=float)
    if theta.size != param_size(k_factors, blocks):
        raise ValueError(f"theta has {theta.size} entries, expected {param_size(k_factors, blocks)}")
    v, i = [], 0
    for nb in blocks:
        vb = np.empty((k_factors, nb), dtype=complex)
        for k in range(k_factors):
            vb[k] = theta[i:i + nb] + 1j * theta[i + nb:i + 2 * nb]
            i += 2 * nb
        v.append(vb)
    return HouseholderParams(k_factors, blocks, v, theta[i:].copy())


def initial_params(cfg: TrainConfig, rng: np.random.Generator | None = None) -> HouseholderParams:
    """Standard complex Gaussian reflection vectors, zero phases."""
    rng = np.random.default_rng([cfg.seed, 0xA11]) if rng is None else rng
    n_data = cfg.grid.n_data
    p = HouseholderParams.random(n_data, cfg.k_factors, cfg.n_blocks, rng)
    if cfg.init_scale != 1.0:
        p.v = [vb * cfg.init_scale for vb in p.v]
    return p


# batches ---------------------------------------------------------------------------------

def batch_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, 0xBA7C4])


def draw_scene(rng: np.random.Generator, cfg: GridConfig, n_paths: int, max_tries: int = 1000):
    """Random sensing scene respecting the delay/Doppler ranges and separation.

    Returns (betas, taus, nus) sorted by decreasing |beta|.
    """
    t_cp, t_o = cfg.cp_duration, cfg.total_symbol_duration
    d_res = 1.0 / (cfg.n_subcarriers * cfg.subcarrier_spacing_hz)
    v_res = 1.0 / (cfg.symbols_per_frame * t_o)
    for _ in range(max_tries):
        taus = rng.uniform(0.1, 0.9, n_paths) * t_cp
        nus = rng.uniform(-0.4, 0.4, n_paths) / t_o
        ok = True
        for i in range(n_paths):
            for j in range(i):
                if abs(taus[i] - taus[j]) < 2 * d_res and abs(nus[i] - nus[j]) < 2 * v_res:
                    ok = False
        if ok:
            break
    else:
        raise RuntimeError("could not draw a separated scene")
    mags = rng.uniform(0.5, 1.0, n_paths)
    betas = mags * np.exp(2j * np.pi * rng.uniform(size=n_paths))
    order = np.argsort(-mags, kind="stable")
    return betas[order], taus[order], nus[order]


def draw_batch(cfg: TrainConfig, grid: ResourceGrid, seed: int) -> dict:
    """All random quantities of one training batch."""
    rng = batch_rng(seed)
    const = modem.constellation(cfg.modulation)
    k = const.bits_per_symbol
    m = grid.config.symbols_per_frame
    if cfg.task == "papr":
        bits = modem.random_bits(rng, (cfg.batch_size, grid.n_data * k))
        return {"bits": bits, "symbols": modem.map_bits(bits, const)}
    if cfg.task == "comm":
        bits = modem.random_bits(rng, (cfg.batch_size, m, grid.n_data * k))
        snr = rng.choice(cfg.snr_db, size=cfg.batch_size)
        nv = snr_to_noise_var(snr)
        h = crandn(rng, (cfg.batch_size, 2))
        lam = np.fft.fft(h, n=grid.n, axis=-1)[:, grid.data_idx]
        noise = crandn(rng, (cfg.batch_size, m, grid.n_data)) * np.sqrt(nv)[:, None, None]
        return {"bits": bits, "symbols": modem.map_bits(bits, const), "noise_var": nv,
                "lam": lam, "noise": noise}
    bits = modem.random_bits(rng, (cfg.batch_size, m, grid.n_data * k))
    snr = rng.choice(cfg.snr_db, size=cfg.batch_size)
    nv = snr_to_noise_var(snr)
    scenes = [draw_scene(rng, grid.config, cfg.n_paths) for _ in range(cfg.batch_size)]
    noise = crandn(rng, (cfg.batch_size, m, grid.n)) * np.sqrt(nv)[:, None, None]
    return {"bits": bits, "symbols": modem.map_bits(bits, const), "noise_var": nv,
            "betas": np.array([s[0] for s in scenes]), "taus": np.array([s[1] for s in scenes]),
            "nus": np.array([s[2] for s in scenes]), "noise": noise}


# numpy reference losses ----------------------------------------------------------------

def papr_task_loss(applier: UdataApplier, grid: ResourceGrid, batch: dict,
                   target_db: float, hardness: int) -> float:
    S = ofdm.build_freq_grid(grid, batch["symbols"])
    S[..., grid.data_idx] = applier.forward(batch["symbols"])
    body = np.fft.ifft(S, axis=-1, norm="ortho")
    return ofdm.papr_loss(body, target_db, hardness)


def comm_task_loss(applier: UdataApplier, grid: ResourceGrid, batch: dict, const) -> float:
    nv = batch["noise_var"][:, None, None]
    lam = batch["lam"][:, None, :]
    Y = lam * applier.forward(batch["symbols"]) + batch["noise"]
    g = equalize.mmse_gains(lam, nv)
    s_hat, nv_eff = equalize.recover(Y, g, applier, batch["noise_var"][:, None, None])
    probs = modem.soft_demap(s_hat, nv_eff, const)
    return modem.bce_loss(batch["bits"], probs)


def sense_estimates(Sbar, Y, grid: ResourceGrid, search: sensing.SearchGrid, n_paths: int,
                    hard: bool = False):
    """(range, velocity) estimates, SIC order, for one frame."""
    mask = np.broadcast_to(grid.active_mask(), Sbar.shape)
    Z = sensing.matched_demod(Y, Sbar, mask)
    found = sensing.sic_extract(Z, search, grid.config, n_paths, mask=mask, hard=hard)
    taus = np.array([f[0] for f in found])
    nus = np.array([f[1] for f in found])
    return sensing.to_range_velocity(taus, nus, grid.config.carrier_freq_hz)


def sense_task_loss(applier: UdataApplier, grid: ResourceGrid, batch: dict,
                    search: sensing.SearchGrid, n_paths: int) -> float:
    cfg = grid.config
    total = 0.0
    S = ofdm.build_freq_grid(grid, batch["symbols"])
    Sbar = S.copy()
    Sbar[..., grid.data_idx] = applier.forward(batch["symbols"])
    A, B = (np.exp(-2j * np.pi * np.arange(cfg.n_subcarriers)[:, None] * cfg.subcarrier_spacing_hz
                   * batch["taus"][:, None, :]),
            np.exp(2j * np.pi * np.arange(cfg.symbols_per_frame)[:, None]
                   * cfg.total_symbol_duration * batch["nus"][:, None, :]))
    for f in range(len(Sbar)):
        resp = np.einsum("l,ml,nl->mn", batch["betas"][f], B[f], A[f])
        Y = Sbar[f] * resp + batch["noise"][f]
        r_hat, v_hat = sense_estimates(Sbar[f], Y, grid, search, n_paths)
        r, v = sensing.to_range_velocity(batch["taus"][f], batch["nus"][f], cfg.carrier_freq_hz)
        total += sensing.sensing_loss(np.stack([r_hat, v_hat], -1), np.stack([r, v], -1))
    return total / len(Sbar)


class Problem:
    """Binds a config to its grid so losses can be evaluated at any theta."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.grid = build_grid(cfg.grid)
        self.blocks = split_blocks(self.grid.n_data, cfg.n_blocks)
        self.const = modem.constellation(cfg.modulation)
        self.search = sensing.default_search_grid(cfg.grid, cfg.gamma0)

    @property
    def size(self) -> int:
        return param_size(self.cfg.k_factors, self.blocks)

    def params(self, theta) -> HouseholderParams:
        return unpack(theta, self.cfg.k_factors, self.blocks)

    def batch(self, seed: int) -> dict:
        return draw_batch(self.cfg, self.grid, seed)

    def loss_on(self, theta, batch: dict) -> float:
        applier = UdataApplier(self.params(theta))
        cfg = self.cfg
        if cfg.task == "papr":
            val = papr_task_loss(applier, self.grid, batch, cfg.target_db, cfg.hardness)
        elif cfg.task == "comm":
            val = comm_task_loss(applier, self.grid, batch, self.const)
        else:
            val = sense_task_loss(applier, self.grid, batch, self.search, cfg.n_paths)
        return cfg.loss_weight * val

    def loss(self, theta, seed: int) -> float:
        return self.loss_on(theta, self.batch(seed))

    def grad(self, theta, seed: int) -> tuple[float, np.ndarray]:
        from . import autodiff
        return autodiff.loss_and_grad(self, np.asarray(theta, dtype=float), self.batch(seed))


def loss_eval(theta, cfg: TrainConfig, seed: int) -> float:
    val = Problem(cfg).loss(theta, seed)
    if not np.isfinite(val):
        raise NumericFailure(f"non-finite loss {val}")
    return val


def fd_gradient(f, theta, h: float = 1e-4) -> np.ndarray:
    """Central differences of a scalar function, one coordinate at a time.

    ``f`` must be deterministic (common random numbers on both sides).
    """
    if not h > 0:
        raise ValueError("step must be positive")
    theta = np.array(theta, dtype=float)
    g = np.empty_like(theta)
    for i in range(theta.size):
        old = theta[i]
        theta[i] = old + h
        fp = f(theta)
        theta[i] = old - h
        fm = f(theta)
        theta[i] = old
        g[i] = (fp - fm) / (2 * h)
    if not np.all(np.isfinite(g)):
        raise NumericFailure("non-finite gradient component")
    return g


def task_fd_gradient(theta, cfg: TrainConfig, seed: int, h: float = 1e-4) -> np.ndarray:
    prob = Problem(cfg)
    batch = prob.batch(seed)
    return fd_gradient(lambda t: prob.loss_on(t, batch), theta, h)


# optimizer ---------------------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(theta, grad, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    grad = np.asarray(grad, dtype=float)
    t = state.t + 1
    m = beta1 * state.m + (1 - beta1) * grad
    v = beta2 * state.v + (1 - beta2) * grad ** 2
    m_hat = m / (1 - beta1 ** t)
    v_hat = v / (1 - beta2 ** t)
    theta = np.asarray(theta, dtype=float) - lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta, AdamState(m, v, t)


@dataclass
class TrainResult:
    params: HouseholderParams
    losses: list
    aborted: bool = False


def train(cfg: TrainConfig, check_unitarity: bool = True, progress=None) -> TrainResult:
    """Adam on fresh batches every step; aborts with the last good model on NaN."""
    prob = Problem(cfg)
    params = initial_params(cfg)
    theta = pack(params)
    state = AdamState.zeros(theta.size)
    losses = []
    probe = np.random.default_rng([cfg.seed, 0xC4EC]).standard_normal(prob.grid.n_data) + 0j
    for step in range(cfg.steps):
        seed = cfg.seed * 1_000_003 + step
        if cfg.gradient == "analytic":
            loss, g = prob.grad(theta, seed)
        else:
            batch = prob.batch(seed)
            loss = prob.loss_on(theta, batch)
            g = fd_gradient(lambda t: prob.loss_on(t, batch), theta, cfg.fd_step)
        if not (np.isfinite(loss) and np.all(np.isfinite(g))):
            log.error("non-finite loss/gradient at step %d; stopping", step)
            return TrainResult(prob.params(theta), losses, aborted=True)
        losses.append(float(loss))
        new_theta, state = adam_step(theta, g, state, cfg.learning_rate)
        if check_unitarity:
            app = UdataApplier(prob.params(new_theta))
            err = np.linalg.norm(app.adjoint(app.forward(probe)) - probe)
            if err > 1e-9 * np.linalg.norm(probe):
                raise NumericFailure(f"unitarity lost at step {step}: {err:.3g}")
        theta = new_theta
        if progress is not None:
            progress(step, loss)
    return TrainResult(prob.params(theta), losses)


def write_loss_trace(losses, path, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        w = csv.writer(fh)
        w.writerow(["step", "loss"])
        for i, l in enumerate(losses):
            w.writerow([i, repr(float(l))])


def save_trained(result: TrainResult, cfg: TrainConfig, path) -> None:
    save_model(result.params, path, extra={"task": cfg.task, "modulation": cfg.modulation})
