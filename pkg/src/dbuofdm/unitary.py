"""Householder-chain parameterization of the data-subcarrier unitary.

Within each block b of sizes ``blocks``::

    U_b = D_b  H_1 H_2 ... H_K,     H_i = I - 2 u_i u_i^H,  u_i = conj(v_i)/||v_i||

so the forward map applies H_K first and the phase rotation last; the
adjoint conjugates the phases first and then applies H_1 ... H_K.  The
global transform acts as the identity on pilot and null subcarriers.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .grid import ResourceGrid

log = logging.getLogger(__name__)

MODEL_VERSION = 1
NEAR_ZERO = 1e-12
MATERIALIZE_CAP = 1024


@dataclass(eq=False)
class HouseholderParams:
    """Raw trainable state.  ``v[b]`` is a (K, N_b) complex array."""

    k_factors: int
    blocks: tuple
    v: list
    d: np.ndarray

    def __post_init__(self):
        self.blocks = tuple(int(b) for b in self.blocks)
        if not self.blocks or any(b < 1 for b in self.blocks):
            raise ValueError("need B >= 1 blocks of positive size")
        if self.k_factors < 0:
            raise ValueError("K must be >= 0")
        self.d = np.asarray(self.d, dtype=float).reshape(-1)
        if len(self.d) != self.n_data:
            raise ValueError(f"phase vector has {len(self.d)} entries, expected {self.n_data}")
        if len(self.v) != len(self.blocks):
            raise ValueError("one reflection stack per block expected")
        vs = []
        for nb, vb in zip(self.blocks, self.v):
            vb = np.asarray(vb, dtype=complex).reshape(self.k_factors, nb)
            vs.append(vb)
        self.v = vs

    @property
    def n_data(self) -> int:
        return sum(self.blocks)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.blocks)])

    @classmethod
    def identity(cls, n_data: int, k_factors: int = 0, n_blocks: int = 1):
        """Phases zero; with K > 0 the reflections come in equal pairs (H H = I)."""
        if k_factors % 2:
            raise ValueError("an identity chain needs an even K")
        blocks = split_blocks(n_data, n_blocks)
        v = [np.ones((k_factors, nb), dtype=complex) for nb in blocks]
        return cls(k_factors, blocks, v, np.zeros(n_data))

    @classmethod
    def random(cls, n_data: int, k_factors: int, n_blocks: int = 1,
               rng: np.random.Generator | None = None, phase_scale: float = 0.0):
        """i.i.d. standard complex Gaussian reflection vectors."""
        rng = np.random.default_rng() if rng is None else rng
        blocks = split_blocks(n_data, n_blocks)
        v = [(rng.standard_normal((k_factors, nb)) + 1j * rng.standard_normal((k_factors, nb)))
             / np.sqrt(2) for nb in blocks]
        d = phase_scale * rng.standard_normal(n_data) if phase_scale else np.zeros(n_data)
        return cls(k_factors, blocks, v, d)

    def copy(self) -> "HouseholderParams":
        return HouseholderParams(self.k_factors, self.blocks,
                                 [vb.copy() for vb in self.v], self.d.copy())

    # serialization ------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": MODEL_VERSION,
            "n_data": self.n_data,
            "k_factors": self.k_factors,
            "blocks": list(self.blocks),
            "v": [[[float(z.real), float(z.imag)] for z in row]
                  for vb in self.v for row in vb],
            "d": [float(x) for x in self.d],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HouseholderParams":
        if data.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {data.get('version')!r}")
        k = int(data["k_factors"])
        blocks = [int(b) for b in data["blocks"]]
        rows = data["v"]
        if len(rows) != k * len(blocks):
            raise ValueError("model file: v has wrong number of vectors")
        v, i = [], 0
        for nb in blocks:
            vb = np.array([[complex(re, im) for re, im in rows[i + j]] for j in range(k)],
                          dtype=complex).reshape(k, nb)
            i += k
            v.append(vb)
        params = cls(k, blocks, v, np.array(data["d"], dtype=float))
        if params.n_data != int(data["n_data"]):
            raise ValueError("model file: n_data does not match blocks")
        return params


def split_blocks(n_data: int, n_blocks: int) -> tuple:
    """Contiguous partition of n_data into n_blocks near-equal groups."""
    if not 1 <= n_blocks <= n_data:
        raise ValueError(f"B must be in [1, {n_data}], got {n_blocks}")
    base, extra = divmod(n_data, n_blocks)
    return tuple(base + (1 if b < extra else 0) for b in range(n_blocks))


def save_model(params: HouseholderParams, path, extra: dict | None = None) -> None:
    data = params.to_dict()
    if extra:
        data.update(extra)
    Path(path).write_text(json.dumps(data, indent=1) + "\n")


def load_model(path) -> HouseholderParams:
    data = json.loads(Path(path).read_text())
    return HouseholderParams.from_dict(data)


def householder_apply(v, x) -> np.ndarray:
    """Reflect x through the hyperplane orthogonal to u = conj(v)/||v||."""
    v = np.asarray(v, dtype=complex)
    x = np.asarray(x, dtype=complex)
    if v.shape[-1] != x.shape[-1]:
        raise ValueError("v and x lengths differ")
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ValueError("reflection vector must be nonzero")
    u = v.conj() / nrm
    alpha = np.asarray(x @ u.conj())
    return x - 2.0 * alpha[..., None] * u


def normalized_rows(vb: np.ndarray) -> np.ndarray:
    """u_i = conj(v_i)/||v_i|| per row; near-zero rows become zero (identity)."""
    nrm = np.linalg.norm(vb, axis=-1)
    small = nrm < NEAR_ZERO
    if np.any(small):
        log.warning("%d reflection vector(s) near zero; treating as identity", int(small.sum()))
    safe = np.where(small, 1.0, nrm)
    u = vb.conj() / safe[:, None]
    u[small] = 0.0
    return np.ascontiguousarray(u)


class UdataApplier:
    """Matrix-free U_data and U_data^H over the last axis."""

    def __init__(self, params: HouseholderParams):
        self.params = params
        self.offsets = params.offsets
        self.u = [normalized_rows(vb) for vb in params.v]
        self.u_rev = [np.ascontiguousarray(u[::-1]) for u in self.u]
        self.phase = np.exp(1j * params.d)

    @property
    def n_data(self) -> int:
        return self.params.n_data

    def _run(self, x, adjoint: bool) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        if x.shape[-1] != self.n_data:
            raise ValueError(f"expected length {self.n_data}, got {x.shape[-1]}")
        lead = x.shape[:-1]
        flat = np.array(x.reshape(-1, self.n_data), dtype=complex, order="C")
        if adjoint:
            flat *= self.phase.conj()
        for b, (lo, hi) in enumerate(zip(self.offsets[:-1], self.offsets[1:])):
            rows = self.u[b] if adjoint else self.u_rev[b]
            if len(rows):
                seg = np.ascontiguousarray(flat[:, lo:hi])
                flat[:, lo:hi] = kernels.householder_chain(seg, rows)
        if not adjoint:
            flat *= self.phase
        return flat.reshape(*lead, self.n_data)

    def forward(self, x) -> np.ndarray:
        return self._run(x, adjoint=False)

    def adjoint(self, x) -> np.ndarray:
        return self._run(x, adjoint=True)


def build_udata_applier(params: HouseholderParams) -> UdataApplier:
    return UdataApplier(params)


def materialize(applier: UdataApplier, adjoint: bool = False) -> np.ndarray:
    """Dense matrix whose column j is the applier acting on e_j."""
    n = applier.n_data
    if n > MATERIALIZE_CAP:
        raise ValueError(f"refusing to materialize {n}x{n} (cap {MATERIALIZE_CAP})")
    eye = np.eye(n, dtype=complex)
    cols = applier.adjoint(eye) if adjoint else applier.forward(eye)
    return cols.T


class UnitaryTransform:
    """U = P blkdiag(U_data, I, I) P^T acting on physical-order vectors."""

    def __init__(self, udata: UdataApplier, grid: ResourceGrid, direction: str = "forward"):
        if udata.n_data != grid.n_data:
            raise ValueError(f"applier size {udata.n_data} != grid N_data {grid.n_data}")
        if direction not in ("forward", "adjoint"):
            raise ValueError(direction)
        self.udata = udata
        self.grid = grid
        self.direction = direction

    @property
    def H(self) -> "UnitaryTransform":
        flip = "adjoint" if self.direction == "forward" else "forward"
        return UnitaryTransform(self.udata, self.grid, flip)

    def apply(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=complex)
        if s.shape[-1] != self.grid.n:
            raise ValueError(f"expected length {self.grid.n}, got {s.shape[-1]}")
        out = s.copy()
        idx = self.grid.data_idx
        f = self.udata.forward if self.direction == "forward" else self.udata.adjoint
        out[..., idx] = f(s[..., idx])
        return out

    __call__ = apply


def assemble_global(udata: UdataApplier, grid: ResourceGrid) -> UnitaryTransform:
    return UnitaryTransform(udata, grid)


def identity_transform(grid: ResourceGrid) -> UnitaryTransform:
    return UnitaryTransform(UdataApplier(HouseholderParams.identity(grid.n_data)), grid)
