"""Gray-mapped square QAM, exact soft demapping and the bit-wise BCE loss.

Labels are I/Q separable: the first half of each symbol's bits selects the
in-phase level, the second half the quadrature level, each with a binary
reflected Gray code over levels ordered from most negative to most positive,
and bit 0 of each half mapping to the *positive* side.  For QPSK this gives
``00 -> (+1+1j)/sqrt(2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

CLAMP_EPS = 1e-12

_NAMES = {"qpsk": 4, "4qam": 4, "16qam": 16, "64qam": 64}


@dataclass(frozen=True, eq=False)
class Constellation:
    order: int
    points: np.ndarray       # (order,) complex, unit mean energy
    labels: np.ndarray       # (order, bits_per_symbol) uint8, MSB first

    @property
    def bits_per_symbol(self) -> int:
        return self.labels.shape[1]

    @property
    def name(self) -> str:
        return "qpsk" if self.order == 4 else f"{self.order}qam"


def _gray_axis(bits: int) -> tuple[np.ndarray, np.ndarray]:
    """Amplitude levels and their Gray labels for one axis.

    Label 0 sits on the most positive level so that the all-zero word maps
    to the (+,+) corner.
    """
    m = 1 << bits
    levels = np.arange(-(m - 1), m, 2, dtype=float)[::-1]   # +max .. -max
    codes = np.arange(m) ^ (np.arange(m) >> 1)
    lab = ((codes[:, None] >> np.arange(bits - 1, -1, -1)) & 1).astype(np.uint8)
    return levels, lab


@lru_cache(maxsize=None)
def constellation(order) -> Constellation:
    """Square Gray QAM of the given order (4, 16, 64 or a name like '16qam')."""
    if isinstance(order, str):
        try:
            order = _NAMES[order.lower()]
        except KeyError:
            raise ValueError(f"unknown modulation {order!r}") from None
    if order not in (4, 16, 64):
        raise ValueError(f"unsupported modulation order {order}")
    k = int(np.log2(order)) // 2
    levels, lab = _gray_axis(k)
    m = len(levels)
    ii, qq = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    ii, qq = ii.ravel(), qq.ravel()
    pts = levels[ii] + 1j * levels[qq]
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    labels = np.concatenate([lab[ii], lab[qq]], axis=1)
    # index points by their integer label so map_bits is a table lookup
    weights = 1 << np.arange(2 * k - 1, -1, -1)
    order_idx = np.argsort(labels @ weights)
    pts, labels = pts[order_idx], labels[order_idx]
    pts.setflags(write=False)
    labels.setflags(write=False)
    return Constellation(order, pts, labels)


def map_bits(bits, const: Constellation) -> np.ndarray:
    """Map a bit array (last axis multiple of log2(order)) to symbols."""
    bits = np.asarray(bits)
    if bits.size and not np.isin(bits, (0, 1)).all():
        raise ValueError("bits must be 0/1")
    k = const.bits_per_symbol
    if bits.shape[-1] % k:
        raise ValueError(f"bit count {bits.shape[-1]} not divisible by {k}")
    groups = bits.reshape(*bits.shape[:-1], -1, k).astype(np.int64)
    idx = groups @ (1 << np.arange(k - 1, -1, -1))
    return const.points[idx]


def hard_demap(y, const: Constellation) -> np.ndarray:
    """Minimum-distance decisions, returned as bits along the last axis."""
    y = np.asarray(y)
    # separable I/Q slicing would be faster; nearest-point search is exact
    idx = np.argmin(np.abs(y[..., None] - const.points) ** 2, axis=-1)
    bits = const.labels[idx]
    return bits.reshape(*y.shape[:-1], -1)


def soft_demap(y, noise_var, const: Constellation) -> np.ndarray:
    """Exact posterior P(bit = 1 | y) for every bit, clamped to [eps, 1-eps].

    ``noise_var`` broadcasts against ``y``.  Output has the bit axis folded
    into the last axis, matching :func:`map_bits`.
    """
    y = np.asarray(y)
    nv = np.broadcast_to(np.asarray(noise_var, dtype=float), y.shape)
    if np.any(nv <= 0):
        raise ValueError("noise variance must be positive")
    metric = -np.abs(y[..., None] - const.points) ** 2 / nv[..., None]
    metric -= metric.max(axis=-1, keepdims=True)
    w = np.exp(metric)
    w /= w.sum(axis=-1, keepdims=True)
    p1 = w @ const.labels.astype(float)
    p1 = np.clip(p1, CLAMP_EPS, 1.0 - CLAMP_EPS)
    return p1.reshape(*y.shape[:-1], -1)


def bce_loss(bits, probs) -> float:
    """Mean binary cross-entropy in bits (base-2 logs)."""
    d = np.asarray(bits, dtype=float).ravel()
    p = np.clip(np.asarray(probs, dtype=float).ravel(), CLAMP_EPS, 1 - CLAMP_EPS)
    if d.shape != p.shape:
        raise ValueError("bits and probabilities differ in length")
    return float(-np.mean(d * np.log2(p) + (1 - d) * np.log2(1 - p)))


def random_bits(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, 2, size=shape, dtype=np.uint8)
