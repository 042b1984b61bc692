"""Interval bound propagation and big-M values for the mixed-integer encoding.

The classifier constraint g(x) >= kappa is linearized with one binary per
hidden neuron; the binaries need finite big-M bounds, which come from
propagating the search box through the net with interval arithmetic. The
paper leaves the choice of M open ("some practical upper-bound value");
here M = max(upper, -lower, 1) per neuron, from bounds that are sound by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import GaussianNature
from ..errors import ContractError
from ..relunet import ReluNet


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        if lo.size != hi.size:
            raise ContractError("box lo/hi dimensions disagree")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ContractError("box must be finite")
        if (lo > hi).any():
            raise ContractError("box has lo > hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    def contains(self, x: np.ndarray, slack: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool((x >= self.lo - slack).all() and (x <= self.hi + slack).all())

    def on_boundary(self, x: np.ndarray, tol: float = 1e-7) -> bool:
        x = np.asarray(x, dtype=float)
        scale = np.maximum(1.0, self.hi - self.lo)
        return bool((np.minimum(x - self.lo, self.hi - x) <= tol * scale).any())


def default_box(nature: GaussianNature, radius: float = 10.0) -> Box:
    """mean +- radius * per-coordinate sigma; r=10 leaves ~1e-23 mass outside."""
    sigma = np.sqrt(np.diag(nature.cov))
    return Box(nature.mean - radius * sigma, nature.mean + radius * sigma)


@dataclass(frozen=True)
class BigMEncoding:
    """Per-neuron pre-activation intervals and big-M values, all layers."""

    box: Box
    pre_lo: tuple[np.ndarray, ...]
    pre_hi: tuple[np.ndarray, ...]
    big_m: tuple[np.ndarray, ...]

    @property
    def score_lo(self) -> float:
        return float(self.pre_lo[-1][0])

    @property
    def score_hi(self) -> float:
        return float(self.pre_hi[-1][0])

    def hidden_status(self) -> list[np.ndarray]:
        """Per hidden layer: +1 forced active, -1 forced inactive, 0 undecided."""
        out = []
        for lo, hi in zip(self.pre_lo[:-1], self.pre_hi[:-1]):
            status = np.zeros(lo.size, dtype=np.int8)
            status[lo >= 0.0] = 1
            status[hi <= 0.0] = -1
            out.append(status)
        return out


def propagate_bounds(net: ReluNet, box: Box) -> BigMEncoding:
    """Layer-by-layer interval arithmetic over the input box.

    Sound: no in-box forward pass can leave the intervals.
    """
    if box.dim != net.input_dim:
        raise ContractError(f"box dimension {box.dim} != net input {net.input_dim}")
    lo, hi = box.lo, box.hi
    pre_lo, pre_hi, big_m = [], [], []
    for i, (W, b) in enumerate(net.layers):
        Wp, Wn = np.maximum(W, 0.0), np.minimum(W, 0.0)
        p_lo = Wp @ lo + Wn @ hi + b
        p_hi = Wp @ hi + Wn @ lo + b
        pre_lo.append(p_lo)
        pre_hi.append(p_hi)
        big_m.append(np.maximum(np.maximum(p_hi, -p_lo), 1.0))
        if i < len(net.layers) - 1:
            lo, hi = np.maximum(p_lo, 0.0), np.maximum(p_hi, 0.0)
    return BigMEncoding(box, tuple(pre_lo), tuple(pre_hi), tuple(big_m))
