"""Gaussian naturalistic-distribution model and reproducible RNG streams.

The environment randomness is modeled as X ~ N(mean, cov). Everything the
rest of the package needs from the distribution lives here: log-density,
the large-deviations rate I(x) = (x-mean)' cov^-1 (x-mean), sampling, and
the crude-Monte-Carlo sample-size bound that motivates importance sampling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ContractError

_LOG_2PI = math.log(2.0 * math.pi)
_U64 = 0xFFFFFFFFFFFFFFFF


def _mix64(a: int, b: int) -> int:
    # splitmix64 finalizer over the pair; spreads derived stream ids so
    # substreams of different parents never collide in practice.
    x = (a * 0x9E3779B97F4A7C15 + b + 1) & _U64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _U64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _U64
    x ^= x >> 31
    return x


@dataclass(frozen=True)
class RngStream:
    """Counter-based RNG stream: identical (seed, stream) replays identically.

    Backed by Philox keyed on (seed, stream), so disjoint stream ids give
    statistically independent sequences and sampling can be sharded across
    workers without changing results.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= _U64) or not (0 <= self.stream <= _U64):
            raise ContractError("seed and stream must be unsigned 64-bit")

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, k: int) -> "RngStream":
        """Derive the k-th child stream deterministically."""
        return RngStream(self.seed, _mix64(self.stream, k))


@dataclass(frozen=True)
class GaussianNature:
    """The naturalistic distribution N(mean, cov) with a cached Cholesky factor.

    cov must be symmetric positive definite; a failed factorization is a hard
    construction error (no silent jitter, which would corrupt rate values fed
    to the dominating-point optimizer). All density arithmetic is in log
    space so that dimensions in the hundreds do not underflow.
    """

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ContractError("cov must be a square matrix")
        if cov.shape[0] != mean.size:
            raise ContractError(
                f"mean has length {mean.size} but cov is {cov.shape[0]}x{cov.shape[1]}"
            )
        if not (np.isfinite(mean).all() and np.isfinite(cov).all()):
            raise ContractError("mean and cov must be finite")
        scale = np.abs(cov).max()
        if scale == 0.0 or np.abs(cov - cov.T).max() > 1e-12 * scale:
            raise ContractError("cov must be symmetric to 1e-12 relative")
        try:
            chol = np.linalg.cholesky(0.5 * (cov + cov.T))
        except np.linalg.LinAlgError as exc:
            raise ContractError(f"cov is not positive definite: {exc}") from exc
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.size

    def _check_dim(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ContractError(
                f"point has dimension {x.shape[-1]}, expected {self.dim}"
            )
        return x

    def whiten(self, x: np.ndarray) -> np.ndarray:
        """Map x to y = chol^-1 (x - mean); rate(x) == ||y||^2."""
        x = self._check_dim(x)
        delta = np.atleast_2d(x) - self.mean
        y = solve_triangular(self.chol, delta.T, lower=True).T
        return y[0] if x.ndim == 1 else y

    def unwhiten(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.mean + y @ self.chol.T

    def rate(self, x: np.ndarray) -> float | np.ndarray:
        """Large-deviations rate I(x) = (x-mean)' cov^-1 (x-mean).

        Computed via triangular solve, never an explicit inverse.
        """
        y = self.whiten(x)
        return np.sum(np.square(y), axis=-1)

    def log_density(self, x: np.ndarray) -> float | np.ndarray:
        """ln phi(x; mean, cov)."""
        return -0.5 * self.dim * _LOG_2PI - self.log_det_chol - 0.5 * self.rate(x)

    @property
    def log_det_chol(self) -> float:
        return float(np.sum(np.log(np.diag(self.chol))))

    def sample(self, rng: RngStream, n: int) -> np.ndarray:
        """Draw n i.i.d. rows from N(mean, cov); deterministic given rng."""
        if n < 0:
            raise ContractError("sample count must be nonnegative")
        z = rng.generator().standard_normal((n, self.dim))
        return self.mean + z @ self.chol.T

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "GaussianNature":
        return cls(np.asarray(obj["mean"], dtype=float),
                   np.asarray(obj["cov"], dtype=float))

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, s: str) -> "GaussianNature":
        return cls.from_json(json.loads(s))


def standard_nature(d: int) -> GaussianNature:
    return GaussianNature(np.zeros(d), np.eye(d))


def required_sample_size(mu: float, eps: float, delta: float) -> int:
    """Crude-Monte-Carlo sample size guaranteeing P(|mu_hat - mu| > eps*mu) <= delta.

    Markov/Chebyshev bound n >= Var(Z)/(mu^2 delta eps^2) with the Bernoulli
    variance mu(1-mu) substituted, i.e. ceil((1-mu)/(mu delta eps^2)).
    """
    if not (0.0 < mu < 1.0):
        raise ContractError("mu must lie in (0, 1)")
    if not (0.0 < eps < 1.0):
        raise ContractError("eps must lie in (0, 1)")
    if not (0.0 < delta <= 1.0):
        raise ContractError("delta must lie in (0, 1]")
    return math.ceil((1.0 - mu) / (mu * delta * eps * eps))
