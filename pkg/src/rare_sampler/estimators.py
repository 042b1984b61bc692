"""Mixture proposals, likelihood ratios, and the sampling estimators.

Sampling is sharded into blocks aligned with the trace checkpoints; block i
always draws from rng.substream(i) and partial sums are merged in block
order with exact (fsum) accumulation, so estimates are identical no matter
how many workers execute the blocks.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .core import GaussianNature, RngStream
from .domset import DominatingSet
from .errors import ContractError
from .relunet import ReluNet

CHECKPOINT_START = 100
CHECKPOINT_RATIO = 1.3


@dataclass(frozen=True)
class MixtureProposal:
    """Uniform Gaussian mixture centered at the dominating points.

    Components share the nature's covariance; only the means move.
    """

    means: np.ndarray  # (k, d)
    nature: GaussianNature

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        if means.shape[0] < 1:
            raise ContractError("mixture needs at least one component")
        if means.shape[1] != self.nature.dim:
            raise ContractError("component means must match the nature dimension")
        object.__setattr__(self, "means", means)

    @classmethod
    def from_dominating_set(cls, nature: GaussianNature,
                            domset: DominatingSet) -> "MixtureProposal":
        if len(domset) == 0:
            raise ContractError("cannot build a proposal from an empty dominating set")
        return cls(domset.points, nature)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]


def sample_mixture(prop: MixtureProposal, rng: RngStream, n: int
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Draw n points and their component ids; deterministic given rng.

    With a single component no selection randomness is consumed, so the
    draws coincide with nature.sample at the same stream when the component
    sits at the nature mean.
    """
    if n < 0:
        raise ContractError("sample count must be nonnegative")
    gen = rng.generator()
    d = prop.nature.dim
    z = gen.standard_normal((n, d))
    k = prop.n_components
    ids = np.zeros(n, dtype=np.int64) if k == 1 else gen.integers(0, k, size=n)
    X = prop.means[ids] + z @ prop.nature.chol.T
    return X, ids


def log_likelihood_ratio(nature: GaussianNature, prop: MixtureProposal,
                         x: np.ndarray) -> float | np.ndarray:
    """ln L(x) = ln phi(x; mean, cov) - ln p_tilde(x), fully in log space."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    log_p = nature.log_density(X)
    # phi(x; a, cov) = phi(x - a + mean; mean, cov): reuse the cached factor
    comp_logs = np.stack([
        nature.log_density(X - a + nature.mean) for a in prop.means
    ])
    log_mix = logsumexp(comp_logs, axis=0) - math.log(prop.n_components)
    out = log_p - log_mix
    return float(out[0]) if np.asarray(x).ndim == 1 else out


@dataclass
class EstimateTrace:
    """Running estimate, second moment, and relative error at checkpoints."""

    method: str
    ns: np.ndarray
    estimates: np.ndarray
    second_moments: np.ndarray
    res: np.ndarray

    def __post_init__(self):
        if not np.all(np.diff(self.ns) > 0):
            raise ContractError("checkpoint counts must be strictly increasing")

    def rows(self) -> list[tuple[int, float, float]]:
        return [(int(n), float(e), float(r))
                for n, e, r in zip(self.ns, self.estimates, self.res)]


@dataclass
class RunResult:
    method: str
    estimate: float
    re: float
    n_used: int
    seed: int
    trace: EstimateTrace
    domset: DominatingSet | None = None
    extras: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "estimate": self.estimate,
            "re": None if math.isinf(self.re) else self.re,
            "n": self.n_used,
            "seed": self.seed,
            "trace": [[n, e, None if math.isinf(r) else r]
                      for n, e, r in self.trace.rows()],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def relative_error(count: int, mean: float, mean_of_squares: float) -> float:
    """RE_n = s_n / (sqrt(n) mu_hat_n); inf sentinel when the estimate is 0."""
    if count < 2:
        raise ContractError("relative error needs n >= 2")
    if mean <= 0.0:
        return math.inf
    var = max(0.0, (mean_of_squares - mean * mean) * count / (count - 1))
    return math.sqrt(var / count) / mean


def geometric_checkpoints(n: int, start: int = CHECKPOINT_START,
                          ratio: float = CHECKPOINT_RATIO) -> np.ndarray:
    """Geometric checkpoint schedule ending exactly at n."""
    if n < 1:
        raise ContractError("n must be >= 1")
    cps = []
    c = start
    while c < n:
        cps.append(c)
        c = math.ceil(c * ratio)
    cps.append(n)
    return np.asarray(cps, dtype=np.int64)


def _run_blocks(method: str, term_block, n: int, rng: RngStream,
                checkpoints: np.ndarray | None, threads: int = 1) -> EstimateTrace:
    if n < 1:
        raise ContractError("sample count must be >= 1")
    cps = geometric_checkpoints(n) if checkpoints is None else \
        np.asarray(checkpoints, dtype=np.int64)
    if cps[-1] != n:
        raise ContractError("last checkpoint must equal n")
    bounds = np.concatenate([[0], cps])
    sizes = np.diff(bounds)

    def block_stats(i: int) -> tuple[float, float]:
        terms = term_block(rng.substream(i), int(sizes[i]))
        return float(np.sum(terms)), float(np.sum(np.square(terms)))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            stats = list(pool.map(block_stats, range(sizes.size)))
    else:
        stats = [block_stats(i) for i in range(sizes.size)]

    estimates = np.empty(cps.size)
    second = np.empty(cps.size)
    res = np.empty(cps.size)
    sums: list[float] = []
    sqs: list[float] = []
    for j in range(cps.size):
        sums.append(stats[j][0])
        sqs.append(stats[j][1])
        count = int(cps[j])
        mean = math.fsum(sums) / count
        mean_sq = math.fsum(sqs) / count
        estimates[j] = mean
        second[j] = mean_sq
        res[j] = relative_error(count, mean, mean_sq) if count >= 2 else math.inf
    return EstimateTrace(method, cps, estimates, second, res)


def _result(trace: EstimateTrace, rng: RngStream, domset=None, **extras) -> RunResult:
    return RunResult(
        method=trace.method,
        estimate=float(trace.estimates[-1]),
        re=float(trace.res[-1]),
        n_used=int(trace.ns[-1]),
        seed=rng.seed,
        trace=trace,
        domset=domset,
        extras=extras,
    )


def estimate_nmc(indicator, nature: GaussianNature, n: int, rng: RngStream,
                 checkpoints=None, threads: int = 1) -> RunResult:
    """Crude Monte Carlo: mean of the indicator over draws from the nature."""

    def block(sub: RngStream, size: int) -> np.ndarray:
        X = nature.sample(sub, size)
        return np.asarray(indicator(X), dtype=float)

    return _result(_run_blocks("nmc", block, n, rng, checkpoints, threads), rng)


def estimate_deep_is(indicator, prop: MixtureProposal, nature: GaussianNature,
                     n2: int, rng: RngStream, checkpoints=None,
                     threads: int = 1, domset=None) -> RunResult:
    """Importance sampling against the true-set indicator.

    Terms are L(X) * 1{X in S} over mixture draws; the indicator queries the
    true set, not the learned surrogate.
    """

    def block(sub: RngStream, size: int) -> np.ndarray:
        X, _ = sample_mixture(prop, sub, size)
        weights = np.exp(log_likelihood_ratio(nature, prop, X))
        return weights * np.asarray(indicator(X), dtype=float)

    return _result(_run_blocks("deep_is", block, n2, rng, checkpoints, threads),
                   rng, domset)


def estimate_robust(net: ReluNet, kappa_hat: float, prop: MixtureProposal,
                    nature: GaussianNature, n2: int, rng: RngStream,
                    checkpoints=None, threads: int = 1, domset=None,
                    method: str = "robust") -> RunResult:
    """Importance sampling against the surrogate indicator g(x) >= kappa_hat."""

    def block(sub: RngStream, size: int) -> np.ndarray:
        X, _ = sample_mixture(prop, sub, size)
        weights = np.exp(log_likelihood_ratio(nature, prop, X))
        return weights * (net.scores(X) >= kappa_hat)

    return _result(_run_blocks(method, block, n2, rng, checkpoints, threads),
                   rng, domset, kappa_hat=kappa_hat)


def stop_at(trace: EstimateTrace, target_re: float, min_n: int = 2) -> int | None:
    """First checkpoint n >= min_n with a positive estimate and RE <= target."""
    for n, est, re_ in zip(trace.ns, trace.estimates, trace.res):
        if n >= min_n and est > 0.0 and re_ <= target_re:
            return int(n)
    return None


def acc_rate(n_nmc: int, n_method: int) -> float:
    """Acceleration: NMC sample size over the method's sample size."""
    if n_method <= 0:
        raise ContractError("method sample size must be positive")
    return n_nmc / n_method


def deg_conservativeness(estimate: float, mu_ref: float) -> float:
    """Estimate over the reference probability; 1 unbiased, > 1 conservative."""
    if mu_ref <= 0:
        raise ContractError("reference probability must be positive")
    return estimate / mu_ref
