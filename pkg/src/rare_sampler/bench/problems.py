"""Benchmark safety problems behind a uniform interface.

Each problem bundles the naturalistic distribution, a vectorized
true-danger indicator, the rarity knob, an exact probability when one
exists, and (where the danger set is coordinatewise monotone) an affine
map into the positive orthant with danger increasing along every axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.stats import multivariate_normal, norm

from ..core import GaussianNature
from ..errors import ContractError
from ..relunet import ReluNet
from .cutin import AGGRESSIVE_TAILGATER, IdmParams, simulate_cut_in_batch

GAMMA_SWEEP_DEFAULT = (1.0, 3.33, 5.0, 8.0)


@dataclass(frozen=True)
class OrientMap:
    """Diagonal affine reorientation y = scale * (x - center) + shift.

    Chosen per problem so danger is coordinatewise increasing in y and
    typical samples land in the positive orthant.
    """

    center: np.ndarray
    scale: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        scale = np.asarray(self.scale, dtype=float)
        shift = np.asarray(self.shift, dtype=float)
        if np.any(scale == 0.0):
            raise ContractError("orientation map must be invertible (nonzero scales)")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "shift", shift)

    def forward(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.center) * self.scale + self.shift

    def inverse(self, Y: np.ndarray) -> np.ndarray:
        return (np.asarray(Y, dtype=float) - self.shift) / self.scale + self.center


@dataclass
class SafetyProblem:
    name: str
    nature: GaussianNature
    indicator: object  # callable (n, d) -> (n,) in {0, 1}
    gamma: float = 1.0
    analytic_mu: float | None = None
    orient: OrientMap | None = None
    meta: dict = field(default_factory=dict)

    def indicator_one(self, x: np.ndarray) -> int:
        return int(np.asarray(self.indicator(np.asarray(x, dtype=float).reshape(1, -1)))[0])


# ---------------------------------------------------------------------------
# half-space unions (analytic testbed)


def _tail_joint(means: np.ndarray, cov: np.ndarray, thresholds: np.ndarray) -> float:
    """P(s_i >= c_i for all i) for jointly Gaussian s."""
    if means.size == 1:
        return float(norm.sf(thresholds[0], loc=means[0], scale=np.sqrt(cov[0, 0])))
    mvn = multivariate_normal(mean=-means, cov=cov, allow_singular=True)
    return float(mvn.cdf(-thresholds))


def halfspace_union_mu(normals: np.ndarray, offsets: np.ndarray,
                       nature: GaussianNature) -> float | None:
    """Exact union probability via inclusion-exclusion, up to 3 half-spaces."""
    k = normals.shape[0]
    if k > 3:
        return None
    means = normals @ nature.mean
    cov = normals @ nature.cov @ normals.T
    total = 0.0
    for mask in range(1, 2 ** k):
        idx = [i for i in range(k) if mask >> i & 1]
        sign = -1.0 if len(idx) % 2 == 0 else 1.0
        sub = np.ix_(idx, idx)
        total += sign * _tail_joint(means[idx], cov[sub], offsets[idx])
    return total


def make_halfspace_union(d: int, normals, offsets, nature: GaussianNature | None = None,
                         orient: OrientMap | None = None, gamma: float = 1.0,
                         pilot_mu: float | None = None, name: str = "halfspace_union",
                         ) -> SafetyProblem:
    """Danger set = union of half-spaces {n_i . x >= c_i}."""
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    offsets = np.asarray(offsets, dtype=float).reshape(-1)
    if normals.shape != (offsets.size, d):
        raise ContractError("normals/offsets shapes disagree")
    if np.any(np.linalg.norm(normals, axis=1) == 0.0):
        raise ContractError("zero normal vector")
    if nature is None:
        nature = GaussianNature(np.zeros(d), np.eye(d))

    def indicator(X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return (X @ normals.T >= offsets).any(axis=1).astype(np.int8)

    mu = halfspace_union_mu(normals, offsets, nature)
    if mu is None:
        mu = pilot_mu
    return SafetyProblem(name, nature, indicator, gamma, mu, orient)


def make_staircase(threshold: float = 3.2, dim: int = 2,
                   nature: GaussianNature | None = None, gamma: float = 1.0,
                   ) -> SafetyProblem:
    """Monotone diagonal half-space {sum x_i >= c}: the hull testbed.

    The complement's best rectangle outer approximation is a staircase, and
    the set is coordinatewise increasing, so the orientation map is just a
    whiten-and-shift.
    """
    if nature is None:
        nature = GaussianNature(np.zeros(dim), np.eye(dim))
    sigma = np.sqrt(np.diag(nature.cov))
    orient = OrientMap(nature.mean, 1.0 / sigma, np.full(dim, 10.0))
    problem = make_halfspace_union(
        dim, np.ones((1, dim)), [threshold], nature,
        orient=orient, gamma=gamma, name="staircase",
    )
    return problem


# ---------------------------------------------------------------------------
# cut-in-tailgate scenario


CUTIN_SIGMAS = np.array([3.0, 1.5, 3.0, 1.5] + [0.5] * 8)
# danger grows when front/rear gaps shrink, the leader is slower, the
# tailgater is faster, and the intrusion comes earlier/stronger
CUTIN_DANGER_SIGNS = np.array([-1.0, -1.0, -1.0, 1.0] + [1.0] * 8)


def make_cut_in(gamma: float = 1.0, n_phases: int = 8,
                av: IdmParams = IdmParams(),
                tailgater: IdmParams = AGGRESSIVE_TAILGATER,
                pilot_mu: float | None = None) -> SafetyProblem:
    """Crash probability of the AV under disturbed cut-in-tailgate runs.

    gamma scales down the disturbance spread (rarer crashes); n_phases
    extends the disturbance dimension beyond the default 12.
    """
    if n_phases < 1:
        raise ContractError("need at least one intrusion phase")
    d = 4 + n_phases
    sigmas = np.concatenate([CUTIN_SIGMAS[:4], np.full(n_phases, CUTIN_SIGMAS[4])])
    signs = np.concatenate([CUTIN_DANGER_SIGNS[:4], np.ones(n_phases)])
    nature = GaussianNature(np.zeros(d), np.diag((sigmas / gamma) ** 2))

    def indicator(X: np.ndarray) -> np.ndarray:
        return simulate_cut_in_batch(X, av, tailgater)

    orient = OrientMap(nature.mean, signs * gamma / sigmas, np.full(d, 10.0))
    return SafetyProblem("cutin", nature, indicator, gamma, pilot_mu, orient,
                         meta={"n_phases": n_phases})


# ---------------------------------------------------------------------------
# perturbed-classifier problem


def make_perturbed_classifier(base_net: ReluNet, x0: np.ndarray, gamma: float,
                              x0_label: int, name: str = "perturbed_classifier",
                              pilot_mu: float | None = None) -> SafetyProblem:
    """Misclassification rate of base_net under N(x0, (1/gamma)^2 I) noise.

    The perturbed input keeps x0's true class, so danger = the classifier
    disagreeing with x0_label. Refused if base_net misclassifies x0 itself.
    """
    if gamma <= 0:
        raise ContractError("gamma must be positive")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0_label not in (0, 1):
        raise ContractError("x0_label must be 0 or 1")
    predicted = int(base_net.forward(x0) >= 0.0)
    if predicted != x0_label:
        raise ContractError("base net misclassifies x0; pick a correctly-classified input")
    sigma = 1.0 / gamma
    nature = GaussianNature(x0, sigma ** 2 * np.eye(x0.size))

    def indicator(X: np.ndarray) -> np.ndarray:
        labels = (base_net.scores(X) >= 0.0).astype(np.int8)
        return (labels != x0_label).astype(np.int8)

    return SafetyProblem(name, nature, indicator, gamma, pilot_mu, None,
                         meta={"x0_label": x0_label})


def synthetic_base_classifier() -> tuple[ReluNet, np.ndarray, int]:
    """Fixed hand-built 2-3-1 two-class net with a kinked diagonal boundary.

    Returns (net, x0, x0_label) with x0 correctly classified. The first
    hidden unit passes x1+x2 through (always active within the working
    region), the other two bend the boundary away from the diagonal.
    """
    W1 = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0]])
    b1 = np.array([50.0, -1.0, -1.0])
    W2 = np.array([[1.0, 0.4, 0.4]])
    b2 = np.array([-50.3])
    net = ReluNet([(W1, b1), (W2, b2)])
    x0 = np.array([-1.2, -1.2])
    return net, x0, 0


# ---------------------------------------------------------------------------
# pilot reference values (frozen from large offline runs, checked by tests)


def load_references() -> dict:
    with resources.files("rare_sampler.bench").joinpath("references.json").open() as fh:
        return json.load(fh)


_REGISTRY = {}


def register_problem(name: str, factory):
    _REGISTRY[name] = factory


def build_problem(name: str, params: dict) -> SafetyProblem:
    """Construct a named problem from config parameters."""
    if name not in _REGISTRY:
        raise ContractError(f"unknown problem '{name}' (known: {sorted(_REGISTRY)})")
    return _REGISTRY[name](**params)


def _halfspace_factory(threshold: float = 3.0, dim: int = 1, gamma: float = 1.0):
    return make_halfspace_union(dim, np.ones((1, dim)) / np.sqrt(dim), [threshold],
                                gamma=gamma, name="halfspace")


def _halfspace_union_2d_factory(offset: float = 3.7, gamma: float = 1.0):
    # two tilted half-spaces with exact inclusion-exclusion probability
    normals = np.array([[1.0, 0.3], [0.2, 1.0]])
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return make_halfspace_union(2, normals, [offset, offset], gamma=gamma,
                                name="halfspace_union_2d")


def _perturbed_classifier_factory(gamma: float = 1.0):
    net, x0, label = synthetic_base_classifier()
    refs = load_references()
    key = f"perturbed_classifier_gamma{gamma:g}"
    pilot = refs.get(key, {}).get("mu")
    return make_perturbed_classifier(net, x0, gamma, label, pilot_mu=pilot)


def _cutin_factory(gamma: float = 1.0, n_phases: int = 8):
    refs = load_references()
    pilot = refs.get("cutin_default", {}).get("mu") if (gamma, n_phases) == (1.0, 8) else None
    return make_cut_in(gamma=gamma, n_phases=n_phases, pilot_mu=pilot)


register_problem("halfspace", _halfspace_factory)
register_problem("halfspace_union_2d", _halfspace_union_2d_factory)
register_problem("staircase", lambda threshold=3.2, dim=2, gamma=1.0:
                 make_staircase(threshold, dim, gamma=gamma))
register_problem("perturbed_classifier", _perturbed_classifier_factory)
register_problem("cutin", _cutin_factory)
