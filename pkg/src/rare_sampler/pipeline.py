"""End-to-end estimation pipelines: Deep IS, Robust Deep IS, and the
iterative variant.

Stream discipline (fixed so equal seeds mean equal runs, and so the robust
pipeline is exactly the iterative one with k=1):

* substream(10 + j): Stage-1 batch j (j = 0 drawn from the nature, later
  batches from the preliminary proposals)
* substream(20)/substream(21): extra threshold-tuning candidates from the
  nature / the preliminary proposal
* substream(1000): final estimation draws
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .bench import SafetyProblem
from .core import GaussianNature, RngStream
from .domset import DominatingSet, find_dominating_set
from .errors import ContractError, SolverError
from .estimators import (MixtureProposal, RunResult, estimate_deep_is,
                         estimate_robust, sample_mixture)
from .hull import MonotoneHull, build_hull, tune_kappa
from .relunet import LabeledDataset, ReluNet, TrainConfig, train

log = logging.getLogger("rare_sampler.pipeline")

_STAGE1_STREAM = 10
_CAND_NATURE_STREAM = 20
_CAND_PROPOSAL_STREAM = 21
_ESTIMATE_STREAM = 1000


@dataclass
class PipelineOptions:
    max_points: int = 100
    bb_gap: float = 1e-6
    cut_margin: float = 1e-6
    n_candidates: int = 10_000
    kappa_floor: float | None = None
    threads: int = 1
    checkpoints: np.ndarray | None = None


def collect_stage1(problem: SafetyProblem, n: int, rng: RngStream) -> LabeledDataset:
    """Draw n nature samples and label them with the true indicator."""
    X = problem.nature.sample(rng, n)
    return LabeledDataset(X, np.asarray(problem.indicator(X), dtype=np.int8))


def batch_sizes(n1: int, k: int) -> list[int]:
    """Split n1 into k batches, earlier batches absorbing the remainder."""
    if k < 1 or n1 < k:
        raise ContractError("need k >= 1 and n1 >= k")
    base, rem = divmod(n1, k)
    return [base + (1 if j < rem else 0) for j in range(k)]


def _fit(data: LabeledDataset, arch, cfg: TrainConfig, allow_degenerate=False) -> ReluNet:
    net = train(data, arch, cfg, allow_degenerate=allow_degenerate)
    log.info("trained %s net: accuracy %.4f on %d samples (%d positive)",
             "x".join(map(str, arch)), net.meta.get("train_accuracy", float("nan")),
             len(data), data.n_positive)
    return net


def _proposal_or_none(net, nature, kappa, opts) -> tuple[DominatingSet, MixtureProposal | None]:
    domset = find_dominating_set(net, nature, kappa, max_points=opts.max_points,
                                 tol=opts.bb_gap, margin=opts.cut_margin)
    if len(domset) == 0:
        return domset, None
    return domset, MixtureProposal.from_dominating_set(nature, domset)


def run_deep_is(problem: SafetyProblem, n1: int, n2: int, arch,
                cfg: TrainConfig, rng: RngStream,
                opts: PipelineOptions | None = None) -> RunResult:
    """Alg. 1: learn the set, extract dominating points, importance-sample
    with the true indicator."""
    opts = opts or PipelineOptions()
    data = collect_stage1(problem, n1, rng.substream(_STAGE1_STREAM))
    if data.n_positive == 0:
        raise ContractError(
            f"no dangerous samples among n1={n1} Stage-1 draws; "
            "increase n1 or lower the rarity"
        )
    net = _fit(data, arch, cfg)
    domset, prop = _proposal_or_none(net, problem.nature, 0.0, opts)
    if prop is None:
        raise SolverError("learned dangerous region is empty inside the search box")
    result = estimate_deep_is(problem.indicator, prop, problem.nature, n2,
                              rng.substream(_ESTIMATE_STREAM),
                              checkpoints=opts.checkpoints, threads=opts.threads,
                              domset=domset)
    result.extras.update(net=net, n1=n1, train_accuracy=net.meta.get("train_accuracy"))
    return result


def tune_threshold(problem: SafetyProblem, net: ReluNet, data: LabeledDataset,
                   rng: RngStream, prelim_prop: MixtureProposal | None,
                   opts: PipelineOptions) -> tuple[float, MonotoneHull]:
    """kappa-hat tuning per Alg. 2 step 3 on a finite candidate set."""
    orient = problem.orient
    if orient is None:
        raise ContractError(
            f"problem '{problem.name}' has no orientation map; "
            "robust estimation assumes an orthogonally monotone danger set"
        )
    mapped = orient.forward(data.inputs)
    ok = (mapped >= 0.0).all(axis=1)
    dropped = int((~ok).sum())
    if dropped:
        # dropping safe points only shrinks the hull, keeping the outer
        # approximation valid; dangerous points never enter the hull anyway
        log.warning("dropping %d stage-1 points outside the positive orthant", dropped)
    safe = mapped[ok & (data.labels == 0)]
    hull = build_hull(safe, dim=mapped.shape[1])

    cands = [data.inputs]
    cands.append(problem.nature.sample(rng.substream(_CAND_NATURE_STREAM),
                                       opts.n_candidates))
    if prelim_prop is not None:
        extra, _ = sample_mixture(prelim_prop, rng.substream(_CAND_PROPOSAL_STREAM),
                                  opts.n_candidates)
        cands.append(extra)
    mapped_cands = orient.forward(np.vstack(cands))
    mapped_cands = mapped_cands[(mapped_cands >= 0.0).all(axis=1)]
    if mapped_cands.shape[0] == 0:
        raise SolverError("no threshold-tuning candidates landed in the positive orthant")
    kappa_hat = tune_kappa(net, hull, mapped_cands, floor=opts.kappa_floor,
                           to_input=orient.inverse)
    return kappa_hat, hull


def _robust_tail(problem, data, n2, arch, cfg, rng, opts, method) -> RunResult:
    """Final train + kappa-hat + dominating set + surrogate-indicator estimate."""
    net = _fit(data, arch, cfg, allow_degenerate=True)
    _, prelim_prop = _proposal_or_none(net, problem.nature, 0.0, opts)
    kappa_hat, hull = tune_threshold(problem, net, data, rng, prelim_prop, opts)
    domset, prop = _proposal_or_none(net, problem.nature, kappa_hat, opts)
    if prop is None:
        raise SolverError("surrogate region {g >= kappa_hat} is empty inside the box")
    result = estimate_robust(net, kappa_hat, prop, problem.nature, n2,
                             rng.substream(_ESTIMATE_STREAM),
                             checkpoints=opts.checkpoints, threads=opts.threads,
                             domset=domset, method=method)
    result.extras.update(net=net, kappa_hat=kappa_hat, hull_corners=len(hull),
                         n1=len(data), train_accuracy=net.meta.get("train_accuracy"))
    return result


def run_iterative(problem: SafetyProblem, k: int, n1: int, n2: int, arch,
                  cfg: TrainConfig, rng: RngStream,
                  opts: PipelineOptions | None = None,
                  method: str = "iter_robust") -> RunResult:
    """Alg. 3: collect Stage-1 samples in k batches, retraining between
    batches and drawing the next batch around the current dominating points;
    the final round tunes kappa-hat and runs the robust estimator."""
    opts = opts or PipelineOptions()
    sizes = batch_sizes(n1, k)
    data = collect_stage1(problem, sizes[0], rng.substream(_STAGE1_STREAM))

    for j in range(k - 1):
        net = _fit(data, arch, cfg, allow_degenerate=True)
        _, prelim = _proposal_or_none(net, problem.nature, 0.0, opts)
        sub = rng.substream(_STAGE1_STREAM + 1 + j)
        if prelim is None:
            log.warning("round %d: empty preliminary region, drawing batch from the nature", j + 1)
            X = problem.nature.sample(sub, sizes[j + 1])
        else:
            X, _ = sample_mixture(prelim, sub, sizes[j + 1])
        labels = np.asarray(problem.indicator(X), dtype=np.int8)
        data = data.extend(X, labels)

    return _robust_tail(problem, data, n2, arch, cfg, rng, opts, method)


def run_robust(problem: SafetyProblem, n1: int, n2: int, arch,
               cfg: TrainConfig, rng: RngStream,
               opts: PipelineOptions | None = None) -> RunResult:
    """Alg. 2 = the iterative pipeline with a single batch."""
    return run_iterative(problem, 1, n1, n2, arch, cfg, rng, opts, method="robust")
