"""Small feed-forward ReLU classifier for dangerous-set learning.

A net is a stack of affine layers with ReLU after every hidden layer and a
raw affine scalar score at the end; the learned dangerous region is
{x : score(x) >= threshold}. Training is plain mini-batch gradient descent
with momentum on the logistic loss, with positives oversampled because rare
events make them scarce.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ContractError


@dataclass
class ReluNet:
    """layers[i] = (W, b) with W shaped (out, in); ReLU after all but the last."""

    layers: list[tuple[np.ndarray, np.ndarray]]
    meta: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.layers:
            raise ContractError("net needs at least one layer")
        layers = []
        prev_out = None
        for i, (W, b) in enumerate(self.layers):
            W = np.asarray(W, dtype=float)
            b = np.asarray(b, dtype=float).reshape(-1)
            if W.ndim != 2 or W.shape[0] != b.size:
                raise ContractError(f"layer {i}: W is {W.shape}, b has {b.size} rows")
            if prev_out is not None and W.shape[1] != prev_out:
                raise ContractError(
                    f"layer {i}: expects {W.shape[1]} inputs, previous layer outputs {prev_out}"
                )
            if not (np.isfinite(W).all() and np.isfinite(b).all()):
                raise ContractError(f"layer {i}: parameters must be finite")
            prev_out = W.shape[0]
            layers.append((W, b))
        if prev_out != 1:
            raise ContractError("final layer must output a scalar score")
        self.layers = layers

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def widths(self) -> list[int]:
        return [self.input_dim] + [W.shape[0] for W, _ in self.layers]

    @property
    def hidden_widths(self) -> list[int]:
        return [W.shape[0] for W, _ in self.layers[:-1]]

    @property
    def n_hidden(self) -> int:
        return sum(self.hidden_widths)

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_dim:
            raise ContractError(
                f"input has dimension {x.shape[-1]}, expected {self.input_dim}"
            )
        return x

    def scores(self, X: np.ndarray) -> np.ndarray:
        """Vectorized scores for an (n, d) batch."""
        a = np.atleast_2d(self._check_input(X))
        for W, b in self.layers[:-1]:
            a = np.maximum(a @ W.T + b, 0.0)
        W, b = self.layers[-1]
        return (a @ W.T + b)[:, 0]

    def forward(self, x: np.ndarray) -> float:
        """Scalar score at a single point; hidden ReLU, final layer affine."""
        return float(self.scores(np.asarray(x, dtype=float).reshape(1, -1))[0])

    def activation_pattern(self, x: np.ndarray) -> list[np.ndarray]:
        """Per-hidden-layer 0/1 vectors; 1 iff pre-activation > 0 (ties -> 0)."""
        a = self._check_input(np.asarray(x, dtype=float)).reshape(1, -1)
        pattern = []
        for W, b in self.layers[:-1]:
            pre = a @ W.T + b
            pattern.append((pre[0] > 0.0).astype(np.int8))
            a = np.maximum(pre, 0.0)
        return pattern

    def to_json(self) -> dict:
        return {
            "widths": self.widths,
            "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in self.layers],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ReluNet":
        layers = [(np.asarray(l["W"], dtype=float), np.asarray(l["b"], dtype=float))
                  for l in obj["layers"]]
        net = cls(layers)
        if "widths" in obj and list(obj["widths"]) != net.widths:
            raise ContractError(
                f"declared widths {obj['widths']} do not match layers {net.widths}"
            )
        return net

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, s: str) -> "ReluNet":
        return cls.from_json(json.loads(s))


@dataclass(frozen=True)
class LabeledDataset:
    """Stage-1 samples with binary danger labels (1 = dangerous)."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        labels = np.asarray(self.labels).reshape(-1).astype(np.int8)
        if inputs.shape[0] != labels.size or labels.size < 1:
            raise ContractError("inputs and labels must align and be nonempty")
        if not np.isin(labels, (0, 1)).all():
            raise ContractError("labels must be 0 or 1")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.size

    @property
    def n_positive(self) -> int:
        return int(self.labels.sum())

    def extend(self, inputs: np.ndarray, labels: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(np.vstack([self.inputs, np.atleast_2d(inputs)]),
                              np.concatenate([self.labels, labels]))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    oversample: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if min(self.epochs, self.batch_size) < 1:
            raise ContractError("epochs and batch_size must be positive")
        if self.learning_rate <= 0 or self.momentum < 0 or self.oversample < 1:
            raise ContractError("learning_rate > 0, momentum >= 0, oversample >= 1 required")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return expit(z)


def _logistic_loss(scores: np.ndarray, y: np.ndarray) -> float:
    # mean softplus(s) - y*s, stable for large |s|
    return float(np.mean(np.logaddexp(0.0, scores) - y * scores))


def loss_gradient(net: ReluNet, X: np.ndarray, y: np.ndarray):
    """Exact gradient of the mean logistic loss over the batch.

    Returns [(dW, db), ...] matching net.layers. ReLU subgradient at 0 is 0,
    consistent with activation_pattern mapping ties to inactive.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    n = X.shape[0]

    activations = [X]
    pres = []
    a = X
    for W, b in net.layers[:-1]:
        pre = a @ W.T + b
        pres.append(pre)
        a = np.maximum(pre, 0.0)
        activations.append(a)
    W_last, b_last = net.layers[-1]
    s = (a @ W_last.T + b_last)[:, 0]

    delta = ((_sigmoid(s) - y) / n)[:, None]
    grads = [None] * len(net.layers)
    grads[-1] = (delta.T @ activations[-1], delta.sum(axis=0))
    back = delta @ W_last
    for i in range(len(net.layers) - 2, -1, -1):
        back = back * (pres[i] > 0.0)
        W, _ = net.layers[i]
        grads[i] = (back.T @ activations[i], back.sum(axis=0))
        back = back @ W
    return grads


def _glorot_init(arch: list[int], gen: np.random.Generator) -> list:
    layers = []
    for fan_in, fan_out in zip(arch[:-1], arch[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W = gen.uniform(-limit, limit, size=(fan_out, fan_in))
        b = np.zeros(fan_out)
        layers.append((W, b))
    return layers


def _constant_net(arch: list[int], score: float) -> ReluNet:
    layers = [(np.zeros((fan_out, fan_in)), np.zeros(fan_out))
              for fan_in, fan_out in zip(arch[:-1], arch[1:])]
    W, b = layers[-1]
    layers[-1] = (W, b + score)
    return ReluNet(layers)


def _oversample_indices(labels: np.ndarray, factor: float) -> np.ndarray:
    """Deterministic index expansion repeating positives ~factor times."""
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if pos.size == 0 or factor == 1.0:
        return np.arange(labels.size)
    whole = int(np.floor(factor))
    extra = int(round((factor - whole) * pos.size))
    reps = np.full(pos.size, whole, dtype=int)
    reps[:extra] += 1
    return np.concatenate([neg, np.repeat(pos, reps)])


def train(data: LabeledDataset, arch: list[int], cfg: TrainConfig,
          allow_degenerate: bool = False) -> ReluNet:
    """Mini-batch gradient descent with momentum on the logistic loss.

    arch lists layer widths [d, m1, ..., 1]. Deterministic given cfg.seed.
    Single-class data is refused unless allow_degenerate, in which case a
    constant net with the right score sign is returned.
    """
    arch = [int(w) for w in arch]
    if arch[0] != data.inputs.shape[1]:
        raise ContractError(f"arch input width {arch[0]} != data dimension {data.inputs.shape[1]}")
    if arch[-1] != 1:
        raise ContractError("arch must end with a scalar output")

    n_pos = data.n_positive
    if n_pos == 0 or n_pos == len(data):
        if not allow_degenerate:
            raise ContractError(
                "single-class data: classifier would be degenerate "
                "(pass allow_degenerate=True to accept a constant net)"
            )
        net = _constant_net(arch, -1.0 if n_pos == 0 else 1.0)
        net.meta.update(train_accuracy=1.0, final_loss=float("nan"))
        return net

    gen = np.random.Generator(np.random.Philox(key=np.array([cfg.seed, 0x7261696e], dtype=np.uint64)))
    net = ReluNet(_glorot_init(arch, gen))

    idx = _oversample_indices(data.labels, cfg.oversample)
    X_all, y_all = data.inputs[idx], data.labels[idx].astype(float)
    velocity = [(np.zeros_like(W), np.zeros_like(b)) for W, b in net.layers]

    for _ in range(cfg.epochs):
        order = gen.permutation(X_all.shape[0])
        for start in range(0, order.size, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            grads = loss_gradient(net, X_all[batch], y_all[batch])
            for li, ((W, b), (gW, gb), (vW, vb)) in enumerate(
                    zip(net.layers, grads, velocity)):
                vW = cfg.momentum * vW - cfg.learning_rate * gW
                vb = cfg.momentum * vb - cfg.learning_rate * gb
                velocity[li] = (vW, vb)
                net.layers[li] = (W + vW, b + vb)

    scores = net.scores(data.inputs)
    net.meta.update(
        train_accuracy=float(np.mean((scores >= 0.0) == (data.labels == 1))),
        final_loss=_logistic_loss(scores, data.labels.astype(float)),
    )
    return net
