"""Multilayer-perceptron pruning classifier trained with momentum SGD.

Class 0 is *prune*, class 1 is *preserve*; a one-hot label ``(1, 0)`` marks
a node to prune.  Hidden layers use ReLU; the output layer is affine and
feeds a softmax.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import DimensionError, EmptyDatasetError, NumericalError
from .features import FEATURE_VERSION, NUM_FEATURES

LOG_CLAMP = 1e-12
PRUNE, PRESERVE = 0, 1


class Decision(str, Enum):
    PRUNE = "prune"
    PRESERVE = "preserve"


@dataclass(frozen=True)
class MlpParams:
    layer_dims: tuple
    weights: tuple  # W^k, shape (out, in)
    biases: tuple
    feature_version: str = FEATURE_VERSION

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "weights", tuple(np.asarray(w, float) for w in self.weights))
        object.__setattr__(self, "biases", tuple(np.asarray(b, float) for b in self.biases))
        if dims[-1] != 2:
            raise DimensionError("output layer must have exactly two units")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise DimensionError("need one weight matrix and bias per layer")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (dims[k + 1], dims[k]) or b.shape != (dims[k + 1],):
                raise DimensionError(f"layer {k} has shape {W.shape}/{b.shape}, "
                                     f"expected {(dims[k + 1], dims[k])}")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise NumericalError(f"layer {k} holds non-finite parameters")

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]


def init_params(layer_dims: Sequence[int] = (NUM_FEATURES, 64, 64, 2), seed: int = 0,
                feature_version: str = FEATURE_VERSION) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(tuple(layer_dims), tuple(weights), tuple(biases), feature_version)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


def _activations(params: MlpParams, X: np.ndarray):
    return _layer_activations(params.weights, params.biases, X)


def _layer_activations(weights, biases, X: np.ndarray):
    acts = [X]
    g = X
    last = len(weights) - 1
    for k, (W, b) in enumerate(zip(weights, biases)):
        z = g @ W.T + b
        g = z if k == last else np.maximum(z, 0.0)
        acts.append(g)
    return acts


def _check_input(params: MlpParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, float)
    if X.shape[-1] != params.input_dim:
        raise DimensionError(f"feature length {X.shape[-1]} != model input {params.input_dim}")
    return X


def forward(params: MlpParams, x) -> np.ndarray:
    """Class probabilities for one feature vector or a batch (rows)."""
    X = _check_input(params, x)
    logits = _activations(params, np.atleast_2d(X))[-1]
    if not np.all(np.isfinite(logits)):
        raise NumericalError("non-finite activation in forward pass")
    e = softmax(logits)
    return e[0] if X.ndim == 1 else e


def one_hot(labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    Y = np.zeros((labels.size, 2))
    Y[np.arange(labels.size), labels] = 1.0
    return Y


def weighted_cross_entropy(e, y, w) -> float:
    """``-sum_j w[j] y[j] log e[j]`` with log clamped at 1e-12; batches give the mean."""
    e, y = np.atleast_2d(e), np.atleast_2d(y)
    w = np.asarray(getattr(w, "w", w), float)
    per = -(np.log(np.maximum(e, LOG_CLAMP)) * y * w).sum(axis=1)
    return float(per.mean())


@dataclass(frozen=True)
class ClassWeights:
    w1: np.ndarray
    w2: np.ndarray
    w: np.ndarray


def compute_class_weights(dataset, w2=(1.0, 4.0)) -> ClassWeights:
    """``w1[0]`` is the preserve fraction, so the rarer preserve class gets the larger weight."""
    labels = _labels_of(dataset)
    if labels.size == 0:
        raise EmptyDatasetError("cannot compute class weights of an empty dataset")
    frac = float(np.count_nonzero(labels == PRESERVE)) / labels.size
    w1 = np.array([frac, 1.0 - frac])
    w2 = np.asarray(w2, float)
    return ClassWeights(w1, w2, w1 * w2)


def _labels_of(dataset) -> np.ndarray:
    if isinstance(dataset, np.ndarray):
        return dataset.astype(int)
    return np.array([PRESERVE if s.label == "preserve" else PRUNE for s in dataset], dtype=int)


def loss_and_grads(params: MlpParams, X, Y, w):
    """Mean weighted cross-entropy and its gradients with respect to every W^k, b^k."""
    X = _check_input(params, np.atleast_2d(X))
    Y = np.atleast_2d(np.asarray(Y, float))
    w = np.asarray(getattr(w, "w", w), float)
    return _loss_and_grads(params.weights, params.biases, X, Y, w)


def _loss_and_grads(weights, biases, X, Y, w):
    acts = _layer_activations(weights, biases, X)
    e = softmax(acts[-1])
    n = X.shape[0]
    loss = float(-(np.log(np.maximum(e, LOG_CLAMP)) * Y * w).sum() / n)
    # d loss / d logits for one-hot rows: (sum_j w_j y_j) * e - w * y
    sample_w = (Y * w).sum(axis=1, keepdims=True)
    delta = (sample_w * e - Y * w) / n
    nl = len(weights)
    gW, gb = [None] * nl, [None] * nl
    for k in range(nl - 1, -1, -1):
        gW[k] = delta.T @ acts[k]
        gb[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ weights[k]) * (acts[k] > 0)
    return loss, gW, gb


@dataclass(frozen=True)
class TrainConfig:
    per_layer_lr: tuple = (1e-2, 1e-2, 1e-2)
    epochs: int = 50
    batch_size: int = 32
    momentum: float = 0.9
    seed: int = 0
    l2: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "per_layer_lr", tuple(float(x) for x in self.per_layer_lr))
        if any(lr < 0 for lr in self.per_layer_lr):
            raise ValueError("learning rates must be nonnegative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    @classmethod
    def fine_tune(cls, num_layers: int = 3, **kw) -> "TrainConfig":
        kw.setdefault("per_layer_lr", (1e-3,) * num_layers)
        return cls(**kw)

    def lr_for(self, num_layers: int) -> tuple:
        lrs = self.per_layer_lr
        if len(lrs) == 1:
            lrs = lrs * num_layers
        if len(lrs) != num_layers:
            raise DimensionError(f"{len(lrs)} learning rates for {num_layers} layers")
        return lrs


def dataset_arrays(dataset):
    X = np.array([s.feature for s in dataset], dtype=float)
    return X, _labels_of(dataset)


def train(params: MlpParams, dataset, weights: ClassWeights, config: TrainConfig,
          history: list | None = None) -> MlpParams:
    """Minibatch SGD with momentum on the mean weighted cross-entropy.

    Layers whose learning rate is 0 are returned untouched (same arrays).
    ``history``, if given, receives the full-data loss before training and
    after each epoch.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot train on an empty dataset")
    versions = {getattr(s, "feature_version", params.feature_version) for s in dataset}
    if versions - {params.feature_version}:
        raise DimensionError(f"dataset feature version {versions} != model {params.feature_version}")
    X, labels = dataset_arrays(dataset)
    X = _check_input(params, X)
    Y = one_hot(labels)
    lrs = config.lr_for(params.num_layers)
    active = [k for k, lr in enumerate(lrs) if lr > 0]
    Ws = [W.copy() if k in active else W for k, W in enumerate(params.weights)]
    bs = [b.copy() if k in active else b for k, b in enumerate(params.biases)]
    vW = [np.zeros_like(W) for W in Ws]
    vb = [np.zeros_like(b) for b in bs]
    rng = np.random.default_rng(config.seed)
    n = X.shape[0]
    wvec = np.asarray(getattr(weights, "w", weights), float)

    def current():
        return replace(params, weights=tuple(Ws), biases=tuple(bs))

    if history is not None:
        history.append(loss_and_grads(params, X, Y, weights)[0])
    if not active:
        return params
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            _, gW, gb = _loss_and_grads(Ws, bs, X[idx], Y[idx], wvec)
            for k in active:
                gWk = gW[k] + config.l2 * Ws[k]
                vW[k] = config.momentum * vW[k] - lrs[k] * gWk
                vb[k] = config.momentum * vb[k] - lrs[k] * gb[k]
                Ws[k] = Ws[k] + vW[k]
                bs[k] = bs[k] + vb[k]
        if history is not None:
            history.append(loss_and_grads(current(), X, Y, weights)[0])
    out = current()
    for W in out.weights:
        if not np.all(np.isfinite(W)):
            raise NumericalError("training diverged to non-finite weights")
    return out


def classify(params: MlpParams, x, threshold: float) -> Decision:
    """Prune iff the prune probability strictly exceeds ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    e = forward(params, x)
    return Decision.PRUNE if e[PRUNE] > threshold else Decision.PRESERVE
