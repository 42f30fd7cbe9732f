"""Synthetic regression task, linear model, optimizers, metrics.

The task: features uniform on [0, 1)^2, labels y = x1 + x2 + 1 with no
label noise, split 60/20/20 into train/validation/test in generation
order. A linear model with two weights and a bias can fit it exactly, so
any gap from zero loss is attributable to the aggregation mechanism under
study rather than to model capacity.

Per-sample loss is (yhat - y)^2 / 2; its gradient with respect to
(w1, w2, b) is (r*x1, r*x2, r) with residual r = yhat - y.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError

__all__ = [
    "Dataset",
    "Shard",
    "ModelParams",
    "SgdState",
    "AdamState",
    "EvalMetrics",
    "generate_dataset",
    "partition_iid",
    "per_sample_gradient",
    "per_sample_gradients",
    "predict",
    "apply_update",
    "evaluate",
    "write_dataset_csv",
]

MODEL_DIMENSION = 3  # w1, w2, bias


@dataclass(frozen=True)
class Dataset:
    """Full synthetic dataset plus its split boundaries."""

    features: np.ndarray  # (N, 2) float64
    labels: np.ndarray    # (N,) float64
    n_train: int
    n_val: int
    seed: int

    @property
    def n_samples(self) -> int:
        return len(self.labels)

    @property
    def n_test(self) -> int:
        return self.n_samples - self.n_train - self.n_val

    def train(self) -> tuple[np.ndarray, np.ndarray]:
        return self.features[:self.n_train], self.labels[:self.n_train]

    def val(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.n_train, self.n_train + self.n_val
        return self.features[lo:hi], self.labels[lo:hi]

    def test(self) -> tuple[np.ndarray, np.ndarray]:
        lo = self.n_train + self.n_val
        return self.features[lo:], self.labels[lo:]


@dataclass(frozen=True)
class Shard:
    """One client's slice of the training split."""

    client_id: int
    features: np.ndarray
    labels: np.ndarray

    @property
    def n_samples(self) -> int:
        return len(self.labels)


def generate_dataset(n_samples: int, seed: int) -> Dataset:
    """Deterministic synthetic regression data.

    Same seed, same bytes: the PCG64 stream fixes the features, and labels
    are computed from features with no randomness. Draws fill row by row,
    so a larger n_samples extends a smaller one as a prefix.
    """
    if n_samples < 5:
        raise InvalidParameterError(f"need at least 5 samples, got {n_samples}")
    rng = np.random.default_rng(seed)
    features = rng.random((n_samples, 2))
    labels = features[:, 0] + features[:, 1] + 1.0
    n_train = int(n_samples * 0.6)
    n_val = int(n_samples * 0.2)
    return Dataset(features=features, labels=labels, n_train=n_train, n_val=n_val, seed=seed)


def partition_iid(dataset: Dataset, n_clients: int) -> list[Shard]:
    """Contiguous even slices of the train split, one per client.

    The generated data is already i.i.d., so contiguous slices are an
    i.i.d. partition. A remainder goes to the first clients, one extra
    sample each.
    """
    if n_clients < 1:
        raise InvalidParameterError(f"n_clients must be >= 1, got {n_clients}")
    X, y = dataset.train()
    n = len(y)
    if n_clients > n:
        raise InvalidParameterError(f"{n_clients} clients but only {n} training samples")
    base = n // n_clients
    extra = n % n_clients
    shards = []
    start = 0
    for i in range(n_clients):
        size = base + (1 if i < extra else 0)
        shards.append(Shard(client_id=i, features=X[start:start + size], labels=y[start:start + size]))
        start += size
    return shards


# ------------------------------------------------------------------ model

@dataclass(frozen=True)
class ModelParams:
    """Linear model parameters as a (3,) vector: (w1, w2, bias)."""

    theta: tuple[float, float, float]

    @classmethod
    def zeros(cls) -> "ModelParams":
        return cls((0.0, 0.0, 0.0))

    @classmethod
    def from_array(cls, arr) -> "ModelParams":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (MODEL_DIMENSION,):
            raise InvalidParameterError(f"theta must have shape (3,), got {arr.shape}")
        return cls((float(arr[0]), float(arr[1]), float(arr[2])))

    def as_array(self) -> np.ndarray:
        return np.array(self.theta, dtype=np.float64)

    @property
    def weights(self) -> tuple[float, float]:
        return self.theta[:2]

    @property
    def bias(self) -> float:
        return self.theta[2]


def predict(params: ModelParams, features: np.ndarray) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    return X[:, 0] * params.theta[0] + X[:, 1] * params.theta[1] + params.theta[2]


def per_sample_gradient(params: ModelParams, x, y: float) -> np.ndarray:
    """Gradient of (yhat - y)^2 / 2 for a single sample."""
    x = np.asarray(x, dtype=np.float64)
    r = x[0] * params.theta[0] + x[1] * params.theta[1] + params.theta[2] - y
    return np.array([r * x[0], r * x[1], r])


def per_sample_gradients(params: ModelParams, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """(N, 3) matrix of per-sample gradients, one row per sample."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    r = predict(params, X) - y
    return np.column_stack([r * X[:, 0], r * X[:, 1], r])


# ------------------------------------------------------------- optimizers

@dataclass(frozen=True)
class SgdState:
    """Plain gradient descent, theta <- theta - lr * direction."""

    lr: float = 0.1


@dataclass(frozen=True)
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: tuple[float, float, float] = (0.0, 0.0, 0.0)
    v: tuple[float, float, float] = (0.0, 0.0, 0.0)
    t: int = 0


def apply_update(params: ModelParams, state, direction) -> tuple[ModelParams, object]:
    """One optimizer step along an aggregate gradient direction.

    Pure: returns the new params and the new optimizer state, leaving the
    inputs untouched.
    """
    g = np.asarray(direction, dtype=np.float64)
    if g.shape != (MODEL_DIMENSION,):
        raise InvalidParameterError(f"direction must have shape (3,), got {g.shape}")
    theta = params.as_array()
    if isinstance(state, SgdState):
        return ModelParams.from_array(theta - state.lr * g), state
    if isinstance(state, AdamState):
        t = state.t + 1
        m = state.beta1 * np.array(state.m) + (1 - state.beta1) * g
        v = state.beta2 * np.array(state.v) + (1 - state.beta2) * g * g
        m_hat = m / (1 - state.beta1 ** t)
        v_hat = v / (1 - state.beta2 ** t)
        theta = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_state = replace(state, m=tuple(m), v=tuple(v), t=t)
        return ModelParams.from_array(theta), new_state
    raise InvalidParameterError(f"unknown optimizer state {type(state).__name__}")


# ---------------------------------------------------------------- metrics

@dataclass(frozen=True)
class EvalMetrics:
    loss: float  # plain mean squared error (the 1/2 scaling exists only in the training objective)
    r2: float


def evaluate(params: ModelParams, features: np.ndarray, labels: np.ndarray) -> EvalMetrics:
    y = np.asarray(labels, dtype=np.float64)
    r = predict(params, features) - y
    loss = float(np.mean(r * r))
    ss_res = float(np.sum(r * r))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else -math.inf
    else:
        r2 = 1.0 - ss_res / ss_tot
    return EvalMetrics(loss=loss, r2=r2)


def write_dataset_csv(dataset: Dataset, path) -> None:
    """x1, x2, y, split rows; floats via repr so the file reads back exactly."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "y", "split"])
        for i in range(dataset.n_samples):
            if i < dataset.n_train:
                part = "train"
            elif i < dataset.n_train + dataset.n_val:
                part = "val"
            else:
                part = "test"
            w.writerow([
                repr(float(dataset.features[i, 0])),
                repr(float(dataset.features[i, 1])),
                repr(float(dataset.labels[i])),
                part,
            ])
