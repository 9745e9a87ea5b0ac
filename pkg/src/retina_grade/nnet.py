"""Single-hidden-layer sigmoid network trained by full-batch gradient descent on MSE."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels

__all__ = [
    "MLP",
    "TrainConfig",
    "TrainingError",
    "forward",
    "gradient",
    "init_mlp",
    "mse",
    "one_hot",
    "predict_class",
    "train",
]


class TrainingError(RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged: non-finite MSE at epoch {epoch}")
        self.epoch = epoch


@dataclass
class MLP:
    W1: np.ndarray  # (hidden, input)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (output, hidden)
    b2: np.ndarray  # (output,)

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def output_dim(self) -> int:
        return self.W2.shape[0]

    def copy(self) -> "MLP":
        return MLP(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy())

    def params(self):
        return (self.W1, self.b1, self.W2, self.b2)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 2000
    seed: int = 0
    init_scale: float = 0.5
    batch_mode: str = field(default="full-batch")

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_mode != "full-batch":
            raise ValueError("only full-batch training is supported")

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=int(seed))


def init_mlp(input_dim: int, hidden_dim: int, output_dim: int, seed: int = 0, init_scale: float = 0.5) -> MLP:
    """Uniform(-init_scale, init_scale) weights, zero biases."""
    if min(input_dim, hidden_dim, output_dim) < 1:
        raise ValueError("network dimensions must all be >= 1")
    rng = np.random.default_rng(seed)
    W1 = rng.uniform(-init_scale, init_scale, size=(hidden_dim, input_dim))
    W2 = rng.uniform(-init_scale, init_scale, size=(output_dim, hidden_dim))
    return MLP(W1, np.zeros(hidden_dim), W2, np.zeros(output_dim))


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _as_batch(mlp: MLP, x) -> np.ndarray:
    X = np.asarray(x, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != mlp.input_dim:
        raise ValueError(f"expected inputs of length {mlp.input_dim}, got shape {np.shape(x)}")
    return X


def forward(mlp: MLP, x) -> np.ndarray:
    """Output activations; a single vector gives a 1-D result, a batch a 2-D one."""
    X = _as_batch(mlp, x)
    Y = _sigmoid(_sigmoid(X @ mlp.W1.T + mlp.b1) @ mlp.W2.T + mlp.b2)
    return Y[0] if np.ndim(x) == 1 else Y


def _check_targets(mlp: MLP, X: np.ndarray, T) -> np.ndarray:
    T = np.asarray(T, dtype=np.float64)
    if T.ndim == 1:
        T = T[None, :]
    if X.shape[0] == 0:
        raise ValueError("dataset is empty")
    if T.shape != (X.shape[0], mlp.output_dim):
        raise ValueError(f"targets must have shape {(X.shape[0], mlp.output_dim)}, got {T.shape}")
    return T


def mse(mlp: MLP, x, targets) -> float:
    """Mean of squared errors over samples and output units."""
    X = _as_batch(mlp, x)
    T = _check_targets(mlp, X, targets)
    diff = forward(mlp, X) - T
    return float(np.mean(diff * diff))


def gradient(mlp: MLP, x, targets) -> MLP:
    """Analytic MSE gradient, returned in the shape of the network."""
    X = _as_batch(mlp, x)
    T = _check_targets(mlp, X, targets)
    n, k = T.shape
    H = _sigmoid(X @ mlp.W1.T + mlp.b1)
    Y = _sigmoid(H @ mlp.W2.T + mlp.b2)
    d2 = (2.0 / (n * k)) * (Y - T) * Y * (1.0 - Y)
    d1 = (d2 @ mlp.W2) * H * (1.0 - H)
    return MLP(d1.T @ X, d1.sum(axis=0), d2.T @ H, d2.sum(axis=0))


def train(mlp: MLP, x, targets, config: TrainConfig):
    """Full-batch gradient descent; returns ``(trained copy, final training MSE)``."""
    X = np.ascontiguousarray(_as_batch(mlp, x))
    T = np.ascontiguousarray(_check_targets(mlp, X, targets))
    net = mlp.copy()
    bad = kernels.train_gd(X, T, *net.params(), float(config.learning_rate), int(config.epochs))
    if bad >= 0:
        raise TrainingError(bad)
    final = mse(net, X, T)
    if not np.isfinite(final):
        raise TrainingError(config.epochs)
    return net, final


def predict_class(mlp: MLP, x):
    """1-based index of the largest output; ties go to the lower index."""
    Y = forward(mlp, x)
    return np.argmax(Y, axis=-1) + 1


def one_hot(classes, n_classes: int) -> np.ndarray:
    """One-hot targets for 1-based class labels."""
    c = np.asarray(classes, dtype=np.int64)
    if c.size and (c.min() < 1 or c.max() > n_classes):
        raise ValueError(f"class labels must lie in 1..{n_classes}")
    out = np.zeros((c.size, n_classes))
    out[np.arange(c.size), c - 1] = 1.0
    return out
