"""Deep linear network regression model.

A network with layer sizes ``H_0, ..., H_M`` maps ``x`` to ``W_M ... W_1 x``.
Weight ``l`` (1-based) has shape ``(H_l, H_{l-1})``. All arithmetic is
float64.

Data samples are produced on demand from ``(seed, index)`` by a
counter-based hash (see :mod:`llcbench._rng`), so datasets with millions of
rows never need to be materialised.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _rng
from .exceptions import ConfigurationError, ContractViolation

# stream identifiers for the counter-based generator
_STREAM_INPUT = 0x1
_STREAM_NOISE = 0x2
_STREAM_BATCH = 0x3


@dataclass(frozen=True)
class DlnArchitecture:
    """Layer sizes ``(H_0, ..., H_M)`` of a deep linear network."""

    layer_sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(h) for h in self.layer_sizes)
        if len(sizes) < 2:
            raise ContractViolation("need at least one layer (two layer sizes)")
        if min(sizes) < 1:
            raise ContractViolation(f"layer sizes must be positive, got {sizes}")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def num_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def shapes(self):
        h = self.layer_sizes
        return [(h[l], h[l - 1]) for l in range(1, len(h))]

    @property
    def num_params(self) -> int:
        return sum(r * c for r, c in self.shapes)

    def zeros(self) -> "DlnParams":
        return DlnParams([np.zeros(s) for s in self.shapes])


@dataclass
class DlnParams:
    """Ordered weight matrices ``(W_1, ..., W_M)``."""

    weights: list

    def __post_init__(self):
        ws = [np.asarray(w, dtype=np.float64) for w in self.weights]
        if not ws:
            raise ContractViolation("DlnParams needs at least one matrix")
        for l, w in enumerate(ws):
            if w.ndim != 2:
                raise ContractViolation(f"layer {l + 1} is not a matrix: shape {w.shape}")
            if l and w.shape[1] != ws[l - 1].shape[0]:
                raise ContractViolation(
                    f"layer {l + 1} has {w.shape[1]} inputs but layer {l} "
                    f"has {ws[l - 1].shape[0]} outputs"
                )
        self.weights = ws

    @property
    def architecture(self) -> DlnArchitecture:
        return DlnArchitecture((self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights))

    def flatten(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights])

    @classmethod
    def from_flat(cls, architecture: DlnArchitecture, vector) -> "DlnParams":
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (architecture.num_params,):
            raise ContractViolation(
                f"expected flat vector of length {architecture.num_params}, got {vector.shape}"
            )
        return cls(unflatten(architecture, vector))

    def copy(self) -> "DlnParams":
        return DlnParams([w.copy() for w in self.weights])

    def is_finite(self) -> bool:
        return all(np.isfinite(w).all() for w in self.weights)


def unflatten(architecture: DlnArchitecture, vector: np.ndarray):
    """Views of ``vector`` reshaped into the layer matrices (no copy)."""
    out, start = [], 0
    for shape in architecture.shapes:
        size = shape[0] * shape[1]
        out.append(vector[start:start + size].reshape(shape))
        start += size
    return out


def check_params(params, architecture: DlnArchitecture = None) -> DlnParams:
    """Coerce ``params`` to :class:`DlnParams` and check it against ``architecture``."""
    if not isinstance(params, DlnParams):
        params = DlnParams(list(params))
    if architecture is not None and params.architecture != architecture:
        raise ContractViolation(
            f"parameter shapes {params.architecture.layer_sizes} do not match "
            f"architecture {architecture.layer_sizes}"
        )
    return params


def composite_matrix(params) -> np.ndarray:
    """The end-to-end matrix ``W_M ... W_1``."""
    params = check_params(params)
    out = params.weights[0]
    for w in params.weights[1:]:
        out = w @ out
    return out


def forward(params, x) -> np.ndarray:
    """Apply the network to one input vector or to the rows of a matrix."""
    params = check_params(params)
    x = np.asarray(x, dtype=np.float64)
    n_in = params.weights[0].shape[1]
    if x.shape[-1] != n_in or x.ndim > 2:
        raise ContractViolation(f"input has trailing dimension {x.shape[-1]}, expected {n_in}")
    h = x
    for w in params.weights:
        h = h @ w.T
    return h


@dataclass
class Batch:
    """A minibatch: ``inputs`` is ``(m, N)``, ``targets`` is ``(m, N')``."""

    inputs: np.ndarray
    targets: np.ndarray
    indices: np.ndarray = None

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=np.float64))
        if self.inputs.shape[0] != self.targets.shape[0] or self.inputs.shape[0] < 1:
            raise ContractViolation(
                f"inputs and targets disagree on batch size: "
                f"{self.inputs.shape[0]} vs {self.targets.shape[0]}"
            )

    @property
    def size(self) -> int:
        return self.inputs.shape[0]


def _check_batch(weights, batch: Batch):
    if batch.inputs.shape[1] != weights[0].shape[1]:
        raise ContractViolation(
            f"batch inputs have {batch.inputs.shape[1]} columns, network expects {weights[0].shape[1]}"
        )
    if batch.targets.shape[1] != weights[-1].shape[0]:
        raise ContractViolation(
            f"batch targets have {batch.targets.shape[1]} columns, network outputs {weights[-1].shape[0]}"
        )


def batch_loss(params, batch: Batch) -> float:
    """Mean squared Euclidean residual ``(1/m) sum_j ||f(x_j) - y_j||^2``.

    Non-finite parameters yield a non-finite loss rather than an exception.
    """
    params = check_params(params)
    _check_batch(params.weights, batch)
    with np.errstate(over="ignore", invalid="ignore"):
        residual = forward(params, batch.inputs) - batch.targets
        return float(np.einsum("ij,ij->", residual, residual) / batch.size)


def loss_and_gradient(weights, inputs, targets):
    """Minibatch loss and its gradient with respect to each weight matrix.

    Works directly on a list of arrays (no validation) because it sits in the
    sampler inner loop. Returns ``(loss, [dL/dW_1, ..., dL/dW_M])``.
    """
    m = inputs.shape[0]
    activations = [inputs]
    h = inputs
    for w in weights:
        h = h @ w.T
        activations.append(h)
    residual = h - targets
    loss = np.einsum("ij,ij->", residual, residual) / m
    grads = [None] * len(weights)
    delta = residual * (2.0 / m)
    for l in range(len(weights) - 1, -1, -1):
        grads[l] = delta.T @ activations[l]
        if l:
            delta = delta @ weights[l]
    return float(loss), grads


def batch_loss_gradient(params, batch: Batch) -> DlnParams:
    """Gradient of :func:`batch_loss` with respect to every layer.

    For layer ``l`` this is ``(2/m) A_l^T R B_l^T`` with ``R`` the residual
    matrix, ``A_l = W_M ... W_{l+1}`` and ``B_l = W_{l-1} ... W_1 X``,
    evaluated by reverse accumulation.
    """
    params = check_params(params)
    _check_batch(params.weights, batch)
    with np.errstate(over="ignore", invalid="ignore"):
        _, grads = loss_and_gradient(params.weights, batch.inputs, batch.targets)
    return DlnParams(grads)


@dataclass
class DatasetSpec:
    """A regression dataset addressed by sample index.

    Sample ``i`` has ``x_i ~ Uniform[input_low, input_high]^N`` and
    ``y_i = W0 x_i + noise_i`` with ``noise_i ~ Normal(0, noise_variance I)``.
    Both are pure functions of ``(seed, i)``.
    """

    n: int
    true_params: DlnParams
    noise_variance: float = 0.25
    input_low: float = -10.0
    input_high: float = 10.0
    seed: int = 0
    cache_limit: int = 4_000_000
    _composite: np.ndarray = field(default=None, init=False, repr=False, compare=False)
    _cache: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.true_params = check_params(self.true_params)
        if int(self.n) < 1:
            raise ConfigurationError(f"dataset size must be positive, got {self.n}")
        if self.noise_variance < 0:
            raise ConfigurationError("noise variance must be nonnegative")
        if not self.input_low < self.input_high:
            raise ConfigurationError("input_low must be below input_high")
        self.n = int(self.n)
        self.seed = int(self.seed)

    @property
    def input_dim(self) -> int:
        return self.true_params.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.true_params.weights[-1].shape[0]

    @property
    def composite(self) -> np.ndarray:
        if self._composite is None:
            self._composite = composite_matrix(self.true_params)
        return self._composite

    def samples(self, indices):
        """Return ``(X, Y)`` for the given sample indices.

        Datasets with at most ``cache_limit`` stored values are generated once
        and then indexed; the values are identical either way.
        """
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise ContractViolation(f"sample index out of range [0, {self.n})")
        if self._cache is None and self.n * (self.input_dim + self.output_dim) <= self.cache_limit:
            self._cache = self._generate(np.arange(self.n))
        if self._cache is not None:
            return self._cache[0][idx], self._cache[1][idx]
        return self._generate(idx)

    def _generate(self, idx):
        idx = idx.reshape(-1, 1)
        n_in, n_out = self.input_dim, self.output_dim
        u = _rng.uniform(self.seed, _STREAM_INPUT, idx, np.arange(n_in))
        x = self.input_low + (self.input_high - self.input_low) * u
        u = _rng.uniform(self.seed, _STREAM_NOISE, idx, np.arange(2 * n_out))
        noise = np.sqrt(self.noise_variance) * _rng.normal_pair(u[:, 0::2], u[:, 1::2])
        # layer by layer, as in forward(), so a noiseless fit is exactly zero loss
        y = x
        for w in self.true_params.weights:
            y = y @ w.T
        return x, y + noise

    def second_moment(self) -> np.ndarray:
        """``E[x x^T]`` of the uniform input law."""
        return uniform_second_moment(self.input_low, self.input_high, self.input_dim)


@dataclass
class ArrayDataset:
    """In-memory dataset with the same access protocol as :class:`DatasetSpec`."""

    inputs: np.ndarray
    targets: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.inputs.ndim != 2 or self.targets.ndim != 2 or len(self.inputs) != len(self.targets):
            raise ContractViolation("inputs and targets must be 2-d with matching row counts")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def output_dim(self) -> int:
        return self.targets.shape[1]

    def samples(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        return self.inputs[idx], self.targets[idx]


def uniform_second_moment(low: float, high: float, dim: int) -> np.ndarray:
    mean = 0.5 * (low + high)
    var = (high - low) ** 2 / 12.0
    return np.full((dim, dim), mean * mean) + var * np.eye(dim)


def batch_indices(dataset_seed: int, chain_seed: int, t: int, m: int, n: int) -> np.ndarray:
    """Minibatch indices for step ``t``: uniform with replacement over ``[0, n)``."""
    u = _rng.uniform(dataset_seed, _STREAM_BATCH, chain_seed, t, np.arange(m))
    return np.minimum((u * n).astype(np.int64), n - 1)


def sample_batch(dataset, m: int, t: int, chain_seed: int) -> Batch:
    """Draw the step-``t`` minibatch of size ``m`` for the chain ``chain_seed``."""
    if m < 1 or m > dataset.n:
        raise ConfigurationError(f"batch size {m} must lie in [1, n={dataset.n}]")
    idx = batch_indices(dataset.seed, chain_seed, t, m, dataset.n)
    x, y = dataset.samples(idx)
    return Batch(x, y, idx)


def dataset_loss(params, dataset, max_samples: int = None, chunk: int = 65536) -> float:
    """Mean squared residual over the first ``max_samples`` samples (default all)."""
    params = check_params(params)
    total = dataset.n if max_samples is None else min(dataset.n, int(max_samples))
    acc = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, total, chunk):
            x, y = dataset.samples(np.arange(start, min(total, start + chunk)))
            r = forward(params, x) - y
            acc += float(np.einsum("ij,ij->", r, r))
    return acc / total
