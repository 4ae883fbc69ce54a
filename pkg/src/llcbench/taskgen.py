"""Random benchmark problems: architectures, low-rank true parameters, ranks."""

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .dln import DatasetSpec, DlnArchitecture, DlnParams, composite_matrix, check_params
from .exceptions import ConfigurationError


@dataclass(frozen=True)
class ModelClass:
    """Bounds on layer count and layer size for randomly drawn networks."""

    name: str
    min_layers: int
    max_layers: int
    min_width: int
    max_width: int
    full_scale: bool = True

    def __post_init__(self):
        if not 1 <= self.min_layers <= self.max_layers:
            raise ConfigurationError(f"bad layer range for class {self.name!r}")
        if not 1 <= self.min_width <= self.max_width:
            raise ConfigurationError(f"bad width range for class {self.name!r}")


_CLASSES = (
    ModelClass("1K", 2, 4, 4, 12, full_scale=False),
    ModelClass("100K", 2, 10, 50, 500),
    ModelClass("1M", 2, 20, 100, 1000),
    ModelClass("10M", 2, 20, 500, 2000),
    ModelClass("100M", 2, 40, 500, 3000),
)


def builtin_classes():
    """The four published architecture classes plus the desk-scale ``"1K"`` class."""
    return list(_CLASSES)


def get_class(name) -> ModelClass:
    if isinstance(name, ModelClass):
        return name
    for cls in _CLASSES:
        if cls.name == name:
            return cls
    raise ConfigurationError(
        f"unknown model class {name!r}; choose from {[c.name for c in _CLASSES]}"
    )


def _generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_architecture(model_class, seed=None) -> DlnArchitecture:
    """Draw ``M`` uniformly, then every size ``H_0..H_M`` uniformly from the class range."""
    model_class = get_class(model_class)
    rng = _generator(seed)
    m = int(rng.integers(model_class.min_layers, model_class.max_layers + 1))
    sizes = rng.integers(model_class.min_width, model_class.max_width + 1, size=m + 1)
    return DlnArchitecture(tuple(int(h) for h in sizes))


def sample_true_params(architecture: DlnArchitecture, seed=None, reduce_prob: float = 0.5) -> DlnParams:
    """Xavier-normal weights, then per-layer random rank reduction.

    Each layer independently, with probability ``reduce_prob``, gets a target
    rank ``r`` drawn uniformly from ``{0, ..., min(rows, cols)}``. All rows
    after the first ``r`` (or all columns after the first ``r``, side chosen
    by a fair coin) are zeroed, which forces ``rank <= r``.
    """
    rng = _generator(seed)
    weights = []
    for rows, cols in architecture.shapes:
        w = rng.normal(0.0, np.sqrt(2.0 / (rows + cols)), size=(rows, cols))
        if rng.random() < reduce_prob:
            target = int(rng.integers(0, min(rows, cols) + 1))
            if rng.random() < 0.5:
                w[target:, :] = 0.0
            else:
                w[:, target:] = 0.0
        weights.append(w)
    return DlnParams(weights)


def true_rank(params) -> int:
    """Numerical rank of the composite matrix (SVD, numpy's default tolerance)."""
    w = composite_matrix(params)
    if not np.isfinite(w).all():
        raise ConfigurationError("rank of non-finite parameters is undefined")
    s = np.linalg.svd(w, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    tol = max(w.shape) * np.finfo(np.float64).eps * s[0]
    return int(np.count_nonzero(s > tol))


@dataclass
class TaskSpec:
    """A generated learning problem and its exact learning coefficient."""

    architecture: DlnArchitecture
    true_params: DlnParams
    rank: int
    dataset: DatasetSpec
    true_llc: Optional[Fraction] = None
    task_id: int = 0
    seed: int = 0
    model_class: str = ""

    @property
    def num_params(self) -> int:
        return self.architecture.num_params

    def to_dict(self, include_weights: bool = False) -> dict:
        out = {
            "task_id": self.task_id,
            "model_class": self.model_class,
            "seed": self.seed,
            "layer_sizes": list(self.architecture.layer_sizes),
            "num_params": self.num_params,
            "rank": self.rank,
            "true_llc": None if self.true_llc is None else [self.true_llc.numerator, self.true_llc.denominator],
            "true_llc_float": None if self.true_llc is None else float(self.true_llc),
            "dataset": {
                "n": self.dataset.n,
                "noise_variance": self.dataset.noise_variance,
                "input_low": self.dataset.input_low,
                "input_high": self.dataset.input_high,
                "seed": self.dataset.seed,
            },
        }
        if include_weights:
            out["weights"] = [w.tolist() for w in self.true_params.weights]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TaskSpec":
        """Rebuild a task from :meth:`to_dict` output.

        Without stored weights the parameters are regenerated from ``seed``,
        which requires the task to have been produced by :func:`make_task`.
        """
        arch = DlnArchitecture(tuple(data["layer_sizes"]))
        if "weights" in data:
            params = check_params(DlnParams(data["weights"]), arch)
        else:
            params = sample_true_params(arch, _param_rng(data["seed"]))
        ds = data["dataset"]
        dataset = DatasetSpec(
            n=ds["n"], true_params=params, noise_variance=ds["noise_variance"],
            input_low=ds["input_low"], input_high=ds["input_high"], seed=ds["seed"],
        )
        llc = data.get("true_llc")
        return cls(
            architecture=arch, true_params=params, rank=int(data["rank"]), dataset=dataset,
            true_llc=None if llc is None else Fraction(llc[0], llc[1]),
            task_id=int(data.get("task_id", 0)), seed=int(data["seed"]),
            model_class=data.get("model_class", ""),
        )


def _param_rng(seed):
    # architecture and weights come from separate children so either can be regenerated alone
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])


def make_task(model_class, seed: int, n: int = 10_000, noise_variance: float = 0.25,
              input_low: float = -10.0, input_high: float = 10.0, task_id: int = 0) -> TaskSpec:
    """Generate a task as a pure function of ``(model_class, seed)``.

    The exact learning coefficient is left unset; see
    :func:`llcbench.analytic.attach_llc`.
    """
    model_class = get_class(model_class)
    arch_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[0])
    arch = sample_architecture(model_class, arch_rng)
    params = sample_true_params(arch, _param_rng(seed))
    dataset = DatasetSpec(
        n=n, true_params=params, noise_variance=noise_variance,
        input_low=input_low, input_high=input_high,
        seed=int(np.random.SeedSequence(seed).generate_state(2, np.uint64)[1]) & 0x7FFFFFFFFFFFFFFF,
    )
    return TaskSpec(arch, params, true_rank(params), dataset, None, task_id, seed, model_class.name)


def task_from_params(params, n: int = 10_000, seed: int = 0, noise_variance: float = 0.25,
                     input_low: float = -10.0, input_high: float = 10.0, task_id: int = 0,
                     with_llc: bool = True) -> TaskSpec:
    """Wrap hand-chosen true parameters in a :class:`TaskSpec`.

    The dataset seed is ``seed`` itself. With ``with_llc`` the exact
    coefficient is attached (and analytic errors propagate).
    """
    params = check_params(params)
    dataset = DatasetSpec(n=n, true_params=params, noise_variance=noise_variance,
                          input_low=input_low, input_high=input_high, seed=seed)
    task = TaskSpec(params.architecture, params, true_rank(params), dataset, None, task_id, seed, "")
    if with_llc:
        from .analytic import analytic_llc

        task.true_llc = analytic_llc(task.architecture, task.rank)
    return task
