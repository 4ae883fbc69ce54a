"""Learning-coefficient estimates from sampler loss traces.

The estimate is ``n * beta * (mean of post-burn-in losses - initial loss)``
with the tempering ``beta = beta0 / ln n``.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_random_state

from .dln import ArrayDataset, DlnParams, check_params, dataset_loss
from .exceptions import ConfigurationError, ContractViolation
from .samplers import Sampler, make_sampler, run_dataset_chain


def wbic_beta(n: int, beta0: float = 1.0) -> float:
    """Inverse temperature ``beta0 / ln n``."""
    if n < 3:
        raise ConfigurationError(f"need n >= 3 for beta0 / ln n, got n={n}")
    if not beta0 > 0:
        raise ConfigurationError("beta0 must be positive")
    return beta0 / math.log(n)


@dataclass
class EstimatorConfig:
    n: int
    beta0: float = 1.0
    burn_in: Optional[int] = None  # default floor(0.9 T)
    chains: int = 1

    def burn_in_for(self, num_steps: int) -> int:
        b = int(0.9 * num_steps) if self.burn_in is None else int(self.burn_in)
        if not 0 <= b < num_steps:
            raise ConfigurationError(f"burn-in {b} must lie in [0, T={num_steps})")
        return b


@dataclass
class LlcEstimate:
    lambda_hat: float
    L_bar: float
    L0: float
    diverged: bool
    diverged_fraction: float = 0.0


def estimate_llc(trace, cfg: EstimatorConfig, init_loss: float = None) -> LlcEstimate:
    """Turn a :class:`~llcbench.samplers.ChainTrace` into an estimate.

    Averages losses at indices ``B .. T-1``. ``init_loss`` replaces
    ``trace.losses[0]`` (e.g. a large-batch loss at the initial point).
    Divergent traces, or NaN in the averaged window, give ``lambda_hat = NaN``.
    """
    T = trace.num_steps
    if T < 2:
        raise ConfigurationError("need at least two recorded steps")
    burn = cfg.burn_in_for(T)
    nbeta = cfg.n * wbic_beta(cfg.n, cfg.beta0)
    losses = np.asarray(trace.losses, dtype=np.float64)
    L0 = float(losses[0]) if init_loss is None and losses.size else init_loss
    L0 = float("nan") if L0 is None else float(L0)
    window = losses[burn:T]
    if trace.diverged or window.size < T - burn or not np.isfinite(window).all():
        return LlcEstimate(float("nan"), float("nan"), L0, True, 1.0)
    L_bar = float(window.mean())
    return LlcEstimate(nbeta * (L_bar - L0), L_bar, L0, False, 0.0)


def multi_chain_estimate(estimates: Sequence[LlcEstimate]) -> LlcEstimate:
    """Average the finite estimates of independent chains."""
    if not estimates:
        raise ContractViolation("need at least one estimate")
    finite = [e for e in estimates if np.isfinite(e.lambda_hat)]
    frac = 1.0 - len(finite) / len(estimates)
    if not finite:
        return LlcEstimate(float("nan"), float("nan"), float(estimates[0].L0), True, frac)
    return LlcEstimate(
        float(np.mean([e.lambda_hat for e in finite])),
        float(np.mean([e.L_bar for e in finite])),
        float(np.mean([e.L0 for e in finite])),
        False,
        frac,
    )


class LLCEstimator(BaseEstimator):
    """Estimate the local learning coefficient of a deep linear network.

    Parameters
    ----------
    sampler : str or Sampler, default="rmspropsgld"
        Sampler name (see :data:`llcbench.samplers.SAMPLERS`) or an instance.
        A sampler instance whose ``temperature`` is None gets ``n * beta``.
    step_size : float, default=1e-4
        Step size, used when ``sampler`` is a name.
    localization : float, default=1.0
        Strength of the Gaussian prior centred at the initial parameter.
    num_steps : int, default=2000
    batch_size : int, default=100
    burn_in : int, optional
        Number of initial losses discarded; defaults to ``floor(0.9 * num_steps)``.
    beta0 : float, default=1.0
        Tempering constant: ``beta = beta0 / ln n``.
    num_chains : int, default=1
    sampler_params : dict, optional
        Extra hyperparameters forwarded to the sampler constructor.
    init_loss_samples : int, optional
        When set, the loss at the initial parameter is evaluated on this
        many samples instead of the first minibatch.
    random_state : int, RandomState or None

    Attributes
    ----------
    llc_ : float
        Mean estimate over finite chains (NaN if all chains diverged).
    estimates_ : list of LlcEstimate
    traces_ : list of ChainTrace
    diverged_fraction_ : float
    n_features_in_ : int
    """

    def __init__(self, sampler="rmspropsgld", step_size=1e-4, localization=1.0,
                 num_steps=2000, batch_size=100, burn_in=None, beta0=1.0, num_chains=1,
                 sampler_params=None, init_loss_samples=None, random_state=None):
        self.sampler = sampler
        self.step_size = step_size
        self.localization = localization
        self.num_steps = num_steps
        self.batch_size = batch_size
        self.burn_in = burn_in
        self.beta0 = beta0
        self.num_chains = num_chains
        self.sampler_params = sampler_params
        self.init_loss_samples = init_loss_samples
        self.random_state = random_state

    def _make_sampler(self) -> Sampler:
        if isinstance(self.sampler, Sampler):
            return self.sampler
        return make_sampler(self.sampler, step_size=self.step_size,
                            localization=self.localization, **(self.sampler_params or {}))

    def fit(self, X, y, init_params):
        """Sample around ``init_params`` using the data ``(X, y)``.

        ``init_params`` is the sequence of weight matrices ``(W_1, ..., W_M)``
        at which the coefficient is measured.
        """
        X = check_array(X, dtype=np.float64)
        y = check_array(y, dtype=np.float64, ensure_2d=False)
        if y.ndim == 1:
            y = y[:, None]
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        params = check_params(init_params)
        arch = params.architecture
        if X.shape[1] != arch.input_dim or y.shape[1] != arch.output_dim:
            raise ValueError(
                f"data shapes {X.shape}, {y.shape} do not fit layer sizes {arch.layer_sizes}"
            )
        rs = check_random_state(self.random_state)
        dataset = ArrayDataset(X, y, seed=int(rs.randint(np.iinfo(np.int32).max)))
        self.n_features_in_ = X.shape[1]
        return self._fit_dataset(dataset, params, rs)

    def fit_task(self, task):
        """Fit on a generated :class:`~llcbench.taskgen.TaskSpec` (streamed data)."""
        rs = check_random_state(self.random_state)
        self.n_features_in_ = task.architecture.input_dim
        return self._fit_dataset(task.dataset, task.true_params, rs)

    def _fit_dataset(self, dataset, params: DlnParams, rs):
        if self.num_chains < 1:
            raise ConfigurationError("num_chains must be at least 1")
        cfg = EstimatorConfig(n=dataset.n, beta0=self.beta0, burn_in=self.burn_in,
                              chains=self.num_chains)
        cfg.burn_in_for(self.num_steps)
        sampler = self._make_sampler()
        init_loss = None
        if self.init_loss_samples:
            init_loss = dataset_loss(params, dataset, self.init_loss_samples)
        self.traces_, self.estimates_ = [], []
        for _ in range(self.num_chains):
            seed = int(rs.randint(np.iinfo(np.int32).max))
            trace = run_dataset_chain(dataset, params, sampler, seed, self.num_steps,
                                      self.batch_size, self.beta0)
            self.traces_.append(trace)
            self.estimates_.append(estimate_llc(trace, cfg, init_loss))
        combined = multi_chain_estimate(self.estimates_)
        self.llc_ = combined.lambda_hat
        self.diverged_fraction_ = combined.diverged_fraction
        return self

    def relative_error(self, true_llc) -> float:
        """``(llc_ - true) / true`` for a known coefficient."""
        check_is_fitted(self, "llc_")
        true_llc = float(true_llc)
        if true_llc == 0:
            raise ValueError("relative error is undefined for a zero coefficient")
        return (self.llc_ - true_llc) / true_llc
