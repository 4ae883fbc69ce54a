"""Localized stochastic-gradient MCMC samplers.

Every sampler targets

    pi(w) ~ exp(-gamma/2 ||w - w0||^2 - beta_tilde * L(w))

where ``L`` is estimated by minibatch losses, ``gamma`` is the
``localization`` and ``beta_tilde`` the ``temperature`` (``n * beta`` in the
harness). Samplers work on flat float64 parameter vectors.

Each class only stores hyperparameters (sklearn-style, so ``get_params`` /
``set_params`` / ``clone`` work). State lives in :class:`SamplerState`, and
:meth:`Sampler.step` is a pure function of ``(state, grad, noise)``. The
adaptive samplers build their statistics from the loss gradient only; the
prior term never enters ``m`` or ``v``.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, clone

from .dln import batch_indices, check_params, loss_and_gradient, unflatten
from .exceptions import ConfigurationError


@dataclass
class SamplerState:
    """Position plus algorithm-specific auxiliary state.

    ``t`` counts completed steps. ``m``/``v`` are the first/second moment
    EMAs (AdamSGLD, RMSPropSGLD), ``p`` the momentum (SGHMC, SGNHT) and
    ``alpha`` the SGNHT thermostat.
    """

    w: np.ndarray
    w0: np.ndarray
    t: int = 0
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None
    alpha: Optional[float] = None


class Sampler(BaseEstimator):
    """Common hyperparameters: step size, localization, temperature."""

    name = "base"

    def __init__(self, step_size=1e-4, localization=1.0, temperature=None):
        self.step_size = step_size
        self.localization = localization
        self.temperature = temperature

    def _check(self):
        if not self.step_size > 0:
            raise ConfigurationError(f"{self.name}: step_size must be positive")
        if not self.localization >= 0:
            raise ConfigurationError(f"{self.name}: localization must be nonnegative")
        if self.temperature is None or not self.temperature >= 0:
            raise ConfigurationError(f"{self.name}: temperature must be set and nonnegative")

    def init_state(self, w0, rng=None) -> SamplerState:
        self._check()
        w0 = np.array(w0, dtype=np.float64).ravel()
        return SamplerState(w=w0.copy(), w0=w0)

    def drift(self, state, grad):
        """Gradient of the negative log posterior: prior pull plus tempered loss gradient."""
        return self.localization * (state.w - state.w0) + self.temperature * grad

    def step(self, state: SamplerState, grad, noise) -> SamplerState:
        raise NotImplementedError


class SGLD(Sampler):
    """Stochastic gradient Langevin dynamics.

    ``w += -eps/2 * (gamma (w - w0) + beta_tilde g) + sqrt(eps) * eta``
    """

    name = "sgld"

    def step(self, state, grad, noise):
        eps = self.step_size
        dw = -0.5 * eps * self.drift(state, grad) + np.sqrt(eps) * noise
        return replace(state, w=state.w + dw, t=state.t + 1)


class RMSPropSGLD(Sampler):
    """SGLD preconditioned by an RMSProp estimate of the squared gradient.

    ``v`` starts at ones and is bias corrected with ``1 - decay**(t+1)``.
    The per-coordinate step is ``eps / (sqrt(v_hat) + stability)``.
    """

    name = "rmspropsgld"

    def __init__(self, step_size=1e-4, localization=1.0, temperature=None,
                 decay=0.99, stability=0.1):
        super().__init__(step_size, localization, temperature)
        self.decay = decay
        self.stability = stability

    def _check(self):
        super()._check()
        if not 0 < self.decay < 1 or not self.stability > 0:
            raise ConfigurationError("rmspropsgld: need 0 < decay < 1 and stability > 0")

    def init_state(self, w0, rng=None):
        state = super().init_state(w0)
        state.v = np.ones_like(state.w)
        return state

    def step(self, state, grad, noise):
        b = self.decay
        v = b * state.v + (1.0 - b) * grad * grad
        v_hat = v / (1.0 - b ** (state.t + 1))
        eps = self.step_size / (np.sqrt(v_hat) + self.stability)
        dw = -0.5 * eps * self.drift(state, grad) + np.sqrt(eps) * noise
        return replace(state, w=state.w + dw, v=v, t=state.t + 1)


class AdamSGLD(Sampler):
    """SGLD driven by an Adam-style bias-corrected first moment and preconditioner."""

    name = "adamsgld"

    def __init__(self, step_size=1e-4, localization=1.0, temperature=None,
                 beta1=0.9, beta2=0.999, stability=0.1):
        super().__init__(step_size, localization, temperature)
        self.beta1 = beta1
        self.beta2 = beta2
        self.stability = stability

    def _check(self):
        super()._check()
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1) or not self.stability > 0:
            raise ConfigurationError("adamsgld: need beta1, beta2 in (0, 1) and stability > 0")

    def init_state(self, w0, rng=None):
        state = super().init_state(w0)
        state.m = np.zeros_like(state.w)
        state.v = np.ones_like(state.w)
        return state

    def step(self, state, grad, noise):
        b1, b2, k = self.beta1, self.beta2, state.t + 1
        m = b1 * state.m + (1.0 - b1) * grad
        v = b2 * state.v + (1.0 - b2) * grad * grad
        m_hat = m / (1.0 - b1 ** k)
        v_hat = v / (1.0 - b2 ** k)
        eps = self.step_size / (np.sqrt(v_hat) + self.stability)
        dw = -0.5 * eps * (self.localization * (state.w - state.w0) + self.temperature * m_hat)
        dw += np.sqrt(eps) * noise
        return replace(state, w=state.w + dw, m=m, v=v, t=k)


_MOMENTUM_UPDATES = ("pre", "post")


class _MomentumSampler(Sampler):
    """Shared pieces of the Hamiltonian samplers.

    The initial momentum is ``Normal(0, eps I)``. ``momentum_update="pre"``
    moves the position by the momentum from before the update (as in the
    reference pseudocode); ``"post"`` uses the updated momentum.

    The momentum kick is ``drift_factor * eps * drift``. The pseudocode value
    0.5 paired with noise ``sqrt(2 alpha eps)`` samples the posterior at twice
    its temperature; ``drift_factor=1.0`` gives the standard SGHMC target.
    """

    def _check(self):
        super()._check()
        if self.momentum_update not in _MOMENTUM_UPDATES:
            raise ConfigurationError(f"momentum_update must be one of {_MOMENTUM_UPDATES}")
        if not self.drift_factor > 0:
            raise ConfigurationError("drift_factor must be positive")

    def init_state(self, w0, rng=None):
        state = super().init_state(w0)
        rng = np.random.default_rng(rng)
        state.p = np.sqrt(self.step_size) * rng.standard_normal(state.w.shape)
        return state

    def _momentum(self, state, grad, noise, alpha):
        eps = self.step_size
        with np.errstate(invalid="ignore"):
            kick = np.sqrt(2.0 * alpha * eps)
        return state.p - self.drift_factor * eps * self.drift(state, grad) - alpha * state.p + kick * noise

    def _position(self, state, p):
        return state.w + (state.p if self.momentum_update == "pre" else p)


class SGHMC(_MomentumSampler):
    """Stochastic gradient HMC with constant friction ``alpha``.

    ``p += -eps/2 * (gamma (w - w0) + beta_tilde g) - alpha p + sqrt(2 alpha eps) eta``
    """

    name = "sghmc"

    def __init__(self, step_size=1e-4, localization=1.0, temperature=None,
                 friction=0.1, momentum_update="pre", drift_factor=0.5):
        super().__init__(step_size, localization, temperature)
        self.friction = friction
        self.momentum_update = momentum_update
        self.drift_factor = drift_factor

    def _check(self):
        super()._check()
        if not self.friction > 0:
            raise ConfigurationError("sghmc: friction must be positive")

    def step(self, state, grad, noise):
        p = self._momentum(state, grad, noise, self.friction)
        return replace(state, w=self._position(state, p), p=p, t=state.t + 1)


class SGNHT(_MomentumSampler):
    """Stochastic gradient Nose-Hoover thermostat.

    The friction adapts as ``alpha += ||p|| / d - eps``; ``thermostat="squared"``
    switches to ``||p||^2 / d``. A negative friction makes the noise scale
    undefined, which surfaces as NaN (divergence) rather than an error.
    """

    name = "sgnht"

    def __init__(self, step_size=1e-4, localization=1.0, temperature=None,
                 initial_friction=0.1, momentum_update="pre", thermostat="norm",
                 drift_factor=0.5):
        super().__init__(step_size, localization, temperature)
        self.initial_friction = initial_friction
        self.momentum_update = momentum_update
        self.thermostat = thermostat
        self.drift_factor = drift_factor

    def _check(self):
        super()._check()
        if not self.initial_friction > 0:
            raise ConfigurationError("sgnht: initial_friction must be positive")
        if self.thermostat not in ("norm", "squared"):
            raise ConfigurationError("thermostat must be 'norm' or 'squared'")

    def init_state(self, w0, rng=None):
        state = super().init_state(w0, rng)
        state.alpha = float(self.initial_friction)
        return state

    def step(self, state, grad, noise):
        p = self._momentum(state, grad, noise, state.alpha)
        if self.thermostat == "norm":
            heat = np.linalg.norm(state.p) / state.p.size
        else:
            heat = float(state.p @ state.p) / state.p.size
        alpha = state.alpha + heat - self.step_size
        return replace(state, w=self._position(state, p), p=p, alpha=float(alpha), t=state.t + 1)


SAMPLERS = {cls.name: cls for cls in (SGLD, AdamSGLD, RMSPropSGLD, SGHMC, SGNHT)}
DISPLAY_NAMES = {
    "sgld": "SGLD",
    "adamsgld": "AdamSGLD",
    "rmspropsgld": "RMSPropSGLD",
    "sghmc": "SGHMC",
    "sgnht": "SGNHT",
}


def make_sampler(name: str, **params) -> Sampler:
    """Instantiate a sampler by (case-insensitive) name."""
    key = name.lower()
    if key not in SAMPLERS:
        raise ConfigurationError(f"unknown sampler {name!r}; choose from {sorted(SAMPLERS)}")
    return SAMPLERS[key](**params)


@dataclass
class ChainTrace:
    """Minibatch losses ``L_{m,t}(w_t)`` recorded before each step.

    ``losses[0]`` is the loss at the initial point. A chain that produced a
    non-finite loss stops there: ``losses`` holds the finite prefix and
    ``diverged_at`` the offending step.
    """

    losses: np.ndarray
    num_steps: int
    diverged: bool = False
    diverged_at: Optional[int] = None
    final_state: Optional[SamplerState] = None

    def __len__(self):
        return len(self.losses)


def chain_temperature(n: int, beta0: float = 1.0) -> float:
    """``n * beta0 / ln n``, the tempered-loss multiplier of the posterior."""
    from .estimator import wbic_beta

    return n * wbic_beta(n, beta0)


def run_dataset_chain(dataset, init_params, sampler: Sampler, chain_seed: int = 0,
                      num_steps: int = 2000, batch_size: int = 100, beta0: float = 1.0,
                      keep_state: bool = False) -> ChainTrace:
    """Run one chain started at ``init_params`` on an indexable dataset.

    ``dataset`` needs ``n``, ``seed`` and ``samples(indices)`` (see
    :class:`llcbench.dln.DatasetSpec`). The step-``t`` minibatch is a pure
    function of ``(dataset.seed, chain_seed, t)``; the Gaussian noise comes
    from a Philox stream keyed by ``chain_seed`` and is consumed in step
    order (initial momentum first, for the Hamiltonian samplers).
    """
    params = check_params(init_params)
    arch = params.architecture
    if num_steps < 1:
        raise ConfigurationError("num_steps must be positive")
    if not 1 <= batch_size <= dataset.n:
        raise ConfigurationError(f"batch size {batch_size} must lie in [1, n={dataset.n}]")
    if sampler.temperature is None:
        sampler = clone(sampler).set_params(temperature=chain_temperature(dataset.n, beta0))
    rng = np.random.Generator(np.random.Philox(chain_seed))
    state = sampler.init_state(params.flatten(), rng)
    d = state.w.size
    losses = np.empty(num_steps)
    diverged_at = None
    with np.errstate(all="ignore"):
        for t in range(num_steps):
            idx = batch_indices(dataset.seed, chain_seed, t, batch_size, dataset.n)
            x, y = dataset.samples(idx)
            loss, grads = loss_and_gradient(unflatten(arch, state.w), x, y)
            if not np.isfinite(loss):
                diverged_at = t
                break
            losses[t] = loss
            if t == num_steps - 1:
                break
            grad = np.concatenate([g.ravel() for g in grads])
            state = sampler.step(state, grad, rng.standard_normal(d))
    if diverged_at is not None:
        losses = losses[:diverged_at]
    return ChainTrace(
        losses=losses,
        num_steps=num_steps,
        diverged=diverged_at is not None,
        diverged_at=diverged_at,
        final_state=state if keep_state else None,
    )


def run_chain(task, sampler: Sampler, chain_seed: int = 0, num_steps: int = 2000,
              batch_size: int = 100, beta0: float = 1.0, keep_state: bool = False) -> ChainTrace:
    """Run ``sampler`` for ``num_steps`` steps from the task's true parameter."""
    return run_dataset_chain(task.dataset, task.true_params, sampler, chain_seed,
                             num_steps, batch_size, beta0, keep_state)
