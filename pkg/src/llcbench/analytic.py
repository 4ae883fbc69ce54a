"""Exact learning coefficients of deep linear networks and a volume oracle.

The closed form needs an index set ``Sigma`` of layers. With
``Delta_i = H_i - r`` it must satisfy

1. ``max Delta[Sigma] < min Delta[complement]``
2. ``sum Delta[Sigma] >= ell * max Delta[Sigma]``
3. ``sum Delta[Sigma] < ell * min Delta[complement]``

where ``ell = |Sigma| - 1``. Condition 3 is also published with ``max`` in
place of ``min``; both readings are evaluated and a coefficient is only
returned when they agree.

Everything on the analytic path is exact (:class:`fractions.Fraction`).
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from .dln import DlnArchitecture, check_params, uniform_second_moment
from .exceptions import (
    ContractViolation,
    EllZero,
    InsufficientSamples,
    ReadingConflict,
    SigmaAmbiguous,
    SigmaNotFound,
)

log = logging.getLogger(__name__)

READINGS = ("min", "max")


@dataclass(frozen=True)
class SigmaDecomposition:
    deltas: tuple
    sigma: tuple
    ell: int
    a: int


def deltas(architecture, r: int):
    """``H_i - r`` for every layer size ``H_i``."""
    sizes = architecture.layer_sizes if isinstance(architecture, DlnArchitecture) else tuple(architecture)
    if r < 0 or r > min(sizes):
        raise ContractViolation(f"rank {r} outside [0, {min(sizes)}]")
    return tuple(h - r for h in sizes)


def sigma_conditions_hold(deltas, sigma, reading: str = "min") -> bool:
    """Check the three index-set conditions for a candidate ``sigma``."""
    if not sigma:
        return False
    inside = [deltas[i] for i in sigma]
    outside = [deltas[i] for i in range(len(deltas)) if i not in set(sigma)]
    ell = len(sigma) - 1
    total = sum(inside)
    if outside and not max(inside) < min(outside):
        return False
    if not total >= ell * max(inside):
        return False
    if outside:
        bound = min(outside) if reading == "min" else max(outside)
        if not total < ell * bound:
            return False
    return True


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def candidate_sigmas(deltas, reading: str = "min"):
    """All tie-group prefixes of the sorted deltas that satisfy the conditions.

    Condition 1 forces ``Sigma`` to consist of the indices with the smallest
    deltas, cut between two distinct values, so at most ``M + 1`` candidates
    need checking.
    """
    if reading not in READINGS:
        raise ValueError(f"reading must be one of {READINGS}")
    deltas = tuple(int(x) for x in deltas)
    if not deltas or min(deltas) < 0:
        raise ContractViolation(f"deltas must be nonempty and nonnegative: {deltas}")
    order = sorted(range(len(deltas)), key=lambda i: (deltas[i], i))
    found = []
    for k in range(1, len(order) + 1):
        if k < len(order) and deltas[order[k]] == deltas[order[k - 1]]:
            continue  # would split a tie group
        sigma = tuple(sorted(order[:k]))
        if sigma_conditions_hold(deltas, sigma, reading):
            found.append(sigma)
    return found


def decompose(deltas, sigma) -> SigmaDecomposition:
    deltas = tuple(int(x) for x in deltas)
    ell = len(sigma) - 1
    if ell == 0:
        raise EllZero(f"index set {sigma} has a single element for deltas {deltas}", deltas)
    total = sum(deltas[i] for i in sigma)
    a = total - ell * (_ceil_div(total, ell) - 1)
    return SigmaDecomposition(deltas, tuple(sigma), ell, a)


def find_sigma(deltas, reading: str = "min") -> SigmaDecomposition:
    """The unique index set satisfying the three conditions."""
    found = candidate_sigmas(deltas, reading)
    if not found:
        raise SigmaNotFound(f"no index set satisfies the conditions for deltas {tuple(deltas)}", deltas)
    if len(found) > 1:
        raise SigmaAmbiguous(f"index sets {found} all satisfy the conditions for deltas {tuple(deltas)}", deltas)
    return decompose(deltas, found[0])


def llc_from_sigma(sizes, r: int, decomposition: SigmaDecomposition) -> Fraction:
    ell, a, d = decomposition.ell, decomposition.a, decomposition.deltas
    inside = [d[i] for i in decomposition.sigma]
    total = sum(inside)
    pair_sum = sum(x * y for x, y in combinations(inside, 2))
    return (
        Fraction(r * (sizes[0] + sizes[-1]) - r * r, 2)
        + Fraction(a * (ell - a), 4 * ell)
        - Fraction((ell - 1) * total * total, 4 * ell)
        + Fraction(pair_sum, 2)
    )


def analytic_llc(architecture, r: int, reading: str = "both") -> Fraction:
    """Exact learning coefficient at a true parameter whose composite has rank ``r``.

    ``reading="both"`` (default) evaluates both versions of the third
    condition and raises :class:`ReadingConflict` if they disagree.
    """
    arch = architecture if isinstance(architecture, DlnArchitecture) else DlnArchitecture(tuple(architecture))
    sizes = arch.layer_sizes
    ds = deltas(arch, r)
    if reading != "both":
        return llc_from_sigma(sizes, r, find_sigma(ds, reading))
    # a reading may admit several index sets; it still determines the
    # coefficient as long as they all give the same value
    values = {}
    for rd in READINGS:
        found = candidate_sigmas(ds, rd)
        if not found:
            raise SigmaNotFound(f"reading {rd!r}: no index set for deltas {ds}", ds)
        values[rd] = {llc_from_sigma(sizes, r, decompose(ds, sig)) for sig in found}
        if len(values[rd]) > 1:
            raise SigmaAmbiguous(
                f"reading {rd!r}: index sets {found} give different values {sorted(values[rd])}", ds
            )
    if values["min"] != values["max"]:
        raise ReadingConflict(
            f"readings of condition 3 disagree for sizes {sizes}, r={r}: {values}", ds
        )
    (lam,) = values["min"]
    half_d = Fraction(arch.num_params, 2)
    if not 0 <= lam <= half_d:
        log.warning("coefficient %s outside [0, d/2=%s] for sizes %s, r=%d", lam, half_d, sizes, r)
    return lam


def attach_llc(task, reading: str = "both"):
    """Fill ``task.true_llc`` in place and return the task."""
    task.true_llc = analytic_llc(task.architecture, task.rank, reading)
    return task


# -- Monte-Carlo volume scaling ---------------------------------------------

def population_loss_batch(architecture, flat_w, true_params, second_moment):
    """Expected squared error ``tr((W - W0) S (W - W0)^T)`` for a batch of flat parameters.

    ``flat_w`` has shape ``(s, d)``; returns shape ``(s,)``.
    """
    true_params = check_params(true_params, architecture)
    s = flat_w.shape[0]
    layers, start = [], 0
    for rows, cols in architecture.shapes:
        layers.append(flat_w[:, start:start + rows * cols].reshape(s, rows, cols))
        start += rows * cols
    prod = layers[0]
    for w in layers[1:]:
        prod = np.matmul(w, prod)
    target = true_params.weights[0]
    for w in true_params.weights[1:]:
        target = w @ target
    diff = prod - target
    return np.einsum("sij,jk,sik->s", diff, second_moment, diff)


def volume_curve(loss_fn, center, eps_grid, samples_per_eps: int, box_radius: float,
                 seed=None, chunk: int = 1 << 17, workers: int = 1):
    """Monte-Carlo volumes of ``{w in box : loss(w) <= loss(center) + eps}``.

    ``loss_fn`` maps an ``(s, d)`` array of points to ``s`` losses. Each
    threshold gets its own independent RNG stream.
    """
    center = np.asarray(center, dtype=np.float64).ravel()
    dim = center.size
    eps_grid = np.asarray(eps_grid, dtype=np.float64)
    base = float(loss_fn(center[None, :])[0])
    box_volume = (2.0 * box_radius) ** dim
    streams = np.random.SeedSequence(seed).spawn(len(eps_grid))

    def one(k):
        rng = np.random.default_rng(streams[k])
        hits = 0
        remaining = samples_per_eps
        while remaining:
            s = min(chunk, remaining)
            pts = center + rng.uniform(-box_radius, box_radius, size=(s, dim))
            hits += int(np.count_nonzero(loss_fn(pts) <= base + eps_grid[k]))
            remaining -= s
        return hits

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            hits = list(pool.map(one, range(len(eps_grid))))
    else:
        hits = [one(k) for k in range(len(eps_grid))]
    hits = np.asarray(hits)
    if (hits == 0).any():
        bad = eps_grid[hits == 0]
        raise InsufficientSamples(
            f"no samples fell below thresholds {bad.tolist()}; widen eps or add samples"
        )
    return eps_grid, hits / samples_per_eps * box_volume


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def mc_volume_exponent(task, eps_grid, samples_per_eps: int = 1_000_000, box_radius: float = 1.0,
                       seed=None, workers: int = 1) -> float:
    """Estimate the volume-scaling exponent at ``task.true_params`` by Monte Carlo.

    Uses the exact population loss of the task's uniform input law. The
    log-log slope absorbs any logarithmic factor as bias.
    """
    eps_grid = np.asarray(eps_grid, dtype=np.float64)
    if eps_grid.size < 2 or eps_grid.max() / eps_grid.min() < 100:
        raise ContractViolation("eps_grid must contain at least two values spanning two decades")
    arch = task.architecture
    moment = uniform_second_moment(task.dataset.input_low, task.dataset.input_high, arch.input_dim)

    def loss_fn(points):
        return population_loss_batch(arch, points, task.true_params, moment)

    eps, vols = volume_curve(loss_fn, task.true_params.flatten(), eps_grid, samples_per_eps,
                             box_radius, seed, workers=workers)
    return loglog_slope(eps, vols)
