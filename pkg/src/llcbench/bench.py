"""Step-size sweeps: task generation, chain execution, metrics and reports.

A sweep runs every sampler at every step size on every generated task and
writes one JSON record per ``(task, algorithm, step size)`` to
``records.jsonl``. The first line of that file is a header carrying the schema
version and the full configuration. Records are a pure function of the
configuration apart from the ``wall_time`` field.
"""

import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from typing import Optional

import numpy as np

from .analytic import analytic_llc, loglog_slope
from .dln import DlnParams, dataset_loss
from .estimator import EstimatorConfig, estimate_llc
from .exceptions import AnalyticLLCError, ConfigurationError
from .samplers import DISPLAY_NAMES, SAMPLERS, make_sampler, run_chain
from .taskgen import TaskSpec, get_class, make_task

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ALGORITHMS = tuple(SAMPLERS)  # canonical order; fixes the per-algorithm seed index
TIMING_FIELDS = ("wall_time",)
LLC_READINGS = ("both", "min", "max")
INIT_LOSS_MODES = ("minibatch", "full")
MIN_TRUE_LLC = 1e-9
MAX_SKIP_RATE = 0.5
MAX_SUB_SEEDS = 1000
SCATTER_NAN_LIMIT = 0.10

RECORD_FIELDS = {
    "task_id": "problem index within the sweep",
    "task_seed": "seed passed to make_task",
    "layer_sizes": "H_0..H_M",
    "num_layers": "M",
    "num_params": "d",
    "rank": "rank r of the true composite matrix",
    "true_llc": "[numerator, denominator] of the exact coefficient",
    "true_llc_float": "float of true_llc",
    "algorithm": "sampler name",
    "step_size": "epsilon",
    "step_index": "position of epsilon in the grid",
    "chain_seed": "seed of the chain (batches and noise)",
    "status": "'ok' or 'failed'",
    "error": "exception text for failed records, else null",
    "lambda_hat": "estimate, null when the chain diverged",
    "L_bar": "mean post-burn-in minibatch loss, null when diverged",
    "L0": "loss at the initial point subtracted by the estimator",
    "diverged": "true if the chain hit a non-finite loss or estimate",
    "diverged_at": "first step with a non-finite loss, else null",
    "relative_error": "(lambda_hat - lambda) / lambda; null if undefined",
    "absolute_error": "lambda_hat - lambda; null when lambda_hat is null",
    "loss_min": "smallest recorded minibatch loss",
    "loss_max": "largest recorded minibatch loss",
    "loss_final": "last recorded minibatch loss",
    "wall_time": "seconds spent on the record (excluded from hashes)",
}


def _default_grid():
    return [float(x) for x in np.logspace(-6, -2, 8)]


@dataclass
class SweepConfig:
    """Everything that determines a sweep. Keys double as CLI flags.

    ``init_loss`` selects the subtracted loss at ``w0``: ``"minibatch"`` is
    the chain's first minibatch loss, ``"full"`` the loss over all ``n``
    samples. ``llc_reading`` picks how the ground truth is computed (see
    :func:`~llcbench.analytic.analytic_llc`); ``"both"`` refuses tasks where
    the two readings of the Sigma condition disagree.
    """

    name: str = "custom"
    model_class: str = "1K"
    num_problems: int = 30
    algorithms: list = field(default_factory=lambda: list(ALGORITHMS))
    step_sizes: list = field(default_factory=_default_grid)
    n: int = 10_000
    batch_size: int = 100
    num_steps: int = 2000
    burn_in: Optional[int] = None
    beta0: float = 1.0
    localization: float = 1.0
    noise_variance: float = 0.25
    input_low: float = -10.0
    input_high: float = 10.0
    init_loss: str = "minibatch"
    llc_reading: str = "both"
    sampler_params: dict = field(default_factory=dict)
    seed: int = 0
    workers: int = 1
    out_dir: str = "llc-out"
    resume: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        get_class(self.model_class)
        if int(self.num_problems) < 1:
            raise ConfigurationError("num_problems must be at least 1")
        if not self.algorithms:
            raise ConfigurationError("algorithms must be nonempty")
        self.algorithms = [str(a).lower() for a in self.algorithms]
        for a in self.algorithms:
            if a not in SAMPLERS:
                raise ConfigurationError(f"unknown algorithm {a!r}; choose from {list(ALGORITHMS)}")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ConfigurationError("algorithms contains duplicates")
        if not self.step_sizes:
            raise ConfigurationError("step_sizes must be nonempty")
        self.step_sizes = [float(e) for e in self.step_sizes]
        if any(not e > 0 or not math.isfinite(e) for e in self.step_sizes):
            raise ConfigurationError("step sizes must be positive and finite")
        if not 1 <= int(self.batch_size) <= int(self.n):
            raise ConfigurationError(f"batch_size must lie in [1, n={self.n}]")
        if int(self.num_steps) < 2:
            raise ConfigurationError("num_steps must be at least 2")
        self.estimator_config().burn_in_for(int(self.num_steps))
        if self.init_loss not in INIT_LOSS_MODES:
            raise ConfigurationError(f"init_loss must be one of {INIT_LOSS_MODES}")
        if self.llc_reading not in LLC_READINGS:
            raise ConfigurationError(f"llc_reading must be one of {LLC_READINGS}")
        if not isinstance(self.sampler_params, dict):
            raise ConfigurationError("sampler_params must map algorithm names to parameter dicts")
        for a, params in self.sampler_params.items():
            if a not in SAMPLERS or not isinstance(params, dict):
                raise ConfigurationError(f"bad sampler_params entry {a!r}")
        if int(self.workers) < 1:
            raise ConfigurationError("workers must be at least 1")
        if not isinstance(self.resume, bool):
            raise ConfigurationError("resume must be true or false")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")

    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(n=int(self.n), beta0=float(self.beta0), burn_in=self.burn_in)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def payload(self) -> dict:
        """The keys that affect record content (not workers or paths)."""
        d = self.to_dict()
        for k in ("workers", "out_dir", "name", "resume"):
            d.pop(k)
        return d

    def fingerprint(self) -> str:
        blob = json.dumps(self.payload(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _full_preset(model_class: str) -> dict:
    return dict(name=f"full-{model_class}", model_class=model_class, num_problems=100,
                n=1_000_000, batch_size=500, num_steps=50_000, burn_in=45_000,
                init_loss="minibatch")


PRESETS = {
    "desk": dict(name="desk", model_class="1K", num_problems=30, n=10_000, batch_size=100,
                 num_steps=2000, burn_in=1800, init_loss="full"),
    **{f"full-{c}": _full_preset(c) for c in ("100K", "1M", "10M", "100M")},
}
PRESET_ALIASES = {"1K": "desk"}


def preset(name: str, **overrides) -> SweepConfig:
    """A named protocol as a :class:`SweepConfig`, with optional overrides."""
    key = PRESET_ALIASES.get(name, name)
    if key not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return SweepConfig(**{**PRESETS[key], **overrides})


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    return data


# -- problems -----------------------------------------------------------------

# domain tags keep task and chain seeds apart (SeedSequence pads keys with zeros)
_TAG_TASK = 1
_TAG_CHAIN = 2


def _derive_seed(*keys) -> int:
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(2, np.uint64)
    return int(state[0] & np.uint64(0x7FFFFFFFFFFFFFFF))


def generate_problems(cfg: SweepConfig):
    """Generate ``cfg.num_problems`` tasks with exact coefficients attached.

    Problem ``i`` tries sub-seeds ``0, 1, ...`` of ``(seed, i)`` until the
    analytic coefficient exists. Skips are logged; a skip rate above one half
    means the class is pathological and raises :class:`ConfigurationError`.
    """
    tasks, skipped, attempts = [], 0, 0
    for i in range(int(cfg.num_problems)):
        for sub in range(MAX_SUB_SEEDS):
            attempts += 1
            task_seed = _derive_seed(cfg.seed, _TAG_TASK, i, sub)
            task = make_task(cfg.model_class, task_seed, n=cfg.n, noise_variance=cfg.noise_variance,
                             input_low=cfg.input_low, input_high=cfg.input_high, task_id=i)
            try:
                task.true_llc = analytic_llc(task.architecture, task.rank, reading=cfg.llc_reading)
            except AnalyticLLCError as exc:
                skipped += 1
                log.warning("problem %d sub-seed %d skipped (%s): %s", i, sub, exc.kind, exc)
                continue
            tasks.append(task)
            break
        else:
            raise ConfigurationError(f"problem {i}: no sub-seed produced a ground truth")
    if skipped:
        log.info("generated %d problems, skipped %d", len(tasks), skipped)
    if skipped > MAX_SKIP_RATE * attempts:
        raise ConfigurationError(
            f"class {cfg.model_class!r}: {skipped} of {attempts} tasks had no ground truth"
            + (" (llc_reading='min' skips only Sigma failures)" if cfg.llc_reading != "min" else "")
        )
    return tasks


# -- records ------------------------------------------------------------------

def chain_seed(master_seed: int, task_id: int, algorithm: str, step_index: int) -> int:
    """Seed of one chain; independent of scheduling and of which algorithms run."""
    return _derive_seed(master_seed, _TAG_CHAIN, task_id, ALGORITHMS.index(algorithm), step_index)


def _finite_or_none(x):
    return float(x) if x is not None and math.isfinite(x) else None


def relative_error(estimate, true_llc):
    """``(estimate - true) / true``, or None when undefined."""
    if estimate is None or not math.isfinite(estimate) or not true_llc > MIN_TRUE_LLC:
        return None
    return (estimate - true_llc) / true_llc


def _task_fields(task: TaskSpec) -> dict:
    lam = Fraction(task.true_llc)
    return {
        "task_id": task.task_id,
        "task_seed": task.seed,
        "layer_sizes": list(task.architecture.layer_sizes),
        "num_layers": task.architecture.num_layers,
        "num_params": task.num_params,
        "rank": task.rank,
        "true_llc": [lam.numerator, lam.denominator],
        "true_llc_float": float(lam),
    }


def run_record(task: TaskSpec, algorithm: str, step_index: int, cfg: SweepConfig,
               init_loss: float = None) -> dict:
    """Run one chain and turn it into a record. Exceptions become failed records."""
    start = time.perf_counter()
    eps = cfg.step_sizes[step_index]
    seed = chain_seed(cfg.seed, task.task_id, algorithm, step_index)
    rec = {**_task_fields(task), "algorithm": algorithm, "step_size": eps,
           "step_index": step_index, "chain_seed": seed}
    blank = dict(status="failed", error=None, lambda_hat=None, L_bar=None, L0=None,
                 diverged=None, diverged_at=None, relative_error=None, absolute_error=None,
                 loss_min=None, loss_max=None, loss_final=None)
    try:
        sampler = make_sampler(algorithm, step_size=eps, localization=cfg.localization,
                               **cfg.sampler_params.get(algorithm, {}))
        trace = run_chain(task, sampler, chain_seed=seed, num_steps=cfg.num_steps,
                          batch_size=cfg.batch_size, beta0=cfg.beta0)
        est = estimate_llc(trace, cfg.estimator_config(), init_loss=init_loss)
        lam_hat = _finite_or_none(est.lambda_hat)
        lam = rec["true_llc_float"]
        losses = trace.losses
        rec.update(blank, status="ok",
                   lambda_hat=lam_hat,
                   L_bar=_finite_or_none(est.L_bar),
                   L0=_finite_or_none(est.L0),
                   diverged=bool(est.diverged or lam_hat is None),
                   diverged_at=trace.diverged_at,
                   relative_error=relative_error(lam_hat, lam),
                   absolute_error=None if lam_hat is None else lam_hat - lam,
                   loss_min=float(losses.min()) if losses.size else None,
                   loss_max=float(losses.max()) if losses.size else None,
                   loss_final=float(losses[-1]) if losses.size else None)
    except Exception as exc:  # one bad record must not stop the sweep
        log.exception("record task=%s %s eps=%g failed", task.task_id, algorithm, eps)
        rec.update(blank, error=f"{type(exc).__name__}: {exc}")
    rec["wall_time"] = time.perf_counter() - start
    return rec


def record_key(rec) -> tuple:
    return (rec["task_id"], ALGORITHMS.index(rec["algorithm"]), rec["step_index"])


def strip_timing(rec: dict) -> dict:
    return {k: v for k, v in rec.items() if k not in TIMING_FIELDS}


def records_digest(records) -> str:
    """SHA-256 over the canonical JSON of the records, timing fields removed."""
    h = hashlib.sha256()
    for rec in sorted(records, key=record_key):
        h.update(json.dumps(strip_timing(rec), sort_keys=True).encode())
        h.update(b"\n")
    return h.hexdigest()


def _header(cfg: SweepConfig) -> dict:
    return {"schema": "llcbench.records", "version": SCHEMA_VERSION,
            "fingerprint": cfg.fingerprint(), "config": cfg.payload(), "fields": RECORD_FIELDS}


def read_records(path):
    """Return ``(header, records)`` from a records file."""
    header, records = None, []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                # a crash can leave a torn final line; anything earlier is corruption
                log.warning("%s:%d: ignoring unreadable line", path, lineno)
                continue
            if lineno == 1 and obj.get("schema") == "llcbench.records":
                header = obj
                if obj.get("version") != SCHEMA_VERSION:
                    raise ConfigurationError(f"{path}: schema version {obj.get('version')} is not supported")
            else:
                records.append(obj)
    return header, records


def _job(args):
    task, algorithm, step_index, cfg, init_loss = args
    return run_record(task, algorithm, step_index, cfg, init_loss)


def run_sweep(cfg: SweepConfig, records_path=None, tasks=None, resume: bool = True, progress=None):
    """Run the full ``task x algorithm x step size`` grid.

    Records are appended to ``records_path`` (if given) as soon as they are
    available, in grid order. With ``resume`` an existing file for the same
    configuration is continued; a file written under another configuration
    is refused. Returns all records sorted by ``(task, algorithm, step)``.
    """
    tasks = generate_problems(cfg) if tasks is None else list(tasks)
    done = {}
    if records_path is not None and os.path.exists(records_path):
        header, old = read_records(records_path)
        if not resume:
            old, header = [], None
            os.remove(records_path)
        elif header is None or header.get("fingerprint") != cfg.fingerprint():
            raise ConfigurationError(f"{records_path} was written by a different configuration")
        done = {record_key(r): r for r in old}
    jobs = []
    init_losses = {}
    for task in tasks:
        if cfg.init_loss == "full":
            init_losses[task.task_id] = dataset_loss(task.true_params, task.dataset)
        for algorithm in cfg.algorithms:
            for k in range(len(cfg.step_sizes)):
                key = (task.task_id, ALGORITHMS.index(algorithm), k)
                if key not in done:
                    jobs.append((task, algorithm, k, cfg, init_losses.get(task.task_id)))
    out = None
    if records_path is not None:
        os.makedirs(os.path.dirname(os.path.abspath(records_path)), exist_ok=True)
        fresh = not os.path.exists(records_path)
        out = open(records_path, "a")
        if fresh:
            out.write(json.dumps(_header(cfg)) + "\n")
            out.flush()
    try:
        if cfg.workers > 1 and len(jobs) > 1:
            pool = ProcessPoolExecutor(cfg.workers)
            results = pool.map(_job, jobs, chunksize=max(1, len(jobs) // (8 * cfg.workers)))
        else:
            pool, results = None, map(_job, jobs)
        for i, rec in enumerate(results):
            done[record_key(rec)] = rec
            if out is not None:
                out.write(json.dumps(rec) + "\n")
                out.flush()
            if progress is not None:
                progress(i + 1, len(jobs), rec)
        if pool is not None:
            pool.shutdown()
    finally:
        if out is not None:
            out.close()
    return [done[k] for k in sorted(done)]


# -- metrics ------------------------------------------------------------------

def order_preservation_rate(true_llcs, estimates) -> Optional[float]:
    """Fraction of pairs with ``lambda_i < lambda_j`` whose estimates satisfy ``est_i < est_j``.

    Pairs with tied true values or a non-finite estimate are excluded.
    Returns None when no pair is eligible.
    """
    lam = np.asarray(true_llcs, dtype=float)
    est = np.array([np.nan if e is None else e for e in estimates], dtype=float)
    ok = np.isfinite(est)
    lam, est = lam[ok], est[ok]
    less = lam[:, None] < lam[None, :]
    total = int(less.sum())
    if total == 0:
        return None
    agree = int((less & (est[:, None] < est[None, :])).sum())
    return agree / total


@dataclass
class GroupSummary:
    algorithm: str
    step_size: float
    count: int
    finite: int
    nan: int
    failed: int
    nan_fraction: Optional[float]
    mean_relative_error: Optional[float]
    std_relative_error: Optional[float]
    relative_error_undefined: int
    order_preservation: Optional[float]
    max_estimate: Optional[float]


def summarize(records) -> list:
    """Per ``(algorithm, step size)`` statistics.

    Each record lands in exactly one bucket: failed, NaN (diverged) or
    finite. Relative-error moments use finite records with a defined
    relative error; the standard deviation is the population one.
    """
    if not records:
        raise ConfigurationError("no records to summarize")
    groups = {}
    for rec in records:
        groups.setdefault((ALGORITHMS.index(rec["algorithm"]), rec["step_size"]), []).append(rec)
    out = []
    for (a, eps), recs in sorted(groups.items()):
        failed = [r for r in recs if r["status"] != "ok"]
        ok = [r for r in recs if r["status"] == "ok"]
        finite = [r for r in ok if r["lambda_hat"] is not None]
        rel = [r["relative_error"] for r in finite if r["relative_error"] is not None]
        out.append(GroupSummary(
            algorithm=ALGORITHMS[a],
            step_size=eps,
            count=len(recs),
            finite=len(finite),
            nan=len(ok) - len(finite),
            failed=len(failed),
            nan_fraction=(len(ok) - len(finite)) / len(ok) if ok else None,
            mean_relative_error=float(np.mean(rel)) if rel else None,
            std_relative_error=float(np.std(rel)) if rel else None,
            relative_error_undefined=len(finite) - len(rel),
            order_preservation=order_preservation_rate(
                [r["true_llc_float"] for r in ok], [r["lambda_hat"] for r in ok]),
            max_estimate=max((r["lambda_hat"] for r in finite), default=None),
        ))
    return out


def summary_to_dict(summary, records=None) -> dict:
    doc = {"schema": "llcbench.summary", "version": SCHEMA_VERSION,
           "groups": [asdict(g) for g in summary]}
    if records is not None:
        doc["records_digest"] = records_digest(records)
    return doc


def summary_from_dict(doc) -> list:
    return [GroupSummary(**g) for g in doc["groups"]]


def groups_for(summary, algorithm: str) -> list:
    return [g for g in summary if g.algorithm == algorithm]


def best_group(summary, algorithm: str) -> Optional[GroupSummary]:
    """Group with the smallest ``|mean relative error|`` for ``algorithm``."""
    cands = [g for g in groups_for(summary, algorithm) if g.mean_relative_error is not None]
    return min(cands, key=lambda g: abs(g.mean_relative_error), default=None)


def count_good_steps(summary, algorithm: str, max_abs_error: float = 0.5,
                     max_nan_fraction: float = SCATTER_NAN_LIMIT) -> int:
    """Grid points with NaN fraction below the limit and ``|mean rel err| <= max_abs_error``."""
    return sum(
        1 for g in groups_for(summary, algorithm)
        if g.nan_fraction is not None and g.nan_fraction < max_nan_fraction
        and g.mean_relative_error is not None and abs(g.mean_relative_error) <= max_abs_error
    )


# -- diagnostics ----------------------------------------------------------------

@dataclass
class DegreeProbe:
    slopes: np.ndarray
    expected: int
    directions: np.ndarray = field(repr=False, default=None)


def degree_probe(task: TaskSpec, directions: int = 8, t_grid=None, seed=0,
                 max_samples: int = 2000) -> DegreeProbe:
    """Growth exponent of the empirical loss along random unit directions.

    For each direction ``v``, fits the slope of ``log L_n(w0 + t v)`` against
    ``log t`` over the top decade of ``t_grid``. The loss is a polynomial of
    degree ``2M`` so generic directions give slopes close to ``2M``.
    ``directions`` is a count of random unit directions or an explicit
    ``(k, d)`` array (rows are normalised).
    """
    t_grid = np.logspace(-1, 3, 41) if t_grid is None else np.asarray(t_grid, dtype=float)
    if t_grid.min() <= 0 or t_grid.max() / t_grid.min() < 1e3:
        raise ConfigurationError("t_grid must be positive and span at least three decades")
    top = t_grid[t_grid >= t_grid.max() / 10]
    if top.size < 2:
        raise ConfigurationError("t_grid needs at least two points in its top decade")
    arch = task.architecture
    rng = np.random.default_rng(seed)
    w0 = task.true_params.flatten()
    if np.ndim(directions) == 0:
        dirs = rng.standard_normal((int(directions), w0.size))
    else:
        dirs = np.array(directions, dtype=float, ndmin=2)
        if dirs.shape[1] != w0.size:
            raise ConfigurationError(f"directions must have {w0.size} columns")
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    slopes = np.empty(len(dirs))
    for k, v in enumerate(dirs):
        losses = [dataset_loss(DlnParams.from_flat(arch, w0 + t * v), task.dataset, max_samples)
                  for t in top]
        slopes[k] = loglog_slope(top, losses)
    return DegreeProbe(slopes=slopes, expected=2 * arch.num_layers, directions=dirs)


# -- reports --------------------------------------------------------------------

CHART_FILES = ("mean_relative_error.svg", "nan_fraction.svg", "mean_vs_std.svg",
               "order_preservation.svg")


def _check_writable(out_dir):
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    if not os.access(out_dir, os.W_OK):
        raise OSError(f"output directory {out_dir} is not writable")


def write_records(records, path, cfg: SweepConfig = None):
    with open(path, "w") as fh:
        if cfg is not None:
            fh.write(json.dumps(_header(cfg)) + "\n")
        for rec in sorted(records, key=record_key):
            fh.write(json.dumps(rec) + "\n")


def write_summary(summary, path, records=None):
    with open(path, "w") as fh:
        json.dump(summary_to_dict(summary, records), fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit_report(summary, records, out_dir, cfg: SweepConfig = None, records_name="records.jsonl"):
    """Write records, summary and four SVG charts into ``out_dir``.

    The directory is checked before anything is written. An existing
    records file at the target path is left alone. Returns the written paths.
    """
    _check_writable(out_dir)
    paths = {}
    rec_path = os.path.join(out_dir, records_name)
    if not os.path.exists(rec_path):
        write_records(records, rec_path, cfg)
    paths["records"] = rec_path
    paths["summary"] = os.path.join(out_dir, "summary.json")
    write_summary(summary, paths["summary"], records)
    paths.update(_charts(summary, out_dir))
    return paths


def _charts(summary, out_dir):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "llcbench"

    algos = [a for a in ALGORITHMS if groups_for(summary, a)]
    save = dict(format="svg", metadata={"Date": None})
    paths = {}

    def series(a, attr):
        gs = groups_for(summary, a)
        return ([g.step_size for g in gs],
                [np.nan if getattr(g, attr) is None else getattr(g, attr) for g in gs], gs)

    fig, ax = plt.subplots(figsize=(6, 4))
    for a in algos:
        x, y, gs = series(a, "mean_relative_error")
        err = [np.nan if g.std_relative_error is None else g.std_relative_error for g in gs]
        ax.errorbar(x, y, yerr=err, marker="o", capsize=3, label=DISPLAY_NAMES[a])
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xscale("log")
    ax.set_ylim(-1.5, 5.0)  # blown-up estimates leave the frame
    ax.set_xlabel("step size")
    ax.set_ylabel("mean relative error")
    ax.legend()
    paths["chart_mean"] = os.path.join(out_dir, CHART_FILES[0])
    fig.savefig(paths["chart_mean"], **save)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    for a in algos:
        x, y, _ = series(a, "nan_fraction")
        ax.plot(x, y, marker="o", label=DISPLAY_NAMES[a])
    ax.set_xscale("log")
    ax.set_ylim(-0.05, 1.05)
    ax.set_xlabel("step size")
    ax.set_ylabel("NaN fraction")
    ax.legend()
    paths["chart_nan"] = os.path.join(out_dir, CHART_FILES[1])
    fig.savefig(paths["chart_nan"], **save)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 5))
    for a in algos:
        pts = [(g.mean_relative_error, g.std_relative_error) for g in scatter_groups(summary, a)]
        if pts:
            ax.scatter(*zip(*pts), label=DISPLAY_NAMES[a])
    ax.axvline(0.0, color="k", lw=0.8)
    ax.set_xlim(-1.5, 5.0)
    ax.set_ylim(0.0, 5.0)
    ax.set_xlabel("mean relative error")
    ax.set_ylabel("std of relative error")
    ax.legend()
    paths["chart_scatter"] = os.path.join(out_dir, CHART_FILES[2])
    fig.savefig(paths["chart_scatter"], **save)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    for a in algos:
        x, y, _ = series(a, "order_preservation")
        ax.plot(x, y, marker="o", label=DISPLAY_NAMES[a])
    ax.set_xscale("log")
    ax.set_ylim(-0.05, 1.05)
    ax.set_xlabel("step size")
    ax.set_ylabel("order preservation rate")
    ax.legend()
    paths["chart_order"] = os.path.join(out_dir, CHART_FILES[3])
    fig.savefig(paths["chart_order"], **save)
    plt.close(fig)
    return paths


def scatter_groups(summary, algorithm: str) -> list:
    """Groups eligible for the mean-vs-std scatter: NaN fraction strictly below 10%."""
    return [g for g in groups_for(summary, algorithm)
            if g.nan_fraction is not None and g.nan_fraction < SCATTER_NAN_LIMIT
            and g.mean_relative_error is not None]
