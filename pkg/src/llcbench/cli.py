"""Command-line interface: ``llcbench {gen,run,summarize,report,oracle,presets}``.

Every sweep flag mirrors a key of :class:`~llcbench.bench.SweepConfig`
(``--num-problems`` is ``num_problems``). Values are resolved as preset, then
config file, then flags. The config file is JSON; its optional ``preset`` key
names the starting protocol and its optional ``oracle`` object holds the
oracle subcommand's keys.

Exit status: 0 on success (divergent chains included), 2 for configuration
errors, 3 for I/O errors.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import fields

import numpy as np

from . import bench
from .analytic import mc_volume_exponent
from .exceptions import ConfigurationError, InsufficientSamples, LLCBenchError
from .taskgen import TaskSpec, builtin_classes

log = logging.getLogger("llcbench")

EXIT_CONFIG = 2
EXIT_IO = 3

ORACLE_DEFAULTS = {
    "task_index": 0,
    "tasks_file": None,
    "kind": "degree",
    "directions": 8,
    "samples_per_eps": 1_000_000,
    "box_radius": 1.0,
    "eps_min": 1e-4,
    "eps_max": 1e-2,
    "eps_points": 5,
}


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _str_list(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def _optional_int(text):
    return None if text.lower() in ("none", "null", "") else int(text)


def _bool(text):
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _json_dict(text):
    value = json.loads(text)
    if not isinstance(value, dict):
        raise argparse.ArgumentTypeError("expected a JSON object")
    return value


_PARSERS = {
    "algorithms": _str_list,
    "step_sizes": _float_list,
    "burn_in": _optional_int,
    "sampler_params": _json_dict,
    "resume": _bool,
}

_HELP = {
    "name": "label stored with the sweep",
    "model_class": "architecture class (see `presets`)",
    "num_problems": "number of generated tasks",
    "algorithms": "comma-separated sampler names",
    "step_sizes": "comma-separated step sizes",
    "n": "dataset size",
    "batch_size": "minibatch size m",
    "num_steps": "chain length T",
    "burn_in": "discarded steps B (default floor(0.9 T))",
    "beta0": "tempering constant, beta = beta0 / ln n",
    "localization": "prior strength gamma",
    "noise_variance": "label noise variance",
    "input_low": "lower input bound",
    "input_high": "upper input bound",
    "init_loss": "'minibatch' (first batch) or 'full' (all n samples)",
    "llc_reading": "'both' (refuse tasks where the Sigma readings disagree), 'min' or 'max'",
    "sampler_params": 'JSON object, e.g. \'{"sghmc": {"friction": 0.2}}\'',
    "seed": "master seed",
    "workers": "worker processes",
    "out_dir": "output directory",
    "resume": "continue an existing records file (true) or start over (false)",
}


def _add_sweep_flags(p, keys=None):
    for f in fields(bench.SweepConfig):
        if keys is not None and f.name not in keys:
            continue
        flag = "--" + f.name.replace("_", "-")
        default_type = type(f.default) if f.default is not None and not callable(f.default) else str
        conv = _PARSERS.get(f.name, default_type if default_type in (int, float, str) else str)
        p.add_argument(flag, dest=f.name, type=conv, default=None, help=_HELP.get(f.name))


def _add_common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", help="starting protocol (see `presets`)")


def _resolve(args, keys=None):
    """Merge preset, config file and flags into a SweepConfig."""
    data = bench.load_config(args.config) if getattr(args, "config", None) else {}
    data.pop("oracle", None)
    preset_name = args.preset or data.pop("preset", None)
    data.pop("preset", None)
    base = {}
    if preset_name:
        key = bench.PRESET_ALIASES.get(preset_name, preset_name)
        if key not in bench.PRESETS:
            raise ConfigurationError(f"unknown preset {preset_name!r}; choose from {sorted(bench.PRESETS)}")
        base = dict(bench.PRESETS[key])
    merged = {**base, **data}
    for f in fields(bench.SweepConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            merged[f.name] = value
    return bench.SweepConfig.from_dict(merged)


def _progress(every):
    def report(i, total, rec):
        if i % every == 0 or i == total:
            print(f"  {i}/{total} records", file=sys.stderr, flush=True)
    return report


def _print_summary(summary, stream=sys.stdout):
    head = f"{'algorithm':12s} {'eps':>9s} {'mean':>11s} {'std':>11s} {'nan':>5s} {'order':>6s} {'n':>4s}"
    print(head, file=stream)

    def fmt(x, spec):
        return format(x, spec) if x is not None else "-".rjust(len(format(0.0, spec)))

    for g in summary:
        print(f"{g.algorithm:12s} {g.step_size:9.2e} {fmt(g.mean_relative_error, '11.4g')} "
              f"{fmt(g.std_relative_error, '11.4g')} {fmt(g.nan_fraction, '5.2f')} "
              f"{fmt(g.order_preservation, '6.3f')} {g.count:4d}", file=stream)


# -- subcommands ----------------------------------------------------------------

def cmd_presets(args):
    if args.show:
        cfg = bench.preset(args.show)
        print(json.dumps({"preset": args.show, **cfg.to_dict()}, indent=2))
        return 0
    print("model classes:")
    for c in builtin_classes():
        tag = "" if c.full_scale else "  (desk scale)"
        print(f"  {c.name:5s} M in [{c.min_layers}, {c.max_layers}], "
              f"H in [{c.min_width}, {c.max_width}]{tag}")
    print("protocols:")
    for name, p in bench.PRESETS.items():
        alias = [k for k, v in bench.PRESET_ALIASES.items() if v == name]
        extra = f" (alias {', '.join(alias)})" if alias else ""
        print(f"  {name}{extra}: class {p['model_class']}, {p['num_problems']} problems, "
              f"n={p['n']}, m={p['batch_size']}, T={p['num_steps']}, B={p['burn_in']}, "
              f"L0={p['init_loss']}")
    return 0


def cmd_gen(args):
    cfg = _resolve(args)
    bench._check_writable(cfg.out_dir)
    tasks = bench.generate_problems(cfg)
    path = os.path.join(cfg.out_dir, "tasks.json")
    with open(path, "w") as fh:
        json.dump({"config": cfg.payload(), "tasks": [t.to_dict() for t in tasks]}, fh, indent=1)
    for t in tasks:
        print(f"{t.task_id:4d} sizes={list(t.architecture.layer_sizes)} d={t.num_params} "
              f"r={t.rank} llc={t.true_llc} ({float(t.true_llc):.4g})")
    print(f"wrote {path}")
    return 0


def cmd_run(args):
    cfg = _resolve(args)
    bench._check_writable(cfg.out_dir)
    with open(os.path.join(cfg.out_dir, "config.json"), "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2)
    rec_path = os.path.join(cfg.out_dir, "records.jsonl")
    total = cfg.num_problems * len(cfg.algorithms) * len(cfg.step_sizes)
    records = bench.run_sweep(cfg, rec_path, resume=cfg.resume,
                              progress=_progress(max(1, total // 20)))
    summary = bench.summarize(records)
    bench.write_summary(summary, os.path.join(cfg.out_dir, "summary.json"), records)
    _print_summary(summary)
    failed = sum(r["status"] != "ok" for r in records)
    print(f"{len(records)} records ({failed} failed), digest {bench.records_digest(records)[:16]}")
    return 0


def cmd_summarize(args):
    _, records = bench.read_records(args.records)
    summary = bench.summarize(records)
    out_dir = args.out_dir or os.path.dirname(os.path.abspath(args.records))
    bench._check_writable(out_dir)
    path = os.path.join(out_dir, "summary.json")
    bench.write_summary(summary, path, records)
    _print_summary(summary)
    print(f"wrote {path}")
    return 0


def cmd_report(args):
    header, records = bench.read_records(args.records)
    if args.summary:
        with open(args.summary) as fh:
            summary = bench.summary_from_dict(json.load(fh))
    else:
        summary = bench.summarize(records)
    out_dir = args.out_dir or os.path.dirname(os.path.abspath(args.records))
    paths = bench.emit_report(summary, records, out_dir)
    for k, v in paths.items():
        print(f"{k}: {v}")
    return 0


def cmd_oracle(args):
    data = bench.load_config(args.config) if args.config else {}
    opts = {**ORACLE_DEFAULTS, **data.pop("oracle", {})}
    for k in ORACLE_DEFAULTS:
        if getattr(args, k, None) is not None:
            opts[k] = getattr(args, k)
    unknown = set(opts) - set(ORACLE_DEFAULTS)
    if unknown:
        raise ConfigurationError(f"unknown oracle keys: {sorted(unknown)}")
    if opts["tasks_file"]:
        with open(opts["tasks_file"]) as fh:
            tasks = [TaskSpec.from_dict(t) for t in json.load(fh)["tasks"]]
        if not 0 <= opts["task_index"] < len(tasks):
            raise ConfigurationError(f"task_index {opts['task_index']} outside [0, {len(tasks)})")
        task = tasks[opts["task_index"]]
    else:
        cfg = _resolve(args)
        cfg.num_problems = opts["task_index"] + 1
        task = bench.generate_problems(cfg)[opts["task_index"]]
    out = {"task": task.to_dict()}
    if opts["kind"] in ("degree", "both"):
        probe = bench.degree_probe(task, directions=opts["directions"], seed=args.seed or 0)
        out["degree"] = {"expected": probe.expected, "slopes": probe.slopes.tolist()}
    if opts["kind"] in ("volume", "both"):
        grid = np.logspace(np.log10(opts["eps_min"]), np.log10(opts["eps_max"]), opts["eps_points"])
        try:
            slope = mc_volume_exponent(task, grid, opts["samples_per_eps"], opts["box_radius"],
                                       seed=args.seed or 0, workers=args.workers or 1)
            out["volume"] = {"exponent": slope, "true_llc": float(task.true_llc)}
        except InsufficientSamples as exc:
            out["volume"] = {"error": str(exc)}
    print(json.dumps(out, indent=2))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="llcbench", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="WARNING", help="logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("presets", help="list model classes and protocols")
    p.add_argument("--show", metavar="NAME", help="print one protocol as a JSON config")
    p.set_defaults(func=cmd_presets)

    p = sub.add_parser("gen", help="generate the task list of a sweep")
    _add_common(p)
    _add_sweep_flags(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="run a sweep and write records and summary")
    _add_common(p)
    _add_sweep_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("summarize", help="records -> summary.json")
    p.add_argument("--records", required=True)
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("report", help="records (+ summary) -> charts")
    p.add_argument("--records", required=True)
    p.add_argument("--summary")
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("oracle", help="degree probe / volume exponent on one task")
    _add_common(p)
    _add_sweep_flags(p)
    p.add_argument("--task-index", dest="task_index", type=int)
    p.add_argument("--tasks-file", dest="tasks_file", help="tasks.json written by `gen`")
    p.add_argument("--kind", choices=("degree", "volume", "both"))
    p.add_argument("--directions", type=int)
    p.add_argument("--samples-per-eps", dest="samples_per_eps", type=int)
    p.add_argument("--box-radius", dest="box_radius", type=float)
    p.add_argument("--eps-min", dest="eps_min", type=float)
    p.add_argument("--eps-max", dest="eps_max", type=float)
    p.add_argument("--eps-points", dest="eps_points", type=int)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except LLCBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
