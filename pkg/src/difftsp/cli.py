"""Command-line entry point: ``difftsp <subcommand> ...``.

Data goes to stdout or ``--out``; logs go to stderr.  ``--config FILE``
reads ``key = value`` lines (keys spelled like the long flags, with
dashes or underscores); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import (
    ablation_methods,
    derive_seed,
    diffusion_method,
    random_two_opt_method,
    reference_lengths,
    reference_tour,
    run_benchmark,
)
from .core import generate_random_instance, tour_length
from .denoiser import TrainingConfig, load_checkpoint, save_checkpoint, train
from .diffusion import make_schedule
from .exact import solve_exact
from .exceptions import ConfigError, DataError, DiffTSPError
from .report import BenchRow, VarianceReport, read_report_csv, write_report_csv, write_summary_json
from .solver import ProjectionMode, SolveConfig, solve
from .tsplib import load_tsplib, read_tsplib, tsplib_optima, tsplib_tour_length, write_tsplib

log = logging.getLogger("difftsp")


def read_config_file(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _load_instances(paths):
    files = []
    for p in map(Path, paths):
        files.extend(sorted(p.glob("*.tsp")) if p.is_dir() else [p])
    if not files:
        raise DataError("no .tsp files found")
    return [load_tsplib(f) for f in files]


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout.buffer, False
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "wb"), True


def _emit(writer, path):
    sink, close = _open_out(path)
    try:
        writer(sink)
        sink.flush()
    finally:
        if close:
            sink.close()


def _solve_config(args, checkpoint=None) -> SolveConfig:
    T = args.T or (checkpoint.T if checkpoint is not None else 1000)
    beta_min = args.beta_min if args.beta_min is not None else (
        checkpoint.config.beta_min if checkpoint is not None else 1e-4)
    beta_max = args.beta_max if args.beta_max is not None else (
        checkpoint.config.beta_max if checkpoint is not None else 0.02)
    return SolveConfig(
        schedule=make_schedule(T, beta_min, beta_max, args.n_inference),
        refinement_rounds=args.rounds, renoise_fraction=args.alpha, samples=args.samples,
        projection_mode=ProjectionMode(args.projection), final_two_opt=args.final_two_opt,
        seed=args.seed,
    )


def _references(instances, args):
    return reference_lengths(instances, args.ref_restarts, args.seed)


# subcommands -----------------------------------------------------------------

def cmd_gen(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k in range(args.count):
        inst = generate_random_instance(args.n, derive_seed(args.seed, k), id=f"rand{args.n}_{k:04d}")
        with open(out / f"{inst.id}.tsp", "wb") as fh:
            write_tsplib(inst, fh, comment=f"uniform random, seed {args.seed}, index {k}")
    log.info("wrote %d instances to %s", args.count, out)


def cmd_exact(args):
    rows = []
    for inst in _load_instances(args.inputs):
        res = solve_exact(inst, args.method)
        rows.append(BenchRow(inst.id, inst.n, res.method.value, res.length, res.length, None, 0))
    _emit(lambda s: write_report_csv(rows, s), args.out)


def cmd_train(args):
    if args.inputs:
        instances = _load_instances(args.inputs)
        n = instances[0].n
    else:
        n = args.n
        instances = [generate_random_instance(n, derive_seed(args.seed, 1, k), id=f"train{k}")
                     for k in range(args.count)]
    log.info("labelling %d instances (n=%d)", len(instances), n)
    dataset = [(inst, reference_tour(inst, args.label_restarts, derive_seed(args.seed, 2, k)))
               for k, inst in enumerate(instances)]
    init = load_checkpoint(args.init) if args.init else None
    config = TrainingConfig(
        target_mode=args.target_mode, learning_rate=args.learning_rate, momentum=args.momentum,
        epochs=args.epochs, batch_size=args.batch_size, seed=args.seed, n=n, hidden=args.hidden,
        T=init.T if init is not None else (args.T or 1000),
        beta_min=args.beta_min if args.beta_min is not None else 1e-4,
        beta_max=args.beta_max if args.beta_max is not None else 0.02,
        redraw=args.redraw,
    )
    ckpt = train(config, dataset, init=init,
                 log=lambda epoch, loss: log.info("epoch %d loss %.6f", epoch, loss))
    save_checkpoint(ckpt, args.out)
    log.info("saved checkpoint to %s", args.out)


def cmd_solve(args):
    ckpt = load_checkpoint(args.checkpoint)
    config = _solve_config(args, ckpt)
    rows = []
    optima = tsplib_optima()
    paths = [args.tsplib] if args.tsplib else []
    paths += args.inputs or []
    if not paths:
        raise ConfigError("give --tsplib FILE or input files")
    for path in paths:
        with open(path, "rb") as fh:
            problem = read_tsplib(fh)
        inst = problem.to_instance()
        res = solve(inst, ckpt, config)
        name = problem.header.name
        if name in optima:
            length, ref = tsplib_tour_length(problem, res.tour), optima[name]
        else:
            length = res.length
            ref = tour_length(inst, reference_tour(inst, args.ref_restarts, args.seed)) if inst.n <= 18 else None
            if ref is None:
                log.warning("no reference length for %s", name)
        rows.append(BenchRow(name, inst.n, f"diffusion+{config.projection_mode.value}", float(length), ref,
                             res.wall_time if args.timing else None, config.seed))
    _emit(lambda s: write_report_csv(rows, s), args.out)


def _bench_methods(args):
    methods = [random_two_opt_method()]
    for path in args.checkpoint or []:
        ckpt = load_checkpoint(path)
        base = _solve_config(args, ckpt)
        label = Path(path).stem
        modes = args.modes or [m.value for m in ProjectionMode]
        for mode in modes:
            cfg = SolveConfig(base.schedule, base.refinement_rounds, base.renoise_fraction, base.samples,
                              ProjectionMode(mode), mode != "ideq" or args.final_two_opt, base.seed)
            methods.append(diffusion_method(f"{label}+{mode}", ckpt, cfg))
    return methods


def _write_bench(result, args):
    _emit(lambda s: write_report_csv(result.rows, s), args.out)
    if args.summary:
        _emit(lambda s: write_summary_json(result.rows, s), args.summary)
    for err in result.errors:
        log.warning(err)


def cmd_bench(args):
    instances = _load_instances(args.inputs)
    result = run_benchmark(instances, _bench_methods(args), args.repetitions, args.seed,
                           _references(instances, args), n_jobs=args.threads, record_time=args.timing)
    _write_bench(result, args)


def cmd_ablate(args):
    instances = _load_instances(args.inputs)
    ckpts = {"dirac": load_checkpoint(args.dirac), "equivalence": load_checkpoint(args.equivalence)}
    methods = ablation_methods(ckpts, _solve_config(args, ckpts["dirac"]), extras=not args.no_extras)
    result = run_benchmark(instances, methods, args.repetitions, args.seed, _references(instances, args),
                           n_jobs=args.threads, record_time=args.timing)
    _write_bench(result, args)


def cmd_variance(args):
    if args.from_csv:
        with open(args.from_csv, "rb") as fh:
            rows = read_report_csv(fh.read())
    else:
        instances = _load_instances(args.inputs)
        result = run_benchmark(instances, _bench_methods(args), args.repetitions, args.seed,
                               _references(instances, args), n_jobs=args.threads)
        rows = result.rows
    report = VarianceReport.from_rows(rows)
    _emit(report.write_csv, args.out)
    for method in report.methods():
        log.info("%s: pooled std %.4f%%", method, 100 * report.pooled_std(method))
    if args.plot:
        _plot_histograms(rows, args.plot)


def _plot_histograms(rows, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    methods = sorted({r.method for r in rows if r.gap is not None})
    fig, axes = plt.subplots(len(methods), 1, figsize=(6, 2.2 * len(methods)), squeeze=False, sharex=True)
    for ax, method in zip(axes[:, 0], methods):
        gaps = np.array([100 * r.gap for r in rows if r.method == method and r.gap is not None])
        ax.hist(gaps, bins=40)
        ax.set_title(method, fontsize=9)
        ax.set_ylabel("count")
    axes[-1, 0].set_xlabel("optimality gap (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


# parser ----------------------------------------------------------------------

def _add_solve_flags(p):
    p.add_argument("--T", type=int, default=None, help="diffusion steps (default: from checkpoint)")
    p.add_argument("--beta-min", type=float, default=None)
    p.add_argument("--beta-max", type=float, default=None)
    p.add_argument("--n-inference", type=int, default=20)
    p.add_argument("--rounds", type=int, default=3, help="refinement rounds")
    p.add_argument("--alpha", type=float, default=0.15, help="re-noising fraction of T")
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--projection", choices=[m.value for m in ProjectionMode], default="ideq")
    p.add_argument("--final-two-opt", action="store_true")


def _add_bench_flags(p, checkpoints=True):
    p.add_argument("inputs", nargs="*", help="instance files or directories")
    if checkpoints:
        p.add_argument("--checkpoint", action="append", help="repeatable")
        p.add_argument("--modes", nargs="+", choices=[m.value for m in ProjectionMode])
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--ref-restarts", type=int, default=200)
    p.add_argument("--threads", type=int, default=None, help="default: $DIFFTSP_THREADS or all cores")
    p.add_argument("--timing", action="store_true", help="fill the seconds column")
    p.add_argument("--summary", help="JSON summary path")
    _add_solve_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="difftsp", description="Diffusion-based Euclidean TSP solver.")
    parser.add_argument("--config", help="key = value file; flags override it")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None)
        p.set_defaults(func=func)
        return p

    p = add("gen", cmd_gen, "write random uniform instances as TSPLIB files")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, default=1)

    p = add("exact", cmd_exact, "optimal lengths by brute force or Held-Karp")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--in", dest="inputs_flag", action="append", default=[])
    p.add_argument("--method", choices=["held-karp", "brute-force"], default="held-karp")

    p = add("train", cmd_train, "train a denoiser checkpoint")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--learning-rate", type=float, default=0.02)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--target-mode", choices=["dirac", "equivalence"], default="dirac")
    p.add_argument("--redraw", choices=["epoch", "step"], default="epoch")
    p.add_argument("--label-restarts", type=int, default=200)
    p.add_argument("--init", help="checkpoint to continue from")
    p.add_argument("--T", type=int, default=None)
    p.add_argument("--beta-min", type=float, default=None)
    p.add_argument("--beta-max", type=float, default=None)

    p = add("solve", cmd_solve, "solve instances with a checkpoint")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--tsplib")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ref-restarts", type=int, default=200)
    p.add_argument("--timing", action="store_true")
    _add_solve_flags(p)

    p = add("bench", cmd_bench, "benchmark methods over instances and repetitions")
    p.add_argument("--in", dest="inputs_flag", action="append", default=[])
    _add_bench_flags(p)

    p = add("ablate", cmd_ablate, "checkpoint x inference-variant grid")
    p.add_argument("--in", dest="inputs_flag", action="append", default=[])
    p.add_argument("--dirac", required=True)
    p.add_argument("--equivalence", required=True)
    p.add_argument("--no-extras", action="store_true")
    _add_bench_flags(p, checkpoints=False)

    p = add("variance", cmd_variance, "per-instance gap spread over repetitions")
    p.add_argument("--in", dest="inputs_flag", action="append", default=[])
    p.add_argument("--from-csv", help="reuse rows from a bench CSV")
    p.add_argument("--plot", help="histogram PNG path")
    _add_bench_flags(p)
    p.set_defaults(repetitions=32)
    return parser


def _apply_config(parser, argv):
    """Re-parse with config-file values as defaults for the chosen subcommand."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    values = read_config_file(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r} for {args.command}")
        action = known[key]
        if action.nargs == 0:
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif action.nargs in ("*", "+") or isinstance(action, argparse._AppendAction):
            conv = action.type or str
            defaults[key] = [conv(v) for v in raw.split()]
        else:
            defaults[key] = (action.type or str)(raw)
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (OSError, ValueError) as exc:
        print(f"difftsp: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(stream=sys.stderr, level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if getattr(args, "inputs_flag", None):
        args.inputs = list(args.inputs or []) + args.inputs_flag
    try:
        args.func(args)
    except DiffTSPError as exc:
        print(f"difftsp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"difftsp: {exc}", file=sys.stderr)
        return 1
    return 0


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
