"""Command-line entry point: ``simplex-fw {train,predict,bench}``.

Exit codes: 0 converged / ok, 2 stopped at --max-iter, 1 error.
Data goes to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .data import DataFormatError, Dataset, load_libsvm
from .kernel import DegenerateDataError, KernelParams, gamma_heuristic
from .randomized import DEFAULT_SAMPLE_SIZE, SamplerConfig
from .solver import DegenerateStepError
from .synthetic import two_blobs
from .train import (TrainConfig, TrainedModel, accuracy, build_model, make_kernel,
                    predict_labels, select_C, solve)

log = logging.getLogger("simplex_fw")

EXIT_OK, EXIT_ERROR, EXIT_MAX_ITER = 0, 1, 2
RESULT_FIELDS = ["dataset", "variant", "epsilon", "sampling", "accuracy", "time_ms",
                 "iterations", "svs", "converged", "error"]


class CLIError(Exception):
    pass


def load_data(spec: str) -> Dataset:
    """A LIBSVM path, or ``synthetic[:m[:seed]]`` for the bundled two-blob set."""
    if spec.startswith("synthetic"):
        parts = spec.split(":")
        try:
            m = int(parts[1]) if len(parts) > 1 else 2000
            seed = int(parts[2]) if len(parts) > 2 else 0
        except ValueError:
            raise CLIError(f"bad synthetic spec {spec!r}; use synthetic:M:SEED") from None
        return two_blobs(m, seed=seed, name=f"synthetic-{m}-{seed}")
    path = Path(spec)
    if not path.is_file():
        raise CLIError(f"data file not found: {spec}")
    return load_libsvm(path)


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t]


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="training set (path or synthetic:M:SEED)")
    p.add_argument("--test", help="optional test set for accuracy")
    p.add_argument("--step-rule", choices=["line-search", "harmonic"], default="line-search")
    p.add_argument("--sample-size", type=int, default=DEFAULT_SAMPLE_SIZE)
    p.add_argument("--safeguard-retries", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--C", default="1.0",
                   help="regularization, or a comma list to pick by a 70/30 validation split")
    p.add_argument("--gamma", default="auto", help="RBF width or 'auto' (inverse mean sq. distance)")
    p.add_argument("--no-bias", action="store_true", help="drop the +1 bias term from the kernel")
    p.add_argument("--max-iter", type=int, default=10_000_000)
    p.add_argument("--start-index", type=int, default=0)
    p.add_argument("--trace-every", type=int, default=1)
    p.add_argument("--out", choices=["json", "csv", "table"], default="table")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simplex-fw", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one model")
    _add_train_flags(t)
    t.add_argument("--algorithm", choices=["fw", "mfw", "swap", "partan"], default="fw")
    t.add_argument("--epsilon", type=float, default=1e-4)
    t.add_argument("--sampling", choices=["full", "random"], default="full")
    t.add_argument("--model", help="where to write the model JSON")
    t.add_argument("--trace", help="where to write the per-iteration trace CSV")

    p = sub.add_parser("predict", help="label a dataset with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--output", help="write labels here instead of stdout")

    b = sub.add_parser("bench", help="sweep variants x tolerances x sampling modes")
    _add_train_flags(b)
    b.add_argument("--algorithms", default="fw,mfw,swap,partan")
    b.add_argument("--epsilons", default="1e-3,1e-4")
    b.add_argument("--samplings", default="full")
    b.add_argument("--results", help="results file (.json or .csv)")
    b.add_argument("--trace-dir", help="directory for per-cell trace CSVs")
    b.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    return parser


def resolve_kernel(args, train: Dataset) -> KernelParams:
    gamma = gamma_heuristic(train, 1000, args.seed) if args.gamma == "auto" else float(args.gamma)
    Cs = _floats(args.C)
    if not Cs:
        raise CLIError("--C needs at least one value")
    bias = not args.no_bias
    if len(Cs) == 1:
        return KernelParams(gamma, Cs[0], bias)
    return select_C(train, gamma, Cs, add_bias=bias, seed=args.seed)


def _config(args, variant, epsilon, sampling, kernel) -> TrainConfig:
    return TrainConfig(
        variant=variant, epsilon=epsilon, kernel=kernel,
        step_rule=args.step_rule.replace("-", "_"), sampling=sampling,
        sampler=SamplerConfig(args.sample_size, args.seed, args.safeguard_retries),
        max_iter=args.max_iter, start_index=args.start_index, trace_every=args.trace_every)


def run_cell(train: Dataset, test: Dataset | None, cfg: TrainConfig, trace_path=None) -> dict:
    result = solve(make_kernel(train, cfg), cfg)
    model = build_model(train, result, cfg.kernel, cfg.variant)
    if trace_path:
        result.trace.write_csv(trace_path)
    return {
        "dataset": train.name, "variant": cfg.variant, "epsilon": cfg.epsilon,
        "sampling": cfg.sampling,
        "accuracy": None if test is None else accuracy(model, test),
        "time_ms": round(result.wall_time_ms, 3), "iterations": result.iterations,
        "svs": model.n_support, "converged": result.converged, "error": None,
        "_model": model,
    }


def format_rows(rows: list[dict], fmt: str) -> str:
    rows = [{k: r.get(k) for k in RESULT_FIELDS} for r in rows]
    if fmt == "json":
        return json.dumps(rows, indent=1) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=RESULT_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()
    head = f"{'dataset':<20} {'variant':<7} {'epsilon':>8} {'sampling':<8} {'acc(%)':>7} " \
           f"{'time(ms)':>10} {'iter':>9} {'SVs':>7} conv"
    lines = [head]
    for r in rows:
        acc = "-" if r["accuracy"] is None else f"{100 * r['accuracy']:.2f}"
        if r["error"]:
            lines.append(f"{r['dataset']:<20} {r['variant']:<7} {r['epsilon']:>8.0e} "
                         f"{r['sampling']:<8} ERROR: {r['error']}")
            continue
        lines.append(f"{r['dataset']:<20} {r['variant']:<7} {r['epsilon']:>8.0e} {r['sampling']:<8} "
                     f"{acc:>7} {r['time_ms']:>10.1f} {r['iterations']:>9d} {r['svs']:>7d} "
                     f"{'yes' if r['converged'] else 'no'}")
    return "\n".join(lines) + "\n"


def cmd_train(args) -> int:
    train = load_data(args.data)
    test = load_data(args.test) if args.test else None
    cfg = _config(args, args.algorithm, args.epsilon, args.sampling, resolve_kernel(args, train))
    row = run_cell(train, test, cfg, args.trace)
    if args.model:
        row["_model"].save(args.model)
    sys.stdout.write(format_rows([row], args.out))
    if not row["converged"]:
        log.warning("not converged after %d iterations", row["iterations"])
        return EXIT_MAX_ITER
    return EXIT_OK


def cmd_predict(args) -> int:
    if not Path(args.model).is_file():
        raise CLIError(f"model file not found: {args.model}")
    try:
        model = TrainedModel.load(args.model)
    except (ValueError, json.JSONDecodeError) as exc:
        raise CLIError(f"cannot read model: {exc}") from exc
    data = load_data(args.data)
    labels = predict_labels(model, data)
    text = "".join(f"{int(v):+d}\n" for v in labels)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    acc = float((labels == data.labels).mean())
    print(f"accuracy {acc:.6f} ({int((labels == data.labels).sum())}/{data.m})", file=sys.stderr)
    return EXIT_OK


def _bench_cell(job):
    train, test, cfg, trace_path = job
    try:
        row = run_cell(train, test, cfg, trace_path)
        row.pop("_model")
    except Exception as exc:  # recorded per cell; the sweep carries on
        row = {"dataset": train.name, "variant": cfg.variant, "epsilon": cfg.epsilon,
               "sampling": cfg.sampling, "accuracy": None, "time_ms": None, "iterations": None,
               "svs": None, "converged": False, "error": f"{type(exc).__name__}: {exc}"}
    return row


def trace_name(dataset: str, variant: str, epsilon: float, sampling: str) -> str:
    return f"{dataset}_{variant}_eps{epsilon:g}_{sampling}.csv"


def cmd_bench(args) -> int:
    train = load_data(args.data)
    test = load_data(args.test) if args.test else None
    kernel = resolve_kernel(args, train)
    variants = [v for v in args.algorithms.split(",") if v]
    samplings = [s for s in args.samplings.split(",") if s]
    if args.trace_dir:
        Path(args.trace_dir).mkdir(parents=True, exist_ok=True)
    jobs = []
    for sampling in samplings:
        for variant in variants:
            for eps in _floats(args.epsilons):
                cfg = _config(args, variant, eps, sampling, kernel)
                tp = (Path(args.trace_dir) / trace_name(train.name, variant, eps, sampling)
                      if args.trace_dir else None)
                jobs.append((train, test, cfg, tp))
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(args.workers, len(jobs))) as pool:
            rows = list(pool.map(_bench_cell, jobs))
    else:
        rows = [_bench_cell(j) for j in jobs]

    if args.results:
        fmt = "csv" if args.results.endswith(".csv") else "json"
        Path(args.results).write_text(format_rows(rows, fmt))
    sys.stdout.write(format_rows(rows, args.out))
    return EXIT_ERROR if any(r["error"] for r in rows) else EXIT_OK


COMMANDS = {"train": cmd_train, "predict": cmd_predict, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (CLIError, DataFormatError, DegenerateDataError, DegenerateStepError, ValueError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
