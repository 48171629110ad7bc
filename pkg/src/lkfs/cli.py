"""Command-line interface.

Subcommands: synth, preprocess, select, cluster, evaluate, run, inspect.
Exit codes: 0 success, 1 usage/config error, 2 data validation error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines, clustering, dataio, evaluation, mkl, pipeline
from .errors import ConfigError, DataValidationError, NumericalError
from .pipeline import RunConfig


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # map argparse failures onto exit code 1
        raise _UsageError(message)


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise _UsageError(f"expected comma-separated integers, got {text!r}") from None


def _progress_printer(log_json: bool):
    def emit(event: dict) -> None:
        if log_json:
            print(json.dumps(event, sort_keys=True), file=sys.stderr, flush=True)
        else:
            fields = " ".join(f"{k}={v}" for k, v in event.items())
            print(fields, file=sys.stderr, flush=True)

    return emit


def build_parser() -> _Parser:
    parser = _Parser(prog="lkfs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic labeled fixture")
    synth.add_argument("--n", type=int, default=200)
    synth.add_argument("--d", type=int, default=100)
    synth.add_argument("--informative", type=int, default=10)
    synth.add_argument("--separation", type=float, default=4.0)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True, help="output directory")

    pre = sub.add_parser("preprocess", help="min-max scale then variance-filter a matrix")
    pre.add_argument("--input", required=True)
    pre.add_argument("--orientation", choices=("rows", "cols"), default="rows")
    pre.add_argument("--keep-fraction", type=float, default=0.5)
    pre.add_argument("--out", required=True, help="output matrix file")

    sel = sub.add_parser("select", help="run one selection method on a preprocessed matrix")
    sel.add_argument("--input", required=True)
    sel.add_argument("--orientation", choices=("rows", "cols"), default="rows")
    sel.add_argument("--method", choices=pipeline.METHODS, default="lkfs")
    sel.add_argument("--p", type=int, required=True)
    sel.add_argument("--seed", type=int, default=0)
    sel.add_argument("--config", help="JSON run configuration")
    sel.add_argument("--out", required=True, help="solution JSON path")

    clus = sub.add_parser("cluster", help="k-means a matrix and dump assignments")
    clus.add_argument("--input", required=True)
    clus.add_argument("--orientation", choices=("rows", "cols"), default="rows")
    clus.add_argument("--k", type=int, required=True)
    clus.add_argument("--restarts", type=int, default=10)
    clus.add_argument("--seed", type=int, default=0)
    clus.add_argument("--out", required=True)

    ev = sub.add_parser("evaluate", help="score a feature selection against a matrix")
    ev.add_argument("--input", required=True)
    ev.add_argument("--orientation", choices=("rows", "cols"), default="rows")
    ev.add_argument("--labels")
    ev.add_argument("--selection", required=True, help="solution JSON or one feature name per line")
    ev.add_argument("--k", type=_int_list, default=(2, 3, 4, 5))
    ev.add_argument("--restarts", type=int, default=10)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--out", help="metrics JSON path (default stdout)")

    run = sub.add_parser("run", help="full repeated-resample experiment")
    run.add_argument("--config", help="JSON run configuration")
    run.add_argument("--input")
    run.add_argument("--labels")
    run.add_argument("--orientation", choices=("rows", "cols"))
    run.add_argument("--methods", help="comma list from {lkfs,skm,spec}")
    run.add_argument("--p", type=_int_list, help="comma list of p values")
    run.add_argument("--k", type=_int_list, help="comma list of k values")
    run.add_argument("--reps", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="output directory")
    run.add_argument("--force", action="store_true")
    run.add_argument("--threads", type=int)
    run.add_argument("--log-json", action="store_true")
    run.add_argument("--svg", action="store_true", help="also write SVG scatter plots")
    run.add_argument("--print-config", action="store_true", help="dump effective config and exit")

    insp = sub.add_parser("inspect", help="pretty-print a solution or report JSON")
    insp.add_argument("--path", required=True)

    return parser


def _load_config(args) -> RunConfig:
    doc = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
    config = RunConfig.from_dict(doc)

    overrides: dict = {}
    if getattr(args, "input", None):
        overrides["input"] = args.input
    if getattr(args, "labels", None):
        overrides["labels"] = args.labels
    if getattr(args, "orientation", None):
        overrides["orientation"] = args.orientation
    if getattr(args, "methods", None):
        overrides["methods"] = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    # `run` passes grids as tuples; `select`/`evaluate` reuse -p/-k as scalars
    if isinstance(getattr(args, "p", None), tuple):
        overrides["p_grid"] = args.p
    if isinstance(getattr(args, "k", None), tuple):
        overrides["k_grid"] = args.k
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None):
        overrides["output_dir"] = args.out
    if getattr(args, "svg", False):
        overrides["write_svg"] = True
    if getattr(args, "reps", None) is not None:
        overrides["preprocess"] = dataclasses.replace(
            config.preprocess, repetitions=args.reps
        )
    threads = getattr(args, "threads", None)
    if threads is None and os.environ.get("LKFS_THREADS"):
        try:
            threads = int(os.environ["LKFS_THREADS"])
        except ValueError:
            raise ConfigError("LKFS_THREADS must be an integer") from None
    if threads is not None:
        overrides["threads"] = threads
    return dataclasses.replace(config, **overrides) if overrides else config


def _cmd_synth(args) -> int:
    X, labels = dataio.generate_synthetic(
        n=args.n, d=args.d, informative=args.informative, separation=args.separation, seed=args.seed
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataio.save_matrix(X, out / "matrix.tsv")
    dataio.save_labels(labels, out / "labels.tsv")
    print(f"wrote {out / 'matrix.tsv'} ({X.n} x {X.d}) and {out / 'labels.tsv'}")
    return 0


def _orient(name: str) -> str:
    return "samples-as-rows" if name == "rows" else "features-as-rows"


def _cmd_preprocess(args) -> int:
    X = dataio.load_matrix(args.input, _orient(args.orientation))
    Xp = dataio.variance_filter(dataio.minmax_scale(X), args.keep_fraction)
    dataio.save_matrix(Xp, args.out)
    print(f"wrote {args.out} ({Xp.n} x {Xp.d})")
    return 0


def _cmd_select(args) -> int:
    config = _load_config(args)
    X = dataio.load_matrix(args.input, _orient(args.orientation))
    if args.method == "lkfs":
        solution, _ = pipeline.run_lkfs_once(X, config, seed=args.seed, p=args.p)
        mkl.save_solution(solution, X.feature_names, args.out, method="lkfs")
    elif args.method == "skm":
        s = config.skm_s if config.skm_s is not None else float(np.sqrt(args.p))
        result = baselines.sparse_kmeans(
            X, k=config.k_grid[0], s=s, seed=args.seed, restarts=config.kmeans_restarts
        )
        baselines.save_baseline_solution(result, X.feature_names, args.p, args.out)
    else:
        result = baselines.spec_scores(X)
        baselines.save_baseline_solution(result, X.feature_names, args.p, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_cluster(args) -> int:
    X = dataio.load_matrix(args.input, _orient(args.orientation))
    assignment = clustering.kmeans(X.values, args.k, restarts=args.restarts, seed=args.seed)
    lines = [f"{sid}\t{c}" for sid, c in zip(X.sample_ids, assignment.labels)]
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {args.out} (k={args.k}, inertia={assignment.inertia:.6g})")
    return 0


def _read_selection(path: str, feature_names: tuple[str, ...]) -> list[int]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
        names = doc["selected"]
    except (json.JSONDecodeError, TypeError, KeyError):
        names = [ln.strip() for ln in text.splitlines() if ln.strip()]
    index = {name: j for j, name in enumerate(feature_names)}
    missing = [n for n in names if n not in index]
    if missing:
        raise DataValidationError(f"selection names not in matrix: {missing[:5]}")
    return [index[n] for n in names]


def _cmd_evaluate(args) -> int:
    X = dataio.load_matrix(args.input, _orient(args.orientation))
    selected = _read_selection(args.selection, X.feature_names)
    labels = dataio.load_labels(args.labels) if args.labels else None
    doc: dict = {"red": evaluation.red_score(X, selected), "clusterings": []}
    sub = X.values[:, selected]
    for k in args.k:
        assignment = clustering.kmeans(sub, k, restarts=args.restarts, seed=args.seed)
        entry: dict = {"k": k, "inertia": assignment.inertia}
        if labels is not None:
            covered = labels.covered(X.sample_ids)
            mask = np.array([sid in labels.labels for sid in X.sample_ids])
            codes = labels.aligned_to(covered)
            entry["rand_index"] = clustering.rand_index(assignment.labels[mask], codes)
            entry["adjusted_rand_index"] = clustering.adjusted_rand_index(
                assignment.labels[mask], codes
            )
        else:
            entry["rand_index"] = None
            entry["adjusted_rand_index"] = None
        doc["clusterings"].append(entry)
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def _cmd_run(args) -> int:
    config = _load_config(args)
    if args.print_config:
        print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
        return 0
    if config.input is None:
        raise ConfigError("run needs an input matrix (--input or config file)")
    progress = _progress_printer(args.log_json)
    result = pipeline.run_experiment(config, progress=progress)
    written = pipeline.emit_outputs(result, config.output_dir, force=args.force)
    print(f"wrote {len(written)} files to {config.output_dir}")
    return 0


def _cmd_inspect(args) -> int:
    doc = json.loads(Path(args.path).read_text(encoding="utf-8"))
    if "aggregates" in doc:
        print(f"report: method={doc.get('method')} dataset={doc.get('dataset_id')}")
        print(f"repetition records: {len(doc.get('repetitions', []))}")
        header = f"{'p':>4} {'k':>3} {'RED':>8} {'Rand':>8} {'ARI':>8} {'inertia':>10}"
        print(header)
        for cell in doc["aggregates"]:
            rand = cell.get("rand_index_mean")
            ari = cell.get("adjusted_rand_index_mean")
            print(
                f"{cell['p']:>4} {cell['k']:>3} {cell['red_mean']:>8.4f} "
                f"{rand if rand is None else format(rand, '.4f'):>8} "
                f"{ari if ari is None else format(ari, '.4f'):>8} "
                f"{cell['inertia_mean']:>10.4g}"
            )
    elif "selected" in doc:
        print(f"solution: method={doc.get('method')} stop={doc.get('stop_reason')}")
        print(f"selected ({len(doc['selected'])}): {', '.join(doc['selected'])}")
        if doc.get("target_alignment") is not None:
            print(f"target alignment: {doc['target_alignment']:.6f}")
        if doc.get("trajectory"):
            print("trajectory: " + ", ".join(f"{a:.6f}" for a in doc["trajectory"]))
    else:
        print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "preprocess": _cmd_preprocess,
    "select": _cmd_select,
    "cluster": _cmd_cluster,
    "evaluate": _cmd_evaluate,
    "run": _cmd_run,
    "inspect": _cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except (_UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataValidationError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
