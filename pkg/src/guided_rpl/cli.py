"""Command line front end: ``guided-rpl construct | run | verify``.

Exit codes: 0 ok, 1 verification failure, 2 usage or I/O error,
3 construction ran out of scales, 4 construction hit the unit cap.
"""

from __future__ import annotations

import argparse
import logging
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import acceptance
from .data_io import (
    RunConfig,
    SyntheticSpec,
    TaskBatch,
    TaskSplit,
    generate_synthetic,
    parse_config,
    parse_protocol,
    parse_synthetic_spec,
    read_labels,
    read_matrix,
    save_model,
    split_tasks,
)
from .exceptions import GuidedRPLError
from .incremental import one_hot
from .metrics import trace_eigs, trace_pt, write_csv
from .pipeline import run_incremental
from .rpl import make_rng
from .supervisory import TerminationReason, construct

__all__ = ["main", "build_parser"]

logger = logging.getLogger("guided_rpl")

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_XI, EXIT_MAX_UNITS = 0, 1, 2, 3, 4
OUT_ENV = "GUIDED_RPL_OUT"

_TERMINATION_EXIT = {
    TerminationReason.RESIDUAL_MET.value: EXIT_OK,
    TerminationReason.XI_EXHAUSTED.value: EXIT_XI,
    TerminationReason.MAX_UNITS.value: EXIT_MAX_UNITS,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="guided-rpl", description=__doc__.splitlines()[0], allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_args(p):
        p.add_argument("--config", type=Path, help="key = value run configuration")
        p.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./guided_rpl_out)")
        p.add_argument("--seeds", default="0", help="comma separated seeds, e.g. 0,1,2")
        p.add_argument("--strategy", default="mgsm", help="mgsm, scsm or ri; a comma list runs a sweep")
        p.add_argument("--protocol", default="B-0,Inc-2", help="B-m,Inc-n (m=0: equal split of n classes)")
        src = p.add_mutually_exclusive_group()
        src.add_argument("--synthetic", type=Path, help="synthetic data specification file")
        src.add_argument("--features", type=Path, help="directory of .fmat features and .lvec labels")
        p.add_argument("--quiet", action="store_true", help="only log warnings")

    data_args(sub.add_parser("construct", help="grow the projection layer on the first task"))
    data_args(sub.add_parser("run", help="construct, then learn all tasks incrementally"))
    v = sub.add_parser("verify", help="run the built-in acceptance checks")
    v.add_argument("--verify-tolerance", type=float, default=1.0,
                   help="multiply every numerical tolerance by this factor")
    v.add_argument("--list", action="store_true", help="print check names and exit")
    v.add_argument("--check", action="append", help="run only the named check (repeatable)")
    v.add_argument("--inject-fault", type=float, default=0.0, help=argparse.SUPPRESS)
    v.add_argument("--quiet", action="store_true", help=argparse.SUPPRESS)
    return parser


# --------------------------------------------------------------------------
# manifest


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--seeds must be comma separated integers, got {text!r}") from None
    if not seeds:
        raise UsageError("--seeds must not be empty")
    if len(set(seeds)) != len(seeds):
        raise UsageError(f"--seeds contains duplicates: {text}")
    if min(seeds) < 0:
        raise UsageError("seeds must be non-negative")
    return seeds


def _parse_strategies(text: str) -> list[str]:
    names = [t.strip().lower() for t in text.split(",") if t.strip()]
    bad = [n for n in names if n not in ("mgsm", "scsm", "ri")]
    if not names or bad:
        raise UsageError(f"unknown strategy in {text!r}")
    if len(set(names)) != len(names):
        raise UsageError(f"--strategy contains duplicates: {text}")
    return names


def _output_dir(arg) -> Path:
    out = Path(arg) if arg is not None else Path(os.environ.get(OUT_ENV, "guided_rpl_out"))
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"output directory {out} is not writable: {exc}") from None
    return out


def _task_files(directory: Path):
    pattern = re.compile(r"task(\d+)_(train|test)\.fmat$")
    found = {}
    for p in directory.iterdir():
        m = pattern.match(p.name)
        if m:
            found.setdefault(int(m.group(1)), {})[m.group(2)] = p
    return dict(sorted(found.items()))


def _read_pair(fmat: Path):
    lvec = fmat.with_suffix(".lvec")
    if not lvec.exists():
        raise UsageError(f"missing label file {lvec}")
    X, y = read_matrix(fmat), read_labels(lvec)
    if X.shape[0] != y.shape[0]:
        raise UsageError(f"{fmat.name} has {X.shape[0]} rows but {lvec.name} has {y.shape[0]} labels")
    return X, y


def _load_split(args, seed: int) -> TaskSplit:
    m, n = parse_protocol(args.protocol)
    if args.features is not None:
        d = args.features
        if not d.is_dir():
            raise UsageError(f"--features {d} is not a directory")
        tasks = _task_files(d)
        if tasks:
            # tasks already defined on disk; the protocol flag is ignored
            train, test = [], []
            for k, files in tasks.items():
                if "train" not in files:
                    raise UsageError(f"task {k} has no training file")
                X, y = _read_pair(files["train"])
                classes = tuple(int(c) for c in np.unique(y))
                train.append(TaskBatch(X, y, len(train) + 1, classes))
                if "test" in files:
                    Xt, yt = _read_pair(files["test"])
                    test.append(TaskBatch(Xt, yt, len(test) + 1, classes))
            if test and len(test) != len(train):
                raise UsageError("either every task or no task must have a test file")
            return TaskSplit(train, test, "files")
        if not (d / "train.fmat").exists():
            raise UsageError(f"{d} holds neither train.fmat nor task<k>_train.fmat files")
        X, y = _read_pair(d / "train.fmat")
        Xt = yt = None
        if (d / "test.fmat").exists():
            Xt, yt = _read_pair(d / "test.fmat")
        return split_tasks(X, y, m, n, seed, Xt, yt)
    spec = parse_synthetic_spec(args.synthetic) if args.synthetic is not None else SyntheticSpec()
    data = generate_synthetic(spec)
    return split_tasks(data.X_train, data.y_train, m, n, seed, data.X_test, data.y_test)


def _load_config(args) -> RunConfig:
    return parse_config(args.config) if args.config is not None else RunConfig()


def _tag(rows, **extra):
    from dataclasses import asdict

    out = []
    for r in rows:
        row = dict(extra)
        row.update(asdict(r) if hasattr(r, "__dataclass_fields__") else r)
        out.append(row)
    return out


# --------------------------------------------------------------------------
# commands


def cmd_construct(args) -> int:
    cfg = _load_config(args)
    seeds = _parse_seeds(args.seeds)
    strategies = _parse_strategies(args.strategy)
    out = _output_dir(args.out)
    log_rows, sizes = [], []
    worst = EXIT_OK
    multi = len(seeds) * len(strategies) > 1
    for seed in seeds:
        split = _load_split(args, seed)
        first = split.train[0]
        Y = one_hot(first.labels, first.classes)
        for strategy in strategies:
            logger.info("constructing: seed %d, strategy %s, %d samples", seed, strategy, len(first.labels))
            model, state, diag = construct(first.features, Y, cfg.construction_config(strategy), make_rng(seed))
            name = f"rpl_model_{strategy}_seed{seed}.fmat" if multi else "rpl_model.fmat"
            save_model(out / name, model)
            log_rows += _tag(diag.records, seed=seed, strategy=strategy)
            sizes.append((seed, strategy, model.total_units, diag.termination))
            code = _TERMINATION_EXIT[diag.termination]
            worst = max(worst, code)
    write_csv(out / "construction_log.csv", log_rows, _log_columns())
    if multi:
        text = "".join(f"{s},{st},{n},{t}\n" for s, st, n, t in sizes)
        (out / "final_hidden_size.txt").write_text("seed,strategy,final_hidden_size,termination\n" + text)
    else:
        (out / "final_hidden_size.txt").write_text(f"{sizes[0][2]}\n")
    return worst


def _log_columns():
    from dataclasses import fields

    from .metrics import ConstructionRecord

    return ["seed", "strategy"] + [f.name for f in fields(ConstructionRecord)]


def cmd_run(args) -> int:
    cfg = _load_config(args)
    seeds = _parse_seeds(args.seeds)
    strategies = _parse_strategies(args.strategy)
    out = _output_dir(args.out)
    tables = {k: [] for k in ("construction_log", "stage_snapshots", "accuracy_grid", "metrics",
                              "pt_trace", "eig_trace", "cosine_summary")}
    for seed in seeds:
        split = _load_split(args, seed)
        for strategy in strategies:
            res = run_incremental(split, cfg, strategy, seed)
            diag = res.diagnostics
            key = dict(seed=seed, strategy=strategy)
            tables["construction_log"] += _tag(diag.records, **key)
            tables["stage_snapshots"] += _tag(diag.snapshots, **key)
            for t, row in enumerate(res.grid.a):
                tables["accuracy_grid"] += [dict(key, stage=t + 1, task=j + 1, accuracy=a) for j, a in enumerate(row)]
            m = res.metrics_row()
            m.pop("termination")
            tables["metrics"].append(m)
            tables["pt_trace"] += _tag(trace_pt(diag.snapshots), **key)
            tables["eig_trace"] += _tag(trace_eigs(diag.snapshots), **key)
            tables["cosine_summary"].append(dict(key, n_units=res.model.total_units,
                                                 mean_abs_cosine=diag.cosine_summary,
                                                 feature_condition=diag.feature_condition))
            logger.info("seed %d %s: A_last %.4f, L=%d (%s)", seed, strategy, m["a_last"],
                        m["final_hidden_size"], diag.termination)
    columns = {"construction_log": _log_columns()}
    for name, rows in tables.items():
        write_csv(out / f"{name}.csv", rows, columns.get(name))
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.list:
        for name in acceptance.check_names():
            print(name)
        return EXIT_OK
    if args.verify_tolerance <= 0:
        raise UsageError("--verify-tolerance must be positive")
    names = args.check
    if names:
        unknown = sorted(set(names) - set(acceptance.check_names()))
        if unknown:
            raise UsageError(f"unknown checks: {', '.join(unknown)}")
    results = acceptance.run_checks(args.verify_tolerance, args.inject_fault, names,
                                    echo=lambda line: print(line, flush=True))
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} checks passed")
    return EXIT_OK if passed == len(results) else EXIT_VERIFY


_COMMANDS = {"construct": cmd_construct, "run": cmd_run, "verify": cmd_verify}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"guided-rpl: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    quiet = getattr(args, "quiet", False) or args.command == "verify"
    level = logging.WARNING if quiet else logging.INFO
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
        logger.addHandler(handler)
    logger.setLevel(level)
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, GuidedRPLError, OSError, ValueError) as exc:
        print(f"guided-rpl: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
