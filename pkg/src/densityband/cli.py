"""Command-line front end.

Subcommands: ``simulate`` runs a JSON-configured experiment, ``predict``
fits on a CSV and emits regions for a query CSV, ``evaluate`` recomputes
metrics for stored regions against a scenario oracle, ``list`` enumerates
scenarios and methods. Flags override config fields (flag wins, with a
notice on stderr).

Exit codes: 0 success, 1 configuration/ingestion error, 2 partial failure
(more than 10% of replications errored).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import metrics
from .datasets import SCENARIOS, Dataset, Scenario, load_csv
from .errors import ConfigurationError, IngestionError
from .harness import (
    METHOD_KINDS,
    MethodSpec,
    fit_and_predict,
    parse_config,
    parse_region,
    run_experiment,
    serialize_region,
)
from .partition import PARTITION_KINDS

_RESERVED_COLS = {"region", "size", "flags", "target"}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, IngestionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="densityband", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a configured experiment")
    sim.add_argument("--config", required=True, help="JSON experiment config")
    sim.add_argument("--seed", type=int, default=None, help="override config seed")
    sim.add_argument("--threads", type=int, default=None, help="override config threads")
    sim.add_argument("--out", default=None, help="override config output directory")
    sim.set_defaults(func=_cmd_simulate)

    pre = sub.add_parser("predict", help="fit on a CSV, emit regions for a query CSV")
    pre.add_argument("--config", default=None, help="optional JSON with these same fields")
    pre.add_argument("--train", default=None, help="training CSV (header row required)")
    pre.add_argument("--query", default=None, help="query CSV with the feature columns")
    pre.add_argument("--target-column", default=None)
    pre.add_argument("--task", choices=["regression", "classification"], default=None)
    pre.add_argument("--method", default=None, choices=list(METHOD_KINDS))
    pre.add_argument("--partition", default=None, choices=list(PARTITION_KINDS))
    pre.add_argument("--J", type=int, default=None)
    pre.add_argument("--alpha", type=float, default=None)
    pre.add_argument("--k", type=int, default=None)
    pre.add_argument("--bandwidth", type=float, default=None)
    pre.add_argument("--calibration-fraction", type=float, default=None)
    pre.add_argument("--seed", type=int, default=None)
    pre.add_argument("--out", default=None, help="output CSV (default: stdout)")
    pre.set_defaults(func=_cmd_predict)

    ev = sub.add_parser("evaluate", help="recompute metrics from stored regions")
    ev.add_argument("--regions", required=True, help="CSV produced by predict")
    ev.add_argument("--scenario", required=True, choices=list(SCENARIOS))
    ev.add_argument("--alpha", type=float, default=0.1)
    ev.add_argument("--sscv-bins", type=int, default=5)
    ev.add_argument("--out", default=None, help="output JSON (default: stdout)")
    ev.set_defaults(func=_cmd_evaluate)

    ls = sub.add_parser("list", help="enumerate scenarios and methods")
    ls.set_defaults(func=_cmd_list)
    return p


def _cmd_list(args) -> int:
    print("scenarios:")
    for s in SCENARIOS:
        print(f"  {s}")
    print("methods:")
    for m in METHOD_KINDS:
        print(f"  {m}")
    print("partitions (for cd):")
    for k in PARTITION_KINDS:
        print(f"  {k}")
    return 0


def _cmd_simulate(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        raw = json.load(fh)
    for flag, key in (("seed", "seed"), ("threads", "threads"), ("out", "output_dir")):
        val = getattr(args, flag)
        if val is not None:
            if key in raw and raw[key] != val:
                print(
                    f"notice: --{flag}={val} overrides config {key}={raw[key]}",
                    file=sys.stderr,
                )
            raw[key] = val
    config = parse_config(raw)
    out = run_experiment(config)
    n_rows = len(out["rows"])
    print(f"wrote {config.output_dir}/raw.csv ({n_rows} rows) and summary.csv")
    if out["failed_fraction"] > 0.10:
        print(
            f"error: {out['failed_fraction']:.0%} of replication rows failed",
            file=sys.stderr,
        )
        return 2
    return 0


def _merge_flag(args, raw: dict, flag: str, key: str, default):
    val = getattr(args, flag)
    if val is not None:
        if key in raw and raw[key] != val:
            print(f"notice: --{flag.replace('_', '-')}={val} overrides config {key}={raw[key]}",
                  file=sys.stderr)
        return val
    return raw.get(key, default)


def _cmd_predict(args) -> int:
    raw = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    train_path = _merge_flag(args, raw, "train", "train", None)
    query_path = _merge_flag(args, raw, "query", "query", None)
    target = _merge_flag(args, raw, "target_column", "target_column", None)
    if not train_path or not query_path or not target:
        raise ConfigurationError("predict needs --train, --query and --target-column")
    task = _merge_flag(args, raw, "task", "task", "regression")
    kind = _merge_flag(args, raw, "method", "method", "hpd")
    partition = _merge_flag(args, raw, "partition", "partition", "profile-voronoi")
    spec = MethodSpec(
        kind=kind,
        label=kind,
        partition=partition,
        J=_merge_flag(args, raw, "J", "J", None),
    )
    alpha = float(_merge_flag(args, raw, "alpha", "alpha", 0.1))
    k = int(_merge_flag(args, raw, "k", "k", 100))
    bandwidth = float(_merge_flag(args, raw, "bandwidth", "bandwidth", 0.3))
    frac = float(
        _merge_flag(args, raw, "calibration_fraction", "calibration_fraction", 0.5)
    )
    seed = int(_merge_flag(args, raw, "seed", "seed", 0))

    train_data = load_csv(train_path, target, task)
    query_X, feat_names = _load_query(query_path, train_data)
    if train_data.task == "classification" and train_data.label_names:
        print(
            "notice: label mapping "
            + ", ".join(f"{name}->{i}" for i, name in enumerate(train_data.label_names)),
            file=sys.stderr,
        )
    regions = fit_and_predict(
        train_data,
        query_X,
        spec,
        alpha=alpha,
        k=k,
        bandwidth=bandwidth,
        calibration_fraction=frac,
        seed=seed,
    )
    out_fh = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out_fh)
        writer.writerow(list(feat_names) + ["region", "size", "flags"])
        for x, r in zip(query_X, regions):
            writer.writerow(
                [f"{v:.10g}" for v in x]
                + [serialize_region(r, train_data.label_names), f"{r.size():.10g}", "|".join(r.flags)]
            )
    finally:
        if args.out:
            out_fh.close()
    return 0


def _load_query(path: str, train_data: Dataset):
    """Query features in training-column order; tolerate reordered headers."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError(f"{path}: file is empty") from None
        rows = list(reader)
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    names = train_data.feature_names
    if names and set(names) <= set(header):
        order = [header.index(nm) for nm in names]
    elif len(header) == train_data.d:
        order = list(range(len(header)))
        names = tuple(header)
    else:
        raise IngestionError(
            f"{path}: expected columns {names or train_data.d}, found {header}"
        )
    X = np.empty((len(rows), len(order)))
    for r, record in enumerate(rows, start=2):
        for j, col in enumerate(order):
            try:
                X[r - 2, j] = float(record[col])
            except (ValueError, IndexError):
                raise IngestionError(
                    f"{path}: non-numeric value at row {r}, column {header[col]!r}"
                ) from None
    return X, (names or tuple(header))


def _cmd_evaluate(args) -> int:
    with open(args.regions, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        records = list(reader)
    if "region" not in header:
        raise IngestionError(f"{args.regions}: no 'region' column")
    feat_cols = [i for i, h in enumerate(header) if h not in _RESERVED_COLS]
    region_col = header.index("region")
    target_col = header.index("target") if "target" in header else None
    scenario = Scenario(args.scenario, d=len(feat_cols))
    discrete = scenario.is_classification
    X = np.array([[float(rec[i]) for i in feat_cols] for rec in records])
    regions = [parse_region(rec[region_col], discrete) for rec in records]
    report = {
        "n_regions": len(regions),
        "alpha": args.alpha,
        "mean_region_size": float(np.mean([r.size() for r in regions])),
        "cond_cov_abs_dev": metrics.conditional_coverage_deviation(
            regions, X, scenario, args.alpha
        ),
    }
    if not discrete:
        report["mean_sym_diff"] = float(
            np.mean(
                [
                    metrics.hpd_symmetric_difference(r, scenario, x, args.alpha)
                    for r, x in zip(regions, X)
                ]
            )
        )
    if target_col is not None:
        targets = [float(rec[target_col]) for rec in records]
        if discrete:
            targets = [int(t) for t in targets]
        report["marginal_coverage"] = metrics.marginal_coverage(regions, targets)
        report["sscv"] = metrics.sscv(regions, targets, args.sscv_bins, args.alpha)
    payload = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    else:
        print(payload)
    return 0


if __name__ == "__main__":
    sys.exit(main())
