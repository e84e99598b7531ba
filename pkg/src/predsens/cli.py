"""Command-line entry point: ``predsens {train,audit,sweep,monitor,stats}``.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric
failure during training.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import metrics
from . import model as mlp
from .config import RunConfig
from .data import EncodedDataset, FeatureSchema, encode, fit_schema, load_csv, parse_csv_lines
from .errors import ConfigError, DataError, FingerprintError, PredsensError
from .io import atomic_write_text, csv_text, jsonl_text, write_json
from .monitor import MonitorConfig, evaluate, threshold_sweep
from .sensitivity import DistributionSummary, batch_distribution, profile_batch, smoothness_probe
from .streaming import StreamStats

log = logging.getLogger("predsens")

MODEL_FILE = "model.json"
SCHEMA_FILE = "schema.json"
TRACE_FILE = "trace.json"
AUDIT_FILE = "audit.json"
DISTRIBUTION_FILE = "sensitivity_distribution.csv"
RECORDS_FILE = "sensitivities.jsonl"
SWEEP_FILE = "sweep.csv"
STREAM_FILE = "stream_stats.json"
PROBE_FILE = "smoothness.json"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float] | str:
    if text.strip().lower() == "deciles":
        return "deciles"
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be comma-separated numbers or 'deciles': {text!r}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}")


def _load_model(cfg: RunConfig) -> tuple[mlp.MlpModel, FeatureSchema]:
    model = mlp.load(cfg.model)
    if model.schema is None:
        raise DataError(f"{cfg.model} carries no feature schema")
    schema = FeatureSchema.from_dict(model.schema)
    if cfg.schema:
        given = FeatureSchema.from_json(Path(cfg.schema).read_text())
        if given.fingerprint() != model.schema_fingerprint:
            raise FingerprintError(f"schema {cfg.schema} (fingerprint {given.fingerprint()[:12]}) does not match "
                                   f"the model's schema (fingerprint {model.schema_fingerprint[:12]})")
    return model, schema


def _load_dataset(path, schema: FeatureSchema, cfg: RunConfig) -> EncodedDataset:
    fmt = cfg.table_format()
    return encode(load_csv(path, fmt), schema, fmt)


def cmd_train(cfg: RunConfig) -> dict:
    cfg.require("train", "seed")
    if cfg.test:
        cfg.require("test")
    fmt = cfg.table_format()
    table = load_csv(cfg.train, fmt)
    schema = fit_schema(table, cfg.protected, cfg.privileged, cfg.label_positive, fmt)
    ds = encode(table, schema, fmt)
    test = _load_dataset(cfg.test, schema, cfg) if cfg.test else None

    model = mlp.init([schema.width, *cfg.hidden, 1], cfg.seed)
    model, trace = mlp.train(model, ds.features, ds.labels, epochs=cfg.epochs, batch_size=cfg.batch_size,
                             learning_rate=cfg.learning_rate, seed=cfg.seed)
    model.schema = schema.to_dict()
    model.schema_fingerprint = schema.fingerprint()

    summary = trace.to_dict()
    summary["train_rows"] = len(ds)
    summary["train_dropped"] = table.dropped
    summary["train_accuracy"] = trace.accuracy[-1] if trace.accuracy else None
    if test is not None:
        summary["test_rows"] = len(test)
        summary["test_accuracy"] = mlp.accuracy(model, test.features, test.labels)

    out = Path(cfg.out_dir)
    mlp.save(model, out / MODEL_FILE)
    atomic_write_text(out / SCHEMA_FILE, json.dumps(schema.to_dict(), indent=2, sort_keys=True) + "\n")
    write_json(out / TRACE_FILE, summary)
    return {k: v for k, v in summary.items() if k != "epochs"}


def cmd_audit(cfg: RunConfig) -> dict:
    cfg.require("model", "test")
    model, schema = _load_model(cfg)
    ds = _load_dataset(cfg.test, schema, cfg)
    bp = profile_batch(model, ds, how=cfg.aggregation, space=cfg.space)
    gp = metrics.GroupedPredictions(bp.decisions, ds.privileged)
    rep = metrics.report(gp)
    audit = {
        "rows": len(ds),
        "protected": schema.protected,
        "privileged_value": schema.privileged_value,
        "statistical_parity": rep["statistical_parity"],
        "disparate_impact": rep["disparate_impact"],
        "accuracy": float(np.mean(bp.decisions == ds.labels)) if ds.has_labels else None,
        "sensitivity": {"aggregation": cfg.aggregation, "space": cfg.space,
                        "units": f"{cfg.space} per standardized feature unit"},
    }
    dist = batch_distribution(model, ds, batch=bp)
    out = Path(cfg.out_dir)
    atomic_write_text(out / DISTRIBUTION_FILE, csv_text(DistributionSummary.CSV_FIELDS, (d.row() for d in dist)))
    atomic_write_text(out / RECORDS_FILE, jsonl_text(r.to_dict() for r in bp.records()))
    write_json(out / AUDIT_FILE, audit)
    return {"statistical_parity": rep["statistical_parity"]["value"],
            "disparate_impact": rep["disparate_impact"]["value"], "rows": len(ds)}


def cmd_sweep(cfg: RunConfig) -> dict:
    cfg.require("model", "test")
    model, schema = _load_model(cfg)
    ds = _load_dataset(cfg.test, schema, cfg)
    report = threshold_sweep(model, ds, cfg.grid, how=cfg.aggregation, space=cfg.space)
    atomic_write_text(Path(cfg.out_dir) / SWEEP_FILE, report.to_csv())
    return {"rows": len(report)}


def _read_lines(source: str):
    if source == "-":
        yield from sys.stdin
    else:
        with open(source) as f:
            yield from f


def cmd_monitor(cfg: RunConfig) -> dict:
    cfg.require("model")
    if cfg.input is None:
        cfg.input = "-"
    elif cfg.input != "-":
        if not Path(cfg.input).exists():
            raise ConfigError(f"input path does not exist: {cfg.input}")
    model, schema = _load_model(cfg)
    base = cfg.table_format()
    columns = base.columns or (*schema.names, schema.label_column)
    fmt = dataclasses.replace(base, missing_marker=None, header=False, columns=columns)
    mcfg = MonitorConfig(cfg.threshold, cfg.aggregation, cfg.space)
    stats = StreamStats()
    flagged = 0
    n = 0
    for lineno, line in enumerate(_read_lines(cfg.input), start=1):
        if not line.strip() or (fmt.comment_prefix and line.lstrip().startswith(fmt.comment_prefix)):
            continue
        try:
            ds = encode(parse_csv_lines([line], fmt, require_label=False), schema, fmt)
        except DataError as exc:
            raise DataError(f"{cfg.input}: line {lineno}: {exc}") from None
        v = evaluate(model, schema, ds.features[0], mcfg)
        stats.update(v.protected_sensitivity)
        flagged += v.flagged
        n += 1
        sys.stdout.write(json.dumps({"line": lineno, **v.to_dict()}, sort_keys=True) + "\n")
    sys.stdout.flush()
    snap = stats.snapshot()
    snap["flagged"] = flagged
    snap["threshold"] = None if math.isinf(cfg.threshold) else cfg.threshold
    write_json(Path(cfg.out_dir) / STREAM_FILE, snap)
    log.info("monitored %d predictions, %d flagged", n, flagged)
    return {}


def cmd_stats(cfg: RunConfig) -> dict:
    out = Path(cfg.out_dir)
    result = {}
    if cfg.records is None and cfg.probe_radius is None:
        raise ConfigError("stats needs --records and/or --probe-radius")
    if cfg.records is not None:
        cfg.require("records")
        stats = StreamStats()
        for lineno, line in enumerate(_read_lines(cfg.records), start=1):
            if not line.strip():
                continue
            try:
                stats.update(json.loads(line)["protected_sensitivity"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{cfg.records}: line {lineno}: {exc}") from None
        snap = stats.snapshot()
        write_json(out / STREAM_FILE, snap)
        result["stream"] = snap
    if cfg.probe_radius is not None:
        cfg.require("model", "test", "seed")
        model, schema = _load_model(cfg)
        ds = _load_dataset(cfg.test, schema, cfg)
        rows = []
        for i in range(min(cfg.probe_rows, len(ds))):
            probe = smoothness_probe(model, schema, ds.features[i], cfg.probe_radius, cfg.probe_n, cfg.seed + i,
                                     how=cfg.aggregation, space=cfg.space)
            rows.append({"row": i, **probe})
        spreads = [r["max"] - r["min"] for r in rows]
        summary = {"radius": cfg.probe_radius, "n": cfg.probe_n, "rows": rows,
                   "max_spread": max(spreads), "mean_spread": float(np.mean(spreads))}
        write_json(out / PROBE_FILE, summary)
        result["probe"] = {k: summary[k] for k in ("radius", "n", "max_spread", "mean_spread")}
    return result


COMMANDS = {"train": cmd_train, "audit": cmd_audit, "sweep": cmd_sweep, "monitor": cmd_monitor,
            "stats": cmd_stats}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir")
    common.add_argument("--protected", help="protected attribute column (default: sex)")
    common.add_argument("--privileged", help="privileged value of the protected attribute (default: Male)")
    common.add_argument("--threshold", type=float, help="monitor threshold; inf disables flagging")
    common.add_argument("--grid", type=_float_list, help="comma-separated thresholds, or 'deciles'")
    common.add_argument("--aggregation", choices=("l2", "maxabs", "sumabs"))
    common.add_argument("--space", choices=("probability", "logit"))
    common.add_argument("--schema", help="schema JSON that the model must match")
    common.add_argument("--missing-marker")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="predsens", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", parents=[common], help="fit schema and train a classifier")
    p.add_argument("--train")
    p.add_argument("--test", help="optional held-out file for reporting test accuracy")
    p.add_argument("--hidden", type=_int_list)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)

    for name, help_ in (("audit", "group metrics and per-feature sensitivity distribution"),
                        ("sweep", "group metrics on kept predictions across thresholds")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--model")
        p.add_argument("--test")

    p = sub.add_parser("monitor", parents=[common], help="flag predictions from a CSV stream")
    p.add_argument("--model")
    p.add_argument("--input", help="CSV rows to score, '-' for stdin (default)")

    p = sub.add_parser("stats", parents=[common], help="stream statistics and smoothness probe")
    p.add_argument("--records", help="JSON lines with a protected_sensitivity field")
    p.add_argument("--model")
    p.add_argument("--test")
    p.add_argument("--probe-radius", type=float)
    p.add_argument("--probe-n", type=int)
    p.add_argument("--probe-rows", type=int)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "command", "verbose")}
    return cfg.merged(flags)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        result = COMMANDS[args.command](cfg)
    except PredsensError as exc:
        print(f"predsens {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"predsens {args.command}: {exc}", file=sys.stderr)
        return 2
    if result:
        print(json.dumps(result, indent=2, sort_keys=True), file=sys.stderr if args.command == "monitor" else sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
