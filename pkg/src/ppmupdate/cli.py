"""Command-line interface: ``ppmupdate <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import forest
from .driftgen import GeneratorConfig, generate
from .encoding import encode_set, fit_schema, read_dataset_csv
from .eventlog import read_labels_csv, read_log, stats, write_labels_csv, write_xes
from .harness import STRATEGIES, ExperimentConfig, run_all
from .metrics import format_hms
from .outcome import FastCaseLabeler, LtlLabeler, label_log

logger = logging.getLogger("ppmupdate")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _load_json(path_or_text: str) -> dict:
    p = Path(path_or_text)
    if p.exists():
        return json.loads(p.read_text())
    try:
        return json.loads(path_or_text)
    except json.JSONDecodeError:
        raise FileNotFoundError(f"{path_or_text!r} is neither an existing file nor JSON")


def _require(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _echo(args, **extra):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg.update(extra)
    print("# config " + json.dumps(cfg, sort_keys=True, default=str))


# --- commands --------------------------------------------------------------

def cmd_generate(args):
    cfg = {}
    if args.config:
        cfg = json.loads(_require(args.config, "config file").read_text())
        cfg = cfg.get("generator", cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    gcfg = GeneratorConfig.from_dict(cfg)
    _echo(args, generator=gcfg.to_dict())
    log = generate(gcfg)
    Path(args.out).write_bytes(write_xes(log))
    print(stats(log))


def cmd_stats(args):
    print(stats(read_log(_require(args.log, "log"))))


def cmd_label(args):
    log = read_log(_require(args.log, "log"))
    if args.fast_case:
        labeler = FastCaseLabeler(args.threshold)
        if labeler.threshold is None:
            labeler.freeze(log)
    else:
        labeler = LtlLabeler(args.formula)
    labels = label_log(log, labeler)
    _echo(args, labeler=labeler.describe())
    Path(args.out).write_text(write_labels_csv(labels))
    pos = sum(labels.values())
    print(f"labelled {len(labels)} cases, {pos} positive ({pos / len(labels):.3f})")


def cmd_encode(args):
    log = read_log(_require(args.log, "log"))
    labels = read_labels_csv(_require(args.labels, "labels file").read_text())
    if args.schema:
        from .encoding import EncodingSchema
        schema = EncodingSchema.from_dict(json.loads(_require(args.schema, "schema").read_text()))
    else:
        schema = fit_schema(log, args.prefix_cap)
    missing = [t.case_id for t in log if t.case_id not in labels]
    if missing:
        raise KeyError(f"{len(missing)} cases have no label (first: {missing[0]!r})")
    data = encode_set(log, schema, labels, args.prefix_cap)
    Path(args.out).write_text(data.to_csv())
    schema_out = Path(args.schema_out) if args.schema_out else Path(args.out).with_suffix(
        ".schema.json")
    schema_out.write_text(json.dumps(schema.to_dict(), indent=2))
    _echo(args, schema_fingerprint=schema.fingerprint())
    print(f"encoded {len(data)} prefixes, width {schema.width}")


def cmd_train(args):
    X, y, _, _, _ = read_dataset_csv(_require(args.data, "dataset").read_text())
    hp_dict = _load_json(args.hp) if args.hp else {}
    if args.family == "batch":
        hp = forest.BatchHyperparameters(**hp_dict)
        model = forest.train_batch((X, y), hp, args.seed, n_threads=args.threads)
    else:
        hp = forest.IncHyperparameters(**hp_dict)
        model = forest.train_incremental_initial((X, y), hp, args.seed, n_threads=args.threads)
    Path(args.out).write_bytes(forest.serialize(model))
    _echo(args, hyperparameters=hp.to_dict())
    print(f"trained {args.family} model on {len(y)} instances of width {X.shape[1]}")


def cmd_experiment(args):
    raw = json.loads(_require(args.config, "config file").read_text())
    if args.threads is not None:
        raw["threads"] = args.threads
    cfg = ExperimentConfig.from_dict(raw)
    _echo(args, experiment=cfg.to_dict())
    report = run_all(cfg, args.out_dir)
    print_tables(report)


def print_tables(report: dict, out=None):
    out = out or sys.stdout
    st = report["strategies"]
    print("Accuracy (AUC, macro F1, accuracy on the test prefixes)", file=out)
    print(f"{'model':<6}{'AUC':>8}{'F1':>8}{'acc':>8}", file=out)
    for i, s in enumerate(STRATEGIES):
        r = st[s]
        print(f"M{i:<5}{r['auc']:>8.3f}{r['f1']:>8.3f}{r['accuracy']:>8.3f}", file=out)
    if "auc_m0_incremental" in report:
        print(f"(incremental baseline before update: AUC {report['auc_m0_incremental']:.3f})",
              file=out)
    print("\nGain/loss relative to M0, (Mi - M0) / M0", file=out)
    print("  ".join(f"M{i} {report['gains'][f'M{i}']:+.3f}" for i in range(1, 4)), file=out)
    print("\nBuild time (hh:mm:ss)", file=out)
    print(f"{'model':<6}{'M0 build':>14}{'hyperopt':>14}{'retrain':>14}{'update':>14}"
          f"{'total':>14}", file=out)
    for i, s in enumerate(STRATEGIES):
        t = st[s]["times"]
        print(f"M{i:<5}{format_hms(t['m0_build']):>14}{format_hms(t['hyperopt']):>14}"
              f"{format_hms(t['retrain']):>14}{format_hms(t['incremental_update']):>14}"
              f"{format_hms(st[s]['total_seconds']):>14}", file=out)


def cmd_report(args):
    d = _require(args.in_dir, "report directory")
    report = json.loads(_require(d / "report.json", "report.json").read_text())
    print_tables(report)
    plot = d / "plot_data.csv"
    with open(plot, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "strategy", "auc", "total_seconds"])
        for i, s in enumerate(STRATEGIES):
            r = report["strategies"][s]
            w.writerow([f"M{i}", s, r["auc"], r["total_seconds"]])
        per = report["strategies"]
        lens = sorted({int(k) for s in STRATEGIES for k in per[s]["per_prefix_auc"]})
    with open(d / "plot_prefix_auc.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["prefix_len", *(f"M{i}" for i in range(4))])
        for k in lens:
            row = [per[s]["per_prefix_auc"].get(str(k)) for s in STRATEGIES]
            w.writerow([k, *("" if v is None else v for v in row)])
    print(f"\nwrote {plot}")


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="cap on tree-training threads (default: PPMUPDATE_THREADS or cores)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="ppmupdate", description="Model-update strategies for outcome prediction")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="generate the synthetic drift log")
    g.add_argument("--config", help="generator JSON (or experiment JSON with a generator block)")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("stats", parents=[common], help="print log statistics")
    s.add_argument("--log", required=True)
    s.set_defaults(func=cmd_stats)

    lab = sub.add_parser("label", parents=[common], help="label complete cases")
    lab.add_argument("--log", required=True)
    which = lab.add_mutually_exclusive_group(required=True)
    which.add_argument("--formula", help="LTLf formula, e.g. 'F \"Send offer\"'")
    which.add_argument("--fast-case", action="store_true",
                       help="positive iff cycle time is below the log's mean")
    lab.add_argument("--threshold", type=float, help="fixed fast-case threshold in seconds")
    lab.add_argument("--out", required=True)
    lab.set_defaults(func=cmd_label)

    e = sub.add_parser("encode", parents=[common], help="complex index encoding of prefixes")
    e.add_argument("--log", required=True)
    e.add_argument("--labels", required=True)
    e.add_argument("--prefix-cap", type=int, default=20)
    e.add_argument("--schema", help="reuse an existing schema JSON instead of fitting one")
    e.add_argument("--schema-out")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_encode)

    t = sub.add_parser("train", parents=[common], help="train a forest on an encoded dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--family", choices=("batch", "incremental"), default="batch")
    t.add_argument("--hp", help="hyperparameters as a JSON file or inline JSON")
    t.add_argument("--seed", type=int, default=42)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    x = sub.add_parser("experiment", parents=[common], help="run strategies S0-S3")
    x.add_argument("--config", required=True)
    x.add_argument("--out-dir", required=True)
    x.set_defaults(func=cmd_experiment)

    r = sub.add_parser("report", parents=[common], help="print tables for a finished run")
    r.add_argument("--in", dest="in_dir", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads is not None and args.threads < 1:
            parser.error("--threads must be >= 1")
        if getattr(args, "threshold", None) is not None and not getattr(args, "fast_case", False):
            parser.error("--threshold only applies with --fast-case")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
