"""Command line entry point.

Subcommands: ``run``, ``ablate``, ``kernel``, ``synth``, ``eval``.
Exit codes: 0 success, 1 configuration/usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .graph import GraphValidationError
from .kernels import KernelError, normalize_gram, structural_gram
from .metrics import MetricError, evaluate
from .trainer import ABLATION_MODES, ablation, run_experiment, write_summary_csv
from .tudataset import DatasetSpec, SyntheticSpecError, generate_synthetic, parse_tudataset, write_tudataset

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mrgc", description="Graph-level clustering with multi-relation kernels.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def config_args(sp):
        sp.add_argument("--config", help="flat JSON config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")

    run = sub.add_parser("run", help="train and evaluate over several seeds")
    config_args(run)
    run.add_argument("--out", help="report JSON path (default: stdout)")

    abl = sub.add_parser("ablate", help="run an ablation sweep")
    config_args(abl)
    abl.add_argument("--mode", required=True, choices=ABLATION_MODES)
    abl.add_argument("--out", required=True, help="output directory")
    abl.add_argument("--runs", type=int)

    ker = sub.add_parser("kernel", help="write a structural kernel Gram matrix as CSV")
    ker.add_argument("--dataset-dir", required=True)
    ker.add_argument("--dataset-name", required=True)
    ker.add_argument("--kernel", required=True, choices=("wl", "sp", "rw"))
    ker.add_argument("--iterations", type=int, default=3, help="WL iterations")
    ker.add_argument("--sp-labels", action="store_true")
    ker.add_argument("--normalize", action="store_true", help="cosine-normalize the Gram matrix")
    ker.add_argument("--out", help="CSV path (default: stdout)")

    syn = sub.add_parser("synth", help="write a synthetic dataset in TUDataset format")
    syn.add_argument("--spec", required=True, help="DatasetSpec JSON")
    syn.add_argument("--out", required=True, help="output directory")
    syn.add_argument("--name", help="dataset name (default: from spec)")

    ev = sub.add_parser("eval", help="metrics from a predictions file")
    ev.add_argument("predictions", help="CSV with pred,truth columns or JSON {pred: [...], truth: [...]}")
    ev.add_argument("--seed", type=int, default=0)
    return p


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, default=_json_default)
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _cmd_run(args):
    cfg = load_config(args.config, args.set).validate()
    rep = run_experiment(cfg)
    _write_json(rep.to_dict(), args.out)
    m = rep.mean
    print(f"acc={m['acc']:.4f} nmi={m['nmi']:.4f} ari={m['ari']:.4f} f1={m['f1']:.4f}", file=sys.stderr)


def _cmd_ablate(args):
    cfg = load_config(args.config, args.set).validate()
    table = ablation(cfg, args.mode, runs=args.runs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, overrides, rep in table:
        safe = name.replace("=", "").replace(",", "_")
        _write_json({"cell": name, "overrides": overrides, **rep.to_dict()}, out / f"{args.mode}_{safe}.json")
    write_summary_csv(table, out / f"{args.mode}_summary.csv")


def write_gram_csv(k: np.ndarray, path=None):
    lines = [",".join(f"{v:.17g}" for v in row) for row in k]
    text = "\n".join(lines) + ("\n" if lines else "")
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_kernel(args):
    ds = parse_tudataset(args.dataset_dir, args.dataset_name)
    k = structural_gram(ds.graphs, args.kernel, wl_iterations=args.iterations, sp_labels=args.sp_labels)
    if args.normalize:
        k = normalize_gram(k)
    write_gram_csv(k, args.out)


def _cmd_synth(args):
    try:
        spec = DatasetSpec.from_json(args.spec)
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read spec {args.spec}: {exc}") from exc
    if args.name:
        spec.name = args.name
    write_tudataset(generate_synthetic(spec), args.out)


def read_predictions(path):
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        d = json.loads(text)
        return np.asarray(d["pred"], dtype=np.int64), np.asarray(d["truth"], dtype=np.int64)
    pred, truth = [], []
    for row in csv.reader(text.splitlines()):
        if not row or not row[0].strip():
            continue
        try:
            p, t = int(row[0]), int(row[1])
        except ValueError:
            if not pred:  # header
                continue
            raise
        pred.append(p)
        truth.append(t)
    return np.asarray(pred, dtype=np.int64), np.asarray(truth, dtype=np.int64)


def _cmd_eval(args):
    try:
        pred, truth = read_predictions(args.predictions)
    except (KeyError, ValueError, IndexError) as exc:
        raise ConfigError(f"cannot parse predictions {args.predictions}: {exc}") from exc
    _write_json(evaluate(pred, truth, seed=args.seed).to_dict(), None)


COMMANDS = {"run": _cmd_run, "ablate": _cmd_ablate, "kernel": _cmd_kernel, "synth": _cmd_synth,
            "eval": _cmd_eval}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ConfigError, SyntheticSpecError, UsageError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, GraphValidationError, KernelError, MetricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
