"""Command-line pipeline: generate -> train -> attack -> report.

Every subcommand is driven by one YAML config.  Exit codes: 0 success,
1 validation error, 2 runtime/numerical error, 3 expected-ordering check
failure (report only).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .channel import generate_dataset, label_histogram
from .config import RunConfig, load_run_config
from .dataio import (
    atomic_write,
    export_dataset_csv,
    load_dataset,
    save_dataset,
    sha256_file,
)
from .errors import (
    BeamSimError,
    FileFormatError,
    ReportParseError,
    ValidationError,
)
from .evaluation import (
    check_orderings,
    curves_csv_lines,
    parse_curves_csv,
    parse_per_sample_csv,
    per_sample_csv_lines,
    psr_sweep,
    summary_text_lines,
)
from .model import Model, history_csv_lines, train_new_model


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="beamsim",
                     description="mmWave beam-selection attack simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, summary in (
        ("generate", "generate the labeled RSS dataset"),
        ("train", "train the classifier on an existing dataset"),
        ("attack", "run the attack sweep against a trained model"),
        ("report", "summarize attack results and check orderings"),
    ):
        cmd = sub.add_parser(name, help=summary)
        cmd.add_argument("--config", required=True, help="YAML run config")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override every stage seed from this value")
        cmd.add_argument("--out", default=None, help="override output directory")
        cmd.add_argument("--samples", type=int, default=None,
                         help="override sample count (dataset size for "
                              "generate, test subset size for attack)")
        cmd.add_argument("--quiet", action="store_true",
                         help="suppress informational output")
    return parser


class _Console:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def info(self, msg: str) -> None:
        if not self.quiet:
            print(msg)

    @staticmethod
    def warn(msg: str) -> None:
        print(f"warning: {msg}", file=sys.stderr)


def _load_config(args) -> RunConfig:
    if not os.path.exists(args.config):
        raise ValidationError(f"config: no such file: {args.config}")
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.apply_seed(args.seed)
    if args.out is not None:
        cfg.paths.out_dir = args.out
    return cfg


def _require_file(path: str, what: str) -> None:
    if not os.path.exists(path):
        raise ValidationError(f"{what}: no such file: {path}")


def _result_paths(cfg: RunConfig) -> tuple[str, str, str]:
    _require_file(cfg.dataset_path(), "dataset")
    _require_file(cfg.model_path(), "model")
    d8 = sha256_file(cfg.dataset_path())[:8]
    m8 = sha256_file(cfg.model_path())[:8]
    out = cfg.paths.out_dir
    return (os.path.join(out, f"curves_{d8}_{m8}.csv"),
            os.path.join(out, f"per_sample_{d8}_{m8}.csv"),
            os.path.join(out, f"summary_{d8}_{m8}.txt"))


def cmd_generate(cfg: RunConfig, args, console: _Console) -> int:
    n_samples = args.samples if args.samples is not None else cfg.n_samples
    dataset = generate_dataset(cfg.scenario, n_samples, cfg.m)
    path = cfg.dataset_path()
    save_dataset(dataset, path)
    csv_path = os.path.splitext(path)[0] + ".csv"
    export_dataset_csv(dataset, csv_path)
    console.info(f"samples: {dataset.n_samples}")
    console.info(f"subset indices: {[int(i) for i in dataset.subset_indices]}")
    console.info(f"label histogram: {[int(c) for c in label_histogram(dataset)]}")
    console.info(f"dataset: {path} (sha256 {sha256_file(path)[:16]})")
    console.info(f"csv export: {csv_path}")
    return 0


def cmd_train(cfg: RunConfig, args, console: _Console) -> int:
    path = cfg.dataset_path()
    _require_file(path, "dataset")
    dataset = load_dataset(path)
    if len(dataset.subset_indices) != cfg.m:
        raise ValidationError(
            f"dataset.m: file has M={len(dataset.subset_indices)}, "
            f"config says {cfg.m}"
        )
    model, history = train_new_model(dataset, cfg.train)
    model.dataset_hash = sha256_file(path)
    model_path = cfg.model_path()
    model.save(model_path)
    history_path = os.path.join(cfg.paths.out_dir, "history.csv")
    atomic_write(history_path,
                 ("\n".join(history_csv_lines(history)) + "\n").encode())
    console.info(f"final val_acc: {history[-1]['val_acc']:.4f}")
    console.info(f"model: {model_path} (sha256 {sha256_file(model_path)[:16]})")
    console.info(f"history: {history_path}")
    return 0


def cmd_attack(cfg: RunConfig, args, console: _Console) -> int:
    dataset_path = cfg.dataset_path()
    model_path = cfg.model_path()
    _require_file(dataset_path, "dataset")
    _require_file(model_path, "model")
    dataset = load_dataset(dataset_path)
    model = Model.load(model_path)
    m = len(dataset.subset_indices)
    if model.n_inputs != m or model.n_classes != dataset.config.n_beams:
        raise ValidationError(
            f"model/dataset mismatch: model is {model.n_inputs}->"
            f"{model.n_classes}, dataset has M={m}, N={dataset.config.n_beams}"
        )
    dataset_hash = sha256_file(dataset_path)
    if model.dataset_hash and model.dataset_hash != dataset_hash:
        console.warn(
            "model was trained on a different dataset "
            f"(recorded {model.dataset_hash[:8]}, supplied {dataset_hash[:8]})"
        )
    sweep = cfg.sweep
    if args.samples is not None:
        sweep.n_test_samples = args.samples
    result = psr_sweep(model, dataset, sweep)
    curves_path, per_sample_path, summary_path = _result_paths(cfg)
    atomic_write(curves_path,
                 ("\n".join(curves_csv_lines(result.curves)) + "\n").encode())
    atomic_write(per_sample_path,
                 ("\n".join(per_sample_csv_lines(result.points)) + "\n").encode())
    atomic_write(summary_path,
                 ("\n".join(summary_text_lines(result)) + "\n").encode())
    console.info(f"clean accuracy: {result.clean_accuracy:.4f}")
    console.info(f"curves: {curves_path}")
    console.info(f"per-sample: {per_sample_path}")
    console.info(f"summary: {summary_path}")
    return 0


def cmd_report(cfg: RunConfig, args, console: _Console) -> int:
    curves_path, per_sample_path, _ = _result_paths(cfg)
    _require_file(curves_path, "curves csv")
    _require_file(per_sample_path, "per-sample csv")
    curve_rows = parse_curves_csv(curves_path)
    sample_rows = parse_per_sample_csv(per_sample_path)

    control = [r for r in curve_rows if r["attack"] == "none"]
    if control:
        console.info(f"clean accuracy: {control[0]['top1_acc']:.4f}")
    console.info(f"{'attack':>20} {'k':>3} {'psr_db':>7} {'top1':>7} "
                 f"{'nk':>7} {'deg_db':>8}")
    for row in curve_rows:
        k_str = "-" if row["k"] is None else str(row["k"])
        console.info(
            f"{row['attack']:>20} {k_str:>3} {row['psr_db']:7g} "
            f"{row['top1_acc']:7.4f} {row['nk_acc']:7.4f} "
            f"{row['mean_degradation_db']:8.3f}"
        )

    hits: dict[tuple, list] = {}
    for row in sample_rows:
        if row["attack"].startswith("kworst"):
            key = (row["attack"], row["k"], row["psr_db"])
            hits.setdefault(key, []).append(row["target_hit"])
    if hits:
        console.info("k-worst target-hit rates:")
        for key in sorted(hits):
            rate = float(np.mean(hits[key]))
            console.info(f"  {key[0]} k={key[1]} psr={key[2]:g}: {rate:.4f}")

    violations = check_orderings(curve_rows)
    for v in violations:
        print(f"ordering violation: {v}", file=sys.stderr)
    if violations:
        return 3
    console.info("expected orderings hold")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    console = _Console(quiet=args.quiet)
    try:
        cfg = _load_config(args)
        handler = {
            "generate": cmd_generate,
            "train": cmd_train,
            "attack": cmd_attack,
            "report": cmd_report,
        }[args.command]
        return handler(cfg, args, console)
    except (ValidationError, FileFormatError, ReportParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BeamSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
