"""Command-line front end: synth | train | segment | evaluate | stratify.

Exit codes: 0 success, 2 usage or configuration error, 3 data error.
Diagnostics go to stderr; stdout carries only the command's data output.
All randomness flows from --seed (or the run config), so identical inputs
reproduce identical outputs byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import dataset, evaluation, inference, signal_io, training
from .autodiff import Tensor
from .config import RunConfig, load_run_config
from .errors import ConfigError, DataError, FormatError
from .weights_io import load_weights, save_weights


def _load_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, seed=args.seed))
    if getattr(args, "overlap", None) is not None:
        cfg = dataclasses.replace(
            cfg, train=dataclasses.replace(cfg.train, segment_overlap=args.overlap)
        )
    return cfg


def _parse_levels(text: str):
    parts = text.split(",")
    try:
        counts = [int(p) for p in parts]
    except ValueError:
        raise ConfigError(f"--levels expects integers, got {text!r}") from None
    if len(counts) == 1:
        return counts[0]
    if len(counts) != 3:
        raise ConfigError("--levels expects one count or three comma-separated counts")
    return tuple(counts)


def cmd_synth(args) -> int:
    corpus = dataset.build_level_corpus(
        _parse_levels(args.levels), args.seed, duration_s=args.duration
    )
    manifest = dataset.write_corpus(corpus, args.out)
    n = sum(len(v) for v in corpus.values())
    print(manifest)
    print(f"{n} recordings written", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    rows = dataset.load_manifest_pairs(args.manifest)
    if args.level:
        rows = [r for r in rows if r[3] == args.level]
    pairs = [(rec, ann) for _, rec, ann, _ in rows]
    if not pairs:
        raise DataError("no recordings selected for training")
    result = training.cross_validate(
        pairs,
        model_cfg=cfg.model,
        loss_cfg=cfg.loss,
        train_cfg=cfg.train,
        k=args.folds,
        out_dir=args.out,
    )
    best = result.folds[result.best_fold]
    out = Path(args.out)
    save_weights(best.best_params, out / "best.tfan")
    print("fold,best_epoch,best_val_accuracy")
    for i, fold in enumerate(result.folds):
        print(f"{i},{fold.best_epoch},{fold.best_val_accuracy!r}")
    print(f"best fold {result.best_fold}, weights at {out / 'best.tfan'}", file=sys.stderr)
    return 0


def _params_from_file(path):
    return {name: Tensor(arr) for name, arr in load_weights(path).items()}


def cmd_segment(args) -> int:
    cfg = _load_config(args)
    params = _params_from_file(args.weights)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for wav_path in args.inputs:
        rec = signal_io.load_wav(wav_path)
        ann = inference.segment_recording(params, cfg.model, rec, wiener_cfg=cfg.wiener)
        dest = out / (Path(wav_path).stem + ".csv")
        signal_io.write_annotation(ann, dest)
        print(dest)
    return 0


def _format_table(header, rows) -> str:
    cols = [header] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cols) for i in range(len(header))]
    lines = []
    for r in cols:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines)


def cmd_evaluate(args) -> int:
    truth_dir, pred_dir = Path(args.truth), Path(args.pred)
    truth_files = sorted(truth_dir.glob("*.csv"))
    if not truth_files:
        raise DataError(f"{truth_dir}: no truth annotation files")
    countings = []
    for tf in truth_files:
        pf = pred_dir / tf.name
        if not pf.exists():
            raise DataError(f"missing prediction for {tf.name}")
        truth = signal_io.read_annotation(tf)
        pred = signal_io.read_annotation(pf)
        countings.append(evaluation.count_matches(truth, pred, sigma_s=args.sigma_ms / 1000.0))
    report = evaluation.aggregate(countings)

    if args.mode == "pooled":
        rows = []
        pooled = report.pooled
        for state in signal_io.STATES + ("overall",):
            m = pooled.overall if state == "overall" else pooled.per_state[state]
            rows.append(
                [state, f"{m.sensitivity:.2f}", f"{m.positive_predictivity:.2f}", f"{m.f1:.2f}"]
            )
        print(_format_table(["state", "sensitivity", "positive_predictivity", "f1"], rows))
        for flag in pooled.flags:
            print(flag, file=sys.stderr)
    else:
        rows = [
            [name, f"{report.mean[name]:.2f}", f"{report.stderr[name]:.2f}", report.n_recordings]
            for name in ("sensitivity", "positive_predictivity", "f1")
        ]
        print(_format_table(["metric", "mean", "stderr", "n"], rows))
    return 0


def cmd_stratify(args) -> int:
    try:
        rows = dataset.read_manifest(args.manifest)
    except FormatError as exc:
        if "empty manifest" in str(exc):
            raise ConfigError(str(exc)) from None
        raise
    if not rows:
        raise ConfigError(f"{args.manifest}: manifest lists no recordings")

    pairs = dataset.load_manifest_pairs(args.manifest)
    table = []
    flag_counts = dict.fromkeys(dataset.Characteristics.FLAG_NAMES, 0)
    for name, rec, ann, _ in pairs:
        ch = dataset.characterize(rec, ann)
        ind = ch.indicators
        level = dataset.assign_level(ind)
        for fname in flag_counts:
            flag_counts[fname] += int(getattr(ch, fname))
        table.append(
            [
                name,
                level,
                f"{ind.d_noise_murmur:.3f}",
                f"{ind.d_rhythm:.3f}",
                f"{ind.d_rate:.3f}",
                f"{ind.f_s2:.3f}",
                *("Y" if getattr(ch, fname) else "N" for fname in flag_counts),
            ]
        )
    header = ["recording", "level", "d_noise_murmur", "d_rhythm", "d_rate", "f_s2"] + list(
        flag_counts
    )
    print(_format_table(header, table))
    print()
    n = len(pairs)
    print(_format_table(
        ["characteristic", "proportion"],
        [[fname, f"{count / n:.3f}"] for fname, count in flag_counts.items()],
    ))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heartseg", description="Heart sound segmentation toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic annotated corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--levels", default="10,10,10", help="recordings per level (one or three counts)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=10.0, help="seconds per recording")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="cross-validated training from a corpus manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory for folds and weights")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--overlap", type=float, help="training window overlap fraction")
    p.add_argument("--level", choices=dataset.LEVELS, help="restrict to one level")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("segment", help="segment recordings into state onsets")
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True, help="output directory for annotation CSVs")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("inputs", nargs="+", help="WAV files to segment")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evaluate", help="score predicted onsets against truth")
    p.add_argument("--truth", required=True, help="directory of truth annotation CSVs")
    p.add_argument("--pred", required=True, help="directory of predicted annotation CSVs")
    p.add_argument("--sigma-ms", type=int, default=100, help="matching tolerance")
    p.add_argument("--mode", choices=("pooled", "per-recording"), default="pooled")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stratify", help="difficulty levels and characteristics of a corpus")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_stratify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
