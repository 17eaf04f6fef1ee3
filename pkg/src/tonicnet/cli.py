"""Command-line entry point: the whole pipeline as seeded subcommands.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numeric
divergence. Every subcommand that writes an artifact also writes a
`<output>.manifest.json` sidecar recording the flags, seeds and input
digests of the run.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .augmentation import transpose_all
from .corpus import Corpus, CorpusValidationError, SchemaError, corpus_stats, load_corpus
from .encoder import encode, parse_streams, restrict_streams
from .evaluator import StreamMismatchError, evaluate
from .model import (
    DivergenceError,
    CheckpointError,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .sampler import SampleConfig, generate, write_midi
from .trainer import TrainConfig, lr_range_test, overfit_one, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(output_path, subcommand: str, args: argparse.Namespace, inputs) -> None:
    manifest = {
        "subcommand": subcommand,
        "flags": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "input_digests": {str(p): _sha256(p) for p in inputs if Path(p).exists()},
        "code_version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    with open(f"{output_path}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)


def _training_pieces(corpus: Corpus, augment: str, voice_ranges=None):
    if augment == "none":
        return corpus.split("train")
    ranges = voice_ranges or corpus_stats(Corpus(tuple(corpus.split("train")))).voice_ranges
    aug = transpose_all(corpus, ranges, include_mode_swap=(augment == "transpose+modeswap"))
    return list(aug.pieces)


def cmd_stats(args) -> int:
    report = corpus_stats(load_corpus(args.corpus))
    text = json.dumps(report.to_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        _write_manifest(args.out, "stats", args, [args.corpus])
    print(text)
    return EXIT_OK


def cmd_encode(args) -> int:
    corpus = load_corpus(args.corpus)
    pieces = {p.id: p for p in corpus.pieces}
    if args.piece not in pieces:
        print(f"no piece {args.piece!r} in corpus", file=sys.stderr)
        return EXIT_DATA
    seq = encode(pieces[args.piece])
    lines = ["pos,stream,x,z"]
    lines += [
        f"{p},{seq.stream[p]},{seq.x[p]},{seq.z[p]}" for p in range(len(seq))
    ]
    text = "\n".join(lines)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        _write_manifest(args.out, "encode", args, [args.corpus])
    else:
        print(text)
    return EXIT_OK


def cmd_augment(args) -> int:
    corpus = load_corpus(args.corpus)
    ranges = corpus_stats(Corpus(tuple(corpus.split("train")))).voice_ranges
    aug = transpose_all(
        corpus, ranges, include_mode_swap=(args.augment == "transpose+modeswap")
    )
    sidecar = [
        {"source_id": p.source_id, "shift": p.shift, "mode_swapped": p.mode_swapped}
        for p in aug.provenance
    ]
    out = Path(args.out)
    out.write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    _write_manifest(out, "augment", args, [args.corpus])
    print(
        json.dumps(
            {"pieces": len(aug), "dropped": len(aug.dropped), "provenance": str(out)}
        )
    )
    return EXIT_OK


def cmd_train(args) -> int:
    corpus = load_corpus(args.corpus)
    config = TrainConfig(
        epochs=args.epochs,
        warmup_epochs=min(args.warmup_epochs, max(args.epochs - 1, 1)),
        seed=args.seed,
        augment=args.augment,
        streams=args.streams.upper(),
    )
    ids = parse_streams(config.streams)
    params = init_params(config.seed, streams=config.streams)
    out = Path(args.out)

    if args.overfit_one:
        seq = restrict_streams(corpus.split("train")[0], ids)
        trace = overfit_one(params, seq, steps=args.overfit_steps)
        save_checkpoint(params, out)
        _write_manifest(out, "train", args, [args.corpus])
        print(json.dumps({"final_nll": trace[-1], "steps": len(trace)}))
        return EXIT_OK

    train_pieces = _training_pieces(corpus, config.augment)
    train_seqs = [restrict_streams(p, ids) for p in train_pieces]
    val_seqs = [restrict_streams(p, ids) for p in corpus.split("valid")]
    log_path = Path(args.log) if args.log else out.with_suffix(".log.jsonl")
    with open(log_path, "w", encoding="utf-8") as log_fh:
        def on_epoch(record):
            log_fh.write(json.dumps(record.to_dict()) + "\n")
            log_fh.flush()
            print(
                f"epoch {record.epoch}: train {record.mean_train_nll:.4f} "
                f"val {record.val_full_nll:.4f} (ncl {record.val_ncl_nll:.4f})"
            )

        result = train(params, train_seqs, val_seqs, config, epoch_callback=on_epoch)
    best = result.best_params or params
    save_checkpoint(best, out)
    _write_manifest(out, "train", args, [args.corpus])
    if result.diverged:
        print("training diverged; saved last good checkpoint", file=sys.stderr)
        return EXIT_DIVERGED
    print(json.dumps({"best_val_full_nll": result.best_val_nll, "epochs": len(result.log)}))
    return EXIT_OK


def cmd_lr_find(args) -> int:
    corpus = load_corpus(args.corpus)
    ids = parse_streams(args.streams)
    params = init_params(args.seed, streams=args.streams.upper())
    seqs = [restrict_streams(p, ids) for p in corpus.split("train")]
    result = lr_range_test(
        params, seqs, lr_min=args.lr_min, lr_max=args.lr_max,
        num_steps=args.num_steps, seed=args.seed,
    )
    payload = {
        "suggested_lr": result.suggested_lr,
        "aborted_early": result.aborted_early,
        "curve": [{"lr": lr, "loss": raw, "smoothed": s} for lr, raw, s in result.curve],
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        _write_manifest(args.out, "lr-find", args, [args.corpus])
    print(json.dumps({"suggested_lr": result.suggested_lr, "points": len(result.curve)}))
    return EXIT_OK


def cmd_eval(args) -> int:
    corpus = load_corpus(args.corpus)
    params = load_checkpoint(args.checkpoint)
    report = evaluate(params, corpus, args.split, streams=args.streams or params.streams)
    print(report.table())
    print(json.dumps(report.to_dict(), indent=2))
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
        _write_manifest(args.out, "eval", args, [args.corpus, args.checkpoint])
    return EXIT_OK


def cmd_sample(args) -> int:
    params = load_checkpoint(args.checkpoint)
    config = SampleConfig(
        seed=args.seed,
        temperature=args.temperature,
        constrain_kinds=args.constrain,
        smoothing=not args.no_smoothing,
        max_tokens=args.max_tokens,
    )
    score = generate(params, config)
    write_midi(score, args.out, bpm=args.bpm, chord_markers=args.chord_markers)
    _write_manifest(args.out, "sample", args, [args.checkpoint])
    print(
        json.dumps(
            {
                "steps": score.piece.n_steps,
                "kind_violations": score.kind_violations,
                "ended_naturally": score.ended_naturally,
                "out": str(args.out),
            }
        )
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tonicnet", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("stats", help="corpus statistics report")
    p.add_argument("corpus")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("encode", help="dump one piece's encoding as CSV")
    p.add_argument("corpus")
    p.add_argument("--piece", default="train_000")
    p.add_argument("--out")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("augment", help="write the augmentation provenance sidecar")
    p.add_argument("corpus")
    p.add_argument("--augment", choices=["transpose", "transpose+modeswap"], default="transpose")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("corpus")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="JSON-lines training log (default <out>.log.jsonl)")
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--warmup-epochs", type=int, default=18)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--streams", default="CSBAT")
    p.add_argument("--augment", choices=["none", "transpose", "transpose+modeswap"], default="none")
    p.add_argument("--overfit-one", action="store_true")
    p.add_argument("--overfit-steps", type=int, default=2000)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("lr-find", help="learning-rate range test")
    p.add_argument("corpus")
    p.add_argument("--lr-min", type=float, default=1e-5)
    p.add_argument("--lr-max", type=float, default=1.0)
    p.add_argument("--num-steps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--streams", default="CSBAT")
    p.add_argument("--out")
    p.set_defaults(func=cmd_lr_find)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "valid", "test"], default="valid")
    p.add_argument("--streams", help="must match the checkpoint (default: checkpoint's)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="generate a chorale as MIDI")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--max-tokens", type=int, default=3200)
    p.add_argument("--constrain", action="store_true")
    p.add_argument("--no-smoothing", action="store_true")
    p.add_argument("--chord-markers", action="store_true")
    p.add_argument("--bpm", type=float, default=80.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)
    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (SchemaError, CorpusValidationError, CheckpointError, StreamMismatchError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    np.seterr(over="ignore")  # saturating sigmoids overflow harmlessly in exp
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
