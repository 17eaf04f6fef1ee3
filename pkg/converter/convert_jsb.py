#!/usr/bin/env python3
"""One-shot converter: upstream pickled chorale dataset -> JSON interchange.

The upstream file is a Python pickle holding a dict with "train"/"valid"/
"test" keys; each split is a list of pieces, each piece a sequence of
4-tuples of MIDI pitches (Soprano, Alto, Tenor, Bass). Rests appear either
as non-finite values (NaN) or as absent entries (None), depending on the
dataset version; both become JSON null. Pitches stored as floats must be
whole numbers and are emitted as integers.

Usage: convert_jsb.py <input.pkl> <output.json>

Prints a JSON conversion report to stdout and exits 0 on success. This
tool is standalone: it only depends on the Python standard library and
talks to the main package purely through the interchange file format.
"""

from __future__ import annotations

import json
import math
import pickle
import sys

SPLITS = ("train", "valid", "test")


class ConversionError(ValueError):
    pass


def _convert_pitch(value, where: str, rest_kinds: set) -> "int | None":
    if value is None:
        rest_kinds.add("absent")
        return None
    if isinstance(value, float) and not math.isfinite(value):
        rest_kinds.add("nonfinite")
        return None
    number = float(value)
    if number != int(number):
        raise ConversionError(f"{where}: pitch {value!r} is not a whole number")
    return int(number)


def convert(input_path: str, output_path: str) -> dict:
    """Convert and write the interchange file; returns the report dict."""
    with open(input_path, "rb") as fh:
        raw = pickle.load(fh, encoding="latin1")
    if not isinstance(raw, dict):
        raise ConversionError(f"expected a dict at top level, got {type(raw).__name__}")
    missing = [s for s in SPLITS if s not in raw]
    if missing:
        raise ConversionError(f"missing split keys: {missing}")

    rest_kinds: set = set()
    out = {}
    piece_counts = {}
    total_steps = 0
    for split in SPLITS:
        pieces = []
        for pi, piece in enumerate(raw[split]):
            steps = []
            for ti, step in enumerate(piece):
                step = list(step)
                if len(step) != 4:
                    raise ConversionError(
                        f"split {split}, piece {pi}, step {ti}: "
                        f"expected 4 voices, got {len(step)}"
                    )
                where = f"split {split}, piece {pi}, step {ti}"
                steps.append([_convert_pitch(v, where, rest_kinds) for v in step])
            pieces.append(steps)
            total_steps += len(steps)
        out[split] = pieces
        piece_counts[split] = len(pieces)

    with open(output_path, "w", encoding="utf-8") as fh:
        json.dump(out, fh, separators=(",", ":"), sort_keys=True)

    return {
        "piece_counts": piece_counts,
        "total_time_steps": total_steps,
        "rest_encoding": sorted(rest_kinds) or ["none"],
        "output": output_path,
    }


def main(argv) -> int:
    if len(argv) != 2:
        print(__doc__.strip(), file=sys.stderr)
        return 1
    try:
        report = convert(argv[0], argv[1])
    except (ConversionError, OSError, pickle.UnpicklingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
