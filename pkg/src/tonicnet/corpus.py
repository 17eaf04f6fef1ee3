"""Corpus ingestion: load the JSON interchange file into validated pieces.

Interchange format: a UTF-8 JSON object with exactly the keys "train",
"valid" and "test". Each value is a list of pieces; a piece is a list of
time-steps; a time-step is a 4-element list [S, A, T, B] where each element
is an integer MIDI pitch in 36..81 or null for a rest.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .harmony import classify_chord
from .vocab import CHORD_OTHER, PITCH_MAX, PITCH_MIN

SPLITS = ("train", "valid", "test")

# Canonical corpus split sizes (229/76/77 chorales).
CANONICAL_SPLIT_COUNTS = {"train": 229, "valid": 76, "test": 77}

VOICES = ("S", "A", "T", "B")

# One time-step: (S, A, T, B) MIDI pitches, None = rest.
TimeStep = tuple  # tuple[int | None, int | None, int | None, int | None]


class SchemaError(ValueError):
    """The interchange file does not have the expected structure."""


class CorpusValidationError(ValueError):
    """A structurally valid file contains an invalid piece."""


@dataclass(frozen=True)
class Piece:
    id: str
    steps: tuple  # tuple[TimeStep, ...]
    split: str

    @property
    def n_steps(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class Corpus:
    pieces: tuple  # tuple[Piece, ...]

    def split(self, name: str) -> list[Piece]:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return [p for p in self.pieces if p.split == name]

    @property
    def split_counts(self) -> dict[str, int]:
        return {s: len(self.split(s)) for s in SPLITS}


def _validate_step(piece_id: str, step_idx: int, raw) -> TimeStep:
    if not isinstance(raw, list) or len(raw) != 4:
        raise SchemaError(
            f"piece {piece_id}, step {step_idx}: expected a 4-element list, got {raw!r}"
        )
    voices = []
    for v, value in zip(VOICES, raw):
        if value is None:
            voices.append(None)
            continue
        if not isinstance(value, int) or isinstance(value, bool):
            raise SchemaError(
                f"piece {piece_id}, step {step_idx}, voice {v}: "
                f"expected integer or null, got {value!r}"
            )
        if not PITCH_MIN <= value <= PITCH_MAX:
            raise CorpusValidationError(
                f"piece {piece_id}, step {step_idx}, voice {v}: "
                f"pitch {value} outside [{PITCH_MIN}, {PITCH_MAX}]"
            )
        voices.append(value)
    return tuple(voices)


def load_corpus(path) -> Corpus:
    """Load and validate an interchange file; invalid pieces abort the load."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or set(raw) != set(SPLITS):
        raise SchemaError(
            f"{path}: top level must be an object with exactly the keys "
            f"{list(SPLITS)}, got {sorted(raw) if isinstance(raw, dict) else type(raw).__name__}"
        )
    pieces: list[Piece] = []
    for split in SPLITS:
        entries = raw[split]
        if not isinstance(entries, list):
            raise SchemaError(f"{path}: split {split!r} must be a list")
        for i, steps_raw in enumerate(entries):
            piece_id = f"{split}_{i:03d}"
            if not isinstance(steps_raw, list) or not steps_raw:
                raise SchemaError(f"piece {piece_id}: must be a non-empty list of steps")
            steps = tuple(
                _validate_step(piece_id, t, s) for t, s in enumerate(steps_raw)
            )
            pieces.append(Piece(id=piece_id, steps=steps, split=split))
    return Corpus(pieces=tuple(pieces))


def save_corpus(corpus: Corpus, path) -> None:
    """Re-serialize a corpus in the interchange format (stable byte layout)."""
    out = {
        split: [[list(step) for step in p.steps] for p in corpus.split(split)]
        for split in SPLITS
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(out, fh, separators=(",", ":"), sort_keys=True)


@dataclass
class StatsReport:
    split_counts: dict = field(default_factory=dict)
    min_steps: int = 0
    max_steps: int = 0
    mean_steps: float = 0.0
    # Per-voice (min, max) over sounding pitches, keyed "S"/"A"/"T"/"B".
    voice_ranges: dict = field(default_factory=dict)
    pitch_histogram: dict = field(default_factory=dict)
    # 5*max_steps + 1: interleaved length of the longest piece incl. END.
    max_encoded_length: int = 0
    # Longest run of one value within a single voice, and the pieces whose
    # runs are long enough (> 80) to wrap the repetition counter.
    max_voice_run: int = 0
    z_wrap_piece_ids: list = field(default_factory=list)
    chord_other_fraction: float = 0.0

    def to_dict(self) -> dict:
        return {
            "split_counts": self.split_counts,
            "min_steps": self.min_steps,
            "max_steps": self.max_steps,
            "mean_steps": self.mean_steps,
            "voice_ranges": self.voice_ranges,
            "pitch_histogram": {str(k): v for k, v in sorted(self.pitch_histogram.items())},
            "max_encoded_length": self.max_encoded_length,
            "max_voice_run": self.max_voice_run,
            "z_wrap_piece_ids": self.z_wrap_piece_ids,
            "chord_other_fraction": self.chord_other_fraction,
        }


def _max_run(values) -> int:
    best = run = 1
    for prev, cur in zip(values, values[1:]):
        run = run + 1 if cur == prev else 1
        best = max(best, run)
    return best


def corpus_stats(corpus: Corpus) -> StatsReport:
    """Summarize a corpus; errors on an empty one."""
    if not corpus.pieces:
        raise CorpusValidationError("empty corpus")
    lengths = [p.n_steps for p in corpus.pieces]
    histogram: Counter = Counter()
    voice_ranges: dict[str, tuple[int, int]] = {}
    max_run = 0
    wrap_ids = []
    n_steps_total = 0
    n_other = 0
    for piece in corpus.pieces:
        n_steps_total += piece.n_steps
        for step in piece.steps:
            if classify_chord(step) == CHORD_OTHER:
                n_other += 1
        for vi, vname in enumerate(VOICES):
            column = [step[vi] for step in piece.steps]
            sounding = [p for p in column if p is not None]
            if sounding:
                lo, hi = min(sounding), max(sounding)
                if vname in voice_ranges:
                    plo, phi = voice_ranges[vname]
                    voice_ranges[vname] = (min(lo, plo), max(hi, phi))
                else:
                    voice_ranges[vname] = (lo, hi)
                histogram.update(sounding)
            run = _max_run(column)
            if run > max_run:
                max_run = run
            if run > 80 and piece.id not in wrap_ids:
                wrap_ids.append(piece.id)
    return StatsReport(
        split_counts=corpus.split_counts,
        min_steps=min(lengths),
        max_steps=max(lengths),
        mean_steps=sum(lengths) / len(lengths),
        voice_ranges=voice_ranges,
        pitch_histogram=dict(histogram),
        max_encoded_length=5 * max(lengths) + 1,
        max_voice_run=max_run,
        z_wrap_piece_ids=wrap_ids,
        chord_other_fraction=n_other / n_steps_total,
    )
