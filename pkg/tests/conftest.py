"""Shared fixtures: deterministic synthetic chorale-like corpora.

The real corpus cannot be redistributed with the repository, so most tests
run on generated pieces: four voices in realistic ranges, triadic steps
with held notes and occasional rests. Tests of canonical-corpus numbers
look for the real interchange file (see `canonical_corpus_path`) and skip
when it is absent.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
import pytest

from tonicnet.corpus import Corpus, Piece

VOICE_RANGES = {"S": (60, 81), "A": (53, 74), "T": (48, 69), "B": (36, 62)}

# Triads of C major / A minor flavoured progressions, as (S, A, T, B) pitch
# classes to be placed inside each voice's range.
_PROGRESSION = [
    (0, 4, 7, 0),
    (7, 2, 11, 7),
    (9, 0, 4, 9),
    (5, 9, 0, 5),
    (0, 7, 4, 0),
    (2, 5, 9, 2),
]


def canonical_corpus_path() -> Path | None:
    """The canonical corpus interchange file, if the user has provided it."""
    env = os.environ.get("TONICNET_CORPUS")
    candidates = [Path(env)] if env else []
    candidates.append(Path(__file__).resolve().parent.parent / "data" / "jsb-chorales-16th.json")
    for path in candidates:
        if path.is_file():
            return path
    return None


requires_canonical = pytest.mark.skipif(
    canonical_corpus_path() is None,
    reason="canonical corpus not available (set TONICNET_CORPUS or place "
    "data/jsb-chorales-16th.json; see README)",
)


def _place(pc: int, lo: int, hi: int, rng) -> int:
    choices = [p for p in range(lo, hi + 1) if p % 12 == pc]
    return int(rng.choice(choices))


def make_piece(piece_id: str, split: str, n_steps: int, seed: int,
               rest_prob: float = 0.02) -> Piece:
    """A chorale-ish piece: chord changes every 2-8 steps, voices hold."""
    rng = np.random.default_rng(seed)
    steps = []
    t = 0
    while t < n_steps:
        chord = _PROGRESSION[rng.integers(len(_PROGRESSION))]
        voices = tuple(
            None if rng.random() < rest_prob else _place(pc, *VOICE_RANGES[v], rng)
            for pc, v in zip(chord, "SATB")
        )
        hold = int(rng.integers(2, 9))
        for _ in range(min(hold, n_steps - t)):
            steps.append(voices)
            t += 1
    return Piece(id=piece_id, steps=tuple(steps), split=split)


def make_corpus(n_train: int = 8, n_valid: int = 3, n_test: int = 3,
                steps: int = 48, seed: int = 0) -> Corpus:
    pieces = []
    k = 0
    for split, count in (("train", n_train), ("valid", n_valid), ("test", n_test)):
        for i in range(count):
            pieces.append(make_piece(f"{split}_{i:03d}", split, steps, seed + k))
            k += 1
    return Corpus(pieces=tuple(pieces))


def corpus_to_json(corpus: Corpus, path) -> None:
    out = {
        split: [[list(s) for s in p.steps] for p in corpus.split(split)]
        for split in ("train", "valid", "test")
    }
    Path(path).write_text(json.dumps(out), encoding="utf-8")


@pytest.fixture(scope="session")
def synth_corpus() -> Corpus:
    return make_corpus()


@pytest.fixture()
def synth_corpus_file(tmp_path, synth_corpus) -> Path:
    path = tmp_path / "corpus.json"
    corpus_to_json(synth_corpus, path)
    return path
