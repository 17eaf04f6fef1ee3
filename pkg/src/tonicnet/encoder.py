"""Interleaved sequence encoding: C,S,B,A,T per 16th-note step, plus END.

Each time-step contributes five tokens in the fixed prediction order
Chord, Soprano, Bass, Alto, Tenor, and the sequence ends with a single END
token, so a piece of N steps encodes to 5N+1 positions. Alongside the token
stream x we carry z, the per-stream repetition count: within one stream,
the k-th consecutive occurrence of the same token gets z = (k-1) mod 80.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import vocab
from .corpus import Piece
from .harmony import classify_chord
from .vocab import (
    END_INDEX,
    REST_INDEX,
    Z_SIZE,
    index_to_token,
    is_chord_index,
    is_voice_index,
    token_to_index,
)

# Stream ids in prediction order; END gets its own id.
STREAM_C, STREAM_S, STREAM_B, STREAM_A, STREAM_T, STREAM_END = range(6)

STREAM_NAMES = "CSBAT"

# Voice-slot index within a (S, A, T, B) time-step for each voice stream.
_VOICE_SLOT = {STREAM_S: 0, STREAM_B: 3, STREAM_A: 1, STREAM_T: 2}


class EncodingError(ValueError):
    """A sequence violates the interleaved-encoding structure."""


@dataclass(frozen=True)
class EncodedSequence:
    x: np.ndarray       # token indices, int64
    z: np.ndarray       # repetition counts 0..79, int64
    stream: np.ndarray  # stream ids 0..5, int64

    def __len__(self) -> int:
        return len(self.x)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EncodedSequence):
            return NotImplemented
        return (
            np.array_equal(self.x, other.x)
            and np.array_equal(self.z, other.z)
            and np.array_equal(self.stream, other.stream)
        )


def parse_streams(spec: str) -> tuple[int, ...]:
    """Parse a stream subset like "CS" or "CSBAT" into canonical-order ids."""
    spec = spec.upper()
    unknown = set(spec) - set(STREAM_NAMES)
    if unknown:
        raise ValueError(f"unknown stream letters {sorted(unknown)}; use a subset of CSBAT")
    ids = tuple(i for i, name in enumerate(STREAM_NAMES) if name in spec)
    if not ids:
        raise ValueError("stream subset must be non-empty")
    return ids


def stream_ids_to_name(ids) -> str:
    return "".join(STREAM_NAMES[i] for i in sorted(ids))


def _voice_token_index(step, stream_id: int) -> int:
    pitch = step[_VOICE_SLOT[stream_id]]
    return REST_INDEX if pitch is None else token_to_index(vocab.Pitch(pitch))


def _compute_z(x: np.ndarray, stream: np.ndarray) -> np.ndarray:
    z = np.zeros(len(x), dtype=np.int64)
    last: dict[int, int] = {}
    run: dict[int, int] = {}
    for p in range(len(x)):
        s = int(stream[p])
        if s == STREAM_END:
            continue
        value = int(x[p])
        if last.get(s) == value:
            run[s] += 1
        else:
            run[s] = 1
            last[s] = value
        z[p] = (run[s] - 1) % Z_SIZE
    return z


def restrict_streams(piece: Piece, streams) -> EncodedSequence:
    """Encode only the selected streams per step, in canonical C,S,B,A,T order."""
    ids = tuple(sorted(set(streams)))
    if not ids:
        raise ValueError("stream subset must be non-empty")
    if any(s not in range(5) for s in ids):
        raise ValueError(f"invalid stream ids {ids}")
    n = piece.n_steps
    k = len(ids)
    x = np.empty(k * n + 1, dtype=np.int64)
    stream = np.empty(k * n + 1, dtype=np.int64)
    pos = 0
    for step in piece.steps:
        for s in ids:
            if s == STREAM_C:
                x[pos] = token_to_index(classify_chord(step))
            else:
                x[pos] = _voice_token_index(step, s)
            stream[pos] = s
            pos += 1
    x[pos] = END_INDEX
    stream[pos] = STREAM_END
    return EncodedSequence(x=x, z=_compute_z(x, stream), stream=stream)


def encode(piece: Piece) -> EncodedSequence:
    """Full five-stream encoding of a piece."""
    return restrict_streams(piece, range(5))


def decode(seq: EncodedSequence) -> Piece:
    """Invert a full encoding back to a piece (chord tokens are kind-checked only)."""
    length = len(seq)
    if length < 6 or (length - 1) % 5 != 0:
        raise EncodingError(f"length {length} is not 5N+1 with N >= 1")
    if seq.x[-1] != END_INDEX or seq.stream[-1] != STREAM_END:
        raise EncodingError("sequence does not end with END")
    n = (length - 1) // 5
    steps = []
    for t in range(n):
        voices: list = [None, None, None, None]
        for offset in range(5):
            p = 5 * t + offset
            if seq.stream[p] != offset:
                raise EncodingError(f"position {p}: stream {seq.stream[p]} != {offset}")
            idx = int(seq.x[p])
            if offset == STREAM_C:
                if not is_chord_index(idx):
                    raise EncodingError(f"position {p}: {idx} is not a chord token")
            else:
                if not is_voice_index(idx):
                    raise EncodingError(f"position {p}: {idx} is not a pitch/REST token")
                if idx != REST_INDEX:
                    voices[_VOICE_SLOT[offset]] = index_to_token(idx).midi
        steps.append(tuple(voices))
    return Piece(id="decoded", steps=tuple(steps), split="train")


def ncl_mask(seq: EncodedSequence) -> np.ndarray:
    """True at every non-chord position (voices and END); the NCL loss mask."""
    return np.asarray(seq.stream != STREAM_C)
