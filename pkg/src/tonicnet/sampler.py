"""Ancestral sampling of new chorales from a trained model.

Generation starts from a random (or given) major/minor chord token and then
draws each next token from softmax(logits / temperature), feeding the
repetition counts online with exactly the encoder's Z bookkeeping. Stream
positions cycle C,S,B,A,T on the generator side regardless of what the
model emits; `constrain_kinds` masks tokens whose kind does not fit the
current position (END only at chord positions). Rhythmic smoothing merges
consecutive identical pitches in a voice into single longer notes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import vocab
from .corpus import Piece
from .encoder import (
    STREAM_C,
    STREAM_END,
    EncodedSequence,
    decode,
)
from .midi import render_midi
from .model import EVAL_PLAN, ModelParams, init_hidden, step
from .vocab import (
    CHORD_BASE,
    CHORD_OTHER_INDEX,
    END_INDEX,
    REST_INDEX,
    Z_SIZE,
    index_to_token,
    is_chord_index,
    is_voice_index,
)

# Indices of the 24 major and minor triads, the allowed starting chords.
START_CHORD_INDICES = tuple(range(CHORD_BASE, CHORD_BASE + 24))

# Piece-tuple voice slot fed by each stream id 1..4 (S, B, A, T order).
_VOICE_SLOT = {1: 0, 2: 3, 3: 1, 4: 2}


@dataclass
class SampleConfig:
    seed: int = 0
    temperature: float = 1.0
    max_tokens: int = 3200
    constrain_kinds: bool = False
    smoothing: bool = True
    start_chord: int | None = None  # token index of an explicit starting chord
    # Experimental, untested for quality: position -> forced token index.
    forced_tokens: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.max_tokens < 6:
            raise ValueError("max_tokens must cover at least one time-step plus END")


@dataclass
class GeneratedScore:
    piece: Piece
    sequence: EncodedSequence
    # Per voice (S, A, T, B): [(onset_step, duration_steps, pitch), ...]
    voice_notes: list
    kind_violations: int = 0
    ended_naturally: bool = False


def _kind_ok(token_index: int, stream_id: int) -> bool:
    if stream_id == STREAM_C:
        return is_chord_index(token_index) or token_index == END_INDEX
    return is_voice_index(token_index)


def steps_to_notes(voice_steps, merge: bool = True) -> list:
    """Turn one voice's per-step pitches (None = rest) into note triples.
    With merge on, runs of the same pitch become one note."""
    notes = []
    for t, pitch in enumerate(voice_steps):
        if pitch is None:
            continue
        if merge and notes and notes[-1][2] == pitch and notes[-1][0] + notes[-1][1] == t:
            onset, duration, _ = notes[-1]
            notes[-1] = (onset, duration + 1, pitch)
        else:
            notes.append((t, 1, pitch))
    return notes


def smooth(score: GeneratedScore) -> GeneratedScore:
    """Merge adjacent same-pitch notes per voice; idempotent."""
    merged = []
    for notes in score.voice_notes:
        out = []
        for onset, duration, pitch in notes:
            if out and out[-1][2] == pitch and out[-1][0] + out[-1][1] == onset:
                ponset, pduration, _ = out[-1]
                out[-1] = (ponset, pduration + duration, pitch)
            else:
                out.append((onset, duration, pitch))
        merged.append(out)
    return GeneratedScore(
        piece=score.piece,
        sequence=score.sequence,
        voice_notes=merged,
        kind_violations=score.kind_violations,
        ended_naturally=score.ended_naturally,
    )


def generate(params: ModelParams, config: SampleConfig) -> GeneratedScore:
    """Sample one score. Requires a full five-stream (CSBAT) checkpoint."""
    if params.streams.upper() != "CSBAT":
        raise ValueError(
            f"sampling needs a CSBAT checkpoint, got streams {params.streams!r}"
        )
    rng = np.random.default_rng(config.seed)
    if config.start_chord is not None:
        if not is_chord_index(config.start_chord):
            raise ValueError(f"start_chord {config.start_chord} is not a chord token")
        first = config.start_chord
    else:
        first = int(rng.choice(START_CHORD_INDICES))

    xs: list[int] = []
    zs: list[int] = []
    streams: list[int] = []
    last_value: dict[int, int] = {}
    run: dict[int, int] = {}
    violations = 0

    def push(token_index: int, stream_id: int) -> int:
        """Record a token and return its repetition count (encoder Z law)."""
        if last_value.get(stream_id) == token_index:
            run[stream_id] += 1
        else:
            run[stream_id] = 1
            last_value[stream_id] = token_index
        z = (run[stream_id] - 1) % Z_SIZE
        xs.append(token_index)
        zs.append(z)
        streams.append(stream_id)
        return z

    hidden = init_hidden(params)
    token = first
    z = push(token, STREAM_C)
    ended = False
    position = 1
    while position < config.max_tokens:
        logits, hidden = step(params, token, z, hidden, EVAL_PLAN)
        stream_id = position % 5
        if position in config.forced_tokens:
            token = int(config.forced_tokens[position])
        else:
            scaled = logits.astype(np.float64) / config.temperature
            if config.constrain_kinds:
                allowed = np.array(
                    [_kind_ok(i, stream_id) for i in range(vocab.VOCAB_SIZE)]
                )
                scaled[~allowed] = -np.inf
            scaled -= scaled.max()
            probs = np.exp(scaled)
            probs /= probs.sum()
            token = int(rng.choice(vocab.VOCAB_SIZE, p=probs))
        if token == END_INDEX and stream_id == STREAM_C:
            ended = True
            break
        if not _kind_ok(token, stream_id) or token == END_INDEX:
            violations += 1
        z = push(token, stream_id)
        position += 1

    # Drop a trailing partial time-step, then decode the voice streams.
    n_steps = len(xs) // 5
    if n_steps == 0:
        raise ValueError("generation produced no complete time-step")
    x = np.array(xs[: 5 * n_steps] + [END_INDEX], dtype=np.int64)
    z_arr = np.array(zs[: 5 * n_steps] + [0], dtype=np.int64)
    stream_arr = np.array(streams[: 5 * n_steps] + [STREAM_END], dtype=np.int64)

    # Total decoding rule for kind violations: voice positions fall back to
    # REST, chord positions to CHORD_OTHER.
    x_clean = x.copy()
    for p in range(5 * n_steps):
        if not _kind_ok(int(x_clean[p]), int(stream_arr[p])) or x_clean[p] == END_INDEX:
            x_clean[p] = CHORD_OTHER_INDEX if stream_arr[p] == STREAM_C else REST_INDEX

    seq = EncodedSequence(x=x, z=z_arr, stream=stream_arr)
    clean_seq = EncodedSequence(x=x_clean, z=z_arr, stream=stream_arr)
    piece = decode(clean_seq)

    voice_notes = [
        steps_to_notes([s[v] for s in piece.steps], merge=config.smoothing)
        for v in range(4)
    ]
    score = GeneratedScore(
        piece=piece,
        sequence=seq,
        voice_notes=voice_notes,
        kind_violations=violations,
        ended_naturally=ended,
    )
    return smooth(score) if config.smoothing else score


def chord_labels(seq: EncodedSequence) -> list:
    """Text labels of the chord token at each time-step, for marker tracks."""
    labels = []
    for p in range(len(seq) - 1):
        if seq.stream[p] == STREAM_C:
            token = index_to_token(int(seq.x[p]))
            if isinstance(token, vocab.Chord):
                labels.append(f"{token.quality[:3]}{token.root_pc}")
            else:
                labels.append(token.name)
    return labels


def write_midi(score: GeneratedScore, path, bpm: float = 80.0, chord_markers: bool = False) -> None:
    labels = chord_labels(score.sequence) if chord_markers else None
    blob = render_midi(score.voice_notes, bpm=bpm, chord_labels=labels)
    with open(path, "wb") as fh:
        fh.write(blob)
