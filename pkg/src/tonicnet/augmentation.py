"""Training-set augmentation: transposition, plus optional major<->minor swap.

Transposition keeps every shift of a piece whose pitches stay inside the
global 36..81 range and inside the per-voice ranges supplied by the caller
(normally the observed per-voice min/max of the un-augmented training
split). Validation and test splits are never augmented.

The mode swap is a crude key conversion: minor pieces get their minor 3rd,
6th and 7th raised a semitone; major pieces get their major 3rd and 6th
lowered, leaving the 7th raised. The mode and tonic are read from the final
non-rest chord of the piece. It is off by default.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import VOICES, Corpus, Piece
from .harmony import classify_chord
from .vocab import PITCH_MAX, PITCH_MIN, Chord

# Pitch-class intervals above the tonic edited by the mode swap.
_MINOR_RAISED = (3, 8, 10)   # minor 3rd, 6th, 7th -> +1
_MAJOR_LOWERED = (4, 9)      # major 3rd, 6th -> -1


class ModeError(ValueError):
    """The mode of a piece cannot be determined from its final chord."""

    def __init__(self, piece_id: str, final_chord) -> None:
        super().__init__(f"piece {piece_id}: final chord {final_chord} is neither major nor minor")
        self.final_chord = final_chord


@dataclass(frozen=True)
class Provenance:
    source_id: str
    shift: int
    mode_swapped: bool


@dataclass(frozen=True)
class AugmentedSet:
    pieces: tuple  # tuple[Piece, ...]
    provenance: tuple  # tuple[Provenance, ...], parallel to pieces
    # Mode-swap candidates dropped for leaving the pitch range or having an
    # undeterminable mode, as (source_id, shift, reason).
    dropped: tuple = ()

    def __len__(self) -> int:
        return len(self.pieces)


def shift_window(piece: Piece, voice_ranges: dict) -> tuple[int, int]:
    """Inclusive (lo, hi) semitone shifts keeping the piece inside all ranges."""
    lo, hi = -128, 128
    for vi, vname in enumerate(VOICES):
        sounding = [step[vi] for step in piece.steps if step[vi] is not None]
        if not sounding:
            continue
        vlo, vhi = voice_ranges[vname]
        vlo, vhi = max(vlo, PITCH_MIN), min(vhi, PITCH_MAX)
        lo = max(lo, vlo - min(sounding))
        hi = min(hi, vhi - max(sounding))
    return lo, hi


def transpose(piece: Piece, shift: int, new_id: str | None = None) -> Piece:
    steps = tuple(
        tuple(None if p is None else p + shift for p in step) for step in piece.steps
    )
    return Piece(
        id=new_id or f"{piece.id}_t{shift:+d}", steps=steps, split=piece.split
    )


def determine_mode(piece: Piece) -> tuple[str, int]:
    """(mode, tonic pitch class) from the final non-rest chord; ModeError otherwise."""
    for step in reversed(piece.steps):
        chord = classify_chord(step)
        if isinstance(chord, Chord):
            if chord.quality in ("major", "minor"):
                return chord.quality, chord.root_pc
            raise ModeError(piece.id, chord)
        if any(p is not None for p in step):
            raise ModeError(piece.id, chord)
    raise ModeError(piece.id, None)


def mode_swap(piece: Piece) -> Piece:
    """Convert a major piece to minor or vice versa; raises ModeError or
    ValueError if an edited pitch leaves the global range."""
    mode, tonic = determine_mode(piece)
    if mode == "minor":
        edited, delta = _MINOR_RAISED, 1
    else:
        edited, delta = _MAJOR_LOWERED, -1
    steps = []
    for t, step in enumerate(piece.steps):
        voices = []
        for p in step:
            if p is not None and (p - tonic) % 12 in edited:
                p = p + delta
                if not PITCH_MIN <= p <= PITCH_MAX:
                    raise ValueError(
                        f"piece {piece.id}, step {t}: mode swap pushes pitch to {p}, "
                        f"outside [{PITCH_MIN}, {PITCH_MAX}]"
                    )
            voices.append(p)
        steps.append(tuple(voices))
    return Piece(id=f"{piece.id}_mm", steps=tuple(steps), split=piece.split)


def transpose_all(
    corpus_or_pieces, voice_ranges: dict, include_mode_swap: bool = False
) -> AugmentedSet:
    """Expand the training split by every in-range transposition (and, when
    requested, the mode-swapped variant of each transposed piece)."""
    if isinstance(corpus_or_pieces, Corpus):
        sources = corpus_or_pieces.split("train")
    else:
        sources = list(corpus_or_pieces)
    pieces: list[Piece] = []
    provenance: list[Provenance] = []
    dropped: list[tuple] = []

    def emit(piece: Piece, source_id: str, shift: int, swapped: bool) -> None:
        pieces.append(piece)
        provenance.append(Provenance(source_id, shift, swapped))

    for source in sources:
        lo, hi = shift_window(source, voice_ranges)
        shifts = sorted(set(range(lo, hi + 1)) | {0})
        for shift in shifts:
            shifted = source if shift == 0 else transpose(source, shift)
            emit(shifted, source.id, shift, swapped=False)
            if include_mode_swap:
                try:
                    emit(mode_swap(shifted), source.id, shift, swapped=True)
                except (ModeError, ValueError) as exc:
                    dropped.append((source.id, shift, str(exc)))
    return AugmentedSet(
        pieces=tuple(pieces), provenance=tuple(provenance), dropped=tuple(dropped)
    )
