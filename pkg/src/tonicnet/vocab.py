"""Token vocabulary: 98 symbolic classes mapped onto contiguous indices 0..97.

Layout (frozen wire contract -- checkpoints depend on it):

    0..45    pitches, MIDI 36..81 (index = midi - 36)
    46..57   major triads by root pitch class
    58..69   minor triads
    70..81   diminished triads
    82..93   augmented triads
    94       CHORD_OTHER
    95       CHORD_REST
    96       REST
    97       END

The repetition-count (Z) domain is 0..79 inclusive: a run wraps back to 0
once the count would exceed 79.
"""

from __future__ import annotations

from dataclasses import dataclass

PITCH_MIN = 36
PITCH_MAX = 81
N_PITCHES = PITCH_MAX - PITCH_MIN + 1  # 46

QUALITIES = ("major", "minor", "diminished", "augmented")

VOCAB_SIZE = 98
Z_SIZE = 80
Z_MAX = Z_SIZE - 1

CHORD_BASE = N_PITCHES          # 46
CHORD_OTHER_INDEX = 94
CHORD_REST_INDEX = 95
REST_INDEX = 96
END_INDEX = 97

# Version stamp for the index layout above; carried in checkpoint headers.
VOCAB_LAYOUT_VERSION = 1


@dataclass(frozen=True)
class Pitch:
    midi: int

    def __post_init__(self) -> None:
        if not PITCH_MIN <= self.midi <= PITCH_MAX:
            raise ValueError(f"pitch {self.midi} outside [{PITCH_MIN}, {PITCH_MAX}]")


@dataclass(frozen=True)
class Chord:
    quality: str
    root_pc: int

    def __post_init__(self) -> None:
        if self.quality not in QUALITIES:
            raise ValueError(f"unknown chord quality {self.quality!r}")
        if not 0 <= self.root_pc <= 11:
            raise ValueError(f"root pitch class {self.root_pc} outside 0..11")


@dataclass(frozen=True)
class Special:
    name: str


CHORD_OTHER = Special("chord_other")
CHORD_REST = Special("chord_rest")
REST = Special("rest")
END = Special("end")

Token = Pitch | Chord | Special


def token_to_index(token: Token) -> int:
    """Map a token to its canonical index in 0..97."""
    if isinstance(token, Pitch):
        return token.midi - PITCH_MIN
    if isinstance(token, Chord):
        return CHORD_BASE + 12 * QUALITIES.index(token.quality) + token.root_pc
    if token == CHORD_OTHER:
        return CHORD_OTHER_INDEX
    if token == CHORD_REST:
        return CHORD_REST_INDEX
    if token == REST:
        return REST_INDEX
    if token == END:
        return END_INDEX
    raise ValueError(f"not a token: {token!r}")


def index_to_token(index: int) -> Token:
    """Inverse of :func:`token_to_index`; raises on out-of-range indices."""
    if not 0 <= index < VOCAB_SIZE:
        raise ValueError(f"token index {index} outside 0..{VOCAB_SIZE - 1}")
    if index < CHORD_BASE:
        return Pitch(PITCH_MIN + index)
    if index < CHORD_OTHER_INDEX:
        quality, root = divmod(index - CHORD_BASE, 12)
        return Chord(QUALITIES[quality], root)
    if index == CHORD_OTHER_INDEX:
        return CHORD_OTHER
    if index == CHORD_REST_INDEX:
        return CHORD_REST
    if index == REST_INDEX:
        return REST
    return END


def is_pitch_index(index: int) -> bool:
    return 0 <= index < CHORD_BASE


def is_chord_index(index: int) -> bool:
    """Chord-class indices: the 48 triads plus CHORD_OTHER and CHORD_REST."""
    return CHORD_BASE <= index <= CHORD_REST_INDEX


def is_voice_index(index: int) -> bool:
    """Tokens legal at a voice position: any pitch or REST."""
    return is_pitch_index(index) or index == REST_INDEX


ALL_TOKENS: tuple[Token, ...] = tuple(index_to_token(i) for i in range(VOCAB_SIZE))
