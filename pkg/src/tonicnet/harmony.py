"""Chord classification: sounding pitches at a time-step -> one of 50 classes.

Classification is exact-match on the deduplicated pitch-class set: the set
must equal a triad template (major/minor/diminished/augmented) under some
root; anything else is CHORD_OTHER. A step where all four voices rest is
CHORD_REST. The augmented template is 3-fold symmetric, so its root is
canonicalized to the smallest pitch class in the set.
"""

from __future__ import annotations

from .vocab import CHORD_OTHER, CHORD_REST, Chord, Special

TRIAD_TEMPLATES = {
    "major": (0, 4, 7),
    "minor": (0, 3, 7),
    "diminished": (0, 3, 6),
    "augmented": (0, 4, 8),
}


def _build_table() -> dict[frozenset[int], Chord]:
    table: dict[frozenset[int], Chord] = {}
    for quality, intervals in TRIAD_TEMPLATES.items():
        for root in range(12):
            pcs = frozenset((root + iv) % 12 for iv in intervals)
            # Augmented sets recur every 4 semitones; keep the smallest root.
            if pcs not in table:
                table[pcs] = Chord(quality, root)
    return table


_TRIAD_TABLE = _build_table()


def classify_pcs(pcs: frozenset[int]) -> Chord | Special:
    """Classify a non-empty pitch-class set; CHORD_OTHER if no template matches."""
    return _TRIAD_TABLE.get(pcs, CHORD_OTHER)


def classify_chord(voices) -> Chord | Special:
    """Classify the four voice slots of one time-step (None = resting voice)."""
    sounding = [p for p in voices if p is not None]
    if not sounding:
        return CHORD_REST
    return classify_pcs(frozenset(p % 12 for p in sounding))
