"""Minimal standard MIDI file writer for generated scores.

Format 1, 480 ticks per quarter note (one 16th-note step = 120 ticks).
Track 0 carries the tempo meta event; tracks 1-4 are Soprano, Alto, Tenor,
Bass on channels 0-3, program 0, fixed velocity 80. Output bytes are a
pure function of the score and options.
"""

from __future__ import annotations

import struct

TICKS_PER_QUARTER = 480
TICKS_PER_STEP = 120
VELOCITY = 80

VOICE_NAMES = ("Soprano", "Alto", "Tenor", "Bass")


def _vlq(value: int) -> bytes:
    """Variable-length quantity encoding."""
    if value < 0:
        raise ValueError("negative delta time")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def _track_chunk(events: bytes) -> bytes:
    data = events + b"\x00\xff\x2f\x00"  # end of track
    return b"MTrk" + struct.pack(">I", len(data)) + data


def _tempo_track(bpm: float) -> bytes:
    usec_per_quarter = round(60_000_000 / bpm)
    return _track_chunk(b"\x00\xff\x51\x03" + struct.pack(">I", usec_per_quarter)[1:])


def _voice_track(notes, channel: int, name: str) -> bytes:
    """notes: list of (onset_step, duration_steps, pitch), sorted by onset."""
    events = bytearray()
    events += _vlq(0) + bytes([0xFF, 0x03, len(name)]) + name.encode("ascii")
    events += _vlq(0) + bytes([0xC0 | channel, 0])  # program 0
    cursor = 0
    for onset, duration, pitch in notes:
        on_tick = onset * TICKS_PER_STEP
        off_tick = (onset + duration) * TICKS_PER_STEP
        events += _vlq(on_tick - cursor) + bytes([0x90 | channel, pitch, VELOCITY])
        events += _vlq(off_tick - on_tick) + bytes([0x80 | channel, pitch, 0])
        cursor = off_tick
    return _track_chunk(bytes(events))


def _marker_track(labels) -> bytes:
    """labels: one text label per 16th-note step."""
    events = bytearray()
    cursor = 0
    for step, label in enumerate(labels):
        tick = step * TICKS_PER_STEP
        text = label.encode("ascii")
        events += _vlq(tick - cursor) + bytes([0xFF, 0x06]) + _vlq(len(text)) + text
        cursor = tick
    return _track_chunk(bytes(events))


def render_midi(voice_notes, bpm: float = 80.0, chord_labels=None) -> bytes:
    """Build the MIDI byte string. voice_notes is a 4-element list (S,A,T,B)
    of note lists [(onset_step, duration_steps, pitch), ...]."""
    if len(voice_notes) != 4:
        raise ValueError("expected note lists for exactly 4 voices")
    tracks = [_tempo_track(bpm)]
    for channel, (notes, name) in enumerate(zip(voice_notes, VOICE_NAMES)):
        tracks.append(_voice_track(notes, channel, name))
    if chord_labels is not None:
        tracks.append(_marker_track(chord_labels))
    header = b"MThd" + struct.pack(">IHHH", 6, 1, len(tracks), TICKS_PER_QUARTER)
    return header + b"".join(tracks)


def write_midi_file(path, voice_notes, bpm: float = 80.0, chord_labels=None) -> None:
    blob = render_midi(voice_notes, bpm=bpm, chord_labels=chord_labels)
    with open(path, "wb") as fh:
        fh.write(blob)
