"""Teacher-forced evaluation: Full and NCL loss/accuracy over a split.

Aggregation is token-weighted: every predicted token across the split
counts equally, rather than averaging per piece first. NCL (no chord loss)
drops the chord-stream positions and keeps voices and END.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoder import STREAM_C, EncodedSequence
from .model import ModelParams, forward_sequence

STREAM_LABELS = ("C", "S", "B", "A", "T", "END")


class StreamMismatchError(ValueError):
    """Checkpoint was trained on a different stream subset."""


@dataclass
class EvalReport:
    split: str
    full_nll: float
    ncl_nll: float
    full_acc: float
    ncl_acc: float
    n_positions: int
    n_chord_positions: int
    # label -> (mean nll, position count); only labels that occur
    per_stream: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "full_nll": self.full_nll,
            "ncl_nll": self.ncl_nll,
            "full_acc": self.full_acc,
            "ncl_acc": self.ncl_acc,
            "n_positions": self.n_positions,
            "n_chord_positions": self.n_chord_positions,
            "per_stream": {k: {"nll": v[0], "count": v[1]} for k, v in self.per_stream.items()},
        }

    def table(self) -> str:
        rows = [
            ("", f"{self.split} NLL", f"{self.split} Acc."),
            ("Full", f"{self.full_nll:.3f}", f"{self.full_acc:.3f}"),
            ("NCL", f"{self.ncl_nll:.3f}", f"{self.ncl_acc:.3f}"),
        ]
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        return "\n".join(
            " | ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows
        )


def sequence_losses(params: ModelParams, seq: EncodedSequence):
    """Per-predicted-position (nll, correct, stream) arrays for one sequence."""
    logits = forward_sequence(params, seq.x[:-1], seq.z[:-1])
    targets = np.asarray(seq.x[1:])
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1))
    rows = np.arange(len(targets))
    nll = log_z - shifted[rows, targets]
    correct = logits.argmax(axis=-1) == targets
    streams = np.asarray(seq.stream[1:])
    return nll, correct, streams


def evaluate_sequences(params: ModelParams, seqs, split: str = "valid") -> EvalReport:
    """Token-weighted evaluation over pre-encoded sequences."""
    if not seqs:
        raise ValueError("no sequences to evaluate")
    all_nll, all_correct, all_streams = [], [], []
    for seq in seqs:
        nll, correct, streams = sequence_losses(params, seq)
        all_nll.append(nll)
        all_correct.append(correct)
        all_streams.append(streams)
    nll = np.concatenate(all_nll)
    correct = np.concatenate(all_correct)
    streams = np.concatenate(all_streams)
    mask = streams != STREAM_C
    per_stream = {}
    for sid, label in enumerate(STREAM_LABELS):
        sel = streams == sid
        if sel.any():
            per_stream[label] = (float(nll[sel].mean()), int(sel.sum()))
    return EvalReport(
        split=split,
        full_nll=float(nll.mean()),
        ncl_nll=float(nll[mask].mean()),
        full_acc=float(correct.mean() * 100.0),
        ncl_acc=float(correct[mask].mean() * 100.0),
        n_positions=int(len(nll)),
        n_chord_positions=int((~mask).sum()),
        per_stream=per_stream,
    )


def evaluate(params: ModelParams, corpus, split: str, streams: str = "CSBAT") -> EvalReport:
    """Evaluate a checkpoint on one corpus split, using the stream subset it
    was trained on."""
    from .encoder import parse_streams, restrict_streams

    if streams.upper() != params.streams.upper():
        raise StreamMismatchError(
            f"checkpoint trained on streams {params.streams!r}, requested {streams!r}"
        )
    ids = parse_streams(streams)
    pieces = corpus.split(split)
    if not pieces:
        raise ValueError(f"split {split!r} is empty")
    seqs = [restrict_streams(p, ids) for p in pieces]
    return evaluate_sequences(params, seqs, split=split)
