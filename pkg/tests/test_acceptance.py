"""Acceptance gate: every release criterion as one test with a printed
PASS/FAIL line (run with -s to see them).

Criteria that need the canonical corpus skip when it is absent; the
empirical training criteria then run on the synthetic corpus at the same
thresholds. The full 60-epoch reproduction is documented in the README and
always skips here. Training criteria are marked `slow`.
"""

import json
import math
import subprocess
import sys
from contextlib import contextmanager
from itertools import combinations
from pathlib import Path

import numpy as np
import pytest

from tonicnet import autodiff as ad
from tonicnet import evaluator, harmony, model as m, sampler, trainer, vocab
from tonicnet.augmentation import transpose_all
from tonicnet.corpus import Corpus, corpus_stats, load_corpus
from tonicnet.encoder import encode, decode, parse_streams, restrict_streams

from conftest import (
    canonical_corpus_path,
    make_corpus,
    make_piece,
    requires_canonical,
)

REPO = Path(__file__).resolve().parent.parent


@contextmanager
def criterion(name):
    try:
        yield
    except Exception:
        print(f"FAIL: {name}")
        raise
    print(f"PASS: {name}")


def training_corpus():
    """Canonical corpus when available, else a synthetic stand-in large
    enough for the desk-scale thresholds."""
    path = canonical_corpus_path()
    if path is not None:
        return load_corpus(path)
    return make_corpus(n_train=96, n_valid=6, n_test=4, steps=48)


def test_vocabulary_bijection():
    with criterion("vocabulary: 98 tokens, bijection to 0..97"):
        tokens = vocab.ALL_TOKENS
        assert len(tokens) == 98
        indices = [vocab.token_to_index(t) for t in tokens]
        assert sorted(indices) == list(range(98))
        for i in range(98):
            assert vocab.token_to_index(vocab.index_to_token(i)) == i


@requires_canonical
def test_canonical_corpus_shape():
    with criterion("corpus: canonical splits 229/76/77, max encoded length 2881"):
        corpus = load_corpus(canonical_corpus_path())
        assert corpus.split_counts == {"train": 229, "valid": 76, "test": 77}
        assert corpus_stats(corpus).max_encoded_length == 2881


@requires_canonical
def test_canonical_transposition_yield():
    with criterion("augmentation: transposition yields 1968 pieces (+/- 2%)"):
        corpus = load_corpus(canonical_corpus_path())
        ranges = corpus_stats(Corpus(tuple(corpus.split("train")))).voice_ranges
        aug = transpose_all(corpus, ranges)
        assert abs(len(aug) - 1968) <= round(0.02 * 1968)


def test_harmony_enumeration():
    with criterion("harmony: 4096 pc-sets classify 12/12/12/4, rest OTHER"):
        counts = {q: 0 for q in harmony.TRIAD_TEMPLATES}
        counts["other"] = 0
        for size in range(1, 13):
            for pcs in combinations(range(12), size):
                result = harmony.classify_pcs(frozenset(pcs))
                if isinstance(result, vocab.Chord):
                    counts[result.quality] += 1
                else:
                    counts["other"] += 1
        assert counts == {
            "major": 12, "minor": 12, "diminished": 12, "augmented": 4,
            "other": 2**12 - 1 - 40,
        }


def test_encoder_roundtrip_thousand_pieces():
    with criterion("encoder: decode(encode(p)) identity on 1000 random pieces"):
        rng = np.random.default_rng(0)
        for i in range(1000):
            piece = make_piece(
                f"p{i}", "train", int(rng.integers(1, 30)), int(rng.integers(1 << 30)),
                rest_prob=0.05,
            )
            seq = encode(piece)
            assert len(seq) == 5 * piece.n_steps + 1
            assert decode(seq).steps == piece.steps
        # Z wrap: 81st consecutive occurrence counts 0 again.
        held = encode(make_piece_hold(81))
        soprano = held.z[held.stream == 1]
        assert soprano[79] == 79 and soprano[80] == 0


def make_piece_hold(n):
    from tonicnet.corpus import Piece

    return Piece(id="hold", steps=tuple([(60, 55, 50, 45)] * n), split="train")


def test_autodiff_gradient_check():
    with criterion("autodiff: toy-scale model gradients vs 64-bit FD < 1e-4"):
        params = m.init_params(3, m.TOY_ARCH)
        rng = np.random.default_rng(3)
        x = rng.integers(0, 98, size=12)
        z = rng.integers(0, 80, size=12)
        names = [n for n, _ in params.named()]

        def f(*tensors):
            p = m.ModelParams(arch=params.arch, tensors=dict(zip(names, tensors)))
            loss, _ = m.sequence_nll(p, (x, z))
            return loss

        err = ad.grad_check(f, [t for _, t in params.named()], max_entries=8)
        assert err < 1e-4


def test_schedule_endpoints():
    with criterion("schedule: 0.008/0.95 -> 0.2/0.8 -> 0.0002/0.95 exactly"):
        config = trainer.TrainConfig()
        spe = 229
        assert trainer.schedule_at(config, 0, spe) == pytest.approx((0.008, 0.95))
        assert trainer.schedule_at(config, 18 * spe, spe) == pytest.approx((0.2, 0.8))
        assert trainer.schedule_at(config, 60 * spe - 1, spe) == pytest.approx(
            (0.0002, 0.95)
        )
        lrs = [trainer.schedule_at(config, s, spe)[0] for s in range(60 * spe)]
        warm = 18 * spe
        assert all(a < b for a, b in zip(lrs[:warm], lrs[1 : warm + 1]))
        assert all(a >= b for a, b in zip(lrs[warm:], lrs[warm + 1 :]))


def test_clipping_bound():
    with criterion("clipping: post-clip global gradient norm <= 5"):
        rng = np.random.default_rng(0)
        for scale in (1e-3, 1.0, 1e3, 1e6):
            tensors = []
            for shape in ((17,), (5, 9), (3, 3, 3)):
                t = ad.Tensor(np.zeros(shape, dtype=np.float32), requires_grad=True)
                t.grad = (rng.standard_normal(shape) * scale).astype(np.float32)
                tensors.append(t)
            trainer.clip_gradients(tensors, 5.0)
            norm = math.sqrt(
                sum(float(np.sum(np.square(t.grad, dtype=np.float64))) for t in tensors)
            )
            assert norm <= 5.0 + 1e-6


@pytest.mark.slow
def test_overfit_single_sequence():
    with criterion("overfit: single sequence reaches NLL < 0.05 in 2000 steps"):
        params = m.init_params(0)
        seq = encode(make_piece("p", "train", 32, seed=0))
        trace = trainer.overfit_one(params, seq, steps=2000)
        assert min(trace) < 0.05


@pytest.mark.slow
def test_desk_scale_training():
    with criterion("desk-scale: 3 epochs, val NLL decreasing, >= 3.5 nats under ln 98"):
        corpus = training_corpus()
        config = trainer.TrainConfig(epochs=3, warmup_epochs=1, seed=0)
        params = m.init_params(0)
        train_seqs = [encode(p) for p in corpus.split("train")]
        val_seqs = [encode(p) for p in corpus.split("valid")]
        result = trainer.train(params, train_seqs, val_seqs, config)
        assert not result.diverged
        nlls = [r.val_full_nll for r in result.log]
        assert all(a > b for a, b in zip(nlls, nlls[1:]))
        assert nlls[-1] <= math.log(98) - 3.5


@requires_canonical
@pytest.mark.slow
def test_full_reproduction_documented():
    with criterion("full reproduction: 60-epoch targets 0.321/0.224 (documented)"):
        pytest.skip(
            "not CI-gated: run `tonicnet train data/jsb-chorales-16th.json "
            "--out tonicnet.ckpt --epochs 60 --augment transpose --seed 0` "
            "and eval valid/test; see README"
        )


@pytest.mark.slow
def test_representation_claim_desk_scale():
    with criterion("representation: CSATB NCL < SATB Full on the same positions"):
        corpus = training_corpus()
        epochs = trainer.TrainConfig(epochs=3, warmup_epochs=1, seed=0)
        reports = {}
        for streams in ("CSBAT", "SBAT"):
            ids = parse_streams(streams)
            params = m.init_params(0, streams=streams)
            train_seqs = [restrict_streams(p, ids) for p in corpus.split("train")]
            val_seqs = [restrict_streams(p, ids) for p in corpus.split("valid")]
            result = trainer.train(params, train_seqs, val_seqs, epochs)
            best = result.best_params or params
            reports[streams] = evaluator.evaluate_sequences(best, val_seqs)
        assert reports["CSBAT"].ncl_nll < reports["SBAT"].full_nll


def test_sampler_criteria(tmp_path):
    with criterion("sampler: seeded byte-identical MIDI, idempotent smoothing, Z law"):
        params = m.init_params(0, m.TOY_ARCH)
        config = sampler.SampleConfig(seed=7, max_tokens=80, constrain_kinds=True)
        paths = [tmp_path / "a.mid", tmp_path / "b.mid"]
        scores = []
        for path in paths:
            score = sampler.generate(params, config)
            sampler.write_midi(score, path)
            scores.append(score)
        assert paths[0].read_bytes() == paths[1].read_bytes()
        assert sampler.smooth(scores[0]).voice_notes == scores[0].voice_notes
        seq = scores[0].sequence
        run, last = {}, {}
        for p in range(len(seq) - 1):
            sid, tok = int(seq.stream[p]), int(seq.x[p])
            run[sid] = run.get(sid, 0) + 1 if last.get(sid) == tok else 1
            last[sid] = tok
            assert seq.z[p] == (run[sid] - 1) % 80


def upstream_pickle_path():
    import os

    env = os.environ.get("TONICNET_UPSTREAM")
    if env and Path(env).is_file():
        return Path(env)
    candidate = REPO / "data" / "jsb-chorales-16th.pkl"
    return candidate if candidate.is_file() else None


@pytest.mark.skipif(
    upstream_pickle_path() is None,
    reason="upstream pickle not available (set TONICNET_UPSTREAM or place "
    "data/jsb-chorales-16th.pkl; see README)",
)
def test_converter_criterion(tmp_path):
    with criterion("converter: canonical counts, stats match, double-convert identical"):
        out1 = tmp_path / "a.json"
        out2 = tmp_path / "b.json"
        script = REPO / "converter" / "convert_jsb.py"
        for out in (out1, out2):
            proc = subprocess.run(
                [sys.executable, str(script), str(upstream_pickle_path()), str(out)],
                capture_output=True, text=True,
            )
            assert proc.returncode == 0, proc.stderr
        assert out1.read_bytes() == out2.read_bytes()
        report = json.loads(proc.stdout)
        assert report["piece_counts"] == {"train": 229, "valid": 76, "test": 77}
        corpus = load_corpus(out1)
        assert corpus.split_counts == {"train": 229, "valid": 76, "test": 77}
        total_steps = sum(p.n_steps for p in corpus.pieces)
        assert report["total_time_steps"] == total_steps
