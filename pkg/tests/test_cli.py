import json

import pytest

from tonicnet import cli
from tonicnet import model as m
from tonicnet.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, dispatch

from conftest import corpus_to_json, make_corpus


@pytest.fixture(scope="module")
def small_corpus_file(tmp_path_factory):
    corpus = make_corpus(n_train=2, n_valid=1, n_test=1, steps=8)
    path = tmp_path_factory.mktemp("cli") / "corpus.json"
    corpus_to_json(corpus, path)
    return path


@pytest.fixture(scope="module")
def toy_checkpoint(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "toy.ckpt"
    m.save_checkpoint(m.init_params(0, m.TOY_ARCH), path)
    return path


def test_no_subcommand_is_usage_error(capsys):
    assert dispatch([]) == EXIT_USAGE
    capsys.readouterr()


def test_unknown_subcommand_is_usage_error(capsys):
    assert dispatch(["frobnicate"]) == EXIT_USAGE
    capsys.readouterr()


def test_help_exits_ok(capsys):
    assert dispatch(["--help"]) == EXIT_OK
    assert "stats" in capsys.readouterr().out


def test_stats_prints_report(small_corpus_file, capsys):
    assert dispatch(["stats", str(small_corpus_file)]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["split_counts"] == {"train": 2, "valid": 1, "test": 1}
    assert report["max_encoded_length"] == 41


def test_stats_missing_file_is_data_error(tmp_path, capsys):
    assert dispatch(["stats", str(tmp_path / "absent.json")]) == EXIT_DATA
    assert "error" in capsys.readouterr().err


def test_stats_invalid_corpus_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"train": []}', encoding="utf-8")
    assert dispatch(["stats", str(bad)]) == EXIT_DATA
    capsys.readouterr()


def test_stats_writes_output_and_manifest(small_corpus_file, tmp_path, capsys):
    out = tmp_path / "stats.json"
    assert dispatch(["stats", str(small_corpus_file), "--out", str(out)]) == EXIT_OK
    capsys.readouterr()
    assert json.loads(out.read_text())["split_counts"]["train"] == 2
    manifest = json.loads((tmp_path / "stats.json.manifest.json").read_text())
    assert manifest["subcommand"] == "stats"
    assert str(small_corpus_file) in manifest["input_digests"]
    assert len(next(iter(manifest["input_digests"].values()))) == 64


def test_encode_csv(small_corpus_file, capsys):
    assert dispatch(["encode", str(small_corpus_file), "--piece", "train_000"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "pos,stream,x,z"
    assert len(lines) == 1 + 5 * 8 + 1
    assert lines[1].startswith("0,0,")


def test_encode_unknown_piece(small_corpus_file, capsys):
    assert dispatch(["encode", str(small_corpus_file), "--piece", "nope"]) == EXIT_DATA
    capsys.readouterr()


def test_augment_writes_provenance(small_corpus_file, tmp_path, capsys):
    out = tmp_path / "prov.json"
    code = dispatch(["augment", str(small_corpus_file), "--out", str(out)])
    assert code == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    sidecar = json.loads(out.read_text())
    assert summary["pieces"] == len(sidecar)
    assert all(set(e) == {"source_id", "shift", "mode_swapped"} for e in sidecar)
    assert (tmp_path / "prov.json.manifest.json").exists()


def test_train_overfit_one_writes_checkpoint(small_corpus_file, tmp_path, capsys):
    out = tmp_path / "model.ckpt"
    code = dispatch(
        [
            "train", str(small_corpus_file), "--out", str(out),
            "--overfit-one", "--overfit-steps", "15",
        ]
    )
    assert code == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["steps"] == 15
    assert m.load_checkpoint(out).streams == "CSBAT"
    assert (tmp_path / "model.ckpt.manifest.json").exists()


def test_train_epoch_smoke_and_log(small_corpus_file, tmp_path, capsys):
    out = tmp_path / "model.ckpt"
    code = dispatch(
        ["train", str(small_corpus_file), "--out", str(out), "--epochs", "2",
         "--streams", "SB"]
    )
    assert code == EXIT_OK
    capsys.readouterr()
    log_lines = (tmp_path / "model.log.jsonl").read_text().strip().splitlines()
    assert len(log_lines) == 2
    record = json.loads(log_lines[0])
    assert {"epoch", "mean_train_nll", "val_full_nll"} <= set(record)
    assert m.load_checkpoint(out).streams == "SB"


def test_lr_find_smoke(small_corpus_file, tmp_path, capsys):
    out = tmp_path / "lr.json"
    code = dispatch(
        ["lr-find", str(small_corpus_file), "--num-steps", "12", "--streams", "SB",
         "--lr-max", "0.1", "--out", str(out)]
    )
    assert code == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    payload = json.loads(out.read_text())
    assert summary["points"] == len(payload["curve"])


def test_eval_with_matching_streams(small_corpus_file, tmp_path, toy_checkpoint, capsys):
    code = dispatch(
        ["eval", str(small_corpus_file), "--checkpoint", str(toy_checkpoint)]
    )
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "valid NLL" in out and "Full" in out


def test_eval_stream_mismatch_is_data_error(small_corpus_file, toy_checkpoint, capsys):
    code = dispatch(
        ["eval", str(small_corpus_file), "--checkpoint", str(toy_checkpoint),
         "--streams", "SB"]
    )
    assert code == EXIT_DATA
    assert "streams" in capsys.readouterr().err


def test_eval_bad_checkpoint(small_corpus_file, tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    code = dispatch(["eval", str(small_corpus_file), "--checkpoint", str(bad)])
    assert code == EXIT_DATA
    capsys.readouterr()


def test_sample_writes_midi_and_manifest(toy_checkpoint, tmp_path, capsys):
    out = tmp_path / "score.mid"
    code = dispatch(
        ["sample", "--checkpoint", str(toy_checkpoint), "--out", str(out),
         "--max-tokens", "40", "--constrain", "--chord-markers"]
    )
    assert code == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["kind_violations"] == 0
    assert out.read_bytes().startswith(b"MThd")
    manifest = json.loads((tmp_path / "score.mid.manifest.json").read_text())
    assert manifest["flags"]["seed"] == 0


def test_sample_is_deterministic(toy_checkpoint, tmp_path, capsys):
    blobs = []
    for name in ("a.mid", "b.mid"):
        out = tmp_path / name
        assert dispatch(
            ["sample", "--checkpoint", str(toy_checkpoint), "--out", str(out),
             "--max-tokens", "40", "--seed", "9"]
        ) == EXIT_OK
        blobs.append(out.read_bytes())
    capsys.readouterr()
    assert blobs[0] == blobs[1]


def test_console_entry_point_matches_dispatch():
    import importlib.metadata as md

    entry = [e for e in md.entry_points(group="console_scripts") if e.name == "tonicnet"]
    assert entry and entry[0].value == "tonicnet.cli:main"
    assert callable(cli.main)
