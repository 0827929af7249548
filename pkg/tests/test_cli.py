"""End-to-end command-line tests on tiny corpora and the micro preset."""

import hashlib
import json
import math
from pathlib import Path

import pytest

from dpcse.cli import main
from dpcse.config import preset, to_flat
from dpcse.data import Manifest, load_wav
from dpcse.metrics import MetricReport
from dpcse.model import SpeechEnhancer


def run_cli(*argv, capsys):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def file_hashes(root):
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(Path(root).rglob("*")) if p.is_file()}


# -- shared fixtures ----------------------------------------------------------

@pytest.fixture(scope="module")
def train_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_train_corpus")
    code = main(["synth-data", "--n", "8", "--seed", "7",
                 "--out", str(out), "--seconds", "0.6"])
    assert code == 0
    return out / "train_manifest.jsonl"


@pytest.fixture(scope="module")
def eval_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_eval_corpus")
    code = main(["synth-data", "--n", "3", "--seed", "21", "--split", "test",
                 "--out", str(out), "--seconds", "1.0"])
    assert code == 0
    return out / "test_manifest.jsonl"


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory, train_corpus):
    out = tmp_path_factory.mktemp("cli_trained_run")
    code = main(["train", "--preset", "micro", "--set", "train.epochs=2",
                 "--train-manifest", str(train_corpus), "--out", str(out)])
    assert code == 0
    return out


# -- synth-data ---------------------------------------------------------------

def test_synth_data_writes_manifest(tmp_path, capsys):
    out = tmp_path / "corpus"
    code, stdout, _ = run_cli("synth-data", "--n", "8", "--seed", "7",
                              "--out", str(out), capsys=capsys)
    assert code == 0
    manifest_path = Path(stdout.strip())
    assert manifest_path.exists()
    manifest = Manifest.load(manifest_path)
    assert len(manifest) == 8
    assert all(r.split == "train" for r in manifest.records)


def test_synth_data_reruns_bit_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        code, _, _ = run_cli("synth-data", "--n", "4", "--seed", "3",
                             "--out", str(out), "--seconds", "0.5",
                             capsys=capsys)
        assert code == 0
    assert file_hashes(a) == file_hashes(b)


def test_synth_data_missing_out_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["synth-data", "--n", "8"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["synth-data", "--n", "8", "--out", "d", "--turbo"])
    assert exc.value.code == 2


def test_unknown_command_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["transmogrify"])
    assert exc.value.code == 2


def test_bad_override_exits_2(train_corpus, tmp_path, capsys):
    code, _, err = run_cli("train", "--preset", "micro",
                           "--set", "train.epochs", "--train-manifest",
                           str(train_corpus), "--out", str(tmp_path),
                           capsys=capsys)
    assert code == 2
    assert "key=value" in err


def test_unknown_config_key_exits_2(train_corpus, tmp_path, capsys):
    code, _, err = run_cli("train", "--preset", "micro",
                           "--set", "model.bogus=1", "--train-manifest",
                           str(train_corpus), "--out", str(tmp_path),
                           capsys=capsys)
    assert code == 2
    assert "unknown config key" in err


# -- train ----------------------------------------------------------------------

def test_train_smoke_writes_checkpoints(trained_run, capsys):
    ckpts = sorted(p.name for p in trained_run.glob("*.ckpt"))
    assert ckpts == ["best.ckpt", "epoch_000.ckpt", "epoch_001.ckpt"]
    log = trained_run / "train_log.jsonl"
    rows = [json.loads(line) for line in log.read_text().splitlines()]
    assert any("val_loss" in r for r in rows)
    assert any("loss" in r for r in rows)


def test_train_missing_manifest_exits_1(tmp_path, capsys):
    code, _, err = run_cli("train", "--preset", "micro",
                           "--train-manifest", str(tmp_path / "nope.jsonl"),
                           "--out", str(tmp_path / "run"), capsys=capsys)
    assert code == 1
    assert "error" in err


def test_train_resume_continues_numbering(train_corpus, tmp_path, capsys):
    run = tmp_path / "run"
    code, _, _ = run_cli("train", "--preset", "micro",
                         "--set", "train.epochs=1",
                         "--train-manifest", str(train_corpus),
                         "--out", str(run), capsys=capsys)
    assert code == 0
    assert (run / "epoch_000.ckpt").exists()
    code, _, _ = run_cli("train", "--preset", "micro",
                         "--set", "train.epochs=2",
                         "--train-manifest", str(train_corpus),
                         "--out", str(run),
                         "--resume", str(run / "epoch_000.ckpt"),
                         capsys=capsys)
    assert code == 0
    assert (run / "epoch_001.ckpt").exists()


# -- enhance ----------------------------------------------------------------------

def test_enhance_single_wav(trained_run, train_corpus, tmp_path, capsys):
    wav_in = sorted(train_corpus.parent.glob("wav/*_clean.wav"))[0]
    out = tmp_path / "enh"
    code, stdout, _ = run_cli("enhance", "--ckpt",
                              str(trained_run / "best.ckpt"),
                              "--in", str(wav_in), "--out", str(out),
                              capsys=capsys)
    assert code == 0
    produced = out / f"{wav_in.stem}_enhanced.wav"
    assert produced.exists()
    original = load_wav(wav_in)
    enhanced = load_wav(produced)
    assert len(enhanced.samples) == len(original.samples)
    assert enhanced.sample_rate == 16000


def test_enhance_save_noise(trained_run, train_corpus, tmp_path, capsys):
    wav_in = sorted(train_corpus.parent.glob("wav/*_clean.wav"))[0]
    out = tmp_path / "enh"
    code, _, _ = run_cli("enhance", "--ckpt", str(trained_run / "best.ckpt"),
                         "--in", str(wav_in), "--out", str(out),
                         "--save-noise", capsys=capsys)
    assert code == 0
    assert (out / f"{wav_in.stem}_enhanced.wav").exists()
    assert (out / f"{wav_in.stem}_noise.wav").exists()


def test_enhance_manifest_and_determinism(trained_run, eval_corpus, tmp_path,
                                          capsys):
    outs = []
    for name in ("e1", "e2"):
        out = tmp_path / name
        code, _, _ = run_cli("enhance", "--ckpt",
                             str(trained_run / "best.ckpt"),
                             "--in", str(eval_corpus), "--out", str(out),
                             capsys=capsys)
        assert code == 0
        outs.append(out)
    manifest = Manifest.load(eval_corpus)
    names = {p.name for p in outs[0].glob("*.wav")}
    assert names == {f"{r.id}_enhanced.wav" for r in manifest.records}
    assert file_hashes(outs[0]) == file_hashes(outs[1])


def test_enhance_config_mismatch_names_fields(trained_run, train_corpus,
                                              tmp_path, capsys):
    wav_in = sorted(train_corpus.parent.glob("wav/*_clean.wav"))[0]
    code, _, err = run_cli("enhance", "--preset", "desk", "--ckpt",
                           str(trained_run / "best.ckpt"),
                           "--in", str(wav_in), "--out", str(tmp_path / "x"),
                           capsys=capsys)
    assert code == 1
    assert "mismatch" in err
    assert "model.enc_channels" in err
    assert "checkpoint=8" in err and "requested=32" in err


def test_enhance_matching_config_flags_ok(trained_run, train_corpus, tmp_path,
                                          capsys):
    wav_in = sorted(train_corpus.parent.glob("wav/*_clean.wav"))[0]
    code, _, _ = run_cli("enhance", "--preset", "micro", "--ckpt",
                         str(trained_run / "best.ckpt"),
                         "--in", str(wav_in), "--out", str(tmp_path / "x"),
                         capsys=capsys)
    assert code == 0


def test_enhance_missing_checkpoint_exits_1(train_corpus, tmp_path, capsys):
    wav_in = sorted(train_corpus.parent.glob("wav/*_clean.wav"))[0]
    code, _, err = run_cli("enhance", "--ckpt", str(tmp_path / "gone.ckpt"),
                           "--in", str(wav_in), "--out", str(tmp_path / "x"),
                           capsys=capsys)
    assert code == 1


# -- evaluate ----------------------------------------------------------------------

def test_evaluate_oracle(eval_corpus, tmp_path, capsys):
    report_path = tmp_path / "oracle.jsonl"
    code, stdout, _ = run_cli("evaluate", "--oracle",
                              "--manifest", str(eval_corpus),
                              "--report", str(report_path), capsys=capsys)
    assert code == 0
    lines = report_path.read_text().splitlines()
    manifest = Manifest.load(eval_corpus)
    assert len(lines) == len(manifest) + 1  # rows plus summary
    rows = [json.loads(line) for line in lines[:-1]]
    for row in rows:
        assert row["si_sdr_out"] == "perfect"
        assert row["snr_out"] == "perfect"
        assert row["stoi_out"] >= 0.999
    summary = json.loads(stdout.strip().splitlines()[-1])
    assert summary["summary"] is True
    assert summary["count"] == len(manifest)
    assert summary["finite_si_sdr_out"] == 0


def test_evaluate_trained_model(trained_run, eval_corpus, tmp_path, capsys):
    report_path = tmp_path / "model.jsonl"
    code, stdout, _ = run_cli("evaluate", "--ckpt",
                              str(trained_run / "best.ckpt"),
                              "--manifest", str(eval_corpus),
                              "--report", str(report_path), capsys=capsys)
    assert code == 0
    report = MetricReport.read(report_path)
    manifest = Manifest.load(eval_corpus)
    assert len(report.rows) == len(manifest)
    assert {r.id for r in report.rows} == {r.id for r in manifest.records}
    for row in report.rows:
        assert math.isfinite(row.si_sdr_out)
        assert 0.0 <= row.stoi_out <= 1.0
    printed = json.loads(stdout.strip().splitlines()[-1])
    assert printed == json.loads(json.dumps(report.summary()))


def test_evaluate_report_determinism(trained_run, eval_corpus, tmp_path,
                                     capsys):
    paths = []
    for name in ("r1.jsonl", "r2.jsonl"):
        p = tmp_path / name
        code, _, _ = run_cli("evaluate", "--ckpt",
                             str(trained_run / "best.ckpt"),
                             "--manifest", str(eval_corpus),
                             "--report", str(p), capsys=capsys)
        assert code == 0
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_evaluate_needs_ckpt_or_oracle(eval_corpus, tmp_path, capsys):
    code, _, err = run_cli("evaluate", "--manifest", str(eval_corpus),
                           "--report", str(tmp_path / "r.jsonl"),
                           capsys=capsys)
    assert code == 1
    assert "--ckpt" in err


# -- inspect ----------------------------------------------------------------------

def test_inspect_micro_counts_and_geometry(capsys):
    code, out, _ = run_cli("inspect", "--preset", "micro", capsys=capsys)
    assert code == 0
    expected = SpeechEnhancer(preset("micro").model).param_breakdown()
    assert f"{expected['total']:,}" in out
    for section in ("encoder", "enhancement", "decoder"):
        assert section in out
    assert "65 bins" in out
    assert "249 frames" in out
    assert "model.enc_channels = 8" in out


def test_inspect_full_geometry(capsys):
    code, out, _ = run_cli("inspect", "--preset", "full", capsys=capsys)
    assert code == 0
    assert "257 bins" in out
    assert "157 frames" in out


def test_inspect_checkpoint_echoes_training_config(trained_run, capsys):
    code, out, _ = run_cli("inspect", "--ckpt",
                           str(trained_run / "best.ckpt"), capsys=capsys)
    assert code == 0
    assert "train.epochs = 2" in out
    expected = SpeechEnhancer(preset("micro").model).param_breakdown()
    assert f"{expected['total']:,}" in out


def test_inspect_echo_matches_flat_config(capsys):
    code, out, _ = run_cli("inspect", "--preset", "desk", capsys=capsys)
    assert code == 0
    for key, value in to_flat(preset("desk")).items():
        assert f"{key} = {value}" in out
