import csv
import json
import wave

import numpy as np
import pytest

from aquamodem import cli, corruption, phy, wavio
from aquamodem.fec import CodingMode


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_encode_decode_loopback(tmp_path, capsys):
    wav = tmp_path / "msg.wav"
    assert run("encode", "Tank at 1500 psi, OK?", "-o", wav) == cli.EXIT_OK
    sent = capsys.readouterr().out.strip()
    assert sent == "tank at one thousand five hundred psi, ok?"
    assert run("decode", wav) == cli.EXIT_OK
    out = capsys.readouterr()
    assert out.out.strip() == sent
    diag = json.loads(out.err.strip().splitlines()[-1])
    assert diag["mode"] == "cr3" and diag["corrected_codewords"] == 0


def test_wav_format(tmp_path):
    wav = tmp_path / "sos.wav"
    run("encode", "sos", "-o", wav, "--padding", 0, "--mode", "cr0")
    with wave.open(str(wav)) as w:
        assert (w.getnchannels(), w.getsampwidth(), w.getframerate()) == (1, 2, 48000)
        n = w.getnframes()
    assert abs(n - phy.plan_frame(15, CodingMode.CR0).n_samples(phy.DEFAULT_PARAMS)) <= 1
    x, _ = wavio.read_wav(wav)
    assert np.max(np.abs(x)) == pytest.approx(wavio.FULL_SCALE, abs=1e-4)


@pytest.mark.filterwarnings("ignore:dropped unsupported")
def test_empty_text_is_usage_error(tmp_path):
    assert run("encode", "", "-o", tmp_path / "x.wav") == cli.EXIT_USAGE
    assert run("encode", "###", "-o", tmp_path / "x.wav") == cli.EXIT_USAGE


def test_bad_flags_are_usage_errors(tmp_path):
    assert run("encode", "hi", "-o", tmp_path / "x.wav", "--mode", "cr7") == cli.EXIT_USAGE
    assert run("encode", "hi", "-o", tmp_path / "x.wav", "--fs", "8000") == cli.EXIT_USAGE
    assert run("frobnicate") == cli.EXIT_USAGE
    assert run("--version") == cli.EXIT_OK
    assert run("distance-sweep", "-o", tmp_path / "r.csv", "--trials", 0) == cli.EXIT_USAGE


def test_silence_is_decode_failure(tmp_path):
    wav = tmp_path / "quiet.wav"
    wavio.write_wav(wav, np.zeros(48000), 48000)
    assert run("decode", wav) == cli.EXIT_DECODE


def test_io_errors(tmp_path):
    assert run("decode", tmp_path / "missing.wav") == cli.EXIT_IO
    eight_bit = tmp_path / "u8.wav"
    with wave.open(str(eight_bit), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(1)
        w.setframerate(48000)
        w.writeframes(bytes(1000))
    assert run("decode", eight_bit) == cli.EXIT_IO
    assert run("gen-corpus", "-o", tmp_path / "no" / "such" / "dir.jsonl") == cli.EXIT_IO


def test_wrong_sample_rate(tmp_path):
    wav = tmp_path / "slow.wav"
    wavio.write_wav(wav, np.zeros(4410), 44100)
    assert run("decode", wav) == cli.EXIT_USAGE


def test_channel_degraded_file_at_20m(tmp_path, capsys):
    text = "air at seven hundred psi, returning to the boat now"
    errors = bits = 0
    for seed in range(5):
        wav = tmp_path / f"ch{seed}.wav"
        assert run("encode", text, "-o", wav, "--distance", 20, "--seed", seed) == cli.EXIT_OK
        capsys.readouterr()
        assert run("decode", wav, "--reference", text) == cli.EXIT_OK
        diag = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        errors += diag["bit_errors"]
        bits += 5 * len(text)
    assert errors / bits < 0.03


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\nmode = cr0\nseed = 4\n[channel]\ndrift_ppm = 0\n")
    wav = tmp_path / "c.wav"
    run("encode", "hi", "-o", wav, "--config", cfg)
    capsys.readouterr()
    run("decode", wav)
    assert json.loads(capsys.readouterr().err.splitlines()[-1])["mode"] == "cr0"
    run("encode", "hi", "-o", wav, "--config", cfg, "--mode", "cr3")
    capsys.readouterr()
    run("decode", wav)
    assert json.loads(capsys.readouterr().err.splitlines()[-1])["mode"] == "cr3"
    bad = tmp_path / "bad.ini"
    bad.write_text("this is not ini")
    assert run("encode", "hi", "-o", wav, "--config", bad) == cli.EXIT_USAGE


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_distance_sweep_near_point(tmp_path):
    out = tmp_path / "sweep.csv"
    assert run("distance-sweep", "--distance", 5, "--trials", 5, "-o", out) == cli.EXIT_OK
    (row,) = _rows(out)
    assert float(row["ber_measured"]) == 0.0 and float(row["mean_similarity"]) == 1.0
    side = json.loads(out.with_suffix(".json").read_text())
    assert side["seed"] == 0 and side["config"]["trials"] == 5 and "version" in side


def test_ablation_zero_ber_row(tmp_path):
    out = tmp_path / "abl.csv"
    assert run("ablation", "--bers", "0,0.05", "--trials", 20, "-o", out) == cli.EXIT_OK
    rows = _rows(out)
    assert len(rows) == 2 * 2 * 2 * 2
    zero = [r for r in rows if float(r["ber"]) == 0.0]
    assert all(float(r["mean_similarity"]) == 1.0 and float(r["cer"]) == 0.0 for r in zero)


def test_gen_corpus(tmp_path):
    out = tmp_path / "c.jsonl"
    assert run("gen-corpus", "--grid", "0:0.2:0.05", "--count", 3, "-o", out) == cli.EXIT_OK
    recs = corruption.read_corpus(out)
    assert len(recs) == 100 * 5 * 3
    for ber in (0.05, 0.1, 0.15, 0.2):
        bucket = [r for r in recs if r.ber == ber]
        rate = corruption.realized_flip_rate([r.original for r in bucket], [r.corrupted for r in bucket])
        assert rate == pytest.approx(ber, abs=0.01)


def test_floats_parser():
    assert cli._floats("5,10,15") == [5.0, 10.0, 15.0]
    assert cli._floats("0:0.2:0.05") == [0.0, 0.05, 0.1, 0.15, 0.2]
    assert len(cli._floats("0:0.2:0.01")) == 21
