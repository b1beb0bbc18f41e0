import json

import numpy as np
import pytest

from aquamodem import experiments, recovery, textcodec, wavio
from aquamodem.fec import CodingMode
from aquamodem.seeding import rng_for

from oracles import cer_cr0, cer_cr3

MSGS = experiments.load_messages()


def test_bundled_messages():
    assert len(MSGS) == 100
    for text, purpose in MSGS:
        assert textcodec.normalize_message(text) == text
    assert len({p for _, p in MSGS}) == 8


def test_mean_ci():
    m, lo, hi = experiments.mean_ci([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5 and lo < m < hi
    assert experiments.mean_ci([5.0]) == (5.0, 5.0, 5.0)


def test_oracle_sanity():
    assert cer_cr3(0.0, 10) == 0.0
    assert cer_cr0(0.01) == pytest.approx(0.049, abs=1e-3)
    # at small p a character fails mainly through a double error in a codeword it touches
    assert cer_cr3(0.01, 36) < cer_cr0(0.01) / 10


@pytest.mark.parametrize("ber", [0.02, 0.08, 0.15])
def test_residual_cer_matches_oracle(ber):
    trials = 3000
    rows = {CodingMode.CR0: [], CodingMode.CR3: []}
    expected = {CodingMode.CR0: [], CodingMode.CR3: []}
    for t in range(trials):
        text, _ = MSGS[t % len(MSGS)]
        idx = textcodec.text_to_indices(text)
        for mode in rows:
            got = experiments.residual_indices(idx, ber, mode, rng_for(0, t, int(mode is CodingMode.CR3)))
            rows[mode].append(np.mean(got != idx))
        expected[CodingMode.CR0].append(cer_cr0(ber))
        expected[CodingMode.CR3].append(cer_cr3(ber, len(text)))
    for mode in rows:
        m, lo, hi = experiments.mean_ci(rows[mode])
        assert lo - 0.002 <= np.mean(expected[mode]) <= hi + 0.002


def test_ablation_report(tmp_path):
    rep = experiments.ablation(MSGS, [0.0, 0.03], trials=30, seed=1)
    assert len(rep.rows) == 2 * 2 * 2 * 2
    for r in rep.rows:
        assert 0 <= r["cer"] <= 1 and 0 <= r["mean_similarity"] <= 1 and 0 <= r["success_rate"] <= 1
        assert r["cer_ci_low"] <= r["cer"] <= r["cer_ci_high"]
    path = rep.write(tmp_path / "abl.csv")
    side = json.loads(path.with_suffix(".json").read_text())
    assert side["name"] == "ablation" and side["seed"] == 1
    again = experiments.ablation(MSGS, [0.0, 0.03], trials=30, seed=1)
    assert again.rows == rep.rows


def test_separator_flag_changes_nothing_but_spaces():
    rep = experiments.ablation(MSGS, [0.05], trials=200, seed=2, modes=[CodingMode.CR0], recoverers={"identity": recovery.IdentityRecoverer()})
    off, on = rep.rows
    assert not off["protect_separators"] and on["protect_separators"]
    assert on["cer"] <= off["cer"]


def test_distance_sweep_report(tmp_path):
    rep = experiments.distance_sweep(MSGS[:3], [5.0], trials=3, seed=3)
    (row,) = rep.rows
    assert row["bits"] == sum(5 * len(t) for t, _ in MSGS[:3])
    assert row["bit_errors"] == 0 and row["frames_lost"] == 0
    with pytest.raises(ValueError):
        experiments.distance_sweep(MSGS, [], trials=1)


def test_simulate_link_counts_lost_frames():
    from aquamodem.channel import ChannelParams

    res = experiments.simulate_link("hello there", ChannelParams(distance=5000.0, seed=1))
    assert res.lost and res.bit_errors == res.bits == 55 and res.received_text == ""


def test_drift_experiment_shape():
    res = experiments.drift_experiment(400.0, 10.0, frames=3, data_symbols=120, seed=4)
    assert res.bits == 3 * 600
    assert res.errors_equalized == 0
    assert res.ber_unequalized > 0.1


def test_report_is_byte_stable(tmp_path):
    rep = experiments.ExperimentReport("x", {"b": 1, "a": [0.1, 0.2]}, [{"k": 0.5, "n": 3}], 7)
    p1 = rep.write(tmp_path / "one.csv")
    p2 = rep.write(tmp_path / "two.csv")
    assert (tmp_path / "one.csv").read_bytes() == (tmp_path / "two.csv").read_bytes()
    assert p1.read_bytes() == p2.read_bytes()


# ---------------------------------------------------------------------------
# wav files


def test_wav_round_trip(tmp_path):
    x = np.sin(np.linspace(0, 100, 4800))
    wavio.write_wav(tmp_path / "a.wav", x, 48000, normalize=False)
    y, fs = wavio.read_wav(tmp_path / "a.wav")
    assert fs == 48000 and np.max(np.abs(y - x)) < 1 / 32767


def test_wav_normalizes_and_clips(tmp_path):
    wavio.write_wav(tmp_path / "n.wav", np.array([0.0, 3.0, -1.5]), 48000)
    y, _ = wavio.read_wav(tmp_path / "n.wav")
    assert np.max(np.abs(y)) == pytest.approx(0.9, abs=1e-4)
    wavio.write_wav(tmp_path / "c.wav", np.array([0.0, 3.0, -1.5]), 48000, normalize=False)
    y, _ = wavio.read_wav(tmp_path / "c.wav")
    assert y.max() == pytest.approx(1.0, abs=1e-4) and y.min() == pytest.approx(-1.0, abs=1e-4)
