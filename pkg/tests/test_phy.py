import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aquamodem import fec, phy
from aquamodem.fec import CodingMode
from aquamodem.phy import DEFAULT_PARAMS as P
from aquamodem.phy import ModulationParams


def test_rate_arithmetic():
    assert P.n_chips == 32
    assert P.symbol_duration == 0.016
    assert P.bit_rate == 312.5
    assert P.samples_per_symbol == 768


def test_params_validation():
    with pytest.raises(ValueError):
        ModulationParams(fs=16000.0)  # below 2 * (fc + bw / 2)
    with pytest.raises(ValueError):
        ModulationParams(sf=0)


def test_symbol_waveform_basics():
    x = phy.modulate_symbol(0)
    assert x.shape == (768,)
    assert np.max(np.abs(x)) <= 1.0
    with pytest.raises(fec.IndexOutOfRange):
        phy.modulate_symbol(32)


def test_base_chirp_frequency_sweep():
    """k=0 sweeps fc - bw/2 to fc + bw/2 once: instantaneous phase slope of the baseband."""
    up = phy.chirp_bank(P).up[0]
    f = np.diff(np.unwrap(np.angle(up))) * P.fs / (2 * np.pi)
    assert f[0] == pytest.approx(-P.bw / 2, abs=5)
    assert f[-1] == pytest.approx(P.bw / 2, abs=5)
    assert np.all(np.diff(f) > 0)


def test_shifted_symbol_is_cyclic_shift_of_base():
    up = phy.chirp_bank(P).up
    spc = int(P.samples_per_chip)
    for k in (1, 7, 31):
        shifted = np.roll(up[0], -k * spc)
        # equal up to a constant phase
        ratio = up[k] / shifted
        assert np.allclose(ratio, ratio[0], atol=1e-9)


def test_modulate_symbols_matches_single_symbols():
    idx = [3, 0, 31, 17]
    x = phy.modulate_symbols(idx)
    for i, k in enumerate(idx):
        assert np.allclose(x[i * 768 : (i + 1) * 768], phy.modulate_symbol(k))


@pytest.mark.parametrize("k", range(32))
def test_symbol_loopback(k):
    res = phy.demodulate_symbol(phy.modulate_symbol(k))
    assert res.symbol_index == k
    assert res.confidence >= 1


def test_orthogonality_margin():
    bank = phy.chirp_bank(P)
    for k in range(32):
        mag = phy.folded_spectrum(phy.to_baseband(phy.modulate_symbol(k), P)[None, :], bank.down, P.n_chips)[0]
        order = np.argsort(mag)
        assert order[-1] == k
        assert 20 * np.log10(mag[order[-1]] / mag[order[-2]]) >= 6.0


def test_segment_length_checked():
    with pytest.raises(phy.SegmentLengthMismatch):
        phy.demodulate_symbol(np.zeros(700))


def _awgn(x, snr_db, rng):
    from aquamodem import channel

    sigma = np.sqrt(channel.noise_variance_for_snr(np.mean(x**2), snr_db, P.fs, P.bw))
    return x + rng.normal(0, sigma, x.size)


def test_high_snr_symbol_error_rate():
    rng = np.random.default_rng(0)
    idx = rng.integers(0, 32, 10_000)
    y = _awgn(phy.modulate_symbols(idx), 20.0, rng)
    got, _ = phy.demodulate_windows(phy.to_baseband(y, P).reshape(idx.size, -1), P)
    assert np.mean(got != idx) < 1e-3


def test_noise_gives_low_confidence():
    rng = np.random.default_rng(1)
    clean = phy.demodulate_symbol(phy.modulate_symbol(5)).confidence
    noise = [phy.demodulate_symbol(rng.normal(0, 1, 768)).confidence for _ in range(200)]
    assert max(noise) < clean / 3


def test_strided_windows_match_full_rate():
    rng = np.random.default_rng(2)
    idx = rng.integers(0, 32, 500)
    bb = phy.to_baseband(_awgn(phy.modulate_symbols(idx), -3.0, rng), P).reshape(idx.size, -1)
    q = phy.window_stride(P)
    assert q > 1 and 768 % q == 0
    full, _ = phy.demodulate_windows(bb, P)
    strided, _ = phy.demodulate_windows(bb[:, ::q], P, q)
    assert np.mean(full != strided) < 0.01


def test_baseband_decimated_matches_full():
    x = np.random.default_rng(3).normal(size=5000)
    full = phy.to_baseband(x, P, start=48)
    dec = phy.to_baseband_decimated(x, P, start=48, q=12)
    assert np.allclose(dec, full[::12], atol=1e-9)


def test_baseband_start_sets_oscillator_phase():
    x = phy.modulate_symbols([4, 9])
    whole = phy.to_baseband(x, P)
    part = phy.to_baseband(x[768:], P, start=768)
    assert np.allclose(whole[768 + 200 : 1536 - 200], part[200:-200], atol=1e-6)


# ---------------------------------------------------------------------------
# framing


def test_empty_payload_is_preamble_and_header():
    plan = phy.plan_frame(0, CodingMode.CR0)
    x = phy.frame(np.zeros(0, dtype=np.uint8), P, plan)
    assert plan.payload_symbol_count == 0
    assert x.size == (plan.preamble_symbols + plan.header_symbols) * 768


def test_nine_data_symbols_get_three_training_symbols():
    plan = phy.plan_frame(45, CodingMode.CR0)
    assert plan.payload_symbol_count == 9
    assert plan.training_symbol_count == 3
    assert plan.payload_layout.tolist() == [False, False, False, True] * 3


@given(st.integers(0, 3000))
def test_training_cadence(d_bits):
    plan = phy.plan_frame(d_bits, CodingMode.CR0)
    layout = plan.payload_layout
    d = plan.payload_symbol_count
    assert layout.sum() == d // 3
    assert (~layout).sum() == d
    # every training symbol follows exactly three data symbols
    runs = np.diff(np.flatnonzero(np.concatenate([[True], layout])))
    assert np.all(runs == 4)


@pytest.mark.parametrize("n_chars", [1, 3, 10, 77])
def test_cr0_frame_duration(n_chars):
    plan = phy.plan_frame(5 * n_chars, CodingMode.CR0)
    d = n_chars  # 5 bits per char, 5 bits per symbol
    symbols = 8 + plan.header_symbols + d + d // 3
    assert plan.total_symbols == symbols
    assert plan.duration(P) == pytest.approx(symbols * 0.016)
    assert phy.frame(np.zeros(5 * n_chars, dtype=np.uint8), P, plan).size == symbols * 768


def test_header_layout():
    # 32-bit word, Hamming-coded to 56 bits, at 3 bits per chirp
    assert phy.HEADER_CODED_BITS == 56
    assert phy.plan_frame(0).header_symbols == 19


@given(st.integers(0, phy.MAX_PAYLOAD_BITS), st.sampled_from(list(CodingMode)))
def test_header_round_trip(n_bits, mode):
    plan = phy.plan_frame(n_bits, mode)
    assert phy.parse_header(phy.header_symbols(plan)) == plan


def test_header_tolerates_one_chip_errors():
    plan = phy.plan_frame(1234, CodingMode.CR3)
    idx = phy.header_symbols(plan)
    rng = np.random.default_rng(4)
    noisy = (idx + rng.choice([-1, 0, 1], idx.size)) % 32
    assert phy.parse_header(noisy) == plan


def test_garbage_header_rejected():
    rng = np.random.default_rng(5)
    failures = 0
    for _ in range(200):
        try:
            phy.parse_header(rng.integers(0, 32, 19))
        except phy.HeaderDecodeFailed:
            failures += 1
    assert failures > 190


def test_gray_applies_to_symbols_only_in_cr3():
    bits = np.array([0, 0, 0, 1, 1], dtype=np.uint8)  # value 3
    assert phy.bits_to_symbols(bits, 5, gray=False).tolist() == [3]
    assert phy.bits_to_symbols(bits, 5, gray=True).tolist() == [fec.gray_unmap(3)]
    # a one-chip demodulation slip in CR3 costs a single bit
    sym = phy.bits_to_symbols(bits, 5, gray=True)
    assert np.sum(phy.symbols_to_bits(sym + 1, 5, gray=True) != bits) == 1


def test_frame_rejects_wrong_coded_length():
    plan = phy.plan_frame(20, CodingMode.CR3)
    with pytest.raises(fec.LengthMismatch):
        phy.frame(np.zeros(20, dtype=np.uint8), P, plan)


def test_preamble_layout():
    pre = phy.preamble()
    assert pre.size == 8 * 768
    bank = phy.chirp_bank(P)
    assert np.allclose(pre[6 * 768 : 7 * 768], bank.passband(bank.down))
