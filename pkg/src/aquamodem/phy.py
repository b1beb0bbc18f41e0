"""Chirp spread spectrum modulation and frame construction.

A frame is laid out as::

    6 up-chirps | 2 down-chirps | header | data, with a training symbol
    (index 0) after every third data symbol

The header carries only ``sf - 2`` bits per chirp, on indices that are
multiples of four, so it survives timing slips of a chip and noise a little
stronger than the payload can take. At the default SF 5 it is 19 symbols.

Waveforms are real passband sample arrays in [-1, 1]; the carrier phase is
referenced to the first sample of the array.
"""

from __future__ import annotations

import zlib
from fractions import Fraction
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import signal

from aquamodem import fec
from aquamodem.fec import CodingMode

PREAMBLE_UP = 6
PREAMBLE_DOWN = 2
TRAINING_CADENCE = 3
TRAINING_INDEX = 0
HEADER_BITS = 32
HEADER_INTERLEAVER = fec.InterleaverConfig(rows=HEADER_BITS // fec.DATA_BITS, cols=fec.CODEWORD_BITS)
MAX_PAYLOAD_BITS = (1 << 20) - 1
HEADER_CODED_BITS = HEADER_BITS * fec.CODEWORD_BITS // fec.DATA_BITS
_MODE_CODES = {CodingMode.CR0: 0, CodingMode.CR3: 3}


def header_bits_per_symbol(sf: int) -> int:
    return max(1, sf - 2)


class PhyError(ValueError):
    pass


class HeaderDecodeFailed(PhyError):
    pass


class SegmentLengthMismatch(PhyError):
    pass


@dataclass(frozen=True)
class ModulationParams:
    sf: int = 5
    bw: float = 2000.0
    fc: float = 11000.0
    fs: float = 48000.0

    def __post_init__(self):
        if not 1 <= self.sf <= 12:
            raise ValueError(f"sf must be in [1, 12], got {self.sf}")
        if self.fs < 2 * (self.fc + self.bw / 2):
            raise ValueError("fs must be at least 2 * (fc + bw / 2)")
        spc = self.fs * self.n_chips / self.bw
        if abs(spc - round(spc)) > 1e-9:
            raise ValueError("fs * 2**sf / bw must be an integer number of samples")

    @property
    def n_chips(self) -> int:
        return 1 << self.sf

    @property
    def symbol_duration(self) -> float:
        return self.n_chips / self.bw

    @property
    def samples_per_symbol(self) -> int:
        return round(self.fs * self.n_chips / self.bw)

    @property
    def samples_per_chip(self) -> float:
        return self.fs / self.bw

    @property
    def bit_rate(self) -> float:
        """Raw (uncoded, no framing) bits per second."""
        return self.sf / self.symbol_duration


DEFAULT_PARAMS = ModulationParams()


# ---------------------------------------------------------------------------
# chirps


class ChirpBank:
    """Baseband chirp tables for one parameter set."""

    def __init__(self, params: ModulationParams):
        self.params = params
        n, m = params.n_chips, params.samples_per_symbol
        t = np.arange(m) / params.fs
        T = params.symbol_duration
        bw = params.bw
        k = np.arange(n)[:, None]
        # Instantaneous frequency starts at -bw/2 + k*bw/n, rises at bw/T and
        # wraps down by bw once it passes +bw/2.
        t_wrap = (1 - k / n) * T
        phase = (-bw / 2 + bw * k / n) * t + bw * t**2 / (2 * T)
        phase = phase - bw * np.clip(t - t_wrap, 0, None)
        self.up = np.exp(2j * np.pi * phase)  # (n, m)
        self.down = np.conj(self.up[0])
        self._carrier = np.exp(2j * np.pi * params.fc * t)
        # When the carrier period divides the symbol length every symbol
        # starts at the same carrier phase, so passband symbols can be tabled
        # (rows 0..n-1 up-chirps, row n the down-chirp).
        lo = _lo_period(params)
        self.passband_rows = None
        if lo is not None and m % len(lo) == 0:
            carrier = np.conj(np.resize(lo, m))
            self.passband_rows = np.real(np.vstack([self.up, self.down]) * carrier)

    def passband(self, baseband: np.ndarray) -> np.ndarray:
        return np.real(baseband * self._carrier)


_BANKS: dict[ModulationParams, ChirpBank] = {}


def chirp_bank(params: ModulationParams) -> ChirpBank:
    bank = _BANKS.get(params)
    if bank is None:
        bank = _BANKS[params] = ChirpBank(params)
    return bank


def modulate_symbol(k: int, params: ModulationParams = DEFAULT_PARAMS) -> np.ndarray:
    """One symbol of up-chirp cyclically shifted by ``k / 2**sf`` of its duration."""
    if not 0 <= k < params.n_chips:
        raise fec.IndexOutOfRange(f"symbol {k} outside [0, {params.n_chips})")
    bank = chirp_bank(params)
    return bank.passband(bank.up[k])


def modulate_symbols(indices, params: ModulationParams = DEFAULT_PARAMS, down=None) -> np.ndarray:
    """Concatenate chirps for ``indices``; entries flagged in ``down`` become down-chirps."""
    idx = np.asarray(indices, dtype=np.int64)
    if np.any((idx < 0) | (idx >= params.n_chips)):
        raise fec.IndexOutOfRange("symbol index out of range")
    bank = chirp_bank(params)
    if bank.passband_rows is not None:
        if down is not None:
            idx = np.where(np.asarray(down, dtype=bool), params.n_chips, idx)
        return bank.passband_rows[idx].reshape(-1)
    base = bank.up[idx]
    if down is not None:
        base[np.asarray(down, dtype=bool)] = bank.down
    # fc * T is not necessarily an integer, so the carrier runs on a global clock.
    carrier = np.conj(_local_oscillator(params, 0, idx.size * params.samples_per_symbol))
    return np.real(base.reshape(-1) * carrier)


def to_baseband(x: np.ndarray, params: ModulationParams, start: int = 0, dtype=np.complex128) -> np.ndarray:
    """Mix a real passband array down by fc and keep only the chirp band.

    ``start`` is the absolute sample index of ``x[0]``, which fixes the phase
    of the local oscillator. ``dtype=np.complex64`` halves the cost for long
    captures at a precision far below any realistic noise floor. Without the low-pass, dechirping would fold noise
    from twice the chirp bandwidth into every bin.
    """
    real = np.float32 if np.dtype(dtype) == np.complex64 else np.float64
    mixed = (2 * np.asarray(x, dtype=real)) * _local_oscillator(params, start, len(x)).astype(dtype, copy=False)
    h = _lowpass(params).astype(real, copy=False)
    if len(x) < 4 * len(h):
        return np.convolve(mixed, h, mode="same")
    return signal.oaconvolve(mixed, h, mode="same")


@lru_cache(maxsize=8)
def _lo_period(params: ModulationParams) -> np.ndarray | None:
    """One period of exp(-j 2 pi fc n / fs) when fc / fs is a ratio of small integers."""
    ratio = Fraction(params.fc / params.fs).limit_denominator(1 << 16)
    if abs(float(ratio) - params.fc / params.fs) > 1e-15:
        return None
    n = np.arange(ratio.denominator)
    return np.exp(-2j * np.pi * ratio.numerator * n / ratio.denominator)


def _local_oscillator(params: ModulationParams, start: int, length: int) -> np.ndarray:
    table = _lo_period(params)
    if table is None:
        return np.exp(-2j * np.pi * params.fc / params.fs * np.arange(start, start + length))
    return np.resize(np.roll(table, -(start % len(table))), length)


def to_baseband_decimated(x: np.ndarray, params: ModulationParams, start: int, q: int) -> np.ndarray:
    """``to_baseband(x, params, start)[::q]``, computing only the kept samples."""
    h = _lowpass(params)
    delay = (len(h) - 1) // 2
    if q == 1 or delay % q:
        return to_baseband(x, params, start)[::q]
    mixed = 2 * np.asarray(x, dtype=float) * _local_oscillator(params, start, len(x))
    out = signal.upfirdn(h, mixed, up=1, down=q)
    return out[delay // q : delay // q + -(-len(x) // q)]


@lru_cache(maxsize=8)
def _lowpass(params: ModulationParams) -> np.ndarray:
    return signal.firwin(193, 0.525 * params.bw, fs=params.fs)


# ---------------------------------------------------------------------------
# demodulation


@dataclass(frozen=True)
class DemodResult:
    symbol_index: int
    confidence: float


def folded_spectrum(windows: np.ndarray, reference: np.ndarray, n_chips: int, zero_pad: int = 1) -> np.ndarray:
    """Magnitude of the dechirped spectrum folded onto ``n_chips * zero_pad`` bins.

    ``windows`` are band-limited baseband symbol windows (one per row). The
    wrapped part of a shifted chirp lands ``n_chips`` bins below its main
    tone with the same phase, so the two halves add coherently; this is the
    spectrum a receiver sampling at exactly the chirp bandwidth would see.
    """
    w = np.atleast_2d(windows) * reference
    m = w.shape[-1]
    spec = np.fft.fft(w, n=m * zero_pad, axis=-1)
    nb = n_chips * zero_pad
    return np.abs(spec[:, :nb] + spec[:, m * zero_pad - nb :])


def peak_position(mag: np.ndarray, zero_pad: int) -> np.ndarray:
    """Fractional peak location in chips, wrapped to ``[-n/2, n/2)``."""
    mag = np.atleast_2d(mag)
    nb = mag.shape[-1]
    i = np.argmax(mag, axis=-1)
    rows = np.arange(mag.shape[0])
    left = mag[rows, (i - 1) % nb]
    mid = mag[rows, i]
    right = mag[rows, (i + 1) % nb]
    denom = left - 2 * mid + right
    frac = np.where(denom < 0, 0.5 * (left - right) / np.where(denom < 0, denom, 1), 0.0)
    pos = (i + frac) / zero_pad
    n = nb / zero_pad
    return (pos + n / 2) % n - n / 2


def window_stride(params: ModulationParams) -> int:
    """Sample stride that still carries a band-limited symbol window intact.

    Baseband windows only hold energy within the chirp band, and a dechirped
    tone lies within +-bw, so reading every q-th sample loses nothing while
    fs / q stays at least 4 * bw. The stride must divide the symbol length.
    """
    m = params.samples_per_symbol
    q = max(1, int(params.fs // (4 * params.bw)))
    while m % q or m // q < 2 * params.n_chips:
        q -= 1
    return q


def demodulate_windows(windows: np.ndarray, params: ModulationParams, stride: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Symbol indices and peak/mean confidences for baseband windows (rows).

    With ``stride`` > 1 the rows hold every ``stride``-th sample of a symbol.
    """
    bank = chirp_bank(params)
    mag = folded_spectrum(windows, bank.down[::stride], params.n_chips)
    idx = np.argmax(mag, axis=-1)
    conf = mag[np.arange(len(mag)), idx] / np.maximum(mag.mean(axis=-1), 1e-300)
    return idx, conf


def demodulate_symbol(segment: np.ndarray, params: ModulationParams = DEFAULT_PARAMS) -> DemodResult:
    segment = np.asarray(segment, dtype=float)
    if segment.shape != (params.samples_per_symbol,):
        raise SegmentLengthMismatch(f"expected {params.samples_per_symbol} samples, got {segment.shape}")
    idx, conf = demodulate_windows(to_baseband(segment, params)[None, :], params)
    return DemodResult(int(idx[0]), float(conf[0]))


# ---------------------------------------------------------------------------
# framing


@dataclass(frozen=True)
class FramePlan:
    payload_bit_length: int
    mode: CodingMode
    sf: int = 5

    def __post_init__(self):
        if not 0 <= self.payload_bit_length <= MAX_PAYLOAD_BITS:
            raise ValueError(f"payload_bit_length must be in [0, {MAX_PAYLOAD_BITS}]")
        object.__setattr__(self, "mode", CodingMode(self.mode))

    preamble_up = PREAMBLE_UP
    preamble_down = PREAMBLE_DOWN
    training_cadence = TRAINING_CADENCE

    @property
    def preamble_symbols(self) -> int:
        return PREAMBLE_UP + PREAMBLE_DOWN

    @property
    def header_symbols(self) -> int:
        return -(-HEADER_CODED_BITS // header_bits_per_symbol(self.sf))

    @property
    def coded_bit_length(self) -> int:
        return fec.coded_length(self.payload_bit_length, self.mode)

    @property
    def payload_symbol_count(self) -> int:
        return -(-self.coded_bit_length // self.sf)

    @property
    def training_symbol_count(self) -> int:
        return self.payload_symbol_count // TRAINING_CADENCE

    @property
    def total_symbols(self) -> int:
        return self.preamble_symbols + self.header_symbols + self.payload_symbol_count + self.training_symbol_count

    @cached_property
    def payload_layout(self) -> np.ndarray:
        """Boolean array over payload slots, True where a training symbol sits."""
        d = self.payload_symbol_count
        training = np.zeros(d + d // TRAINING_CADENCE, dtype=bool)
        training[TRAINING_CADENCE :: TRAINING_CADENCE + 1] = True
        return training

    def duration(self, params: ModulationParams) -> float:
        return self.total_symbols * params.symbol_duration

    def n_samples(self, params: ModulationParams) -> int:
        return self.total_symbols * params.samples_per_symbol


def plan_frame(n_bits: int, mode: CodingMode = CodingMode.CR3, sf: int = 5) -> FramePlan:
    return FramePlan(n_bits, CodingMode(mode), sf)


def _header_word(plan: FramePlan) -> np.ndarray:
    body = plan.payload_bit_length << 4 | _MODE_CODES[plan.mode]
    check = zlib.crc32(body.to_bytes(3, "big")) & 0xFF
    word = body << 8 | check
    return ((word >> np.arange(HEADER_BITS - 1, -1, -1)) & 1).astype(np.uint8)


def header_symbols(plan: FramePlan) -> np.ndarray:
    """Chirp indices of the header: Hamming + interleave + Gray, whatever the payload mode."""
    coded = fec.hamming_interleave_encode(_header_word(plan), HEADER_INTERLEAVER)
    hb = header_bits_per_symbol(plan.sf)
    return bits_to_symbols(coded, hb, gray=True) << (plan.sf - hb)


def parse_header(indices, sf: int = 5) -> FramePlan:
    """Recover the frame plan from demodulated header chirp indices.

    Each index is rounded to the nearest used position before Gray mapping.
    """
    hb = header_bits_per_symbol(sf)
    step = 1 << (sf - hb)
    values = ((np.asarray(indices, dtype=np.int64) + step // 2) // step) % (1 << hb)
    coded = symbols_to_bits(values, hb, gray=True)[:HEADER_CODED_BITS]
    bits, _ = fec.hamming_interleave_decode(coded, HEADER_BITS, HEADER_INTERLEAVER)
    word = int("".join(map(str, bits)), 2)
    body, check = word >> 8, word & 0xFF
    if zlib.crc32(body.to_bytes(3, "big")) & 0xFF != check:
        raise HeaderDecodeFailed("header checksum mismatch")
    mode_code = body & 0xF
    modes = {v: k for k, v in _MODE_CODES.items()}
    if mode_code not in modes:
        raise HeaderDecodeFailed(f"unknown coding mode {mode_code}")
    return FramePlan(body >> 4, modes[mode_code], sf)


def bits_to_symbols(bits, sf: int, gray: bool) -> np.ndarray:
    """Group bits into ``sf``-bit values (zero-padded) and map them to chirp indices.

    With ``gray`` set the transmitted index is the inverse Gray code of the
    value, so a receiver that Gray-maps a neighbouring index back gets a
    single bit error.
    """
    b = np.asarray(bits, dtype=np.uint8)
    padded = np.zeros(-(-b.size // sf) * sf, dtype=np.uint8)
    padded[: b.size] = b
    values = padded.reshape(-1, sf) @ (1 << np.arange(sf - 1, -1, -1))
    return fec.gray_unmap(values, sf) if gray else values


def symbols_to_bits(indices, sf: int, gray: bool) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    values = fec.gray_map(idx, sf) if gray else idx
    return ((values[:, None] >> np.arange(sf - 1, -1, -1)) & 1).astype(np.uint8).reshape(-1)


def payload_symbols(coded_bits, plan: FramePlan) -> np.ndarray:
    """Data symbol indices with training symbols inserted."""
    data = bits_to_symbols(coded_bits, plan.sf, gray=plan.mode is CodingMode.CR3)
    out = np.full(plan.payload_layout.size, TRAINING_INDEX, dtype=np.int64)
    out[~plan.payload_layout] = data
    return out


def frame(coded_bits, params: ModulationParams = DEFAULT_PARAMS, plan: FramePlan | None = None) -> np.ndarray:
    """Preamble, header and payload of an already channel-coded bit sequence."""
    coded_bits = np.asarray(coded_bits, dtype=np.uint8)
    if plan is None:
        plan = FramePlan(coded_bits.size, CodingMode.CR0, params.sf)
    if coded_bits.size != plan.coded_bit_length:
        raise fec.LengthMismatch(f"plan expects {plan.coded_bit_length} coded bits, got {coded_bits.size}")
    n_pre = plan.preamble_symbols
    indices = np.concatenate(
        [np.zeros(n_pre, dtype=np.int64), header_symbols(plan), payload_symbols(coded_bits, plan)]
    )
    down = np.zeros(indices.size, dtype=bool)
    down[PREAMBLE_UP:n_pre] = True
    return modulate_symbols(indices, params, down=down)


def transmit(bits, mode: CodingMode = CodingMode.CR3, params: ModulationParams = DEFAULT_PARAMS) -> np.ndarray:
    """Channel-code ``bits`` and build the full frame waveform."""
    bits = np.asarray(bits, dtype=np.uint8)
    plan = plan_frame(bits.size, mode, params.sf)
    return frame(fec.code_pipeline_encode(bits, mode), params, plan)


def preamble(params: ModulationParams = DEFAULT_PARAMS) -> np.ndarray:
    down = np.arange(PREAMBLE_UP + PREAMBLE_DOWN) >= PREAMBLE_UP
    return modulate_symbols(np.zeros(down.size, dtype=np.int64), params, down=down)
