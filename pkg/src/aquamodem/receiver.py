"""Packet detection, synchronization, equalization and demodulation."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import signal

from aquamodem import fec, phy
from aquamodem.phy import DEFAULT_PARAMS, FramePlan, ModulationParams

log = logging.getLogger(__name__)

# Normalized cross-correlation threshold. The detector works on band-limited
# baseband at 4 kHz, so noise alone gives a statistic whose per-lag tail was
# measured as P(ncc > x) ~ exp(-257 x^2); at 0.3 that is ~4e-7 false alarms
# per second, with the synchronizer's consistency checks as a second gate.
DETECTION_THRESHOLD = 0.3
# Peak/mean magnitude ratio of the two down-chirps' combined spectrum needed
# to accept a candidate; noise alone exceeds it about once in 2000 tries.
SYNC_THRESHOLD = 2.0
# Detection is accurate to about half a chip, so larger timing or frequency
# readings from the preamble mean the candidate is not a preamble.
MAX_SYNC_ERROR = 2.0  # chips
# Training peaks further than this from bin 0 are ignored by the tracker.
MAX_TRAINING_RESIDUAL = 1.5  # chips
TRAINING_THRESHOLD = 1.5
ZERO_PAD = 8
TRACK_BATCH = 8  # training symbols measured per tracker step
# RMS below which a stretch of baseband counts as silence (about half a
# 16-bit LSB at full scale 1.0). Without it, round-off residue in noiseless
# captures normalizes up to a perfect-looking correlation.
SILENCE_RMS = 2.0**-16


class SyncFailed(phy.PhyError):
    pass


class NoPacketFound(phy.PhyError):
    pass


def _decimation(params: ModulationParams) -> int:
    # Complex baseband at twice the chirp bandwidth.
    return max(1, int(params.fs // (2 * params.bw)))


def _decimate(x: np.ndarray, params: ModulationParams, start: int) -> np.ndarray:
    # to_baseband already band-limits to the chirp band, so plain subsampling
    # does not alias; ``start`` must be a multiple of the decimation factor.
    return phy.to_baseband_decimated(x, params, start, _decimation(params))


@lru_cache(maxsize=8)
def _template(params: ModulationParams) -> np.ndarray:
    return _decimate(phy.preamble(params), params, 0)


class PacketDetector:
    """Streaming preamble detector.

    Feed consecutive chunks of a sample stream; each call returns the absolute
    sample offsets of preambles found so far. One instance per stream.
    """

    def __init__(self, params: ModulationParams = DEFAULT_PARAMS, threshold: float = DETECTION_THRESHOLD):
        self.params = params
        self.threshold = threshold
        self.q = _decimation(params)
        tmpl = _template(params)
        self.template = tmpl
        self.template_norm = np.linalg.norm(tmpl)
        self.span = len(tmpl)  # decimated samples
        self.block = 64 * self.span
        self._buf = np.zeros(0)
        self._base = 0  # absolute index of _buf[0], kept a multiple of q
        self._next = 0  # first decimated index (absolute) not yet reported
        self._margin = 16  # decimated samples kept for filter edge effects

    def ncc(self, y: np.ndarray) -> np.ndarray:
        corr = signal.correlate(y, self.template, mode="valid", method="fft")
        energy = np.concatenate([[0.0], np.cumsum(np.abs(y) ** 2)])
        local = np.maximum(energy[self.span :] - energy[: -self.span], self.span * SILENCE_RMS**2)
        return np.abs(corr) / (self.template_norm * np.sqrt(local))

    def feed(self, chunk: np.ndarray) -> list[int]:
        self._buf = np.concatenate([self._buf, np.asarray(chunk, dtype=float)])
        found = []
        while len(self._buf) >= (self.block + 2 * self.span + 2 * self._margin) * self.q:
            found += self._scan(final=False)
        return found

    def flush(self) -> list[int]:
        found = self._scan(final=True) if len(self._buf) >= self.span * self.q else []
        self._buf = np.zeros(0)
        return found

    def _scan(self, final: bool, decimated: np.ndarray | None = None) -> list[int]:
        y = _decimate(self._buf, self.params, self._base) if decimated is None else decimated
        score = self.ncc(y)
        d0 = self._base // self.q
        # Peaks too close to the end of the buffer wait for more samples.
        limit = len(score) if final else len(score) - self.span - self._margin
        # find_peaks never reports an endpoint, but a frame may start at the
        # very first sample (or end the capture), so pad the true stream edges.
        lead = 1 if self._base == 0 else 0
        padded = np.concatenate([np.zeros(lead), score, np.zeros(1 if final else 0)])
        peaks, _ = signal.find_peaks(padded, height=self.threshold, distance=self.span)
        peaks = peaks - lead
        found = []
        for p in peaks:
            if p >= limit:
                break
            if d0 + p >= self._next:
                found.append((d0 + p) * self.q)
                self._next = d0 + p + self.span
        if not final:
            keep_from = max(0, limit - self._margin)
            self._buf = self._buf[keep_from * self.q :]
            self._base += keep_from * self.q
            self._next = max(self._next, d0 + limit)
        return found


def detect_packet(stream: np.ndarray | Baseband, params: ModulationParams = DEFAULT_PARAMS, threshold: float = DETECTION_THRESHOLD) -> list[int]:
    """Sample offsets where the preamble correlation crosses ``threshold``."""
    det = PacketDetector(params, threshold)
    # With the whole capture in memory one final scan covers it.
    if isinstance(stream, Baseband):
        return det._scan(final=True, decimated=stream.bb[:: det.q])
    det._buf = np.asarray(stream, dtype=float)
    return det.flush()


class Baseband:
    """A received stream together with its band-limited complex baseband.

    Converting once and handing this to :func:`synchronize`,
    :func:`read_header` and :func:`equalize_and_demodulate` avoids
    filtering the same samples several times.
    """

    def __init__(self, stream: np.ndarray, params: ModulationParams = DEFAULT_PARAMS):
        self.stream = np.asarray(stream, dtype=float)
        self.params = params
        self.bb = phy.to_baseband(self.stream, params, 0, dtype=np.complex64)

    def __len__(self) -> int:
        return len(self.stream)


def _region(stream, lo: int, hi: int, params: ModulationParams) -> np.ndarray:
    if isinstance(stream, Baseband):
        return stream.bb[lo:hi]
    return phy.to_baseband(np.asarray(stream, dtype=float)[lo:hi], params, lo)


def _windows(bb: np.ndarray, starts, m: int, stride: int = 1) -> np.ndarray:
    """Rows of every ``stride``-th of ``m`` samples from (rounded) ``starts``; zero beyond the edges."""
    starts = np.rint(np.asarray(starts, dtype=float)).astype(np.int64)
    idx = starts[:, None] + np.arange(0, m, stride)
    valid = (idx >= 0) & (idx < len(bb))
    out = np.zeros(idx.shape, dtype=bb.dtype)
    out[valid] = bb[idx[valid]]
    return out


def _confidence(mag: np.ndarray) -> float:
    """Peak/mean ratio over the integer bins of a zero-padded folded spectrum."""
    bins = np.atleast_2d(mag)[:, ::ZERO_PAD]
    return float(bins.max() / max(bins.mean(), 1e-300))


def synchronize(stream: np.ndarray, offset: int, params: ModulationParams = DEFAULT_PARAMS) -> float:
    """Refine a detection candidate to a fractional-sample frame start.

    A late window moves the up-chirp peaks up and the down-chirp peaks down
    by the same number of chips, while a frequency offset moves both the same
    way; half their difference is the timing error.
    """
    m = params.samples_per_symbol
    bank = phy.chirp_bank(params)
    lo = max(0, offset - m)
    hi = min(len(stream), offset + (phy.PREAMBLE_UP + phy.PREAMBLE_DOWN + 1) * m)
    bb = _region(stream, lo, hi, params)
    starts = offset - lo + m * np.arange(phy.PREAMBLE_UP + phy.PREAMBLE_DOWN)
    q = phy.window_stride(params)
    win = _windows(bb, starts, m, q)
    up = phy.folded_spectrum(win[1 : phy.PREAMBLE_UP], bank.down[::q], params.n_chips, ZERO_PAD)
    down = phy.folded_spectrum(win[phy.PREAMBLE_UP :], bank.up[0, ::q], params.n_chips, ZERO_PAD)
    up = np.sqrt((up**2).sum(axis=0))
    down = np.sqrt((down**2).sum(axis=0))
    conf = _confidence(down)
    if conf < SYNC_THRESHOLD:
        raise SyncFailed(f"down-chirp marker too weak at {offset} (confidence {conf:.2f})")
    p_up = phy.peak_position(up, ZERO_PAD)[0]
    p_down = phy.peak_position(down, ZERO_PAD)[0]
    tau = (p_up - p_down) / 2
    cfo = (p_up + p_down) / 2
    if abs(tau) > MAX_SYNC_ERROR or abs(cfo) > MAX_SYNC_ERROR:
        raise SyncFailed(f"inconsistent preamble peaks at {offset} (up {p_up:.2f}, down {p_down:.2f} chips)")
    return offset - tau * params.samples_per_chip


def read_header(stream: np.ndarray, sync: float, params: ModulationParams = DEFAULT_PARAMS) -> FramePlan:
    m = params.samples_per_symbol
    n_pre = phy.PREAMBLE_UP + phy.PREAMBLE_DOWN
    n_hdr = FramePlan(0, fec.CodingMode.CR0, params.sf).header_symbols
    first = int(np.floor(sync)) + n_pre * m
    lo, hi = max(0, first - m), min(len(stream), first + (n_hdr + 1) * m)
    bb = _region(stream, lo, hi, params)
    starts = sync - lo + m * (n_pre + np.arange(n_hdr))
    q = phy.window_stride(params)
    mag = phy.folded_spectrum(_windows(bb, starts, m, q), phy.chirp_bank(params).down[::q], params.n_chips)
    # Only every step-th index is used, so noise elsewhere cannot win.
    step = 1 << (params.sf - phy.header_bits_per_symbol(params.sf))
    idx = np.argmax(mag[:, ::step], axis=-1) * step
    return phy.parse_header(idx, params.sf)


def _track_training(bb, training_starts, params, anchor: float) -> tuple[np.ndarray, np.ndarray]:
    """Timing corrections (samples) measured at training symbols.

    Each window is placed where the trend of the earlier measurements
    predicts, so the tracker keeps lock even when the total slip is many
    chips. Returns the positions and corrections of the accepted
    measurements, starting with ``(anchor, 0)`` where sync left no error.
    """
    q = phy.window_stride(params)
    reference = phy.chirp_bank(params).down[::q]
    m = params.samples_per_symbol
    spc = params.samples_per_chip
    fit = _RunningLine()
    fit.add(anchor, 0.0)
    starts = np.asarray(training_starts, dtype=float)
    # Windows are placed a few at a time; the trend moves too little across
    # one batch (well under a chip even at hundreds of ppm) to matter.
    for lo in range(0, len(starts), TRACK_BATCH):
        batch = starts[lo : lo + TRACK_BATCH]
        pred = np.array([fit(s) for s in batch])
        mag = phy.folded_spectrum(_windows(bb, batch + pred, m, q), reference, params.n_chips, ZERO_PAD)
        resid = phy.peak_position(mag, ZERO_PAD)
        for s, p, r, row in zip(batch, pred, resid, mag):
            if abs(r) <= MAX_TRAINING_RESIDUAL and _confidence(row) >= TRAINING_THRESHOLD:
                fit.add(float(s), p - r * spc)
    return np.array(fit.t), np.array(fit.off)


class _RunningLine:
    """Least-squares line through points added one at a time (a constant for one point)."""

    def __init__(self):
        self.t, self.off = [], []
        self._s = np.zeros(5)  # n, sum t, sum off, sum t^2, sum t*off, with t shifted by t0

    def add(self, t: float, off: float) -> None:
        if not self.t:
            self._t0 = t
        self.t.append(t)
        self.off.append(off)
        u = t - self._t0
        self._s += (1.0, u, off, u * u, u * off)

    def __call__(self, t: float) -> float:
        n, su, so, suu, suo = self._s
        u = t - self._t0
        den = n * suu - su * su
        if n < 2 or den <= 0:
            return so / n
        slope = (n * suo - su * so) / den
        return (so - slope * su) / n + slope * u


def _line(t, off):
    """Least-squares line through the measurements (a constant for one point)."""
    if len(t) < 2:
        return lambda x: off[0] + 0 * np.asarray(x, dtype=float)
    slope, intercept = np.polyfit(t, off, 1)
    return lambda x: intercept + slope * np.asarray(x, dtype=float)


def _drift_trend(t: np.ndarray, off: np.ndarray, spc: float):
    """Robust linear fit of the timing corrections.

    Clock drift makes the timing error grow linearly, so the per-symbol
    measurements are smoothed with one straight line; measurements more than
    half a chip from a first fit are treated as noise peaks and dropped.
    """
    fit = _line(t, off)
    keep = np.abs(off - fit(t)) <= 0.5 * spc
    keep[0] = True
    return _line(t[keep], off[keep])


def equalize_and_demodulate(
    stream: np.ndarray,
    sync: float,
    params: ModulationParams = DEFAULT_PARAMS,
    plan: FramePlan | None = None,
    equalize: bool = True,
) -> np.ndarray:
    """Demodulate the payload of a synchronized frame into coded bits.

    Training symbols give the timing error at their position. Because clock
    drift makes that error grow linearly, the measurements are fitted with a
    line, which both interpolates between training symbols and averages out
    their noise; data windows are shifted by the fitted error before
    demodulation. Returns ``plan.coded_bit_length`` bits.
    """
    if plan is None:
        plan = read_header(stream, sync, params)
    m = params.samples_per_symbol
    first = plan.preamble_symbols + plan.header_symbols
    layout = plan.payload_layout
    if layout.size == 0:
        return np.zeros(0, dtype=np.uint8)
    base = int(np.floor(sync))
    lo = max(0, base + first * m - m)
    hi = min(len(stream), base + (first + layout.size + 1) * m + m)
    bb = _region(stream, lo, hi, params)
    rel = sync - lo  # frame start inside bb
    slot_pos = (first + np.arange(layout.size)) * m  # relative to frame start
    offsets = np.zeros(layout.size)
    if equalize and layout.any():
        t, off = _track_training(bb, rel + slot_pos[layout], params, rel + plan.preamble_symbols * m)
        offsets = _drift_trend(t - rel, off, params.samples_per_chip)(slot_pos)
    data_pos = slot_pos[~layout]
    q = phy.window_stride(params)
    idx, _ = phy.demodulate_windows(_windows(bb, rel + data_pos + offsets[~layout], m, q), params, q)
    bits = phy.symbols_to_bits(idx, plan.sf, gray=plan.mode is fec.CodingMode.CR3)
    return bits[: plan.coded_bit_length]


@dataclass
class ReceivedPacket:
    offset: float
    plan: FramePlan
    coded_bits: np.ndarray
    bits: np.ndarray
    corrected_codewords: int


def receive(
    stream: np.ndarray, params: ModulationParams = DEFAULT_PARAMS, equalize: bool = True
) -> list[ReceivedPacket]:
    """Detect, synchronize and decode every packet in ``stream``."""
    stream = Baseband(stream, params)
    packets = []
    busy_until = -1
    for cand in detect_packet(stream, params):
        if cand < busy_until:
            continue
        try:
            sync = synchronize(stream, cand, params)
            plan = read_header(stream, sync, params)
        except (SyncFailed, phy.HeaderDecodeFailed) as exc:
            log.debug("dropping candidate %d: %s", cand, exc)
            continue
        coded = equalize_and_demodulate(stream, sync, params, plan, equalize)
        bits, corrected = fec.code_pipeline_decode(coded, plan.payload_bit_length, plan.mode)
        packets.append(ReceivedPacket(sync, plan, coded, bits, corrected))
        busy_until = sync + plan.n_samples(params) - params.samples_per_symbol
    return packets
