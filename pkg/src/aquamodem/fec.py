"""Channel coding: Hamming(7,4), Gray mapping of symbol indices, block interleaving.

Two coding modes exist. ``CR0`` sends the codec bits as they are. ``CR3``
runs them through zero padding, Hamming(7,4) and a 7x7 block interleaver;
Gray mapping of the resulting chirp symbol indices happens in the PHY.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class FecError(ValueError):
    pass


class IndexOutOfRange(FecError):
    pass


class LengthMismatch(FecError):
    pass


class CodingMode(str, Enum):
    CR0 = "cr0"
    CR3 = "cr3"


# Systematic generator: codeword = d1 d2 d3 d4 p1 p2 p3.
GENERATOR = np.array(
    [
        [1, 0, 0, 0, 1, 1, 0],
        [0, 1, 0, 0, 1, 0, 1],
        [0, 0, 1, 0, 0, 1, 1],
        [0, 0, 0, 1, 1, 1, 1],
    ],
    dtype=np.uint8,
)
PARITY_CHECK = np.concatenate([GENERATOR[:, 4:].T, np.eye(3, dtype=np.uint8)], axis=1)

# syndrome (as int, MSB = first check) -> bit position to flip, -1 for none
_SYNDROME_TO_POS = np.full(8, -1, dtype=np.int64)
for _pos in range(7):
    _s = PARITY_CHECK[:, _pos]
    _SYNDROME_TO_POS[(_s[0] << 2) | (_s[1] << 1) | _s[2]] = _pos

CODEWORD_BITS = 7
DATA_BITS = 4
INTERLEAVE_ROWS = 7


def hamming_encode(data) -> np.ndarray:
    """Encode 4 data bits, or an ``(n, 4)`` array of nibbles, into codewords."""
    d = np.asarray(data, dtype=np.uint8)
    if d.shape[-1] != DATA_BITS:
        raise LengthMismatch(f"expected 4 data bits, got shape {d.shape}")
    return (d @ GENERATOR % 2).astype(np.uint8)


def hamming_decode(word) -> tuple[np.ndarray, np.ndarray | bool]:
    """Syndrome-decode 7-bit word(s).

    Returns ``(data, corrected)``. Any nonzero syndrome is treated as a
    single-bit error and flipped, so two or more errors miscorrect silently.
    """
    w = np.asarray(word, dtype=np.uint8)
    if w.shape[-1] != CODEWORD_BITS:
        raise LengthMismatch(f"expected 7-bit codewords, got shape {w.shape}")
    single = w.ndim == 1
    w = np.atleast_2d(w).copy()
    s = w @ PARITY_CHECK.T % 2
    syndrome = (s[:, 0].astype(np.int64) << 2) | (s[:, 1] << 1) | s[:, 2]
    pos = _SYNDROME_TO_POS[syndrome]
    corrected = pos >= 0
    rows = np.nonzero(corrected)[0]
    w[rows, pos[rows]] ^= 1
    data = w[:, :DATA_BITS]
    if single:
        return data[0], bool(corrected[0])
    return data, corrected


def gray_map(index, sf: int = 5):
    """Reflected binary Gray code of ``index`` in ``[0, 2**sf)``."""
    idx = np.asarray(index, dtype=np.int64)
    if np.any((idx < 0) | (idx >= 1 << sf)):
        raise IndexOutOfRange(f"index outside [0, {1 << sf})")
    out = idx ^ (idx >> 1)
    return int(out) if out.ndim == 0 else out


def gray_unmap(code, sf: int = 5):
    g = np.asarray(code, dtype=np.int64)
    if np.any((g < 0) | (g >= 1 << sf)):
        raise IndexOutOfRange(f"code outside [0, {1 << sf})")
    out = g.copy()
    shift = 1
    while shift < sf:
        out ^= out >> shift
        shift <<= 1
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class InterleaverConfig:
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be positive")

    @property
    def size(self) -> int:
        return self.rows * self.cols


def _check(bits, cfg: InterleaverConfig) -> np.ndarray:
    b = np.asarray(bits, dtype=np.uint8)
    if b.size % cfg.size:
        raise LengthMismatch(f"{b.size} bits is not a multiple of the {cfg.rows}x{cfg.cols} block")
    return b


def interleave(bits, cfg: InterleaverConfig) -> np.ndarray:
    """Write each block row-major, read it column-major."""
    b = _check(bits, cfg)
    blocks = b.reshape(-1, cfg.rows, cfg.cols)
    return blocks.transpose(0, 2, 1).reshape(-1)


def deinterleave(bits, cfg: InterleaverConfig) -> np.ndarray:
    b = _check(bits, cfg)
    blocks = b.reshape(-1, cfg.cols, cfg.rows)
    return blocks.transpose(0, 2, 1).reshape(-1)


CR3_INTERLEAVER = InterleaverConfig(rows=INTERLEAVE_ROWS, cols=CODEWORD_BITS)
CR3_BLOCK_DATA_BITS = INTERLEAVE_ROWS * DATA_BITS


def coded_length(n_bits: int, mode: CodingMode) -> int:
    """Number of channel bits produced for ``n_bits`` input bits."""
    if CodingMode(mode) is CodingMode.CR0:
        return n_bits
    blocks = -(-n_bits // CR3_BLOCK_DATA_BITS)
    return blocks * CR3_INTERLEAVER.size


def hamming_interleave_encode(bits, cfg: InterleaverConfig) -> np.ndarray:
    """Zero-pad to whole interleaver blocks, Hamming-encode, interleave."""
    b = np.asarray(bits, dtype=np.uint8)
    per_block = cfg.rows * DATA_BITS
    padded = np.zeros(-(-b.size // per_block) * per_block, dtype=np.uint8)
    padded[: b.size] = b
    words = hamming_encode(padded.reshape(-1, DATA_BITS))
    return interleave(words.reshape(-1), cfg)


def hamming_interleave_decode(coded, n_bits: int, cfg: InterleaverConfig) -> tuple[np.ndarray, int]:
    words = deinterleave(coded, cfg).reshape(-1, CODEWORD_BITS)
    data, corrected = hamming_decode(words)
    return data.reshape(-1)[:n_bits], int(np.count_nonzero(corrected))


def code_pipeline_encode(bits, mode: CodingMode = CodingMode.CR3) -> np.ndarray:
    b = np.asarray(bits, dtype=np.uint8)
    if CodingMode(mode) is CodingMode.CR0:
        return b.copy()
    return hamming_interleave_encode(b, CR3_INTERLEAVER)


def code_pipeline_decode(coded, n_bits: int, mode: CodingMode = CodingMode.CR3) -> tuple[np.ndarray, int]:
    """Invert :func:`code_pipeline_encode`; returns ``(bits, corrected_codewords)``."""
    c = np.asarray(coded, dtype=np.uint8)
    if CodingMode(mode) is CodingMode.CR0:
        return c[:n_bits].copy(), 0
    expected = coded_length(n_bits, mode)
    if c.size < expected:
        raise LengthMismatch(f"need {expected} coded bits for {n_bits} data bits, got {c.size}")
    return hamming_interleave_decode(c[:expected], n_bits, CR3_INTERLEAVER)
