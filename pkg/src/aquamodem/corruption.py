"""Character-level bit-flip corruption and message-recovery corpora.

Corruption works on the 5-bit codec representation directly: every bit of
every character flips independently with probability ``ber``. The PHY is
not involved, which keeps corpus generation fast and its error statistics
exact; the channel module provides PHY-induced errors when those are wanted.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from aquamodem import textcodec
from aquamodem.context import PurposeTag
from aquamodem.seeding import derive_seed
from aquamodem.textcodec import DEFAULT_ALPHABET, SymbolAlphabet

TASK = "message_recovery"
DEFAULT_BER_GRID = tuple(round(0.01 * i, 2) for i in range(21))


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class CorruptionSpec:
    ber: float
    protect_separators: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.ber <= 1.0:
            raise ValueError(f"ber must be in [0, 1], got {self.ber}")


def flip_bits(bits: np.ndarray, ber: float, rng: np.random.Generator) -> np.ndarray:
    """Flip each bit independently with probability ``ber``."""
    flips = rng.random(bits.size) < ber
    return bits ^ flips.astype(np.uint8)


def restore_separators(
    original: np.ndarray, corrupted: np.ndarray, alphabet: SymbolAlphabet, rng: np.random.Generator
) -> np.ndarray:
    """Put spaces back where ``original`` has them and remove spurious ones.

    A space that appeared out of nowhere would split a word, so it is
    redrawn uniformly from the other 31 symbols.
    """
    space = alphabet.space_index
    out = np.array(corrupted, copy=True)
    was_space = original == space
    out[was_space] = space
    spurious = np.flatnonzero((out == space) & ~was_space)
    if spurious.size:
        draw = rng.integers(0, len(alphabet.entries) - 1, spurious.size)
        out[spurious] = draw + (draw >= space)
    return out


def corrupt_indices(
    indices: np.ndarray, spec: CorruptionSpec, alphabet: SymbolAlphabet, rng: np.random.Generator
) -> np.ndarray:
    bits = textcodec.indices_to_bits(indices)
    out = textcodec.bits_to_indices(flip_bits(bits, spec.ber, rng))
    if spec.protect_separators:
        out = restore_separators(indices, out, alphabet, rng)
    return out


def corrupt_message(
    msg: str, spec: CorruptionSpec, alphabet: SymbolAlphabet = DEFAULT_ALPHABET, rng: np.random.Generator | None = None
) -> str:
    """Corrupt ``msg`` by independent bit flips on its 5-bit character codes.

    ``rng`` overrides the generator seeded from ``spec.seed``; corpus
    generation passes one per record. The output always has the same
    number of characters as ``msg``.
    """
    indices = textcodec.text_to_indices(msg, alphabet)
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    return textcodec.indices_to_text(corrupt_indices(indices, spec, alphabet, rng), alphabet)


@dataclass(frozen=True)
class CorpusRecord:
    original: str
    corrupted: str
    ber: float
    purpose: PurposeTag
    task: str = TASK

    def __post_init__(self):
        object.__setattr__(self, "purpose", PurposeTag(self.purpose))
        if len(self.corrupted) != len(self.original):
            raise ValueError("corrupted and original must have the same length")
        if self.task != TASK:
            raise ValueError(f"unknown task {self.task!r}")

    def to_json(self) -> str:
        d = asdict(self)
        d["purpose"] = self.purpose.value
        return json.dumps(d, ensure_ascii=False, separators=(", ", ": "))

    @classmethod
    def from_json(cls, line: str) -> CorpusRecord:
        return cls(**json.loads(line))


def prompt_text(record: CorpusRecord) -> str:
    """The recovery model's input: purpose tag prepended to the corrupted text."""
    return f"{record.purpose.value}: {record.corrupted}"


def generate_corpus(
    messages: Sequence[tuple[str, PurposeTag]],
    ber_grid: Iterable[float] = DEFAULT_BER_GRID,
    per_message: int = 1,
    seed: int = 0,
    protect_separators: bool = False,
    alphabet: SymbolAlphabet = DEFAULT_ALPHABET,
    bers_per_message: int | None = None,
) -> list[CorpusRecord]:
    """Every message corrupted ``per_message`` times at each of its grid BERs.

    By default each message uses the whole grid. With ``bers_per_message``
    each message gets its own seeded random subset of that size instead,
    which allows totals such as 100 * 16 * 30 = 48,000 that a 21-point grid
    does not divide. Records come out message-major, then BER, then
    repetition, and each draws from its own derived seed.
    """
    messages = list(messages)
    grid = [float(b) for b in ber_grid]
    if not messages:
        raise EmptyInput("no messages")
    if not grid:
        raise EmptyInput("empty BER grid")
    if per_message < 1:
        raise ValueError("per_message must be >= 1")
    if bers_per_message is not None and not 1 <= bers_per_message <= len(grid):
        raise ValueError(f"bers_per_message must be in [1, {len(grid)}]")
    records = []
    for i, (text, purpose) in enumerate(messages):
        indices = textcodec.text_to_indices(text, alphabet)
        chosen = range(len(grid))
        if bers_per_message is not None:
            pick = np.random.default_rng(derive_seed(seed, i)).choice(len(grid), bers_per_message, replace=False)
            chosen = sorted(int(j) for j in pick)
        for j in chosen:
            ber = grid[j]
            spec = CorruptionSpec(ber, protect_separators, seed)
            for k in range(per_message):
                rng = np.random.default_rng(derive_seed(seed, i, j, k))
                corrupted = textcodec.indices_to_text(corrupt_indices(indices, spec, alphabet, rng), alphabet)
                records.append(CorpusRecord(text, corrupted, ber, PurposeTag(purpose)))
    return records


def write_corpus(records: Iterable[CorpusRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_corpus(path: str | Path) -> list[CorpusRecord]:
    with open(path, encoding="utf-8") as fh:
        return [CorpusRecord.from_json(line) for line in fh if line.strip()]


def realized_flip_rate(originals: Iterable[str], corrupted: Iterable[str], alphabet: SymbolAlphabet = DEFAULT_ALPHABET) -> float:
    """Fraction of codec bits that differ between paired strings."""
    flips = total = 0
    for a, b in zip(originals, corrupted, strict=True):
        ba = textcodec.encode_text(a, alphabet)
        bb = textcodec.encode_text(b, alphabet)
        flips += int(np.count_nonzero(ba != bb))
        total += ba.size
    return flips / total if total else 0.0
