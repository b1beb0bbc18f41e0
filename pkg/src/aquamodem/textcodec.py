"""Diver-message normalization and the 5-bit character codec."""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from aquamodem.context import PurposeTag, Role

BITS_PER_CHAR = 5

DEFAULT_SYMBOLS = "abcdefghijklmnopqrstuvwxyz .,?!'"


class CodecError(ValueError):
    pass


class EmptyAfterNormalization(CodecError):
    pass


class UnsupportedCharacter(CodecError):
    def __init__(self, position: int, char: str):
        super().__init__(f"character {char!r} at position {position} is not in the alphabet")
        self.position = position
        self.char = char


@dataclass(frozen=True)
class SymbolAlphabet:
    """32 distinct characters; a character's index is its 5-bit code."""

    entries: tuple[str, ...]

    def __post_init__(self):
        if len(self.entries) != 2**BITS_PER_CHAR:
            raise ValueError(f"alphabet needs exactly 32 entries, got {len(self.entries)}")
        if len(set(self.entries)) != len(self.entries):
            raise ValueError("alphabet entries must be distinct")
        if any(len(c) != 1 for c in self.entries):
            raise ValueError("alphabet entries must be single characters")
        missing = set("abcdefghijklmnopqrstuvwxyz ") - set(self.entries)
        if missing:
            raise ValueError(f"alphabet is missing {sorted(missing)}")
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(self.entries)})

    def __contains__(self, char: str) -> bool:
        return char in self._index

    def __len__(self) -> int:
        return len(self.entries)

    def index(self, char: str) -> int:
        return self._index[char]

    @property
    def space_index(self) -> int:
        return self._index[" "]

    @classmethod
    def from_file(cls, path: str | Path) -> SymbolAlphabet:
        # One character per line; lines may legitimately be a lone space.
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines = lines[:-1]
        return cls(tuple(lines))

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text("".join(c + "\n" for c in self.entries), encoding="utf-8")


def default_alphabet() -> SymbolAlphabet:
    ref = resources.files("aquamodem") / "data" / "alphabet.txt"
    with resources.as_file(ref) as path:
        return SymbolAlphabet.from_file(path)


DEFAULT_ALPHABET = SymbolAlphabet(tuple(DEFAULT_SYMBOLS))


# ---------------------------------------------------------------------------
# numbers to words

_ONES = (
    "zero one two three four five six seven eight nine ten eleven twelve thirteen "
    "fourteen fifteen sixteen seventeen eighteen nineteen"
).split()
_TENS = "_ _ twenty thirty forty fifty sixty seventy eighty ninety".split()


def _below_thousand(n: int) -> list[str]:
    words = []
    hundreds, rest = divmod(n, 100)
    if hundreds:
        words += [_ONES[hundreds], "hundred"]
    if rest >= 20:
        tens, ones = divmod(rest, 10)
        words.append(_TENS[tens] if not ones else f"{_TENS[tens]} {_ONES[ones]}")
    elif rest or not words:
        words.append(_ONES[rest])
    return words


def integer_to_words(n: int) -> str:
    """English words for 0 <= n <= 999,999; larger values are read digit by digit."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n > 999_999:
        return " ".join(_ONES[int(d)] for d in str(n))
    thousands, rest = divmod(n, 1000)
    words = []
    if thousands:
        words += _below_thousand(thousands) + ["thousand"]
    if rest or not words:
        words += _below_thousand(rest)
    return " ".join(words)


def number_to_words(token: str) -> str:
    """Spell out a numeric token such as ``"12.1"``, ``"-3"`` or ``"1,500"``."""
    negative = token.startswith("-")
    token = token.lstrip("-").replace(",", "")
    whole, _, frac = token.partition(".")
    words = integer_to_words(int(whole)) if whole else "zero"
    if frac:
        words += " point " + " ".join(_ONES[int(d)] for d in frac)
    return "minus " + words if negative else words


# A leading dash is a minus sign only when it does not join two words.
_NUMBER_RE = re.compile(r"(?:(?<![\w-])-)?(?:\d{1,3}(?:,\d{3})+(?!\d)|\d+)(?:\.\d+)?")

_SUBSTITUTIONS = {
    "%": " percent ",
    "&": " and ",
    "+": " plus ",
    "=": " equals ",
    "°": " degrees ",
    "@": " at ",
    "’": "'",
    "‘": "'",
    "`": "'",
    '"': "",
    "“": "",
    "”": "",
    ":": ",",
    ";": ",",
    "-": " ",
    "_": " ",
    "/": " ",
    "\n": " ",
    "\t": " ",
}


def normalize_message(raw: str, alphabet: SymbolAlphabet = DEFAULT_ALPHABET) -> str:
    """Lowercase, spell out numbers, and reduce ``raw`` to alphabet characters.

    Characters with no mapping are dropped with a warning so that a safety
    message is never blocked by a stray symbol.
    """
    text = raw.lower()
    text = _NUMBER_RE.sub(lambda m: f" {number_to_words(m.group(0))} ", text)
    out = []
    dropped = set()
    for ch in text:
        ch = _SUBSTITUTIONS.get(ch, ch)
        for c in ch:
            if c in alphabet:
                out.append(c)
            else:
                dropped.add(c)
    if dropped:
        warnings.warn(f"dropped unsupported characters: {''.join(sorted(dropped))!r}", stacklevel=2)
    text = re.sub(r" +", " ", "".join(out)).strip()
    text = re.sub(r" ([.,?!])", r"\1", text)
    if not text:
        raise EmptyAfterNormalization(f"nothing representable in {raw!r}")
    return text


# ---------------------------------------------------------------------------
# 5-bit codec

def indices_to_bits(indices, width: int = BITS_PER_CHAR) -> np.ndarray:
    """Big-endian ``width``-bit expansion of each integer in ``indices``."""
    idx = np.asarray(indices, dtype=np.int64).reshape(-1, 1)
    shifts = np.arange(width - 1, -1, -1)
    return ((idx >> shifts) & 1).astype(np.uint8).ravel()


def bits_to_indices(bits, width: int = BITS_PER_CHAR) -> np.ndarray:
    """Inverse of :func:`indices_to_bits`; a trailing partial group is discarded."""
    bits = np.asarray(bits, dtype=np.int64)
    n = len(bits) // width
    weights = 1 << np.arange(width - 1, -1, -1)
    return bits[: n * width].reshape(n, width) @ weights


def text_to_indices(text: str, alphabet: SymbolAlphabet = DEFAULT_ALPHABET) -> np.ndarray:
    out = np.empty(len(text), dtype=np.int64)
    for i, ch in enumerate(text):
        if ch not in alphabet:
            raise UnsupportedCharacter(i, ch)
        out[i] = alphabet.index(ch)
    return out


def indices_to_text(indices, alphabet: SymbolAlphabet = DEFAULT_ALPHABET) -> str:
    return "".join(alphabet.entries[int(i)] for i in indices)


def encode_text(text: str, alphabet: SymbolAlphabet = DEFAULT_ALPHABET) -> np.ndarray:
    """Map ``text`` to ``5 * len(text)`` bits (uint8 array of 0/1)."""
    return indices_to_bits(text_to_indices(text, alphabet))


def decode_bits(bits, alphabet: SymbolAlphabet = DEFAULT_ALPHABET) -> str:
    return indices_to_text(bits_to_indices(bits), alphabet)


@dataclass(frozen=True)
class Message:
    text: str
    role: Role
    purpose: PurposeTag

    def __post_init__(self):
        if not self.text:
            raise ValueError("message text must be non-empty")
        bad = [c for c in self.text if c not in DEFAULT_ALPHABET]
        if bad:
            raise UnsupportedCharacter(self.text.index(bad[0]), bad[0])
        if self.purpose.role != self.role:
            raise ValueError(f"purpose {self.purpose.value} is not a {self.role.value} purpose")

    @classmethod
    def from_raw(cls, raw: str, role: Role, purpose: PurposeTag) -> Message:
        return cls(normalize_message(raw), role, purpose)

