"""Message recovery baselines, the default similarity metric and evaluation.

The recovery model proper (a fine-tuned vision-language model) is outside
this package. What lives here is the interface it plugs into, two
deterministic baselines that bracket it, and an adapter for driving an
external recoverer process.
"""

from __future__ import annotations

import json
import math
import subprocess
from collections import Counter, defaultdict
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Protocol

import numpy as np
from rapidfuzz.distance import Levenshtein

from aquamodem import textcodec
from aquamodem.context import PurposeTag
from aquamodem.corruption import CorpusRecord
from aquamodem.textcodec import DEFAULT_ALPHABET, SymbolAlphabet

SUCCESS_THRESHOLD = 0.92


class EmptyVocabulary(ValueError):
    pass


class Recoverer(Protocol):
    def recover(self, corrupted: str, purpose: PurposeTag | None = None) -> str: ...


Metric = Callable[[str, str], float]


# ---------------------------------------------------------------------------
# similarity


def _squash(s: str) -> str:
    return " ".join(s.split())


def _bigrams(s: str) -> Counter:
    padded = f" {s} "
    return Counter(padded[i : i + 2] for i in range(len(padded) - 1))


def similarity(a: str, b: str) -> float:
    """Mean of bag-of-bigram cosine and normalized edit similarity.

    Both strings are whitespace-normalized first. Bigrams (over the string
    padded with one space each side) stand in for tokens: unlike whole
    words they give partial credit to a word with one wrong letter, which is
    exactly the damage bit flips do.
    """
    a, b = _squash(a), _squash(b)
    if a == b:
        return 1.0
    if not a or not b:
        return 0.0
    ca, cb = _bigrams(a), _bigrams(b)
    dot = sum(n * cb[g] for g, n in ca.items())
    cosine = dot / math.sqrt(sum(n * n for n in ca.values()) * sum(n * n for n in cb.values()))
    edit = 1.0 - Levenshtein.distance(a, b) / max(len(a), len(b))
    # Rounding can push distinct strings to exactly 1.0; keep it strict.
    return min(0.5 * cosine + 0.5 * edit, math.nextafter(1.0, 0.0))


class ExternalSimilarity:
    """Similarity served by an external process (e.g. a sentence-embedding model).

    Protocol: one JSON object per line, ``{"a": ..., "b": ...}`` in and
    ``{"similarity": float}`` out.
    """

    thread_safe = False

    def __init__(self, command: Sequence[str]):
        self._client = _LineClient(command)

    def __call__(self, a: str, b: str) -> float:
        value = float(self._client.ask({"a": a, "b": b})["similarity"])
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"external similarity {value} outside [0, 1]")
        return value

    def close(self) -> None:
        self._client.close()


# ---------------------------------------------------------------------------
# recoverers


def identity_recover(corrupted: str, purpose: PurposeTag | None = None) -> str:
    return corrupted


class IdentityRecoverer:
    """Passes the corrupted text through; the lower bound any recoverer should beat."""

    thread_safe = True

    def recover(self, corrupted: str, purpose: PurposeTag | None = None) -> str:
        return identity_recover(corrupted, purpose)


class DictionaryRecoverer:
    """Nearest-vocabulary-word correction in 5-bit code space.

    Out-of-vocabulary tokens are replaced by the same-length vocabulary word
    whose character codes differ in the fewest bits, ties going to the word
    listed first. Bit flips never change a word's length, and a token with no
    same-length candidate is left alone.
    """

    thread_safe = True

    def __init__(self, vocabulary: Iterable[str], alphabet: SymbolAlphabet = DEFAULT_ALPHABET):
        words = list(dict.fromkeys(w for w in vocabulary if w))
        if not words:
            raise EmptyVocabulary("vocabulary is empty")
        for w in words:
            if " " in w:
                raise ValueError(f"vocabulary word {w!r} contains a space")
            textcodec.text_to_indices(w, alphabet)
        self.alphabet = alphabet
        self.words = tuple(words)
        self._known = frozenset(words)
        by_len: dict[int, list[str]] = defaultdict(list)
        for w in words:
            by_len[len(w)].append(w)
        self._by_len = {
            n: (ws, np.stack([textcodec.text_to_indices(w, alphabet) for w in ws])) for n, ws in by_len.items()
        }

    @classmethod
    def from_file(cls, path: str | Path, alphabet: SymbolAlphabet = DEFAULT_ALPHABET) -> DictionaryRecoverer:
        text = Path(path).read_text(encoding="utf-8")
        return cls((line.strip() for line in text.splitlines()), alphabet)

    def correct_token(self, token: str) -> str:
        if token in self._known or len(token) not in self._by_len:
            return token
        words, codes = self._by_len[len(token)]
        diff = codes ^ textcodec.text_to_indices(token, self.alphabet)
        dist = _POPCOUNT[diff].sum(axis=1)
        return words[int(np.argmin(dist))]

    def recover(self, corrupted: str, purpose: PurposeTag | None = None) -> str:
        return " ".join(self.correct_token(t) if t else t for t in corrupted.split(" "))


_POPCOUNT = np.array([bin(i).count("1") for i in range(32)], dtype=np.int64)


def build_vocabulary(texts: Iterable[str]) -> list[str]:
    """Space-separated tokens, most frequent first, then in order of first use."""
    counts: Counter = Counter()
    first: dict[str, int] = {}
    for text in texts:
        for tok in text.split():
            counts[tok] += 1
            first.setdefault(tok, len(first))
    return sorted(counts, key=lambda t: (-counts[t], first[t]))


@lru_cache(maxsize=1)
def default_recoverer() -> DictionaryRecoverer:
    path = resources.files("aquamodem") / "data" / "vocabulary.txt"
    return DictionaryRecoverer(path.read_text(encoding="utf-8").split())


def dictionary_recover(corrupted: str, purpose: PurposeTag | None = None) -> str:
    """Recover with the vocabulary of the bundled message corpus."""
    return default_recoverer().recover(corrupted, purpose)


class ExternalRecoverer:
    """Drives a recovery model running in another process.

    The process reads ``{"corrupted": ..., "purpose": ...}`` JSON lines on
    stdin and answers each with ``{"recovered": ...}`` on stdout. Replies are
    filtered to the alphabet so downstream code can rely on it.
    """

    thread_safe = False

    def __init__(self, command: Sequence[str], alphabet: SymbolAlphabet = DEFAULT_ALPHABET):
        self.alphabet = alphabet
        self._client = _LineClient(command)

    def recover(self, corrupted: str, purpose: PurposeTag | None = None) -> str:
        reply = self._client.ask({"corrupted": corrupted, "purpose": None if purpose is None else PurposeTag(purpose).value})
        text = str(reply["recovered"]).lower()
        return "".join(c for c in text if c in self.alphabet.entries)

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class _LineClient:
    def __init__(self, command: Sequence[str]):
        self._proc = subprocess.Popen(
            list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, encoding="utf-8", bufsize=1
        )

    def ask(self, request: dict) -> dict:
        assert self._proc.stdin is not None and self._proc.stdout is not None
        self._proc.stdin.write(json.dumps(request) + "\n")
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise RuntimeError(f"external process exited with code {self._proc.poll()}")
        return json.loads(line)

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class BucketStats:
    count: int
    mean_similarity: float
    success_rate: float


@dataclass(frozen=True)
class EvalResult:
    mean_similarity: float
    success_rate: float
    threshold: float
    count: int
    per_ber: dict[float, BucketStats] = field(default_factory=dict)
    scores: tuple[float, ...] = ()


def _as_callable(recoverer) -> Callable[[str, PurposeTag | None], str]:
    return recoverer.recover if hasattr(recoverer, "recover") else recoverer


def evaluate(
    recoverer, corpus: Sequence[CorpusRecord], metric: Metric = similarity, threshold: float = SUCCESS_THRESHOLD
) -> EvalResult:
    """Score ``recoverer`` on every record against its original.

    ``recoverer`` is anything with a ``recover(corrupted, purpose)`` method
    or a plain function of the same shape. Per-record scores are returned in
    corpus order for paired comparisons.
    """
    if not corpus:
        raise ValueError("corpus is empty")
    recover = _as_callable(recoverer)
    scores = np.array([metric(recover(r.corrupted, r.purpose), r.original) for r in corpus])
    bers = np.array([r.ber for r in corpus])
    per_ber = {}
    for b in sorted(set(bers.tolist())):
        s = scores[bers == b]
        per_ber[b] = BucketStats(int(s.size), float(s.mean()), float(np.mean(s >= threshold)))
    return EvalResult(
        mean_similarity=float(scores.mean()),
        success_rate=float(np.mean(scores >= threshold)),
        threshold=threshold,
        count=len(corpus),
        per_ber=per_ber,
        scores=tuple(scores.tolist()),
    )
