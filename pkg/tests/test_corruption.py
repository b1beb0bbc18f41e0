import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aquamodem import corruption, textcodec
from aquamodem.context import PurposeTag
from aquamodem.corruption import CorpusRecord, CorruptionSpec
from aquamodem.textcodec import DEFAULT_ALPHABET

texts = st.text(alphabet=DEFAULT_ALPHABET.entries, min_size=1, max_size=120)
MSGS = [("low air, going up", PurposeTag.SAFETY), ("ok", PurposeTag.ACKNOWLEDGE), ("turtle at twelve meters", PurposeTag.ENVIRONMENT)]


def test_zero_ber_is_identity():
    assert corruption.corrupt_message("all good here", CorruptionSpec(0.0)) == "all good here"


def test_full_ber_complements_indices():
    text = "".join(DEFAULT_ALPHABET.entries)
    out = corruption.corrupt_message(text, CorruptionSpec(1.0))
    idx = textcodec.text_to_indices(out)
    assert idx.tolist() == [31 - k for k in range(32)]


def test_ber_range_checked():
    with pytest.raises(ValueError):
        CorruptionSpec(1.5)


@given(texts, st.floats(0, 1), st.integers(0, 2**32))
def test_length_preserved(text, ber, seed):
    assert len(corruption.corrupt_message(text, CorruptionSpec(ber, seed=seed))) == len(text)


def test_flip_rate_at_five_percent():
    rng = np.random.default_rng(0)
    bits = np.zeros(200_000, dtype=np.uint8)
    assert np.mean(corruption.flip_bits(bits, 0.05, rng)) == pytest.approx(0.05, abs=0.005)


@given(texts, st.floats(0, 0.5), st.integers(0, 2**32))
def test_separator_protection_keeps_space_positions(text, ber, seed):
    out = corruption.corrupt_message(text, CorruptionSpec(ber, protect_separators=True, seed=seed))
    assert [i for i, c in enumerate(out) if c == " "] == [i for i, c in enumerate(text) if c == " "]


def test_spurious_spaces_are_redrawn_uniformly():
    rng = np.random.default_rng(1)
    space = DEFAULT_ALPHABET.space_index
    orig = np.zeros(100_000, dtype=np.int64)  # all 'a'
    corrupted = np.full(orig.size, space)
    out = corruption.restore_separators(orig, corrupted, DEFAULT_ALPHABET, rng)
    assert not np.any(out == space)
    counts = np.bincount(out, minlength=32)
    assert counts[space] == 0
    others = np.delete(counts, space)
    assert others.min() > 0.9 * orig.size / 31 and others.max() < 1.1 * orig.size / 31


def test_message_seed_determinism():
    spec = CorruptionSpec(0.1, seed=42)
    assert corruption.corrupt_message("swim to the anchor line", spec) == corruption.corrupt_message(
        "swim to the anchor line", spec
    )


def test_corpus_trivial_case():
    (rec,) = corruption.generate_corpus([("hello", PurposeTag.ASSIST)], [0.0], per_message=1)
    assert rec.corrupted == rec.original == "hello"
    assert rec.task == "message_recovery" and rec.purpose is PurposeTag.ASSIST


def test_corpus_count_and_order():
    recs = corruption.generate_corpus(MSGS, [0.0, 0.05, 0.1], per_message=4, seed=3)
    assert len(recs) == 3 * 3 * 4
    assert [r.original for r in recs[:12]] == [MSGS[0][0]] * 12
    assert [r.ber for r in recs[:12]] == [0.0] * 4 + [0.05] * 4 + [0.1] * 4


def test_full_scale_count():
    msgs = [(f"message number {textcodec.integer_to_words(i)}", PurposeTag.NAVIGATION) for i in range(100)]
    recs = corruption.generate_corpus(msgs, per_message=30, bers_per_message=16, seed=0)
    assert len(recs) == 48_000
    per_msg = {r.ber for r in recs if r.original == msgs[0][0]}
    assert len(per_msg) == 16 and per_msg <= set(corruption.DEFAULT_BER_GRID)


def test_corpus_errors():
    with pytest.raises(corruption.EmptyInput):
        corruption.generate_corpus([], [0.1])
    with pytest.raises(corruption.EmptyInput):
        corruption.generate_corpus(MSGS, [])
    with pytest.raises(ValueError):
        corruption.generate_corpus(MSGS, [0.1], bers_per_message=2)


def test_corpus_files_byte_identical(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    corruption.write_corpus(corruption.generate_corpus(MSGS, per_message=2, seed=7), a)
    corruption.write_corpus(corruption.generate_corpus(MSGS, per_message=2, seed=7), b)
    assert a.read_bytes() == b.read_bytes()
    back = corruption.read_corpus(a)
    assert back == corruption.generate_corpus(MSGS, per_message=2, seed=7)
    first = json.loads(a.read_text().splitlines()[0])
    assert set(first) == {"original", "corrupted", "ber", "purpose", "task"}


def test_protection_is_paired_with_unprotected_draws():
    plain = corruption.generate_corpus(MSGS, [0.1], per_message=50, seed=5)
    guarded = corruption.generate_corpus(MSGS, [0.1], per_message=50, seed=5, protect_separators=True)
    for p, g in zip(plain, guarded):
        # outside space positions in either string, the flips are identical
        for i, (a, b, o) in enumerate(zip(p.corrupted, g.corrupted, p.original)):
            if o != " " and a != " ":
                assert a == b


def test_record_validation_and_prompt():
    with pytest.raises(ValueError):
        CorpusRecord("abc", "ab", 0.1, PurposeTag.SAFETY)
    with pytest.raises(ValueError):
        CorpusRecord("abc", "abd", 0.1, "not a purpose")
    rec = CorpusRecord("abc", "abd", 0.01, "safety")
    assert corruption.prompt_text(rec) == "safety: abd"


def test_realized_flip_rate_audit():
    recs = corruption.generate_corpus(MSGS * 50, [0.08], per_message=20, seed=2)
    rate = corruption.realized_flip_rate([r.original for r in recs], [r.corrupted for r in recs])
    assert rate == pytest.approx(0.08, abs=0.01)
