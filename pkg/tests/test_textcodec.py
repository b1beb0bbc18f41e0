import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aquamodem import textcodec
from aquamodem.context import PurposeTag, Role
from aquamodem.textcodec import DEFAULT_ALPHABET, SymbolAlphabet

alphabet_text = st.text(alphabet=DEFAULT_ALPHABET.entries, min_size=1, max_size=200)


def test_alphabet_shape():
    a = DEFAULT_ALPHABET
    assert len(a) == 32
    assert len(set(a.entries)) == 32
    assert set("abcdefghijklmnopqrstuvwxyz ") <= set(a.entries)


def test_bundled_alphabet_file_matches_default():
    assert textcodec.default_alphabet() == DEFAULT_ALPHABET


def test_alphabet_file_round_trip_keeps_space(tmp_path):
    path = tmp_path / "alphabet.txt"
    DEFAULT_ALPHABET.to_file(path)
    assert len(path.read_text(encoding="utf-8").splitlines()) == 32
    assert SymbolAlphabet.from_file(path) == DEFAULT_ALPHABET


@pytest.mark.parametrize(
    "entries",
    [tuple("abc"), tuple("abcdefghijklmnopqrstuvwxyz .,?!a"), tuple("abcdefghijklmnopqrstuvwxy0.,?!'-")],
)
def test_bad_alphabets_rejected(entries):
    with pytest.raises(ValueError):
        SymbolAlphabet(entries)


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("12.1", "twelve point one"),
        ("hello", "hello"),
        ("Depth 30", "depth thirty"),
        ("Tank at 700 psi!", "tank at seven hundred psi!"),
        ("1,500 m", "one thousand five hundred m"),
        ("-3 degrees", "minus three degrees"),
        ("0.05", "zero point zero five"),
        ("999999", "nine hundred ninety nine thousand nine hundred ninety nine"),
        ("air: low; go up", "air, low, go up"),
        ("Up  NOW ", "up now"),
    ],
)
def test_normalize_message(raw, expected):
    assert textcodec.normalize_message(raw) == expected


def test_unknown_characters_dropped_with_warning():
    with pytest.warns(UserWarning):
        assert textcodec.normalize_message("ok #ready") == "ok ready"


def test_empty_after_normalization():
    with pytest.raises(textcodec.EmptyAfterNormalization):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            textcodec.normalize_message("###")


@given(st.integers(0, 999_999))
def test_number_words_use_only_alphabet(n):
    words = textcodec.integer_to_words(n)
    assert all(c in DEFAULT_ALPHABET for c in words)
    assert textcodec.normalize_message(str(n)) == words


def test_first_and_last_index_bits():
    a = DEFAULT_ALPHABET
    assert textcodec.encode_text(a.entries[0]).tolist() == [0, 0, 0, 0, 0]
    assert textcodec.encode_text(a.entries[31]).tolist() == [1, 1, 1, 1, 1]


def test_big_endian_layout():
    # 'c' has index 2 -> 00010
    assert textcodec.encode_text("ac").tolist() == [0, 0, 0, 0, 0, 0, 0, 0, 1, 0]


def test_unsupported_character_reports_position():
    with pytest.raises(textcodec.UnsupportedCharacter) as err:
        textcodec.encode_text("ab9")
    assert err.value.position == 2


def test_decode_edge_cases():
    assert textcodec.decode_bits([]) == ""
    assert textcodec.decode_bits([0, 0, 0, 0, 0]) == DEFAULT_ALPHABET.entries[0]
    assert textcodec.decode_bits([0, 0, 0, 0, 1, 1, 1]) == "b"


def test_round_trip_1000_random_strings():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        text = "".join(rng.choice(list(DEFAULT_ALPHABET.entries), rng.integers(1, 80)))
        bits = textcodec.encode_text(text)
        assert bits.size == 5 * len(text)
        assert textcodec.decode_bits(bits) == text


@given(alphabet_text)
def test_round_trip_property(text):
    assert textcodec.decode_bits(textcodec.encode_text(text)) == text


@given(st.lists(st.integers(0, 1), max_size=300))
def test_decode_is_total(bits):
    assert len(textcodec.decode_bits(bits)) == len(bits) // 5


def test_message_validation():
    m = textcodec.Message.from_raw("Air 500", Role.SENDER, PurposeTag.SAFETY)
    assert m.text == "air five hundred"
    with pytest.raises(ValueError):
        textcodec.Message("ok", Role.SENDER, PurposeTag.ACKNOWLEDGE)
    with pytest.raises(ValueError):
        textcodec.Message("", Role.REPLY, PurposeTag.ACKNOWLEDGE)
