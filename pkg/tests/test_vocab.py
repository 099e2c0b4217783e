"""Tests for tokenization, vocabularies and the implicit-character stream."""

from __future__ import annotations

import numpy as np
import pytest

from ical.errors import DataError, UnknownTokenError
from ical.vocab import (
    EOS,
    IMPLICIT_CHARS,
    IMPLICIT_VOCAB,
    PAD,
    SOS,
    SPACE,
    Direction,
    TokenSeq,
    Vocab,
    build_implicit,
    build_vocab,
    default_vocab,
    make_bidirectional,
    markers,
    tokenize,
)

ALPHABET = ["a", "b", "x", "1", "2", "+", "=", "\\frac", "\\sqrt", "^", "_", "{", "}"]


@pytest.fixture
def vocab() -> Vocab:
    return Vocab(["B", "m", "+", "1", "_", "^", "{", "}", "a", "b", "x", "2", "\\frac"])


class TestTokenize:
    def test_caption(self):
        assert tokenize("B _ { m + 1 }") == ["B", "_", "{", "m", "+", "1", "}"]

    def test_single(self):
        assert tokenize("x") == ["x"]

    def test_whitespace_runs(self):
        assert tokenize("  \\frac  { a }\t{ b }\n") == ["\\frac", "{", "a", "}", "{", "b", "}"]

    def test_empty(self):
        assert tokenize("") == []


class TestBuildImplicit:
    def test_worked_example(self):
        assert build_implicit(["B", "_", "{", "m", "+", "1", "}"]) == [SPACE, "_", "{", SPACE, SPACE, SPACE, "}"]

    def test_superscript(self):
        assert build_implicit(["x", "^", "{", "2", "}"]) == [SPACE, "^", "{", SPACE, "}"]

    def test_empty(self):
        assert build_implicit([]) == []

    def test_random_sequences_match_per_token_oracle(self):
        rng = np.random.default_rng(2024)
        mismatches = 0
        for _ in range(10_000):
            tokens = list(rng.choice(ALPHABET, size=rng.integers(0, 30)))
            out = build_implicit(tokens)
            oracle = [t if t in {"^", "_", "{", "}"} else "<space>" for t in tokens]
            positions = [i for i, t in enumerate(tokens) if t in IMPLICIT_CHARS]
            mismatches += (
                out != oracle
                or len(out) != len(tokens)
                or positions != [i for i, t in enumerate(out) if t in IMPLICIT_CHARS]
                or build_implicit(out) != out
                or build_implicit(tokens[::-1]) != out[::-1]
            )
        assert mismatches == 0


class TestVocab:
    def test_reserved_ids(self, vocab):
        assert vocab.symbols[:3] == ["<pad>", "<sos>", "<eos>"]
        assert (PAD, SOS, EOS) == (0, 1, 2)
        assert len(vocab) == 16

    def test_round_trip(self, vocab):
        assert vocab.decode(vocab.encode(tokenize("B _ { m + 1 }"))) == "B _ { m + 1 }"

    def test_decode_strips_markers(self, vocab):
        assert vocab.decode([SOS, vocab.id("x"), EOS, PAD, PAD]) == "x"

    def test_unknown_symbol(self, vocab):
        with pytest.raises(UnknownTokenError, match=r"unknown token '\\\\alpha' at position 2") as info:
            vocab.encode(["a", "+", "\\alpha"])
        assert info.value.position == 2

    def test_reserved_symbol_is_not_content(self, vocab):
        with pytest.raises(UnknownTokenError, match="<eos>"):
            vocab.encode(["a", "<eos>"])

    def test_duplicate_symbol(self):
        with pytest.raises(DataError, match="duplicate"):
            Vocab(["a", "b", "a"])

    def test_file_round_trip(self, vocab, tmp_path):
        path = vocab.save(tmp_path / "vocab.txt")
        assert Vocab.from_file(path).symbols == vocab.symbols

    def test_file_comments_and_blanks(self, tmp_path):
        path = tmp_path / "vocab.txt"
        path.write_text("# header\na\n\nb\n")
        assert Vocab.from_file(path).symbols[3:] == ["a", "b"]

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="No such vocabulary file"):
            Vocab.from_file(tmp_path / "absent.txt")

    def test_build_vocab(self):
        assert build_vocab(["a + b", "b ^ { 2 }"]).symbols[3:] == ["+", "2", "^", "a", "b", "{", "}"]

    def test_bundled_crohme_vocab(self):
        vocab = default_vocab()
        assert len(vocab) == 113
        assert "\\frac" in vocab
        assert all(c in vocab for c in IMPLICIT_CHARS)

    def test_implicit_vocab(self):
        assert IMPLICIT_VOCAB.symbols == ["<pad>", "<sos>", "<eos>", SPACE, "^", "_", "{", "}"]


class TestBidirectional:
    def test_streams(self, vocab):
        a, plus, b = vocab.id("a"), vocab.id("+"), vocab.id("b")
        l2r, r2l = make_bidirectional(["a", "+", "b"], vocab)
        assert l2r.ids == (SOS, a, plus, b, EOS)
        assert r2l.ids == (SOS, b, plus, a, EOS)
        assert r2l.direction == Direction.R2L

    def test_palindrome(self, vocab):
        l2r, r2l = make_bidirectional(["a", "+", "a"], vocab)
        assert l2r.content == r2l.content

    def test_decoder_markers(self, vocab):
        _, r2l = make_bidirectional(["a", "b"], vocab)
        assert r2l.decoder_ids == (EOS, vocab.id("b"), vocab.id("a"), SOS)
        assert markers(Direction.L2R) == (SOS, EOS)
        assert markers(Direction.R2L) == (EOS, SOS)

    def test_content_drops_padding(self):
        assert TokenSeq((SOS, 5, 6, EOS, PAD)).content == (5, 6)
