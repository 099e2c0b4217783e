"""LaTeX token vocabularies and the implicit-character stream.

Ground truth is whitespace-tokenized LaTeX, as in the CROHME caption files::

    B _ { m + 1 }

The implicit stream keeps the structure tokens ``^ _ { }`` and replaces every other
token with ``<space>``; it has the same length as its source.
"""

from __future__ import annotations

import logging
import pathlib
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from enum import Enum

from ical.errors import DataError, UnknownTokenError

logger = logging.getLogger(__name__)

PAD, SOS, EOS = 0, 1, 2
RESERVED = ("<pad>", "<sos>", "<eos>")
SPACE = "<space>"
IMPLICIT_CHARS = frozenset({"^", "_", "{", "}"})


class Direction(str, Enum):
    L2R = "l2r"
    R2L = "r2l"


@dataclass(frozen=True)
class TokenSeq:
    """Token ids including the SOS and EOS markers.

    ``ids`` always reads ``SOS content EOS``; for the R2L direction the content is
    reversed. ``decoder_ids`` is what the decoder consumes, where the R2L stream
    starts on EOS and ends on SOS.
    """

    ids: tuple[int, ...]
    direction: Direction = Direction.L2R

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def content(self) -> tuple[int, ...]:
        return tuple(i for i in self.ids if i not in (PAD, SOS, EOS))

    @property
    def decoder_ids(self) -> tuple[int, ...]:
        start, end = markers(self.direction)
        return (start, *self.content, end)


def markers(direction: Direction) -> tuple[int, int]:
    """Start and end token the decoder uses for ``direction``."""
    return (SOS, EOS) if direction == Direction.L2R else (EOS, SOS)


def tokenize(latex: str) -> list[str]:
    return latex.split()


def build_implicit(tokens: Sequence[str]) -> list[str]:
    """Maps each token to itself if it is implicit, else to ``<space>``.

    >>> build_implicit(["B", "_", "{", "m", "+", "1", "}"])
    ['<space>', '_', '{', '<space>', '<space>', '<space>', '}']
    """
    return [t if t in IMPLICIT_CHARS else SPACE for t in tokens]


class Vocab:
    """Bijective symbol/id map with PAD, SOS and EOS at ids 0, 1 and 2.

    Args:
        symbols: content symbols in id order; duplicates and reserved names are
            rejected.
    """

    def __init__(self, symbols: Iterable[str]) -> None:
        self.symbols: list[str] = list(RESERVED)
        self._ids: dict[str, int] = {s: i for i, s in enumerate(RESERVED)}
        for symbol in symbols:
            if symbol in self._ids:
                raise DataError(f"duplicate vocabulary symbol {symbol!r}")
            self._ids[symbol] = len(self.symbols)
            self.symbols.append(symbol)

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._ids

    def __repr__(self) -> str:
        return f"Vocab(size={len(self)})"

    @classmethod
    def from_file(cls, path: str | pathlib.Path) -> Vocab:
        """Reads one symbol per line; blank lines and ``#`` comments are skipped."""
        path = pathlib.Path(path)
        if not path.is_file():
            logger.error(f"Vocabulary file not found: {path}")
            raise DataError(f"No such vocabulary file: {path}")
        symbols = []
        for line in path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                symbols.append(line)
        return cls(symbols)

    def save(self, path: str | pathlib.Path) -> pathlib.Path:
        path = pathlib.Path(path)
        path.write_text("".join(f"{s}\n" for s in self.symbols[len(RESERVED) :]), encoding="utf-8")
        return path

    def id(self, symbol: str) -> int:
        return self._ids[symbol]

    def encode(self, symbols: Sequence[str]) -> TokenSeq:
        """Returns ``SOS symbols EOS`` as ids.

        Raises:
            UnknownTokenError: naming the first symbol missing from the vocabulary.
        """
        ids = [SOS]
        for position, symbol in enumerate(symbols):
            if symbol not in self._ids or self._ids[symbol] < len(RESERVED):
                raise UnknownTokenError(symbol, position)
            ids.append(self._ids[symbol])
        ids.append(EOS)
        return TokenSeq(tuple(ids))

    def to_symbols(self, ids: Iterable[int]) -> list[str]:
        return [self.symbols[i] for i in ids if i not in (PAD, SOS, EOS)]

    def decode(self, seq: TokenSeq | Iterable[int]) -> str:
        """Joins the content symbols with single spaces; SOS, EOS and PAD are dropped."""
        ids = seq.ids if isinstance(seq, TokenSeq) else seq
        return " ".join(self.to_symbols(int(i) for i in ids))


IMPLICIT_VOCAB = Vocab([SPACE, "^", "_", "{", "}"])


def make_bidirectional(tokens: Sequence[str], vocab: Vocab) -> tuple[TokenSeq, TokenSeq]:
    """Returns the L2R stream and the R2L stream with its content reversed."""
    l2r = vocab.encode(tokens)
    r2l = TokenSeq((SOS, *reversed(l2r.ids[1:-1]), EOS), Direction.R2L)
    return l2r, r2l


def build_vocab(labels: Iterable[str]) -> Vocab:
    """Collects every symbol of the given label strings, sorted."""
    symbols = set()
    for label in labels:
        symbols.update(tokenize(label))
    return Vocab(sorted(symbols - set(RESERVED)))


def default_vocab() -> Vocab:
    from ical.config import PATH

    return Vocab.from_file(PATH.crohme_vocab)
