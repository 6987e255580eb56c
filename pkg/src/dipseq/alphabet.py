"""Allele and diploid SNP token alphabets with a single-character codec.

Eleven allele symbols cover the four bases, the unknown base ``N``, one
aggregated insertion token per base (``XI`` = "insertion after X") and a
deletion token. Unordered pairs of alleles (combinations with replacement)
give 66 diploid tokens, each serialised as exactly one code point so that
diploid sequences can be handled as ordinary strings.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import total_ordering
from typing import Iterable

ALLELES: tuple[str, ...] = ("A", "AI", "C", "CI", "DEL", "G", "GI", "N", "NI", "T", "TI")
"""tuple: The 11 allele symbols in canonical (lexicographic) order."""

BASES: tuple[str, ...] = ("A", "C", "G", "N", "T")

ALLELE_INDEX: dict[str, int] = {a: i for i, a in enumerate(ALLELES)}
N_ALLELES = len(ALLELES)

INSERTION_OF: dict[str, str] = {b: b + "I" for b in BASES}

HOMOZYGOUS_CHARS: dict[str, str] = {
    "A": "A",
    "C": "C",
    "G": "G",
    "N": "N",
    "T": "T",
    "AI": "B",
    "CI": "D",
    "GI": "H",
    "NI": "O",
    "TI": "U",
    "DEL": "X",
}
HETEROZYGOUS_BASE = 0x100


class AlphabetError(ValueError):
    """Raised for symbols or code points outside the alphabet."""


@total_ordering
@dataclass(frozen=True)
class SnpToken:
    """Unordered allele pair, stored with ``first <= second``."""

    first: str
    second: str

    def __post_init__(self):
        if self.first not in ALLELE_INDEX or self.second not in ALLELE_INDEX:
            raise AlphabetError(f"unknown allele in {self.first}/{self.second}")
        if ALLELE_INDEX[self.first] > ALLELE_INDEX[self.second]:
            raise AlphabetError(f"non-canonical pair {self.first}/{self.second}")

    def __str__(self):
        return f"{self.first}/{self.second}"

    def __lt__(self, other):
        return (ALLELE_INDEX[self.first], ALLELE_INDEX[self.second]) < (
            ALLELE_INDEX[other.first],
            ALLELE_INDEX[other.second],
        )

    @property
    def is_homozygous(self) -> bool:
        return self.first == self.second

    def zygosity(self, reference: str) -> str:
        """Return ``"wild-type"``, ``"homozygous"`` or ``"heterozygous"`` against ``reference``."""
        if self.first != self.second:
            return "heterozygous"
        return "wild-type" if self.first == reference else "homozygous"

    @classmethod
    def parse(cls, text: str) -> "SnpToken":
        try:
            a, b = text.split("/")
        except ValueError:
            raise AlphabetError(f"malformed SNP token {text!r}") from None
        return make_snp_token(a, b)


def make_snp_token(a1: str, a2: str) -> SnpToken:
    if a1 not in ALLELE_INDEX or a2 not in ALLELE_INDEX:
        raise AlphabetError(f"unknown allele in ({a1!r}, {a2!r})")
    if ALLELE_INDEX[a1] > ALLELE_INDEX[a2]:
        a1, a2 = a2, a1
    return SnpToken(a1, a2)


def enumerate_alphabet() -> list[SnpToken]:
    """All 66 diploid tokens in canonical order, ``A/A`` first and ``TI/TI`` last."""
    return [SnpToken(a, b) for a, b in itertools.combinations_with_replacement(ALLELES, 2)]


TOKENS: tuple[SnpToken, ...] = tuple(enumerate_alphabet())
TOKEN_INDEX: dict[SnpToken, int] = {t: i for i, t in enumerate(TOKENS)}


def _build_table() -> dict[SnpToken, str]:
    table = {}
    offset = 0
    for tok in TOKENS:
        if tok.is_homozygous:
            table[tok] = HOMOZYGOUS_CHARS[tok.first]
        else:
            table[tok] = chr(HETEROZYGOUS_BASE + offset)
            offset += 1
    return table


TO_CHAR: dict[SnpToken, str] = _build_table()
FROM_CHAR: dict[str, SnpToken] = {c: t for t, c in TO_CHAR.items()}

# Flat lookup used by the sampling kernels: PAIR_CODEPOINT[i, j] for allele indices i, j.
PAIR_CODEPOINT: list[list[int]] = [
    [ord(TO_CHAR[make_snp_token(a, b)]) for b in ALLELES] for a in ALLELES
]


def encode_char(token: SnpToken) -> str:
    return TO_CHAR[token]


def decode_char(char: str) -> SnpToken:
    try:
        return FROM_CHAR[char]
    except KeyError:
        raise AlphabetError(f"code point U+{ord(char):04X} is not in the SNP alphabet") from None


def encode_tokens(tokens: Iterable[SnpToken]) -> str:
    return "".join(TO_CHAR[t] for t in tokens)


def decode_text(text: str) -> list[SnpToken]:
    return [decode_char(c) for c in text]


def wild_type_text(bases: str) -> str:
    """Homozygous reference encoding of a plain base string."""
    return "".join(HOMOZYGOUS_CHARS[b] for b in bases)


def involves_unknown(token: SnpToken) -> bool:
    """True for pairings with ``N``/``NI`` other than ``N/N``; these never occur in real data."""
    if str(token) == "N/N":
        return False
    return any(a in ("N", "NI") for a in (token.first, token.second))


def codec_table() -> str:
    """Render the codec as text, one ``<first>/<second>\\t<hex>\\t<char>`` line per token."""
    lines = [f"{t}\t{ord(TO_CHAR[t]):04X}\t{TO_CHAR[t]}" for t in TOKENS]
    return "\n".join(lines) + "\n"
