"""Byte-pair encoding over single-character alphabets, plus k-mer tokenizers."""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _accel

PAD, UNK, CLS, MASK = 0, 1, 2, 3
SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[MASK]")
N_SPECIAL = len(SPECIAL_TOKENS)
HEADER = "#snp2vec-bpe v1 vocab={n}"
_FORBIDDEN = set("\t\n\r")


class TokenizerError(ValueError):
    pass


@dataclass
class TokenSequence:
    ids: np.ndarray
    source_length: int
    unk_count: int = 0

    def __len__(self):
        return int(self.ids.shape[0])


@dataclass
class TokenizerModel:
    vocab: list[str]
    merges: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.vocab)}
        if len(self.index) != len(self.vocab):
            raise TokenizerError("duplicate vocabulary entries")
        if tuple(self.vocab[:N_SPECIAL]) != SPECIAL_TOKENS:
            raise TokenizerError("vocabulary must start with the special tokens")
        self._merge_ids = np.array(
            [(self.index[a], self.index[b], self.index[a + b]) for a, b in self.merges], dtype=np.int64
        ).reshape(-1, 3)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @property
    def alphabet(self) -> list[str]:
        return [t for t in self.vocab[N_SPECIAL:] if len(t) == 1]

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8", newline="\n")

    def dumps(self) -> str:
        lines = [HEADER.format(n=self.vocab_size)]
        lines += [f"{i}\t{t}" for i, t in enumerate(self.vocab)]
        lines += [f"#merge {a}\t{b}" for a, b in self.merges]
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, path) -> "TokenizerModel":
        return cls.loads(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def loads(cls, text: str) -> "TokenizerModel":
        lines = text.split("\n")
        m = re.fullmatch(r"#snp2vec-bpe v1 vocab=(\d+)", lines[0])
        if not m:
            raise TokenizerError("missing tokenizer header")
        vocab, merges = [], []
        for ln in lines[1:]:
            if not ln:
                continue
            if ln.startswith("#merge "):
                a, b = ln[len("#merge ") :].split("\t")
                merges.append((a, b))
            else:
                i, tok = ln.split("\t", 1)
                if int(i) != len(vocab):
                    raise TokenizerError(f"vocabulary ids not dense at {i}")
                vocab.append(tok)
        if len(vocab) != int(m.group(1)):
            raise TokenizerError("header vocab size does not match entries")
        return cls(vocab, merges)


def _corpus_ids(corpus: Sequence[str], index: dict[str, int]) -> np.ndarray:
    parts = []
    for text in corpus:
        parts.extend(index[c] for c in text)
        parts.append(-1)
    return np.asarray(parts, dtype=np.int64)


def train_bpe(corpus: Iterable[str], vocab_size: int) -> TokenizerModel:
    """Greedy BPE: merge the most frequent adjacent pair until ``vocab_size`` or no pair repeats.

    Pairs never span two corpus entries. Ties go to the lexicographically
    smallest ``(left, right)`` string pair.
    """
    corpus = [t for t in corpus]
    if not corpus or not any(corpus):
        raise TokenizerError("cannot train on an empty corpus")
    chars = sorted(set().union(*map(set, corpus)))
    if _FORBIDDEN & set(chars):
        raise TokenizerError("corpus contains tab or newline characters")
    if vocab_size < len(chars) + N_SPECIAL:
        raise TokenizerError(f"vocab_size {vocab_size} below {len(chars)} characters + {N_SPECIAL} specials")
    vocab = list(SPECIAL_TOKENS) + chars
    index = {t: i for i, t in enumerate(vocab)}
    merges: list[tuple[str, str]] = []
    ids = _corpus_ids(corpus, index)
    while len(vocab) < vocab_size:
        keys, counts = _accel.count_pairs(ids, vocab_size)
        if counts.size == 0:
            break
        best = counts.max()
        if best < 2:
            break
        cand = keys[counts == best]
        left, right = min(((int(k) // vocab_size, int(k) % vocab_size) for k in cand),
                          key=lambda lr: (vocab[lr[0]], vocab[lr[1]]))
        merged = vocab[left] + vocab[right]
        new = index.get(merged)
        if new is None:
            new = len(vocab)
            vocab.append(merged)
            index[merged] = new
        merges.append((vocab[left], vocab[right]))
        ids = _accel.merge_pair(ids, left, right, new)
    return TokenizerModel(vocab, merges)


def bpe_encode(model: TokenizerModel, text: str) -> TokenSequence:
    index = model.index
    raw = [index.get(c, UNK) if len(c) == 1 else UNK for c in text]
    unk = sum(1 for c in text if c not in index)
    ids = np.asarray(raw, dtype=np.int64)
    for left, right, new in model._merge_ids:
        if ids.shape[0] < 2:
            break
        ids = _accel.merge_pair(ids, left, right, new)
    return TokenSequence(ids, len(text), unk)


def bpe_decode(model: TokenizerModel, ids, skip_specials: bool = True) -> str:
    out = []
    n = model.vocab_size
    for i in np.asarray(ids, dtype=np.int64).tolist():
        if not 0 <= i < n:
            raise IndexError(f"token id {i} outside vocabulary of size {n}")
        if i < N_SPECIAL and skip_specials:
            continue
        out.append(model.vocab[i])
    return "".join(out)


def kmer_tokenize(text: str, k: int) -> list[str]:
    """Overlapping width-``k`` windows at stride 1."""
    return gkm_tokenize(text, k, 1)


def gkm_tokenize(text: str, k: int, L: int) -> list[str]:
    """Width-``k`` windows starting every ``L`` positions; only full windows are kept."""
    if k < 1 or L < 1:
        raise ValueError("k and L must be positive")
    if len(text) < k:
        warnings.warn(f"text of length {len(text)} shorter than k={k}; no tokens", stacklevel=2)
        return []
    return [text[i : i + k] for i in range(0, len(text) - k + 1, L)]


def gkm_token_count(length: int, k: int, L: int = 1) -> int:
    return 0 if length < k else (length - k) // L + 1


@dataclass(frozen=True)
class TokenizerSpec:
    """Named tokenizer for benchmarks: ``"3mer"``, ``"gkm6-10"`` or ``"bpe"``."""

    kind: str
    k: int = 0
    L: int = 1

    @property
    def label(self) -> str:
        if self.kind == "kmer":
            return f"{self.k}-mer"
        if self.kind == "gkm":
            return f"gkm ({self.k},{self.L})"
        return "BPE"

    @classmethod
    def parse(cls, text: str) -> "TokenizerSpec":
        text = text.strip().lower()
        if m := re.fullmatch(r"(\d+)-?mer", text):
            return cls("kmer", int(m.group(1)), 1)
        if m := re.fullmatch(r"gkm\(?(\d+)[-,](\d+)\)?", text):
            return cls("gkm", int(m.group(1)), int(m.group(2)))
        if text == "bpe":
            return cls("bpe")
        raise ValueError(f"unknown tokenizer spec {text!r}")

    def tokenize(self, text: str, bpe: TokenizerModel | None = None) -> list[str]:
        if self.kind in ("kmer", "gkm"):
            return gkm_tokenize(text, self.k, self.L)
        if bpe is None:
            raise ValueError("BPE spec needs a trained tokenizer")
        return [bpe.vocab[i] for i in bpe_encode(bpe, text).ids.tolist()]


def parse_specs(text: str) -> list[TokenizerSpec]:
    # commas inside "gkm(6,10)" do not separate specs
    return [TokenizerSpec.parse(s) for s in re.split(r",(?![^(]*\))", text) if s.strip()]
