"""Labelled datasets, fold plans and batch assembly."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..tokenizers import CLS, PAD, TokenizerModel, bpe_encode


class DataError(ValueError):
    pass


class StratificationError(DataError):
    pass


@dataclass
class LabeledDataset:
    texts: list[str]
    labels: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not self.texts:
            raise DataError("dataset is empty")
        if len(self.texts) != self.labels.shape[0]:
            raise DataError("texts and labels differ in length")
        if not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")

    def __len__(self):
        return len(self.texts)

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset([self.texts[i] for i in idx.tolist()], self.labels[idx], dict(self.metadata))

    def shuffled_labels(self, seed: int) -> "LabeledDataset":
        rng = np.random.default_rng([seed, 99])
        return LabeledDataset(list(self.texts), rng.permutation(self.labels), dict(self.metadata, shuffled=True))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for k in sorted(self.metadata):
                fh.write(f"#{k}={self.metadata[k]}\n")
            for t, y in zip(self.texts, self.labels.tolist()):
                fh.write(f"{y}\t{t}\n")

    @classmethod
    def load(cls, path) -> "LabeledDataset":
        texts, labels, meta = [], [], {}
        for ln in Path(path).read_text(encoding="utf-8").split("\n"):
            if not ln:
                continue
            if ln.startswith("#"):
                k, _, v = ln[1:].partition("=")
                meta[k] = v
                continue
            y, _, t = ln.partition("\t")
            labels.append(int(y))
            texts.append(t)
        return cls(texts, np.asarray(labels), meta)


@dataclass
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def stratified_folds(labels, k: int = 10, seed: int = 0) -> FoldPlan:
    """Shuffle each class and deal all items round-robin into ``k`` folds.

    Dealing continues across classes, so fold sizes differ by at most one
    and each class is spread as evenly as possible.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2 or k > labels.shape[0]:
        raise DataError(f"cannot make {k} folds from {labels.shape[0]} items")
    rng = np.random.default_rng([seed, 11])
    order = np.concatenate([rng.permutation(np.flatnonzero(labels == c)) for c in np.unique(labels)])
    assignments = np.empty(labels.shape[0], dtype=np.int64)
    assignments[order] = np.arange(order.shape[0]) % k
    return FoldPlan(k, assignments, seed)


def stratified_split(labels, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Split positions ``0..len(labels)-1`` into (rest, held) with ~``fraction`` of each class held."""
    labels = np.asarray(labels)
    held = []
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        take = max(1, int(round(fraction * idx.shape[0]))) if idx.shape[0] > 1 else 0
        held.append(idx[:take])
    held = np.sort(np.concatenate(held)) if held else np.zeros(0, np.int64)
    rest = np.setdiff1d(np.arange(labels.shape[0]), held)
    return rest, held


def encode_texts(tokenizer: TokenizerModel, texts: Sequence[str], max_len: int, cls_prefix: bool = True):
    """BPE-encode texts into id arrays, optionally [CLS]-prefixed, truncated to ``max_len``.

    Returns ``(sequences, n_truncated)``.
    """
    out = []
    truncated = 0
    for t in texts:
        ids = bpe_encode(tokenizer, t).ids
        if cls_prefix:
            ids = np.concatenate([[CLS], ids]).astype(np.int64)
        if ids.shape[0] > max_len:
            truncated += 1
            ids = ids[:max_len]
        out.append(ids)
    return out, truncated


def pad_batch(seqs: Sequence[np.ndarray], length: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad id sequences; returns ``(ids, valid mask)``."""
    n = max(s.shape[0] for s in seqs) if length is None else length
    ids = np.full((len(seqs), n), PAD, dtype=np.int64)
    mask = np.zeros((len(seqs), n), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, : s.shape[0]] = s
        mask[i, : s.shape[0]] = True
    return ids, mask
