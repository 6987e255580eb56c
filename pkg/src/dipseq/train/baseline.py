"""Bag-of-words logistic regression and token-length statistics."""

from __future__ import annotations

import csv
import io
from collections import Counter
from typing import Sequence

import numpy as np

from ..tokenizers import TokenizerModel, TokenizerSpec
from .metrics import accuracy, auprc, auroc


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def bow_features(token_lists: Sequence[Sequence[str]], vocab: dict[str, int]) -> np.ndarray:
    X = np.zeros((len(token_lists), len(vocab)))
    for i, toks in enumerate(token_lists):
        for t, c in Counter(toks).items():
            j = vocab.get(t)
            if j is not None:
                X[i, j] = c
    return X


def bow_linear_baseline(
    train_tokens: Sequence[Sequence[str]],
    train_labels,
    test_tokens: Sequence[Sequence[str]],
    test_labels,
    steps: int = 500,
    lr: float = 0.5,
    l2: float = 1e-3,
    seed: int = 0,
) -> dict[str, float]:
    """Token-count features, standardised, fitted by full-batch gradient descent."""
    y = np.asarray(train_labels, dtype=np.float64)
    if np.unique(y).shape[0] < 2:
        raise ValueError("training split has a single class")
    vocab = {t: i for i, t in enumerate(sorted({t for toks in train_tokens for t in toks}))}
    X = np.log1p(bow_features(train_tokens, vocab))
    mu, sd = X.mean(axis=0), X.std(axis=0)
    sd[sd == 0] = 1.0
    X = (X - mu) / sd
    rng = np.random.default_rng([seed, 41])
    w = rng.normal(0, 1e-3, X.shape[1])
    b = 0.0
    n = X.shape[0]
    for _ in range(steps):
        p = _sigmoid(X @ w + b)
        g = p - y
        w -= lr * (X.T @ g / n + l2 * w)
        b -= lr * g.mean()
    Xt = (np.log1p(bow_features(test_tokens, vocab)) - mu) / sd
    scores = _sigmoid(Xt @ w + b)
    yt = np.asarray(test_labels)
    out = {"accuracy": accuracy(scores, yt)}
    if np.unique(yt).shape[0] == 2:
        out["auroc"] = auroc(scores, yt)
        out["auprc"] = auprc(scores, yt)
    return out


def token_length_report(
    specs: Sequence[TokenizerSpec], texts: Sequence[str], bpe: TokenizerModel | None = None
) -> list[tuple[str, float]]:
    """Mean number of tokens each tokenizer produces per text."""
    rows = []
    for spec in specs:
        counts = [len(spec.tokenize(t, bpe)) for t in texts]
        rows.append((spec.label, float(np.mean(counts)) if counts else 0.0))
    return rows


def table_csv(rows: list[tuple[str, float]], accuracies: dict[str, float] | None = None) -> str:
    """Tokenizers as columns; one row of average token length, optionally one of BoW accuracy."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["Tokenization"] + [label for label, _ in rows])
    w.writerow(["Avg. Token Length"] + [_fmt(v) for _, v in rows])
    if accuracies:
        w.writerow(["BoW Linear"] + [f"{accuracies[label]:.3f}" for label, _ in rows])
    return out.getvalue()


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:.2f}"
