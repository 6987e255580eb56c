from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tokenizers import MASK, N_SPECIAL
from .config import MaskingPolicy

ACTION_MASK, ACTION_RANDOM, ACTION_KEEP = 0, 1, 2


@dataclass
class MaskedBatch:
    ids: np.ndarray
    positions: np.ndarray
    labels: np.ndarray
    actions: np.ndarray


def mask_batch(ids, policy: MaskingPolicy, rng: np.random.Generator, vocab_size: int, pad_mask=None) -> MaskedBatch:
    """BERT-style corruption. Special tokens and padding are never selected.

    ``positions`` are ``(row, column)`` pairs of the selected tokens and
    ``labels`` their original ids; ``actions`` says what happened to each.
    """
    ids = np.asarray(ids, dtype=np.int64)
    eligible = ids >= N_SPECIAL
    if pad_mask is not None:
        eligible &= np.asarray(pad_mask, dtype=bool)
    selected = eligible & (rng.random(ids.shape) < policy.replace_rate)
    rows, cols = np.nonzero(selected)
    labels = ids[rows, cols]
    u = rng.random(rows.shape[0])
    actions = np.full(rows.shape[0], ACTION_KEEP, dtype=np.int8)
    actions[u < policy.mask_frac + policy.random_frac] = ACTION_RANDOM
    actions[u < policy.mask_frac] = ACTION_MASK
    random_ids = rng.integers(N_SPECIAL, vocab_size, size=rows.shape[0])
    out = ids.copy()
    out[rows[actions == ACTION_MASK], cols[actions == ACTION_MASK]] = MASK
    rnd = actions == ACTION_RANDOM
    out[rows[rnd], cols[rnd]] = random_ids[rnd]
    return MaskedBatch(out, np.stack([rows, cols], axis=1).astype(np.int64), labels, actions)
