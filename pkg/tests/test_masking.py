import numpy as np
import pytest

from dipseq.nn import MaskingPolicy, mask_batch
from dipseq.nn.config import ConfigError
from dipseq.nn.masking import ACTION_KEEP, ACTION_MASK, ACTION_RANDOM
from dipseq.tokenizers import CLS, MASK, N_SPECIAL, PAD

V = 50


def test_million_token_rates():
    rng = np.random.default_rng(0)
    ids = rng.integers(N_SPECIAL, V, size=(1000, 1000))
    out = mask_batch(ids, MaskingPolicy(), np.random.default_rng(1), V)
    n_sel = out.labels.shape[0]
    assert abs(n_sel / ids.size - 0.15) <= 0.005
    fr = np.bincount(out.actions, minlength=3) / n_sel
    assert abs(fr[ACTION_MASK] - 0.8) <= 0.01
    assert abs(fr[ACTION_RANDOM] - 0.1) <= 0.01
    assert abs(fr[ACTION_KEEP] - 0.1) <= 0.01

    r, c = out.positions.T
    np.testing.assert_array_equal(out.labels, ids[r, c])
    assert np.all(out.ids[r[out.actions == ACTION_MASK], c[out.actions == ACTION_MASK]] == MASK)
    keep = out.actions == ACTION_KEEP
    np.testing.assert_array_equal(out.ids[r[keep], c[keep]], ids[r[keep], c[keep]])
    rnd = out.ids[r[out.actions == ACTION_RANDOM], c[out.actions == ACTION_RANDOM]]
    assert rnd.min() >= N_SPECIAL and rnd.max() < V
    untouched = np.ones(ids.shape, bool)
    untouched[r, c] = False
    np.testing.assert_array_equal(out.ids[untouched], ids[untouched])


def test_random_replacements_uniform():
    ids = np.full((400, 1000), 10)
    out = mask_batch(ids, MaskingPolicy(replace_rate=1.0, mask_frac=0, random_frac=1.0, keep_frac=0), np.random.default_rng(2), V)
    counts = np.bincount(out.ids.ravel(), minlength=V)[N_SPECIAL:]
    expected = ids.size / (V - N_SPECIAL)
    assert np.abs(counts - expected).max() < 6 * np.sqrt(expected)


def test_zero_rate_is_identity():
    ids = np.arange(4, 24).reshape(2, 10)
    out = mask_batch(ids, MaskingPolicy(replace_rate=0.0), np.random.default_rng(0), V)
    np.testing.assert_array_equal(out.ids, ids)
    assert out.labels.size == 0 and out.positions.shape == (0, 2)


def test_specials_and_pads_never_selected():
    ids = np.full((50, 40), 7)
    ids[:, 0] = CLS
    ids[:, 30:] = PAD
    pad_mask = ids != PAD
    ids[:, 20:30] = 9
    pad_mask[:, 20:30] = False  # valid-looking ids marked as padding
    out = mask_batch(ids, MaskingPolicy(replace_rate=1.0), np.random.default_rng(0), V, pad_mask=pad_mask)
    assert set(np.unique(out.positions[:, 1])) == set(range(1, 20))


def test_fixed_seed_identical():
    ids = np.random.default_rng(5).integers(N_SPECIAL, V, size=(30, 30))
    a = mask_batch(ids, MaskingPolicy(), np.random.default_rng(9), V)
    b = mask_batch(ids, MaskingPolicy(), np.random.default_rng(9), V)
    assert all(np.array_equal(getattr(a, f), getattr(b, f)) for f in ("ids", "positions", "labels", "actions"))


def test_policy_validation():
    with pytest.raises(ConfigError):
        MaskingPolicy(mask_frac=0.5)
    with pytest.raises(ConfigError):
        MaskingPolicy(replace_rate=1.2)
