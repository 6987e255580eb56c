import warnings
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dipseq.alphabet import TOKENS, encode_char
from dipseq.tokenizers import (
    CLS,
    N_SPECIAL,
    SPECIAL_TOKENS,
    UNK,
    TokenizerError,
    TokenizerModel,
    TokenizerSpec,
    bpe_decode,
    bpe_encode,
    gkm_token_count,
    gkm_tokenize,
    kmer_tokenize,
    parse_specs,
    train_bpe,
)

SNP_CHARS = [encode_char(t) for t in TOKENS]


def naive_bpe(corpus, vocab_size):
    """Textbook BPE on lists of strings with Counter-based pair counting."""
    seqs = [list(t) for t in corpus]
    vocab = list(SPECIAL_TOKENS) + sorted({c for t in corpus for c in t})
    merges = []
    while len(vocab) < vocab_size:
        counts = Counter()
        for s in seqs:
            counts.update(zip(s, s[1:]))
        if not counts or max(counts.values()) < 2:
            break
        top = max(counts.values())
        a, b = min(p for p, c in counts.items() if c == top)
        merges.append((a, b))
        if a + b not in vocab:
            vocab.append(a + b)
        for k, s in enumerate(seqs):
            out, i = [], 0
            while i < len(s):
                if i + 1 < len(s) and s[i] == a and s[i + 1] == b:
                    out.append(a + b)
                    i += 2
                else:
                    out.append(s[i])
                    i += 1
            seqs[k] = out
    return vocab, merges


def naive_encode(merges, text):
    s = list(text)
    for a, b in merges:
        out, i = [], 0
        while i < len(s):
            if i + 1 < len(s) and s[i] == a and s[i + 1] == b:
                out.append(a + b)
                i += 2
            else:
                out.append(s[i])
                i += 1
        s = out
    return s


def naive_windows(text, k, L):
    out = []
    i = 0
    while i + k <= len(text):
        out.append(text[i : i + k])
        i += L
    return out


@pytest.fixture(scope="module")
def snp_model():
    rng = np.random.default_rng(0)
    # skewed draws so that merges are plentiful, every symbol appears at least once
    p = rng.dirichlet(np.full(66, 0.3))
    corpus = ["".join(SNP_CHARS)] + ["".join(rng.choice(SNP_CHARS, size=300, p=p)) for _ in range(40)]
    return train_bpe(corpus, 400)


# -- training -------------------------------------------------------------


def test_single_candidate_pair():
    m = train_bpe(["AAAA"], N_SPECIAL + 2)
    assert m.merges == [("A", "A")]
    assert m.vocab[-1] == "AA"


def test_most_frequent_pair_first():
    m = train_bpe(["ABABAB"], N_SPECIAL + 3)
    assert m.merges[0] == ("A", "B")


def test_specials_and_dense_ids(snp_model):
    assert tuple(snp_model.vocab[:N_SPECIAL]) == SPECIAL_TOKENS
    assert len(set(snp_model.vocab)) == snp_model.vocab_size
    assert set(SNP_CHARS) <= set(snp_model.vocab)
    for a, b in snp_model.merges:
        assert a + b in snp_model.index
        assert a not in SPECIAL_TOKENS and b not in SPECIAL_TOKENS


@settings(max_examples=60, deadline=None)
@given(st.lists(st.text("ABC", min_size=1, max_size=40), min_size=1, max_size=6), st.integers(8, 40))
def test_matches_naive_trainer(corpus, size):
    if size < len(set("".join(corpus))) + N_SPECIAL:
        return
    model = train_bpe(corpus, size)
    vocab, merges = naive_bpe(corpus, size)
    assert model.merges == merges
    assert model.vocab == vocab


def test_learned_tokens_are_concatenations():
    rng = np.random.default_rng(1)
    corpus = ["".join(rng.choice(["x", "y"], size=200)) for _ in range(5)]
    m = train_bpe(corpus, 60)
    assert all(set(t) <= {"x", "y"} for t in m.vocab[N_SPECIAL:])


def test_merges_do_not_cross_segments():
    m = train_bpe(["AB", "AB", "BA"], 20)
    # "BA" occurs once inside a segment; the A|B boundary across segments must not count
    assert m.merges == [("A", "B")]


def test_deterministic():
    corpus = ["GATTACA" * 20, "CATTAG" * 15]
    assert train_bpe(corpus, 40).merges == train_bpe(list(corpus), 40).merges


@pytest.mark.parametrize("corpus", [[], [""], ["", ""]])
def test_empty_corpus(corpus):
    with pytest.raises(TokenizerError):
        train_bpe(corpus, 10)


def test_vocab_too_small():
    with pytest.raises(TokenizerError):
        train_bpe(["ABCD"], N_SPECIAL + 3)


def test_forbidden_characters():
    with pytest.raises(TokenizerError):
        train_bpe(["A\tB"], 20)


# -- encode / decode ------------------------------------------------------


def test_empty_text(snp_model):
    seq = bpe_encode(snp_model, "")
    assert len(seq) == 0 and bpe_decode(snp_model, seq.ids) == ""


def test_unknown_character(snp_model):
    seq = bpe_encode(snp_model, "A" + "一" + "C")
    assert seq.unk_count == 1
    assert UNK in seq.ids.tolist()


def test_decode_range(snp_model):
    with pytest.raises(IndexError):
        bpe_decode(snp_model, [snp_model.vocab_size])
    with pytest.raises(IndexError):
        bpe_decode(snp_model, [-1])


def test_decode_skips_specials(snp_model):
    ids = [CLS] + bpe_encode(snp_model, "ACGT").ids.tolist()
    assert bpe_decode(snp_model, ids) == "ACGT"
    assert bpe_decode(snp_model, ids, skip_specials=False).startswith("[CLS]")


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(SNP_CHARS), max_size=400).map("".join))
def test_round_trip(snp_model, text):
    seq = bpe_encode(snp_model, text)
    assert seq.unk_count == 0
    assert len(seq) <= len(text)
    assert seq.source_length == len(text)
    assert bpe_decode(snp_model, seq.ids) == text


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(SNP_CHARS), max_size=200).map("".join))
def test_encode_matches_naive(snp_model, text):
    got = [snp_model.vocab[i] for i in bpe_encode(snp_model, text).ids.tolist()]
    assert got == naive_encode(snp_model.merges, text)


# -- persistence ----------------------------------------------------------


def test_file_format(tmp_path, snp_model):
    path = tmp_path / "tok.txt"
    snp_model.save(path)
    raw = path.read_text(encoding="utf-8")
    lines = raw.split("\n")
    assert lines[0] == f"#snp2vec-bpe v1 vocab={snp_model.vocab_size}"
    assert lines[1] == "0\t[PAD]"
    assert sum(ln.startswith("#merge ") for ln in lines) == len(snp_model.merges)
    again = TokenizerModel.load(path)
    assert again.vocab == snp_model.vocab and again.merges == snp_model.merges
    assert again.dumps() == raw


def test_bad_header():
    with pytest.raises(TokenizerError):
        TokenizerModel.loads("0\t[PAD]\n")


def test_non_dense_ids():
    text = "#snp2vec-bpe v1 vocab=5\n0\t[PAD]\n1\t[UNK]\n2\t[CLS]\n3\t[MASK]\n5\tA\n"
    with pytest.raises(TokenizerError):
        TokenizerModel.loads(text)


# -- k-mer and gapped k-mer -----------------------------------------------


@pytest.mark.parametrize("k,L,expected", [(1, 1, 500), (3, 1, 498), (5, 1, 496), (5, 6, 83), (6, 10, 50), (7, 14, 36)])
def test_published_token_counts(k, L, expected):
    text = "ACGT" * 125
    assert len(gkm_tokenize(text, k, L)) == expected == gkm_token_count(500, k, L)


def test_kmer_is_stride_one():
    assert kmer_tokenize("ACGTA", 3) == ["ACG", "CGT", "GTA"]


@given(st.text("ACGT", min_size=1, max_size=120), st.integers(1, 12), st.integers(1, 16))
def test_window_counts_match_naive(text, k, L):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        got = gkm_tokenize(text, k, L)
    assert got == naive_windows(text, k, L)
    assert len(got) == gkm_token_count(len(text), k, L)


def test_short_text_warns():
    with pytest.warns(UserWarning):
        assert gkm_tokenize("AC", 3, 1) == []


@given(st.integers(1, 10), st.integers(1, 10), st.integers(30, 200))
def test_coverage_gap_when_stride_exceeds_width(k, extra, n):
    L = k + extra
    covered = np.zeros(n, bool)
    for i in range(0, n - k + 1, L):
        covered[i : i + k] = True
    assert not covered.all()


@pytest.mark.parametrize("bad", [(0, 1), (1, 0)])
def test_gkm_bad_args(bad):
    with pytest.raises(ValueError):
        gkm_tokenize("ACGT", *bad)


def test_spec_parsing():
    specs = parse_specs("1mer,3-mer,gkm5-6,gkm(6,10),bpe")
    assert [s.label for s in specs] == ["1-mer", "3-mer", "gkm (5,6)", "gkm (6,10)", "BPE"]
    with pytest.raises(ValueError):
        TokenizerSpec.parse("wordpiece")
    with pytest.raises(ValueError):
        TokenizerSpec.parse("bpe").tokenize("ACGT")
