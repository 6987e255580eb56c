import numpy as np

from dipseq.tokenizers import parse_specs, train_bpe
from dipseq.train import bow_linear_baseline, table_csv, token_length_report


def _split(tokens, labels, n_train):
    return tokens[:n_train], labels[:n_train], tokens[n_train:], labels[n_train:]


def test_indicator_token_is_learned():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 400)
    toks = [list(rng.choice(["a", "b", "c"], 20)) + (["z"] if yi else []) for yi in y]
    res = bow_linear_baseline(*_split(toks, y, 300))
    assert res["accuracy"] >= 0.99


def test_random_labels_near_chance():
    rng = np.random.default_rng(1)
    toks = [list(rng.choice(list("abcdefgh"), 30)) for _ in range(2000)]
    y = rng.integers(0, 2, 2000)
    res = bow_linear_baseline(*_split(toks, y, 1000))
    assert abs(res["accuracy"] - 0.5) <= 0.05


def test_deterministic():
    rng = np.random.default_rng(2)
    toks = [list(rng.choice(list("ab"), 10)) for _ in range(60)]
    y = rng.integers(0, 2, 60)
    assert bow_linear_baseline(*_split(toks, y, 40), seed=3) == bow_linear_baseline(*_split(toks, y, 40), seed=3)


def test_published_length_row():
    specs = parse_specs("1mer,3mer,5mer,gkm5-6,gkm6-10,gkm6-14,gkm7-14")
    rng = np.random.default_rng(3)
    texts = ["".join(rng.choice(list("ACGT"), 500)) for _ in range(5)]
    rows = token_length_report(specs, texts)
    assert [v for _, v in rows] == [500, 498, 496, 83, 50, 36, 36]
    assert token_length_report([], texts) == []


def test_table_with_bpe_column():
    rng = np.random.default_rng(4)
    texts = ["".join(rng.choice(list("ACGT"), 100, p=[0.7, 0.1, 0.1, 0.1])) for _ in range(10)]
    bpe = train_bpe(texts, 40)
    rows = token_length_report(parse_specs("3mer,gkm(6,10),bpe"), texts, bpe)
    csv_text = table_csv(rows, {label: 0.5 for label, _ in rows})
    lines = csv_text.splitlines()
    assert lines[0] == 'Tokenization,3-mer,"gkm (6,10)",BPE'
    avg = lines[1].split(",")
    assert avg[:3] == ["Avg. Token Length", "98", "10"]
    assert len(avg[3].split(".")[1]) == 2
    assert lines[2].startswith("BoW Linear,0.500")
