import math

import numpy as np
import pytest

from dipseq.nn import ModelConfig, TrainSchedule, init_params
from dipseq.tokenizers import train_bpe
from dipseq.train import (
    DataError,
    FinetuneConfig,
    FoldPlan,
    LabeledDataset,
    StratificationError,
    finetune,
    pretrain,
    stratified_folds,
)
from dipseq.train import loops


def _cfg(tok, **kw):
    base = dict(layers=1, dim=16, heads=2, head_dim=8, proj_k=8, max_len=32, vocab_size=tok.vocab_size, dropout=0.0)
    return ModelConfig(**{**base, **kw})


@pytest.fixture(scope="module")
def separable():
    rng = np.random.default_rng(0)
    y = np.array([0, 1] * 60)
    texts = ["".join(rng.choice(list("AC") if t == 0 else list("GT"), 24)) for t in y]
    ds = LabeledDataset(texts, y)
    return ds, train_bpe(texts, 24)


@pytest.fixture(scope="module")
def repetitive():
    corpus = ["ACGTTGCA" * 3, "GGATCC" * 4, "ACGTTGCA" * 2 + "GGATCC"] * 20
    return corpus, train_bpe(corpus, 30)


FT = FinetuneConfig(epochs=10, patience=3, lr_scratch=3e-3, lr_pretrained=1e-3)


# -- pre-training ---------------------------------------------------------


def test_pretrain_smoke(repetitive):
    corpus, tok = repetitive
    cfg = _cfg(tok, dropout=0.1)
    res = pretrain(corpus, tok, cfg, TrainSchedule(base_lr=3e-3, warmup_steps=20, total_steps=200), seed=0, batch_size=8)
    losses = np.array([loss for _, loss, _ in res.log])
    assert len(losses) == 200
    ma = np.convolve(losses, np.ones(100) / 100, mode="valid")
    assert ma[-1] < ma[0]
    assert losses[-20:].mean() < math.log(tok.vocab_size)
    assert res.log_csv().startswith("step,loss,lr\n1,")


def test_pretrain_deterministic(repetitive):
    corpus, tok = repetitive
    sched = TrainSchedule(base_lr=1e-3, warmup_steps=5, total_steps=10)
    a = pretrain(corpus, tok, _cfg(tok, dropout=0.1), sched, seed=4, batch_size=4)
    b = pretrain(corpus, tok, _cfg(tok, dropout=0.1), sched, seed=4, batch_size=4)
    assert a.log[9][1] == b.log[9][1]
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params.tensors)


def test_zero_steps_returns_init(repetitive):
    corpus, tok = repetitive
    cfg = _cfg(tok)
    res = pretrain(corpus, tok, cfg, TrainSchedule(total_steps=0), seed=2)
    init = init_params(cfg, 2)
    assert all(np.array_equal(res.params[k], init[k]) for k in init.tensors)
    assert res.log == []


def test_pretrain_errors(repetitive):
    corpus, tok = repetitive
    with pytest.raises(DataError):
        pretrain(corpus[:3], tok, _cfg(tok), TrainSchedule(total_steps=1), batch_size=16)
    with pytest.raises(DataError):
        pretrain(corpus, tok, _cfg(tok, vocab_size=tok.vocab_size - 1), TrainSchedule(total_steps=1))


def test_checkpoint_callback(repetitive):
    corpus, tok = repetitive
    seen = []
    pretrain(corpus, tok, _cfg(tok), TrainSchedule(total_steps=6, warmup_steps=0), batch_size=4,
             checkpoint_every=3, on_checkpoint=lambda step, p, s: seen.append((step, s.step)))
    assert seen == [(3, 3), (6, 6)]


# -- fine-tuning ----------------------------------------------------------


def test_separable_task(separable):
    ds, tok = separable
    rep = finetune(ds, tok, _cfg(tok), FT, stratified_folds(ds.labels, 10, 0), seed=0)
    assert len(rep.folds) == 10
    assert rep.mean["auroc"] >= 0.99


def test_shuffled_labels_chance(separable):
    ds, tok = separable
    sh = ds.shuffled_labels(0)
    rep = finetune(sh, tok, _cfg(tok), FT, stratified_folds(sh.labels, 10, 0), seed=0)
    assert 0.35 <= rep.mean["auroc"] <= 0.65


def test_pretrained_flag_changes_only_initialisation(separable, monkeypatch):
    ds, tok = separable
    cfg = _cfg(tok)
    calls = []
    real = loops.train_classifier

    def spy(init, seqs, labels, val_seqs, val_labels, lr, ft, rng):
        calls.append(([s.tobytes() for s in seqs], [s.tobytes() for s in val_seqs], lr))
        return real(init, seqs, labels, val_seqs, val_labels, lr, ft, rng)

    monkeypatch.setattr(loops, "train_classifier", spy)
    ft = FinetuneConfig(epochs=1, patience=1, lr_scratch=3e-3, lr_pretrained=1e-3)
    plan = stratified_folds(ds.labels, 3, 0)
    finetune(ds, tok, cfg, ft, plan, seed=1)
    scratch = calls[:]
    calls.clear()
    finetune(ds, tok, cfg, ft, plan, checkpoint=init_params(cfg, 9), seed=1)
    assert [c[:2] for c in scratch] == [c[:2] for c in calls]
    assert {c[2] for c in scratch} == {3e-3} and {c[2] for c in calls} == {1e-3}


def test_report_determinism(separable, tmp_path):
    ds, tok = separable
    ft = FinetuneConfig(epochs=2, patience=1, lr_scratch=3e-3)
    plan = stratified_folds(ds.labels, 3, 5)
    a = finetune(ds, tok, _cfg(tok), ft, plan, seed=5)
    b = finetune(ds, tok, _cfg(tok), ft, plan, seed=5)
    assert a.to_json() == b.to_json()
    a.save(tmp_path / "rep")
    lines = (tmp_path / "rep.csv").read_text().splitlines()
    assert lines[0] == "fold,accuracy,auroc,auprc" and lines[-1].startswith("mean,")
    assert len(lines) == 5


def test_missing_class_in_training_split(separable):
    ds, tok = separable
    # fold 0 holds every positive, so its training split is single-class
    plan = FoldPlan(2, (ds.labels == 1).astype(np.int64) ^ 1, 0)
    plan.assignments[ds.labels == 1] = 0
    plan.assignments[ds.labels == 0] = 1
    with pytest.raises(StratificationError):
        finetune(ds, tok, _cfg(tok), FT, plan)


def test_checkpoint_config_mismatch(separable):
    ds, tok = separable
    with pytest.raises(ValueError):
        finetune(ds, tok, _cfg(tok), FT, stratified_folds(ds.labels, 3), checkpoint=init_params(_cfg(tok, dim=8, head_dim=4)))
