"""Pre-training and cross-validated fine-tuning loops."""

from __future__ import annotations

import hashlib
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..nn import (
    MaskingPolicy,
    ModelConfig,
    ModelParams,
    OptimizerState,
    TrainSchedule,
    adamw_step,
    classify_forward,
    classify_loss_and_grads,
    init_params,
    lr_at_step,
    mask_batch,
    mlm_loss_and_grads,
)
from ..nn.model import softmax
from ..tokenizers import N_SPECIAL, TokenizerModel
from .data import (
    DataError,
    FoldPlan,
    LabeledDataset,
    StratificationError,
    encode_texts,
    pad_batch,
    stratified_split,
)
from .metrics import accuracy, all_metrics

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# pre-training
# --------------------------------------------------------------------------


@dataclass
class PretrainResult:
    params: ModelParams
    state: OptimizerState
    log: list[tuple[int, float, float]]

    def log_csv(self) -> str:
        lines = ["step,loss,lr"] + [f"{s},{loss!r},{lr!r}" for s, loss, lr in self.log]
        return "\n".join(lines) + "\n"


def pretrain(
    corpus: Sequence[str],
    tokenizer: TokenizerModel,
    config: ModelConfig,
    schedule: TrainSchedule,
    seed: int = 0,
    batch_size: int = 16,
    policy: MaskingPolicy = MaskingPolicy(),
    weight_decay: float = 0.01,
    log_every: int = 1,
    init: ModelParams | None = None,
    checkpoint_every: int = 0,
    on_checkpoint: Callable[[int, ModelParams, OptimizerState], None] | None = None,
) -> PretrainResult:
    """Masked-language-model training for ``schedule.total_steps`` AdamW steps."""
    if tokenizer.vocab_size > config.vocab_size:
        raise DataError(f"tokenizer has {tokenizer.vocab_size} ids, model only {config.vocab_size}")
    seqs, truncated = encode_texts(tokenizer, corpus, config.max_len)
    seqs = [s for s in seqs if s.shape[0] > 1]
    if len(seqs) < batch_size:
        raise DataError(f"corpus has {len(seqs)} usable segments, fewer than one batch of {batch_size}")
    if truncated:
        logger.info("%d corpus segments truncated to max_len=%d", truncated, config.max_len)
    params = init.copy() if init is not None else init_params(config, seed)
    state = OptimizerState.for_params(params.tensors, weight_decay=weight_decay)
    rng = np.random.default_rng([seed, 21])
    log = []
    for step in range(1, schedule.total_steps + 1):
        pick = rng.integers(0, len(seqs), size=batch_size)
        ids, valid = pad_batch([seqs[i] for i in pick.tolist()])
        mb = mask_batch(ids, policy, rng, tokenizer.vocab_size, valid)
        positions, labels, corrupted = mb.positions, mb.labels, mb.ids
        if positions.shape[0] == 0:
            rows, cols = np.nonzero(valid & (ids >= N_SPECIAL))
            j = int(rng.integers(0, rows.shape[0]))
            positions = np.array([[rows[j], cols[j]]])
            labels = ids[rows[j : j + 1], cols[j : j + 1]]
        loss, grads = mlm_loss_and_grads(params, corrupted, positions, labels, valid, train_mode=True, rng=rng)
        lr = lr_at_step(schedule, step)
        adamw_step(params.tensors, grads, state, lr)
        if step % log_every == 0 or step == schedule.total_steps:
            log.append((step, loss, lr))
        if checkpoint_every and on_checkpoint is not None and step % checkpoint_every == 0:
            on_checkpoint(step, params, state)
    return PretrainResult(params, state, log)


# --------------------------------------------------------------------------
# fine-tuning
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FinetuneConfig:
    epochs: int = 30
    patience: int = 3
    batch_size: int = 16
    lr_scratch: float = 1e-4
    lr_pretrained: float = 1e-5
    weight_decay: float = 0.01
    decay: float = 0.999991
    warmup_steps: int = 0
    val_fraction: float = 0.1

    def __post_init__(self):
        if min(self.epochs, self.patience, self.batch_size) < 1:
            raise ValueError("epochs, patience and batch_size must be positive")
        if min(self.lr_scratch, self.lr_pretrained) <= 0:
            raise ValueError("learning rates must be positive")


@dataclass
class EvalReport:
    folds: list[dict[str, float]]
    fingerprint: str
    seed: int
    extra: dict = field(default_factory=dict)

    METRICS = ("accuracy", "auroc", "auprc")

    @property
    def mean(self) -> dict[str, float]:
        return {m: float(np.mean([f[m] for f in self.folds])) for m in self.METRICS}

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("fold,accuracy,auroc,auprc\n")
        for i, f in enumerate(self.folds):
            out.write(f"{i},{f['accuracy']:.6f},{f['auroc']:.6f},{f['auprc']:.6f}\n")
        m = self.mean
        out.write(f"mean,{m['accuracy']:.6f},{m['auroc']:.6f},{m['auprc']:.6f}\n")
        return out.getvalue()

    def to_json(self) -> str:
        doc = {
            "fingerprint": self.fingerprint,
            "seed": self.seed,
            "folds": self.folds,
            "mean": self.mean,
            **self.extra,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def save(self, stem) -> None:
        stem = Path(stem)
        stem.with_suffix(".csv").write_text(self.to_csv(), encoding="utf-8")
        stem.with_suffix(".json").write_text(self.to_json(), encoding="utf-8")


def fingerprint(*parts) -> str:
    blob = json.dumps([asdict(p) if hasattr(p, "__dataclass_fields__") else p for p in parts], sort_keys=True, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def predict_proba(params: ModelParams, seqs: Sequence[np.ndarray], batch_size: int = 32) -> np.ndarray:
    out = []
    for i in range(0, len(seqs), batch_size):
        ids, valid = pad_batch(seqs[i : i + batch_size])
        out.append(softmax(classify_forward(params, ids, valid).astype(np.float64))[:, 1])
    return np.concatenate(out) if out else np.zeros(0)


def _batch_loss(params, seqs, labels, batch_size=32) -> float:
    total = 0.0
    for i in range(0, len(seqs), batch_size):
        ids, valid = pad_batch(seqs[i : i + batch_size])
        logits = classify_forward(params, ids, valid).astype(np.float64)
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        y = labels[i : i + batch_size]
        total -= float(logp[np.arange(y.shape[0]), y].sum())
    return total / len(seqs)


def train_classifier(
    init: ModelParams,
    seqs: Sequence[np.ndarray],
    labels: np.ndarray,
    val_seqs: Sequence[np.ndarray],
    val_labels: np.ndarray,
    lr: float,
    ft: FinetuneConfig,
    rng: np.random.Generator,
) -> tuple[ModelParams, int]:
    """Mini-batch AdamW with early stopping on validation loss; returns the best params."""
    params = init.copy()
    state = OptimizerState.for_params(params.tensors, weight_decay=ft.weight_decay)
    schedule = TrainSchedule(base_lr=lr, warmup_steps=ft.warmup_steps, decay=ft.decay, total_steps=0)
    best, best_loss, best_epoch, waited = params.copy(), np.inf, 0, 0
    step = 0
    for epoch in range(1, ft.epochs + 1):
        order = rng.permutation(len(seqs))
        for i in range(0, len(order), ft.batch_size):
            idx = order[i : i + ft.batch_size]
            ids, valid = pad_batch([seqs[j] for j in idx.tolist()])
            _, grads = classify_loss_and_grads(params, ids, labels[idx], valid, train_mode=True, rng=rng)
            step += 1
            adamw_step(params.tensors, grads, state, lr_at_step(schedule, step))
        val_loss = _batch_loss(params, val_seqs, val_labels)
        if val_loss < best_loss - 1e-7:
            best, best_loss, best_epoch, waited = params.copy(), val_loss, epoch, 0
        else:
            waited += 1
            if waited >= ft.patience:
                break
    return best, best_epoch


def finetune(
    dataset: LabeledDataset,
    tokenizer: TokenizerModel,
    config: ModelConfig,
    ft: FinetuneConfig,
    plan: FoldPlan,
    checkpoint: ModelParams | None = None,
    seed: int = 0,
) -> EvalReport:
    """k-fold fine-tuning; ``checkpoint=None`` trains from scratch with the same fold plan."""
    if checkpoint is not None and checkpoint.config != config:
        raise ValueError("checkpoint config differs from the requested model config")
    seqs, truncated = encode_texts(tokenizer, dataset.texts, config.max_len)
    if truncated:
        logger.warning("%d of %d items truncated to max_len=%d", truncated, len(seqs), config.max_len)
    labels = dataset.labels
    lr = ft.lr_pretrained if checkpoint is not None else ft.lr_scratch
    folds = []
    epochs = []
    for fold in range(plan.k):
        train_idx = plan.train_indices(fold)
        test_idx = plan.test_indices(fold)
        if np.unique(labels[train_idx]).shape[0] < 2:
            raise StratificationError(f"fold {fold}: a class is missing from the training split")
        rng = np.random.default_rng([seed, 31, fold])
        rest, held = stratified_split(labels[train_idx], ft.val_fraction, rng)
        tr, va = train_idx[rest], train_idx[held]
        init = checkpoint if checkpoint is not None else init_params(config, seed=int(rng.integers(2**31)))
        model, best_epoch = train_classifier(
            init,
            [seqs[i] for i in tr.tolist()],
            labels[tr],
            [seqs[i] for i in va.tolist()],
            labels[va],
            lr,
            ft,
            rng,
        )
        scores = predict_proba(model, [seqs[i] for i in test_idx.tolist()])
        folds.append(_fold_metrics(scores, labels[test_idx]))
        epochs.append(best_epoch)
    fp = fingerprint(config, ft, {"pretrained": checkpoint is not None, "k": plan.k, "n": len(dataset)})
    return EvalReport(folds, fp, seed, {"pretrained": checkpoint is not None, "best_epochs": epochs, "truncated": truncated})


def _fold_metrics(scores, labels) -> dict[str, float]:
    if np.unique(labels).shape[0] < 2:
        # a degenerate held fold; ranking metrics are undefined
        return {"accuracy": accuracy(scores, labels), "auroc": float("nan"), "auprc": float("nan")}
    return all_metrics(scores, labels)
