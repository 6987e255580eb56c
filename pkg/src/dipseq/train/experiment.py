"""Diploid vs haploid direction check on the planted-variant task.

One seed runs the whole pipeline twice, once per encoding: a sampled corpus,
BPE, masked-LM pre-training, then k-fold fine-tuning of the pre-trained
encoder. The diploid corpus comes from the chromosome matrix; the haploid one
walks the same windows and draws one allele per known variant, so both
tokenizers see population variation. A third arm fine-tunes the diploid
model from scratch on the same folds, which isolates the effect of
pre-training.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from ..nn import ModelConfig, TrainSchedule
from ..sampler import SamplerParams, sample_haploid_segments, sample_segments
from ..tokenizers import train_bpe
from .data import stratified_folds
from .loops import EvalReport, FinetuneConfig, finetune, pretrain
from .synth import SynthParams, synth_disease_task

logger = logging.getLogger(__name__)

ARMS = ("diploid", "haploid", "scratch")


@dataclass(frozen=True)
class DirectionSetup:
    """Desk-scale settings; small enough for a laptop CPU, sized so pre-training segments match subject length."""

    synth: SynthParams = SynthParams(n_subjects=600, region_length=2000)
    walks: int = 128
    start_range: int = 500
    seg_min: int = 1000
    seg_max: int = 2000
    vocab_size: int = 1024
    model: ModelConfig = ModelConfig(
        layers=2, dim=32, heads=2, head_dim=16, proj_k=32, max_len=512, vocab_size=1024, dropout=0.1
    )
    schedule: TrainSchedule = TrainSchedule(base_lr=3e-4, warmup_steps=100, total_steps=2000)
    finetune: FinetuneConfig = FinetuneConfig(lr_scratch=1e-3, lr_pretrained=1e-3)
    folds: int = 10
    # pre-training batch; fine-tuning batches are set in ``finetune``
    pretrain_batch: int = 128

    def sampler(self, seed: int) -> SamplerParams:
        return SamplerParams(self.walks, self.start_range, self.seg_min, self.seg_max, seed)


@dataclass
class DirectionResult:
    seed: int
    reports: dict[str, EvalReport] = field(default_factory=dict)
    seconds: dict[str, float] = field(default_factory=dict)

    def auroc(self, arm: str) -> float:
        return self.reports[arm].mean["auroc"]


def run_direction_experiment(seed: int, setup: DirectionSetup = DirectionSetup(), arms=ARMS) -> DirectionResult:
    """Run the requested arms for one seed. Timings are per stage, in seconds."""
    unknown = set(arms) - set(ARMS)
    if unknown:
        raise ValueError(f"unknown arms {sorted(unknown)}")
    res = DirectionResult(seed)
    t0 = time.perf_counter()
    task = synth_disease_task(setup.synth, seed)
    plan = stratified_folds(task.diploid.labels, setup.folds, seed)
    res.seconds["synth"] = time.perf_counter() - t0

    def prepare(encoding):
        t = time.perf_counter()
        params = setup.sampler(seed)
        if encoding == "diploid":
            corpus = [s.text for s in sample_segments(task.matrix, params)]
        else:
            corpus = [s.text for s in sample_haploid_segments(task.reference, params, task.variants)]
        tok = train_bpe(corpus, setup.vocab_size)
        pre = pretrain(corpus, tok, setup.model, setup.schedule, seed, batch_size=setup.pretrain_batch, log_every=100)
        res.seconds[f"pretrain_{encoding}"] = time.perf_counter() - t
        logger.info("seed %d %s pre-training: %d segments, final loss %.3f", seed, encoding, len(corpus), pre.log[-1][1])
        return tok, pre.params

    cache = {}
    for arm in arms:
        encoding = "haploid" if arm == "haploid" else "diploid"
        if encoding not in cache:
            cache[encoding] = prepare(encoding)
        tok, params = cache[encoding]
        data = task.haploid if encoding == "haploid" else task.diploid
        t = time.perf_counter()
        ckpt = None if arm == "scratch" else params
        res.reports[arm] = finetune(data, tok, setup.model, setup.finetune, plan, ckpt, seed)
        res.seconds[f"finetune_{arm}"] = time.perf_counter() - t
        logger.info("seed %d %s: mean AUROC %.4f", seed, arm, res.auroc(arm))
    return res
