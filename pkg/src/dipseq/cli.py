"""Command-line entry point.

Every subcommand is a pure function of its input files, its resolved
configuration and ``--seed``. Configuration is layered: built-in defaults,
then the ``--config`` JSON document, then explicit flags. The merged result
is written next to the outputs as ``<output>.config.json``.

Seed derivation per stage (all from the single ``--seed``):

- sample-corpus: walk starts from ``default_rng([seed, 0])``, walk ``w`` from
  ``default_rng([seed, 1, w])``
- encode-sample: random haplotype choice from ``default_rng([seed, 51])``
- pretrain: init from ``seed``, batches and masks from ``default_rng([seed, 21])``
- finetune: fold plan from ``[seed, 11]``, fold ``f`` training from ``[seed, 31, f]``
- bench-tokenizers: fold plan for the BoW row from ``[seed, 11]``
- synth-data: generator from ``default_rng([seed, 7])``

Exit codes: 0 success, 2 usage or configuration error, 3 I/O error,
4 invalid input data, 5 numerical failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

logger = logging.getLogger("dipseq")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_IO, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4, 5

REQUIRED = object()
DEFAULT_SPECS = "1mer,3mer,5mer,gkm5-6,gkm6-10,gkm6-14,gkm7-14,bpe"


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class Opt:
    flag: str
    key: str
    type: Callable | None
    default: Any
    help: str = ""

    @property
    def is_bool(self) -> bool:
        return self.type is bool


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",")]


def _model_opts() -> list[Opt]:
    return [
        Opt("--layers", "model.layers", int, 6, "encoder layers"),
        Opt("--dim", "model.dim", int, 512, "hidden size"),
        Opt("--heads", "model.heads", int, 8, "attention heads"),
        Opt("--head-dim", "model.head_dim", int, 64, "per-head size (heads x head-dim = dim)"),
        Opt("--proj-k", "model.proj_k", int, 128, "low-rank sequence projection size"),
        Opt("--max-len", "model.max_len", int, 4096, "maximum sequence length"),
        Opt("--vocab-size", "model.vocab_size", int, None, "embedding rows; defaults to the tokenizer size"),
        Opt("--dropout", "model.dropout", float, 0.1, "dropout rate"),
        Opt("--ff-dim", "model.ff_dim", int, None, "feed-forward width; defaults to 4 x dim"),
        Opt("--share-kv", "model.share_kv", bool, False, "share the key and value projections E = F"),
        Opt("--single-kv-head", "model.single_kv_head", bool, False, "one E/F pair for all heads"),
    ]


def _finetune_opts() -> list[Opt]:
    return [
        Opt("--epochs", "finetune.epochs", int, 30, "maximum epochs per fold"),
        Opt("--patience", "finetune.patience", int, 3, "early-stopping patience in epochs"),
        Opt("--batch-size", "finetune.batch_size", int, 16, "mini-batch size"),
        Opt("--lr-scratch", "finetune.lr_scratch", float, 1e-4, "learning rate without a checkpoint"),
        Opt("--lr-pretrained", "finetune.lr_pretrained", float, 1e-5, "learning rate with a checkpoint"),
        Opt("--weight-decay", "finetune.weight_decay", float, 0.01, "decoupled weight decay"),
        Opt("--decay", "finetune.decay", float, 0.999991, "per-step exponential lr decay"),
        Opt("--warmup", "finetune.warmup_steps", int, 0, "linear warmup steps"),
        Opt("--val-fraction", "finetune.val_fraction", float, 0.1, "share of each training split held out for early stopping"),
        Opt("--folds", "folds.k", int, 10, "cross-validation folds"),
    ]


COMMANDS: dict[str, tuple[str, list[Opt]]] = {
    "build-matrix": (
        "Build a chromosome matrix from a FASTA reference and a variant VCF.",
        [
            Opt("--fasta", "paths.fasta", str, REQUIRED, "reference FASTA"),
            Opt("--vcf", "paths.vcf", str, REQUIRED, "variant VCF (sites only is enough)"),
            Opt("--out", "paths.out", str, REQUIRED, "output matrix (.snpm)"),
            Opt("--contig", "ingest.contig", str, None, "contig to build; defaults to the first FASTA record"),
            Opt("--common-only", "ingest.common_only", bool, False, "keep only records flagged COMMON"),
            Opt("--freq-key", "ingest.freq_key", str, "FREQ", "INFO key holding allele frequencies"),
            Opt("--epsilon", "ingest.fallback_epsilon", float, 0.01, "ALT mass when no frequency is given"),
        ],
    ),
    "sample-corpus": (
        "Sample a pre-training corpus by random walks over a matrix.",
        [
            Opt("--matrix", "paths.matrix", str, REQUIRED, "input matrix (.snpm)"),
            Opt("--out", "paths.out", str, REQUIRED, "output corpus, one segment per line"),
            Opt("--T", "sampler.T", int, 16, "number of walks"),
            Opt("--K", "sampler.K", int, 0, "walk starts are uniform in [0, K]"),
            Opt("--lmin", "sampler.L_inf", int, 256, "minimum segment length"),
            Opt("--lmax", "sampler.L_sup", int, 512, "maximum segment length"),
            Opt("--haploid", "sampler.haploid", bool, False, "emit reference bases instead of SNP characters"),
        ],
    ),
    "encode-sample": (
        "Encode one sample's genotype calls over a region.",
        [
            Opt("--reference", "paths.reference", str, REQUIRED, "reference FASTA"),
            Opt("--genotypes", "paths.genotypes", str, REQUIRED, "single-sample VCF with GT"),
            Opt("--out", "paths.out", str, REQUIRED, "output text file"),
            Opt("--region", "encode.region", str, None, "contig:start-end, 1-based inclusive"),
            Opt("--mode", "encode.mode", str, "diploid", "diploid (SNP characters) or haploid (bases)"),
            Opt("--haplotype", "encode.haplotype", str, "random", "haploid mode: 0, 1 or random per call"),
        ],
    ),
    "train-tokenizer": (
        "Train a BPE tokenizer on a corpus.",
        [
            Opt("--corpus", "paths.corpus", str, REQUIRED, "training corpus"),
            Opt("--out", "paths.out", str, REQUIRED, "output tokenizer file"),
            Opt("--vocab", "tokenizer.vocab_size", int, 512, "target vocabulary size including specials"),
        ],
    ),
    "tokenize": (
        "Turn text lines into BPE id lines.",
        [
            Opt("--tokenizer", "paths.tokenizer", str, REQUIRED, "tokenizer file"),
            Opt("--input", "paths.input", str, REQUIRED, "text lines ('#' lines are skipped)"),
            Opt("--out", "paths.out", str, REQUIRED, "output, space-separated ids per line"),
            Opt("--cls", "tokenize.cls_prefix", bool, False, "prepend the [CLS] id"),
        ],
    ),
    "pretrain": (
        "Masked-language-model pre-training.",
        [
            Opt("--corpus", "paths.corpus", str, REQUIRED, "pre-training corpus"),
            Opt("--tokenizer", "paths.tokenizer", str, REQUIRED, "tokenizer file"),
            Opt("--out", "paths.out", str, REQUIRED, "output checkpoint (.snpc)"),
            Opt("--log", "paths.log", str, None, "loss log CSV; defaults to <out>.log.csv"),
            *_model_opts(),
            Opt("--lr", "schedule.base_lr", float, 1e-4, "peak learning rate"),
            Opt("--warmup", "schedule.warmup_steps", int, 1000, "linear warmup steps"),
            Opt("--decay", "schedule.decay", float, 0.999991, "per-step exponential decay after warmup"),
            Opt("--steps", "schedule.total_steps", int, 200000, "optimizer steps"),
            Opt("--batch-size", "pretrain.batch_size", int, 16, "segments per step"),
            Opt("--weight-decay", "pretrain.weight_decay", float, 0.01, "decoupled weight decay"),
            Opt("--log-every", "pretrain.log_every", int, 1, "loss log interval in steps"),
            Opt("--checkpoint-every", "pretrain.checkpoint_every", int, 0, "intermediate checkpoint interval; 0 disables"),
        ],
    ),
    "finetune": (
        "k-fold cross-validated fine-tuning, from a checkpoint or from scratch.",
        [
            Opt("--dataset", "paths.dataset", str, REQUIRED, "labelled dataset TSV (label<TAB>text)"),
            Opt("--tokenizer", "paths.tokenizer", str, REQUIRED, "tokenizer file"),
            Opt("--checkpoint", "paths.checkpoint", str, None, "pre-trained checkpoint; omit to train from scratch"),
            Opt("--out", "paths.out", str, REQUIRED, "report stem; writes <out>.csv and <out>.json"),
            Opt("--model-out", "paths.model_out", str, None, "also fit on the whole dataset and save the classifier here"),
            *_model_opts(),
            *_finetune_opts(),
        ],
    ),
    "evaluate": (
        "Score a labelled dataset with a classifier checkpoint, or score a file of predictions.",
        [
            Opt("--dataset", "paths.dataset", str, None, "labelled dataset TSV"),
            Opt("--tokenizer", "paths.tokenizer", str, None, "tokenizer file"),
            Opt("--checkpoint", "paths.checkpoint", str, None, "classifier checkpoint"),
            Opt("--scores", "paths.scores", str, None, "label<TAB>score file, instead of a checkpoint"),
            Opt("--out", "paths.out", str, REQUIRED, "output stem; writes <out>.json and <out>.scores.tsv"),
            Opt("--threshold", "evaluate.threshold", float, 0.5, "accuracy threshold on the positive-class probability"),
        ],
    ),
    "bench-tokenizers": (
        "Average token length per tokenizer, plus an optional bag-of-words accuracy row.",
        [
            Opt("--corpus", "paths.corpus", str, None, "texts to measure; defaults to the dataset texts"),
            Opt("--dataset", "paths.dataset", str, None, "labelled dataset for the BoW accuracy row"),
            Opt("--tokenizer", "paths.tokenizer", str, None, "BPE tokenizer; trained on the texts when omitted"),
            Opt("--out", "paths.out", str, REQUIRED, "output CSV"),
            Opt("--spec", "bench.spec", str, DEFAULT_SPECS, "comma-separated tokenizer descriptors"),
            Opt("--vocab", "tokenizer.vocab_size", int, 512, "BPE vocabulary when a tokenizer is trained here"),
            Opt("--folds", "folds.k", int, 5, "folds for the BoW accuracy"),
        ],
    ),
    "synth-data": (
        "Generate the planted-variant case/control task.",
        [
            Opt("--out", "paths.out", str, REQUIRED, "output directory"),
            Opt("--subjects", "synth.n_subjects", int, 300, "number of subjects"),
            Opt("--region-length", "synth.region_length", int, 2000, "region length in positions"),
            Opt("--background", "synth.n_background", int, 30, "background variants"),
            Opt("--background-freq", "synth.background_freq", _floats, [0.05, 0.5], "lo,hi ALT frequency range"),
            Opt("--indel-fraction", "synth.indel_fraction", float, 0.2, "share of background variants that are indels"),
            Opt("--causal", "synth.n_causal", int, 1, "planted causal substitutions"),
            Opt("--carrier-rate", "synth.carrier_rate", float, 0.5, "share of subjects carrying a causal variant"),
            Opt("--het-only", "synth.het_only", bool, True, "causal variants are always heterozygous"),
            Opt("--contig", "synth.contig", str, "synth1", "contig name"),
            Opt("--write-genotypes", "synth.write_genotypes", bool, False, "also write one genotype VCF per subject"),
        ],
    ),
}

COMMON = [
    Opt("--seed", "seed", int, 0, "seed for every random stage"),
    Opt("--threads", "threads", int, 1, "cap on BLAS/numba worker threads"),
]


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


def _flatten(doc: dict, prefix: str = "") -> dict[str, Any]:
    out = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _nest(flat: dict[str, Any]) -> dict:
    out: dict = {}
    for key, v in flat.items():
        node = out
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = v
    return out


def _coerce(opt: Opt, value):
    if value is None or opt.type is None:
        return value
    if opt.is_bool:
        if not isinstance(value, bool):
            raise UsageError(f"config key {opt.key!r} must be true or false")
        return value
    try:
        return opt.type(value)
    except (TypeError, ValueError):
        raise UsageError(f"config key {opt.key!r}: cannot interpret {value!r}") from None


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    opts = COMMANDS[command][1] + COMMON
    by_key = {o.key: o for o in opts}
    resolved = {o.key: o.default for o in opts}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise UsageError(f"config {args.config}: invalid JSON ({e})") from None
        if not isinstance(doc, dict):
            raise UsageError(f"config {args.config}: top level must be an object")
        for key, value in _flatten(doc).items():
            if key not in by_key:
                raise UsageError(f"unknown config key {key!r} for {command}")
            resolved[key] = _coerce(by_key[key], value)
    for o in opts:
        given = getattr(args, _dest(o))
        if given is not None:
            resolved[o.key] = given
    missing = [by_key[k].flag for k, v in resolved.items() if v is REQUIRED]
    if missing:
        raise UsageError(f"{command}: missing required {', '.join(missing)}")
    return resolved


def _section(cfg: dict, name: str) -> dict:
    n = len(name) + 1
    return {k[n:]: v for k, v in cfg.items() if k.startswith(name + ".")}


def _write_config(cfg: dict, path) -> None:
    Path(path).write_text(json.dumps(_nest(cfg), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _dest(o: Opt) -> str:
    return "opt_" + o.key.replace(".", "__")


def _apply_threads(n: int) -> None:
    if n < 1:
        raise UsageError("--threads must be at least 1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        os.environ[var] = str(n)
    # the kernels are serial, so numba's threading layer is never started here


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_build_matrix(cfg: dict) -> None:
    from .genome import Rejection, build_chromosome_matrix, read_fasta, read_variants, write_matrix

    contigs = read_fasta(cfg["paths.fasta"])
    if not contigs:
        raise ValueError(f"{cfg['paths.fasta']}: no FASTA records")
    name = cfg["ingest.contig"] or contigs[0].name
    chosen = [c for c in contigs if c.name == name]
    if not chosen:
        raise ValueError(f"contig {name!r} not in {cfg['paths.fasta']}")
    rejections: list[Rejection] = []
    records = read_variants(
        cfg["paths.vcf"],
        common_only=cfg["ingest.common_only"],
        freq_key=cfg["ingest.freq_key"],
        fallback_epsilon=cfg["ingest.fallback_epsilon"],
        rejections=rejections,
    )
    records = [r for r in records if r.contig == name]
    matrix = build_chromosome_matrix(chosen[0], records)
    out = cfg["paths.out"]
    write_matrix(matrix, out)
    report = dict(matrix.report.as_dict(), contig=name, records=len(records))
    report["parse_rejections"] = [{"line": r.line, "reason": r.reason} for r in rejections]
    Path(out + ".report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_config(cfg, out + ".config.json")
    print(f"{out}: {name}, {matrix.length} positions, {matrix.n_explicit} explicit columns")


def cmd_sample_corpus(cfg: dict) -> None:
    from .genome import read_matrix
    from .sampler import SamplerParams, sample_haploid_segments, sample_segments, write_corpus

    matrix = read_matrix(cfg["paths.matrix"])
    s = _section(cfg, "sampler")
    params = SamplerParams(s["T"], s["K"], s["L_inf"], s["L_sup"], seed=cfg["seed"])
    if s["haploid"]:
        segments = sample_haploid_segments(matrix.reference, params)
    else:
        segments = sample_segments(matrix, params)
    write_corpus(segments, cfg["paths.out"], seed=cfg["seed"])
    _write_config(cfg, cfg["paths.out"] + ".config.json")
    print(f"{cfg['paths.out']}: {len(segments)} segments")


def _parse_region(text: str) -> tuple[str, tuple[int, int]]:
    contig, _, span = text.rpartition(":")
    a, _, b = span.partition("-")
    try:
        start, end = int(a.replace(",", "")), int(b.replace(",", ""))
    except ValueError:
        raise UsageError(f"region {text!r} is not contig:start-end") from None
    if not contig or start < 1 or end < start:
        raise UsageError(f"region {text!r} is not contig:start-end")
    return contig, (start, end)


def cmd_encode_sample(cfg: dict) -> None:
    import numpy as np

    from .genome import read_fasta
    from .sampler import SampleGenotype, encode_sample_region, haplotype_sequence, parse_genotype_vcf

    contig, region = (None, None)
    if cfg["encode.region"]:
        contig, region = _parse_region(cfg["encode.region"])
    with open(cfg["paths.genotypes"], "rb") as fh:
        gt = parse_genotype_vcf(fh, contig=contig, region=region)
    refs = {c.name: c for c in read_fasta(cfg["paths.reference"])}
    if gt.contig not in refs:
        raise ValueError(f"contig {gt.contig!r} not in {cfg['paths.reference']}")
    reference = refs[gt.contig]
    mode = cfg["encode.mode"]
    if mode == "diploid":
        text = encode_sample_region(reference, gt)
    elif mode == "haploid":
        which = cfg["encode.haplotype"]
        positions = sorted(gt.calls)
        if which == "random":
            rng = np.random.default_rng([cfg["seed"], 51])
            picks = rng.integers(0, 2, size=len(positions)).tolist()
        elif which in ("0", "1"):
            picks = [int(which)] * len(positions)
        else:
            raise UsageError(f"--haplotype must be 0, 1 or random, got {which!r}")
        text = haplotype_sequence(reference, SampleGenotype(gt.contig, gt.region, gt.calls), dict(zip(positions, picks)))
    else:
        raise UsageError(f"--mode must be diploid or haploid, got {mode!r}")
    Path(cfg["paths.out"]).write_text(text + "\n", encoding="utf-8")
    _write_config(cfg, cfg["paths.out"] + ".config.json")
    print(f"{cfg['paths.out']}: {gt.contig}:{gt.region[0]}-{gt.region[1]}, {len(gt.calls)} calls, {len(text)} symbols")


def cmd_train_tokenizer(cfg: dict) -> None:
    from .sampler import read_corpus
    from .tokenizers import train_bpe

    corpus = read_corpus(cfg["paths.corpus"])
    model = train_bpe(corpus, cfg["tokenizer.vocab_size"])
    model.save(cfg["paths.out"])
    _write_config(cfg, cfg["paths.out"] + ".config.json")
    print(f"{cfg['paths.out']}: {model.vocab_size} ids, {len(model.merges)} merges")


def cmd_tokenize(cfg: dict) -> None:
    from .sampler import read_corpus
    from .tokenizers import CLS, TokenizerModel, bpe_encode

    model = TokenizerModel.load(cfg["paths.tokenizer"])
    lines = read_corpus(cfg["paths.input"])
    unk = 0
    with open(cfg["paths.out"], "w", encoding="ascii", newline="\n") as fh:
        for ln in lines:
            seq = bpe_encode(model, ln)
            unk += seq.unk_count
            ids = ([CLS] if cfg["tokenize.cls_prefix"] else []) + seq.ids.tolist()
            fh.write(" ".join(map(str, ids)) + "\n")
    _write_config(cfg, cfg["paths.out"] + ".config.json")
    if unk:
        logger.warning("%d symbols mapped to [UNK]", unk)
    print(f"{cfg['paths.out']}: {len(lines)} lines")


def _model_config(cfg: dict, vocab_size: int):
    from .nn import ModelConfig

    m = _section(cfg, "model")
    if m.get("vocab_size") is None:
        m["vocab_size"] = vocab_size
        cfg["model.vocab_size"] = vocab_size
    return ModelConfig.from_dict(m)


def cmd_pretrain(cfg: dict) -> None:
    from .nn import TrainSchedule, save_checkpoint
    from .sampler import read_corpus
    from .tokenizers import TokenizerModel
    from .train import pretrain

    corpus = read_corpus(cfg["paths.corpus"])
    tok = TokenizerModel.load(cfg["paths.tokenizer"])
    config = _model_config(cfg, tok.vocab_size)
    schedule = TrainSchedule(**_section(cfg, "schedule"))
    out = cfg["paths.out"]
    p = _section(cfg, "pretrain")

    def on_checkpoint(step, params, state):
        save_checkpoint(f"{out}.step{step}", params, state)

    result = pretrain(
        corpus,
        tok,
        config,
        schedule,
        seed=cfg["seed"],
        batch_size=p["batch_size"],
        weight_decay=p["weight_decay"],
        log_every=p["log_every"],
        checkpoint_every=p["checkpoint_every"],
        on_checkpoint=on_checkpoint,
    )
    save_checkpoint(out, result.params, result.state)
    log_path = cfg["paths.log"] or out + ".log.csv"
    cfg["paths.log"] = log_path
    Path(log_path).write_text(result.log_csv(), encoding="utf-8")
    _write_config(cfg, out + ".config.json")
    last = f", final loss {result.log[-1][1]:.4f}" if result.log else ""
    print(f"{out}: {schedule.total_steps} steps{last}")


def cmd_finetune(cfg: dict) -> None:
    import numpy as np

    from .nn import init_params, load_checkpoint, save_checkpoint
    from .tokenizers import TokenizerModel
    from .train import FinetuneConfig, LabeledDataset, finetune, stratified_folds
    from .train.data import encode_texts, stratified_split
    from .train.loops import train_classifier

    data = LabeledDataset.load(cfg["paths.dataset"])
    tok = TokenizerModel.load(cfg["paths.tokenizer"])
    checkpoint = None
    if cfg["paths.checkpoint"]:
        checkpoint, _ = load_checkpoint(cfg["paths.checkpoint"])
        config = checkpoint.config
        for key, value in vars(config).items():
            cfg["model." + key] = value
    else:
        config = _model_config(cfg, tok.vocab_size)
    ft = FinetuneConfig(**_section(cfg, "finetune"))
    plan = stratified_folds(data.labels, cfg["folds.k"], cfg["seed"])
    report = finetune(data, tok, config, ft, plan, checkpoint, seed=cfg["seed"])
    out = cfg["paths.out"]
    report.save(out)
    if cfg["paths.model_out"]:
        seqs, _ = encode_texts(tok, data.texts, config.max_len)
        rng = np.random.default_rng([cfg["seed"], 32])
        rest, held = stratified_split(data.labels, ft.val_fraction, rng)
        init = checkpoint if checkpoint is not None else init_params(config, seed=int(rng.integers(2**31)))
        lr = ft.lr_pretrained if checkpoint is not None else ft.lr_scratch
        model, _ = train_classifier(
            init,
            [seqs[i] for i in rest.tolist()],
            data.labels[rest],
            [seqs[i] for i in held.tolist()],
            data.labels[held],
            lr,
            ft,
            rng,
        )
        save_checkpoint(cfg["paths.model_out"], model)
    _write_config(cfg, out + ".config.json")
    m = report.mean
    print(f"{out}: {plan.k}-fold accuracy {m['accuracy']:.4f} auroc {m['auroc']:.4f} auprc {m['auprc']:.4f}")


def cmd_evaluate(cfg: dict) -> None:
    import numpy as np

    from .train import all_metrics

    if cfg["paths.scores"]:
        labels, scores = [], []
        for ln in Path(cfg["paths.scores"]).read_text(encoding="utf-8").split("\n"):
            if not ln or ln.startswith("#"):
                continue
            y, _, s = ln.partition("\t")
            labels.append(int(y))
            scores.append(float(s))
        labels, scores = np.asarray(labels), np.asarray(scores)
    else:
        if not (cfg["paths.checkpoint"] and cfg["paths.dataset"] and cfg["paths.tokenizer"]):
            raise UsageError("evaluate needs --scores, or all of --checkpoint, --dataset and --tokenizer")
        from .nn import load_checkpoint
        from .tokenizers import TokenizerModel
        from .train import LabeledDataset, predict_proba
        from .train.data import encode_texts

        params, _ = load_checkpoint(cfg["paths.checkpoint"])
        data = LabeledDataset.load(cfg["paths.dataset"])
        tok = TokenizerModel.load(cfg["paths.tokenizer"])
        seqs, _ = encode_texts(tok, data.texts, params.config.max_len)
        scores = predict_proba(params, seqs)
        labels = data.labels
    metrics = all_metrics(scores, labels, threshold=cfg["evaluate.threshold"])
    out = cfg["paths.out"]
    with open(out + ".scores.tsv", "w", encoding="ascii", newline="\n") as fh:
        for y, s in zip(labels.tolist(), scores.tolist()):
            fh.write(f"{y}\t{s!r}\n")
    doc = {"n": int(labels.shape[0]), "metrics": metrics}
    Path(out + ".json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_config(cfg, out + ".config.json")
    print(f"{out}: " + " ".join(f"{k} {v:.4f}" for k, v in sorted(metrics.items())))


def cmd_bench_tokenizers(cfg: dict) -> None:
    import numpy as np

    from .sampler import read_corpus
    from .tokenizers import TokenizerModel, parse_specs, train_bpe
    from .train import LabeledDataset, bow_linear_baseline, stratified_folds, table_csv, token_length_report

    specs = parse_specs(cfg["bench.spec"])
    data = LabeledDataset.load(cfg["paths.dataset"]) if cfg["paths.dataset"] else None
    if cfg["paths.corpus"]:
        texts = read_corpus(cfg["paths.corpus"])
    elif data is not None:
        texts = data.texts
    else:
        raise UsageError("bench-tokenizers needs --corpus or --dataset")
    bpe = None
    if any(s.kind == "bpe" for s in specs):
        if cfg["paths.tokenizer"]:
            bpe = TokenizerModel.load(cfg["paths.tokenizer"])
        else:
            bpe = train_bpe(texts, cfg["tokenizer.vocab_size"])
    rows = token_length_report(specs, texts, bpe)
    accuracies = None
    if data is not None:
        plan = stratified_folds(data.labels, cfg["folds.k"], cfg["seed"])
        accuracies = {}
        for spec in specs:
            toks = [spec.tokenize(t, bpe) for t in data.texts]
            accs = []
            for f in range(plan.k):
                tr, te = plan.train_indices(f), plan.test_indices(f)
                res = bow_linear_baseline(
                    [toks[i] for i in tr.tolist()],
                    data.labels[tr],
                    [toks[i] for i in te.tolist()],
                    data.labels[te],
                    seed=cfg["seed"],
                )
                accs.append(res["accuracy"])
            accuracies[spec.label] = float(np.mean(accs))
    Path(cfg["paths.out"]).write_text(table_csv(rows, accuracies), encoding="utf-8")
    _write_config(cfg, cfg["paths.out"] + ".config.json")
    print(f"{cfg['paths.out']}: {len(rows)} tokenizers over {len(texts)} texts")


def cmd_synth_data(cfg: dict) -> None:
    from .genome import write_fasta, write_matrix, write_variants
    from .sampler import write_genotype_vcf
    from .train.synth import SynthParams, collapsed_mutual_information, synth_disease_task

    s = _section(cfg, "synth")
    write_genotypes = s.pop("write_genotypes")
    freq = s["background_freq"]
    if len(freq) != 2:
        raise UsageError("--background-freq takes exactly two values lo,hi")
    s["background_freq"] = tuple(freq)
    task = synth_disease_task(SynthParams(**s), seed=cfg["seed"])
    out = Path(cfg["paths.out"])
    out.mkdir(parents=True, exist_ok=True)
    write_fasta([task.reference], out / "reference.fa")
    write_variants(task.variants, out / "variants.vcf")
    write_matrix(task.matrix, out / "matrix.snpm")
    task.diploid.save(out / "diploid.tsv")
    task.haploid.save(out / "haploid.tsv")
    if write_genotypes:
        gdir = out / "genotypes"
        gdir.mkdir(exist_ok=True)
        width = len(str(len(task.genotypes) - 1))
        for i, gt in enumerate(task.genotypes):
            write_genotype_vcf(gt, gdir / f"subject{i:0{width}d}.vcf", sample=f"subject{i}")
    info = {
        "causal_positions": task.causal_positions,
        "n_subjects": len(task.genotypes),
        "positives": int(task.diploid.labels.sum()),
        "collapsed_mutual_information_bits": collapsed_mutual_information(s["carrier_rate"]) if s["het_only"] else None,
    }
    (out / "task.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_config(cfg, out / "config.json")
    print(f"{out}: {info['n_subjects']} subjects, {info['positives']} positive")


HANDLERS = {
    "build-matrix": cmd_build_matrix,
    "sample-corpus": cmd_sample_corpus,
    "encode-sample": cmd_encode_sample,
    "train-tokenizer": cmd_train_tokenizer,
    "tokenize": cmd_tokenize,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "evaluate": cmd_evaluate,
    "bench-tokenizers": cmd_bench_tokenizers,
    "synth-data": cmd_synth_data,
}


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def _add_opt(parser: argparse.ArgumentParser, o: Opt) -> None:
    shown = "required" if o.default is REQUIRED else f"default: {o.default}"
    text = f"{o.help} ({shown}; config key {o.key})"
    if o.is_bool:
        parser.add_argument(o.flag, dest=_dest(o), action=argparse.BooleanOptionalAction, default=None, help=text)
    else:
        parser.add_argument(o.flag, dest=_dest(o), type=o.type, default=None, help=text, metavar=o.key.split(".")[-1].upper())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dipseq", description="Diploid SNP token pipeline.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name, (summary, opts) in COMMANDS.items():
        p = sub.add_parser(name, help=summary, description=summary)
        p.add_argument("--config", default=None, help="JSON run configuration; flags override it (default: None)")
        for o in opts + COMMON:
            _add_opt(p, o)
        p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr (default: False)")
    return parser


def _category(exc: BaseException) -> tuple[int, str]:
    from .nn import LossError, OptimizerError

    if isinstance(exc, UsageError):
        return EXIT_USAGE, "usage"
    if type(exc).__name__ == "ConfigError":
        return EXIT_USAGE, "config"
    if isinstance(exc, (LossError, OptimizerError, FloatingPointError)):
        return EXIT_NUMERIC, "numeric"
    if isinstance(exc, OSError):
        return EXIT_IO, "io"
    if isinstance(exc, (ValueError, KeyError, IndexError, UnicodeDecodeError)):
        return EXIT_DATA, "data"
    return EXIT_INTERNAL, "internal"


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve_config(args.command, args)
        _apply_threads(cfg["threads"])
        HANDLERS[args.command](cfg)
    except Exception as exc:  # noqa: BLE001 - mapped to an exit category
        code, label = _category(exc)
        if code == EXIT_USAGE:
            parser.print_usage(sys.stderr)
        print(f"dipseq: error [{label}]: {exc}", file=sys.stderr)
        if args.verbose and code == EXIT_INTERNAL:
            raise
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
