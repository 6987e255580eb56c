"""Synthetic case/control task with a planted causal variant.

Stand-in for a private genotyped cohort: a random reference region, a set
of common background variants, and one or more causal variants whose
presence in a subject's genotype defines the label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..genome import ChromosomeMatrix, ReferenceContig, VariantRecord, build_chromosome_matrix
from ..sampler import GenotypeCall, SampleGenotype, encode_sample_region, haplotype_sequence
from .data import LabeledDataset

_BASES = "ACGT"


@dataclass(frozen=True)
class SynthParams:
    n_subjects: int = 300
    region_length: int = 2000
    n_background: int = 30
    background_freq: tuple[float, float] = (0.05, 0.5)
    indel_fraction: float = 0.2
    n_causal: int = 1
    carrier_rate: float = 0.5
    het_only: bool = True
    distinct_causal_token: bool = True
    contig: str = "synth1"


@dataclass
class SyntheticTask:
    params: SynthParams
    reference: ReferenceContig
    variants: list[VariantRecord]
    matrix: ChromosomeMatrix
    genotypes: list[SampleGenotype]
    diploid: LabeledDataset
    haploid: LabeledDataset
    causal_positions: list[int] = field(default_factory=list)


def _pair(a: str, b: str) -> frozenset:
    return frozenset((a, b))


def synth_disease_task(params: SynthParams = SynthParams(), seed: int = 0) -> SyntheticTask:
    rng = np.random.default_rng([seed, 7])
    R = params.region_length
    seq = "".join(rng.choice(list(_BASES), size=R).tolist())
    reference = ReferenceContig(params.contig, seq)

    # disjoint footprints: every variant gets its own 8-position slot
    slots = rng.permutation(np.arange(1, (R - 8) // 8))[: params.n_background + params.n_causal]
    if slots.shape[0] < params.n_background + params.n_causal:
        raise ValueError("region too short for the requested number of variants")
    anchors = [int(s) * 8 + 1 for s in slots.tolist()]
    causal_anchors = sorted(anchors[: params.n_causal])
    background_anchors = sorted(anchors[params.n_causal :])

    variants: list[VariantRecord] = []
    causal_pairs = set()
    q_causal = 1.0 - math.sqrt(1.0 - params.carrier_rate) if params.n_causal else 0.0
    for j, p in enumerate(causal_anchors):
        ref = seq[p - 1]
        alt = str(rng.choice([b for b in _BASES if b != ref]))
        causal_pairs.add(_pair(ref, alt))
        variants.append(VariantRecord(params.contig, p, f"causal{j}", ref, [alt], [1.0 - q_causal, q_causal], True))

    lo, hi = params.background_freq
    for j, p in enumerate(background_anchors):
        q = float(rng.uniform(lo, hi))
        kind = rng.random()
        if kind < params.indel_fraction / 2:
            ref = seq[p - 1]
            alt = ref + "".join(rng.choice(list(_BASES), size=int(rng.integers(1, 4))).tolist())
        elif kind < params.indel_fraction:
            size = int(rng.integers(2, 5))
            ref = seq[p - 1 : p - 1 + size]
            alt = ref[0]
        else:
            ref = seq[p - 1]
            choices = [b for b in _BASES if b != ref]
            if params.distinct_causal_token:
                choices = [b for b in choices if _pair(ref, b) not in causal_pairs] or choices
            alt = str(rng.choice(choices))
        variants.append(VariantRecord(params.contig, p, f"bg{j}", ref, [alt], [1.0 - q, q], True))

    matrix = build_chromosome_matrix(reference, variants)
    freqs = {v.position: v.probs[1] for v in variants}
    causal_set = set(causal_anchors)

    genotypes, dip_texts, hap_texts, labels = [], [], [], []
    for _ in range(params.n_subjects):
        calls = {}
        carrier_flag = params.n_causal > 0 and rng.random() < params.carrier_rate
        label = 0
        for v in variants:
            if v.position in causal_set and params.het_only:
                g = (0, 1) if carrier_flag else (0, 0)
                if rng.random() < 0.5:
                    g = g[::-1]
            else:
                q = freqs[v.position]
                g = (int(rng.random() < q), int(rng.random() < q))
            if v.position in causal_set and any(g):
                label = 1
            if any(g):
                calls[v.position] = GenotypeCall(v.ref_seq, tuple(v.alt_seqs), g[0], g[1])
        if params.n_causal == 0:
            label = int(rng.random() < 0.5)
        gt = SampleGenotype(params.contig, (1, R), calls)
        choice = {p: int(rng.random() < 0.5) for p in calls}
        genotypes.append(gt)
        dip_texts.append(encode_sample_region(reference, gt))
        hap_texts.append(haplotype_sequence(reference, gt, choice))
        labels.append(label)

    meta = {"region": f"{params.contig}:1-{R}", "seed": seed}
    return SyntheticTask(
        params,
        reference,
        variants,
        matrix,
        genotypes,
        LabeledDataset(dip_texts, np.asarray(labels), dict(meta, encoding="diploid")),
        LabeledDataset(hap_texts, np.asarray(labels), dict(meta, encoding="haploid")),
        causal_anchors,
    )


def _hb(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -(p * math.log2(p) + (1 - p) * math.log2(1 - p))


def collapsed_mutual_information(carrier_rate: float) -> float:
    """Label information (bits) left in a single-haplotype view of a heterozygous-only signal.

    Carriers show the variant with probability 1/2, non-carriers never, so
    ``I = H_b(rate / 2) - rate``; the diploid view keeps ``H_b(rate)``.
    """
    return _hb(carrier_rate / 2.0) - carrier_rate


def empirical_mutual_information(feature, labels) -> float:
    """Plug-in mutual information (bits) between two binary arrays."""
    x = np.asarray(feature, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    mi = 0.0
    for a in (0, 1):
        for b in (0, 1):
            pxy = np.mean((x == a) & (y == b))
            if pxy > 0:
                mi += pxy * math.log2(pxy / (np.mean(x == a) * np.mean(y == b)))
    return mi
