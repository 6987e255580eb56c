"""Corpus generation from a chromosome matrix, and genotype encoding.

The pre-training corpus is produced by random walks over a contig: each walk
starts at a random offset and cuts the contig into consecutive segments of
random length; every position of a segment is turned into a SNP token by
drawing two alleles from that position's column.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _accel
from .alphabet import ALLELES, PAIR_CODEPOINT, encode_char, make_snp_token
from .genome import (
    ChromosomeMatrix,
    ReferenceContig,
    VariantClass,
    _text_lines,
    allele_placements,
    classify_variant,
)

logger = logging.getLogger(__name__)

_PAIR_CODEPOINT = np.asarray(PAIR_CODEPOINT, dtype=np.int32)


class SamplerError(ValueError):
    pass


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerParams:
    T: int
    K: int
    L_inf: int
    L_sup: int
    seed: int = 0
    independent_alleles: bool = True

    def validate(self, length: int) -> None:
        if self.T < 1:
            raise SamplerError("T must be at least 1")
        if not 0 < self.L_inf <= self.L_sup:
            raise SamplerError(f"need 0 < L_inf <= L_sup, got {self.L_inf}, {self.L_sup}")
        if not 0 <= self.K < length:
            raise SamplerError(f"K={self.K} must lie in [0, {length})")
        if not self.independent_alleles:
            raise SamplerError("only independent allele draws are implemented")


@dataclass(frozen=True)
class Segment:
    text: str
    contig: str
    start: int
    length: int


@dataclass(frozen=True)
class GenotypeCall:
    ref_seq: str
    alt_seqs: tuple[str, ...]
    g1: int
    g2: int

    def allele(self, index: int) -> str:
        return self.ref_seq if index == 0 else self.alt_seqs[index - 1]


@dataclass
class SampleGenotype:
    contig: str
    region: tuple[int, int]
    calls: dict[int, GenotypeCall] = field(default_factory=dict)


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, *stream])


def sample_alleles(dist: np.ndarray, rng: np.random.Generator) -> tuple[str, str]:
    """Two independent draws from an allele distribution."""
    cum = np.cumsum(np.asarray(dist, dtype=np.float64))
    u = rng.random(2) * cum[-1]
    picks = np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)
    return ALLELES[picks[0]], ALLELES[picks[1]]


def walk_windows(length: int, params: SamplerParams):
    """Yield ``(walk, start0, size, rng)`` for every kept window of every walk.

    ``start0`` is 0-based. Windows shorter than ``L_inf`` (only possible at the
    contig end) are dropped.
    """
    params.validate(length)
    starts = _rng(params.seed, 0).integers(0, params.K + 1, size=params.T)
    for walk, p in enumerate(starts.tolist()):
        rng = _rng(params.seed, 1, walk)
        while p < length:
            step = int(rng.integers(params.L_inf, params.L_sup + 1))
            size = min(step, length - p)
            if size >= params.L_inf:
                yield walk, p, size, rng
            p += step


def sample_segments(matrix: ChromosomeMatrix, params: SamplerParams) -> list[Segment]:
    n = matrix.length
    cum = np.cumsum(matrix.weights, axis=1) if matrix.n_explicit else np.zeros((0, len(ALLELES)))
    column_of = matrix.column_index()
    ref_codes = matrix.reference.allele_codes().astype(np.int64)
    segments = []
    for _walk, p, size, rng in walk_windows(n, params):
        u = rng.random((size, 2))
        codes = _accel.sample_pairs(
            cum, column_of[p : p + size], ref_codes[p : p + size], u, _PAIR_CODEPOINT
        )
        text = "".join(map(chr, codes.tolist()))
        segments.append(Segment(text, matrix.contig, p + 1, size))
    return segments


def sample_haploid_segments(reference: ReferenceContig, params: SamplerParams, variants=None) -> list[Segment]:
    """Same walk as :func:`sample_segments`, emitting bases.

    Without ``variants`` the text is the raw reference. With them, each window
    is one sampled haplotype: every variant lying wholly inside the window
    takes an allele drawn from its frequencies (the first uniform at its
    position), later overlapping variants are skipped. Alternate alleles are
    spelled out, so the text length can differ from the reference span.
    """
    chosen = sorted((v for v in variants or () if v.contig == reference.name), key=lambda v: v.position)
    positions = np.array([v.position for v in chosen], dtype=np.int64)
    segments = []
    for _walk, p, size, rng in walk_windows(reference.length, params):
        u = rng.random((size, 2))  # drawn either way: keeps the walk in step with the diploid one
        text = reference.sequence[p : p + size]
        lo, hi = np.searchsorted(positions, [p + 1, p + size + 1])
        if hi > lo:
            text = _apply_variants(reference.sequence, p, size, chosen[lo:hi], u[:, 0])
        segments.append(Segment(text, reference.name, p + 1, size))
    return segments


def _apply_variants(seq: str, p: int, size: int, variants, u) -> str:
    out, cursor = [], p
    for v in variants:
        at = v.position - 1
        if at < cursor or at + len(v.ref_seq) > p + size:
            continue
        cum = np.cumsum(v.probs)
        k = min(int(np.searchsorted(cum, u[at - p] * cum[-1], side="right")), len(v.alt_seqs))
        out.append(seq[cursor:at])
        out.append(v.ref_seq if k == 0 else v.alt_seqs[k - 1])
        cursor = at + len(v.ref_seq)
    out.append(seq[cursor : p + size])
    return "".join(out)


def write_corpus(segments, path, seed: int | None = None) -> None:
    segments = list(segments)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if segments:
            fh.write(f"#contig={segments[0].contig} seed={seed if seed is not None else '.'}\n")
        for s in segments:
            fh.write(s.text + "\n")


def read_corpus(path) -> list[str]:
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    return [ln for ln in lines if ln and not ln.startswith("#")]


# --------------------------------------------------------------------------
# genotype encoding
# --------------------------------------------------------------------------


def haploid_region(reference: ReferenceContig, start: int, end: int) -> str:
    """Reference bases of the 1-based inclusive interval ``[start, end]``."""
    if start < 1 or end > reference.length or end < start:
        raise IndexError(f"region {start}-{end} invalid for contig of length {reference.length}")
    return reference.sequence[start - 1 : end]


def _allele_tracks(reference: ReferenceContig, genotype: SampleGenotype) -> tuple[list[str], list[str]]:
    start, end = genotype.region
    bases = haploid_region(reference, start, end)
    tracks = (list(bases), list(bases))
    for pos in sorted(genotype.calls):
        call = genotype.calls[pos]
        for track, index in zip(tracks, (call.g1, call.g2)):
            if index == 0:
                continue
            alt = call.allele(index)
            if classify_variant(call.ref_seq, alt) is VariantClass.UNSUPPORTED:
                raise EncodingError(f"unsupported variant {call.ref_seq}>{alt} at position {pos}")
            for cell, allele in allele_placements(call.ref_seq, alt, pos):
                if start <= cell <= end:
                    track[cell - start] = allele
    return tracks


def encode_sample_region(reference: ReferenceContig, genotype: SampleGenotype) -> str:
    """Diploid SNP-character string of the genotype over its region (one char per position)."""
    if isinstance(reference, ChromosomeMatrix):
        reference = reference.reference
    if genotype.contig != reference.name:
        raise EncodingError(f"genotype on {genotype.contig!r}, reference is {reference.name!r}")
    first, second = _allele_tracks(reference, genotype)
    return "".join(encode_char(make_snp_token(a, b)) for a, b in zip(first, second))


def haplotype_sequence(reference: ReferenceContig, genotype: SampleGenotype, choice) -> str:
    """Base string of one haplotype, taking allele ``choice[pos]`` (``0`` or ``1``) at each call.

    Not a per-position encoding: insertions lengthen and deletions shorten
    the result, as in a real haploid read-out.
    """
    start, end = genotype.region
    out = []
    pos = start
    calls = genotype.calls
    while pos <= end:
        call = calls.get(pos)
        if call is None:
            out.append(reference.base(pos))
            pos += 1
            continue
        allele = call.allele(call.g2 if choice[pos] else call.g1)
        out.append(allele)
        pos += len(call.ref_seq)
    return "".join(out)


def write_genotype_vcf(genotype: SampleGenotype, path, sample: str = "sample") -> None:
    """Single-sample VCF readable by :func:`parse_genotype_vcf` (phased ``g1|g2``)."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("##fileformat=VCFv4.2\n")
        fh.write(f"##region={genotype.contig}:{genotype.region[0]}-{genotype.region[1]}\n")
        fh.write(f"#CHROM\tPOS\tID\tREF\tALT\tQUAL\tFILTER\tINFO\tFORMAT\t{sample}\n")
        for pos in sorted(genotype.calls):
            c = genotype.calls[pos]
            cols = [genotype.contig, str(pos), ".", c.ref_seq, ",".join(c.alt_seqs), ".", ".", ".", "GT", f"{c.g1}|{c.g2}"]
            fh.write("\t".join(cols) + "\n")


def parse_genotype_vcf(stream, contig: str | None = None, region: tuple[int, int] | None = None) -> SampleGenotype:
    """Read a single-sample VCF; GT separators ``/`` and ``|`` are treated alike."""
    calls: dict[int, GenotypeCall] = {}
    chrom_seen = contig
    for lineno, line in enumerate(_text_lines(stream), start=1):
        if not line or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) < 10:
            raise EncodingError(f"line {lineno}: genotype VCF needs FORMAT and one sample column")
        chrom, pos, _id, ref, alt = cols[:5]
        if contig is not None and chrom != contig:
            continue
        chrom_seen = chrom_seen or chrom
        fmt = cols[8].split(":")
        if "GT" not in fmt:
            raise EncodingError(f"line {lineno}: no GT field")
        gt = cols[9].split(":")[fmt.index("GT")].replace("|", "/")
        parts = gt.split("/")
        if len(parts) != 2 or "." in parts:
            logger.warning("line %d: skipping non-diploid or missing genotype %r", lineno, gt)
            continue
        position = int(pos)
        if region is not None and not region[0] <= position <= region[1]:
            continue
        alts = tuple(a.upper() for a in alt.split(","))
        g1, g2 = int(parts[0]), int(parts[1])
        if max(g1, g2) > len(alts):
            raise EncodingError(f"line {lineno}: allele index beyond ALT list")
        calls[position] = GenotypeCall(ref.upper(), alts, g1, g2)
    if chrom_seen is None:
        raise EncodingError("no genotype records and no contig given")
    if region is None:
        if not calls:
            raise EncodingError("region is required when there are no calls")
        region = (min(calls), max(p + len(c.ref_seq) - 1 for p, c in calls.items()))
    return SampleGenotype(chrom_seen, region, calls)


__all__ = [
    "EncodingError",
    "GenotypeCall",
    "SampleGenotype",
    "SamplerError",
    "SamplerParams",
    "Segment",
    "encode_sample_region",
    "haploid_region",
    "haplotype_sequence",
    "parse_genotype_vcf",
    "read_corpus",
    "sample_alleles",
    "sample_haploid_segments",
    "sample_segments",
    "write_corpus",
    "write_genotype_vcf",
]
