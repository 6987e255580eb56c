"""Reference genome and SNP database ingestion.

Builds the sparse chromosome matrix: for each position of a contig, a
probability distribution over the 11 allele symbols. Only positions touched
by a variant get an explicit column; every other position implicitly puts
all of its mass on the reference base.
"""

from __future__ import annotations

import io
import logging
import math
import struct
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .alphabet import ALLELE_INDEX, ALLELES, INSERTION_OF, N_ALLELES

logger = logging.getLogger(__name__)

MAX_VARIANT_LENGTH = 50
MATRIX_MAGIC = b"SNPM"
MATRIX_VERSION = 1
_VALID_BASES = frozenset("ACGTN")


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class MatrixError(ValueError):
    pass


@dataclass(frozen=True)
class ReferenceContig:
    name: str
    sequence: str

    def __post_init__(self):
        if not self.sequence:
            raise ValueError(f"contig {self.name!r} has an empty sequence")

    @property
    def length(self) -> int:
        return len(self.sequence)

    def base(self, position: int) -> str:
        """Base at a 1-based position."""
        return self.sequence[position - 1]

    def allele_codes(self) -> np.ndarray:
        """Allele index of every position, 0-based array."""
        lut = np.zeros(256, dtype=np.int8)
        for b in "ACGTN":
            lut[ord(b)] = ALLELE_INDEX[b]
        return lut[np.frombuffer(self.sequence.encode("ascii"), dtype=np.uint8)]


@dataclass
class VariantRecord:
    contig: str
    position: int
    id: str
    ref_seq: str
    alt_seqs: list[str]
    probs: list[float]
    common: bool = False


class VariantClass(str, Enum):
    SUBSTITUTION = "substitution"
    MULTI_BASE_SUBSTITUTION = "multi_base_substitution"
    INSERTION = "insertion"
    DELETION = "deletion"
    UNSUPPORTED = "unsupported"


@dataclass
class Rejection:
    line: int
    reason: str
    text: str = ""


@dataclass
class BuildReport:
    applied: int = 0
    skipped_unsupported: int = 0
    skipped_out_of_bounds: int = 0
    skipped_unknown_reference: int = 0
    skipped_ref_mismatch: int = 0
    renormalized: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ChromosomeMatrix:
    """Sparse 11 x N allele-probability table for one contig.

    ``positions`` is a sorted array of 1-based positions with explicit
    columns; ``weights[i]`` is the distribution at ``positions[i]`` indexed by
    :data:`dipseq.alphabet.ALLELES`.
    """

    reference: ReferenceContig
    positions: np.ndarray
    weights: np.ndarray
    report: BuildReport = field(default_factory=BuildReport)

    @property
    def contig(self) -> str:
        return self.reference.name

    @property
    def length(self) -> int:
        return self.reference.length

    @property
    def n_explicit(self) -> int:
        return int(self.positions.shape[0])

    def column_index(self) -> np.ndarray:
        """Per-position index into ``weights`` (0-based array, ``-1`` for implicit columns)."""
        idx = np.full(self.length, -1, dtype=np.int64)
        idx[self.positions - 1] = np.arange(self.n_explicit)
        return idx


# --------------------------------------------------------------------------
# FASTA
# --------------------------------------------------------------------------


def _text_lines(stream) -> Iterator[str]:
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    for raw in stream:
        if isinstance(raw, (bytes, bytearray)):
            raw = raw.decode("utf-8")
        yield raw.rstrip("\r\n")


def parse_fasta(stream) -> list[ReferenceContig]:
    """Parse FASTA text (bytes, str, or a file object) into contigs, in input order."""
    contigs: list[ReferenceContig] = []
    name = None
    header_line = 0
    chunks: list[str] = []

    def flush():
        if name is None:
            return
        if not chunks:
            raise ParseError(f"contig {name!r} has an empty sequence", header_line)
        contigs.append(ReferenceContig(name, "".join(chunks)))

    for lineno, line in enumerate(_text_lines(stream), start=1):
        if not line.strip():
            continue
        if line.startswith(">"):
            flush()
            fields = line[1:].split()
            if not fields:
                raise ParseError("malformed header", lineno)
            name, header_line, chunks = fields[0], lineno, []
            continue
        if name is None:
            raise ParseError("sequence data before first header", lineno)
        seq = line.strip().upper()
        bad = set(seq) - _VALID_BASES
        if bad:
            raise ParseError(f"illegal character {sorted(bad)[0]!r}", lineno)
        chunks.append(seq)
    flush()
    return contigs


def read_fasta(path) -> list[ReferenceContig]:
    with open(path, "rb") as fh:
        return parse_fasta(fh)


def write_fasta(contigs: Iterable[ReferenceContig], path, width: int = 60) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for c in contigs:
            fh.write(f">{c.name}\n")
            for i in range(0, c.length, width):
                fh.write(c.sequence[i : i + width] + "\n")


# --------------------------------------------------------------------------
# VCF subset
# --------------------------------------------------------------------------


def parse_info(info: str) -> tuple[set[str], dict[str, str]]:
    flags, values = set(), {}
    if info in ("", "."):
        return flags, values
    for entry in info.split(";"):
        if "=" in entry:
            k, v = entry.split("=", 1)
            values[k] = v
        elif entry:
            flags.add(entry)
    return flags, values


def _check_bases(seq: str) -> bool:
    return bool(seq) and len(seq) <= MAX_VARIANT_LENGTH and set(seq) <= _VALID_BASES


def parse_variant_records(
    stream,
    common_only: bool = False,
    freq_key: str = "FREQ",
    fallback_epsilon: float = 0.01,
    rejections: list[Rejection] | None = None,
) -> list[VariantRecord]:
    """Parse VCF-style variant lines.

    Malformed records are not fatal: each is appended to ``rejections`` (when
    given) and parsing continues. Records with no usable frequency entry get
    ``1 - eps`` on REF and ``eps / |ALT|`` on each ALT.
    """
    out: list[VariantRecord] = []

    def reject(lineno, reason, text):
        logger.debug("rejecting line %d: %s", lineno, reason)
        if rejections is not None:
            rejections.append(Rejection(lineno, reason, text))

    for lineno, line in enumerate(_text_lines(stream), start=1):
        if not line or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) < 8:
            reject(lineno, f"expected at least 8 columns, got {len(cols)}", line)
            continue
        chrom, pos, vid, ref, alt, _qual, _filt, info = cols[:8]
        try:
            position = int(pos)
        except ValueError:
            reject(lineno, f"unparsable position {pos!r}", line)
            continue
        if position < 1:
            reject(lineno, f"position {position} is not 1-based", line)
            continue
        flags, values = parse_info(info)
        common = "COMMON" in flags or values.get("COMMON") == "1"
        if common_only and not common:
            continue
        ref = ref.upper()
        alts = [a.upper() for a in alt.split(",")]
        if not _check_bases(ref) or not all(_check_bases(a) for a in alts):
            reject(lineno, "allele outside ACGTN or longer than 50 bases", line)
            continue
        raw = values.get(freq_key)
        probs = None
        if raw is not None and raw not in ("", "."):
            try:
                parsed = [float(x) for x in raw.split(",")]
            except ValueError:
                parsed = None
            if parsed is None or any(math.isnan(p) for p in parsed):
                reject(lineno, f"unparsable {freq_key} entry {raw!r}", line)
                continue
            if len(parsed) != 1 + len(alts):
                reject(lineno, f"{freq_key} has {len(parsed)} values for {1 + len(alts)} alleles", line)
                continue
            if any(p < 0 or p > 1 for p in parsed) or sum(parsed) > 1 + 1e-6:
                reject(lineno, f"{freq_key} values outside [0, 1] or summing above 1", line)
                continue
            probs = parsed
        if probs is None:
            probs = [1.0 - fallback_epsilon] + [fallback_epsilon / len(alts)] * len(alts)
        out.append(VariantRecord(chrom, position, vid, ref, alts, probs, common))
    return out


def read_variants(path, **kwargs) -> list[VariantRecord]:
    with open(path, "rb") as fh:
        return parse_variant_records(fh, **kwargs)


def write_variants(records: Iterable[VariantRecord], path, freq_key: str = "FREQ") -> None:
    """Minimal sites-only VCF that :func:`read_variants` reads back losslessly."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("##fileformat=VCFv4.2\n")
        fh.write("#CHROM\tPOS\tID\tREF\tALT\tQUAL\tFILTER\tINFO\n")
        for r in records:
            info = [f"{freq_key}=" + ",".join(repr(float(p)) for p in r.probs)]
            if r.common:
                info.append("COMMON")
            cols = [r.contig, str(r.position), r.id or ".", r.ref_seq, ",".join(r.alt_seqs), ".", ".", ";".join(info)]
            fh.write("\t".join(cols) + "\n")


def classify_variant(ref_seq: str, alt_seq: str) -> VariantClass:
    r, a = len(ref_seq), len(alt_seq)
    if r == a:
        return VariantClass.SUBSTITUTION if r == 1 else VariantClass.MULTI_BASE_SUBSTITUTION
    if r == 1 and a > 1 and alt_seq[0] == ref_seq:
        return VariantClass.INSERTION
    if a == 1 and r > 1 and ref_seq[0] == alt_seq:
        return VariantClass.DELETION
    return VariantClass.UNSUPPORTED


def allele_placements(ref_seq: str, alt_seq: str, position: int) -> list[tuple[int, str]]:
    """(position, allele symbol) cells an ALT allele occupies, relative to the reference.

    An empty list means the allele equals the reference at every position.
    Unsupported shapes raise ``ValueError``.
    """
    kind = classify_variant(ref_seq, alt_seq)
    if kind is VariantClass.SUBSTITUTION or kind is VariantClass.MULTI_BASE_SUBSTITUTION:
        return [(position + j, b) for j, (r, b) in enumerate(zip(ref_seq, alt_seq)) if r != b]
    if kind is VariantClass.INSERTION:
        return [(position, INSERTION_OF[ref_seq])]
    if kind is VariantClass.DELETION:
        return [(position + j, "DEL") for j in range(1, len(ref_seq))]
    raise ValueError(f"unsupported variant shape {ref_seq}>{alt_seq}")


# --------------------------------------------------------------------------
# matrix build
# --------------------------------------------------------------------------


def build_chromosome_matrix(contig: ReferenceContig, variants: Iterable[VariantRecord]) -> ChromosomeMatrix:
    """Place each variant's ALT mass into allele cells and normalise the touched columns.

    Contributions to one cell are summed with ``math.fsum`` so that the
    result does not depend on variant order.
    """
    report = BuildReport()
    cells: dict[int, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    seq = contig.sequence
    for rec in variants:
        if rec.contig != contig.name:
            raise MatrixError(f"variant {rec.id} on {rec.contig!r}, expected {contig.name!r}")
        end = rec.position + len(rec.ref_seq) - 1
        if rec.position < 1 or end > contig.length:
            report.skipped_out_of_bounds += 1
            continue
        window = seq[rec.position - 1 : end]
        if "N" in window:
            report.skipped_unknown_reference += 1
            continue
        if window != rec.ref_seq:
            report.skipped_ref_mismatch += 1
            continue
        placed = []
        for alt, mass in zip(rec.alt_seqs, rec.probs[1:]):
            try:
                placed.append((allele_placements(rec.ref_seq, alt, rec.position), mass))
            except ValueError:
                report.skipped_unsupported += 1
        if not placed:
            continue
        for cells_of_alt, mass in placed:
            for pos, allele in cells_of_alt:
                cells[pos][ALLELE_INDEX[allele]].append(mass)
        report.applied += 1

    positions = np.array(sorted(cells), dtype=np.int64)
    weights = np.zeros((positions.shape[0], N_ALLELES), dtype=np.float64)
    for row, pos in enumerate(positions.tolist()):
        col = weights[row]
        for allele, masses in cells[pos].items():
            col[allele] = math.fsum(masses)
        alt_total = math.fsum(col)
        ref_idx = ALLELE_INDEX[seq[pos - 1]]
        col[ref_idx] += max(0.0, 1.0 - alt_total)
        if alt_total > 1.0:
            report.renormalized += 1
        col /= math.fsum(col)
    return ChromosomeMatrix(contig, positions, weights, report)


def column_distribution(matrix: ChromosomeMatrix, position: int) -> np.ndarray:
    """Allele distribution at a 1-based position (length-11 array in ``ALLELES`` order)."""
    if not 1 <= position <= matrix.length:
        raise IndexError(f"position {position} outside 1..{matrix.length}")
    i = int(np.searchsorted(matrix.positions, position))
    if i < matrix.n_explicit and matrix.positions[i] == position:
        return matrix.weights[i].copy()
    out = np.zeros(N_ALLELES)
    out[ALLELE_INDEX[matrix.reference.base(position)]] = 1.0
    return out


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------
#
# "SNPM" | u32 version | u32 name length | name | u64 N | u64 columns |
# columns x (u64 position, 11 x f64) | N bytes of reference sequence
# All integers and floats little-endian.


def write_matrix(matrix: ChromosomeMatrix, target) -> None:
    name = matrix.contig.encode("utf-8")
    buf = bytearray()
    buf += MATRIX_MAGIC
    buf += struct.pack("<II", MATRIX_VERSION, len(name)) + name
    buf += struct.pack("<QQ", matrix.length, matrix.n_explicit)
    cols = np.zeros(matrix.n_explicit, dtype=[("pos", "<u8"), ("w", "<f8", (N_ALLELES,))])
    cols["pos"] = matrix.positions
    cols["w"] = matrix.weights
    buf += cols.tobytes()
    buf += matrix.reference.sequence.encode("ascii")
    _write_bytes(target, bytes(buf))


def read_matrix(source) -> ChromosomeMatrix:
    data = _read_bytes(source)
    if data[:4] != MATRIX_MAGIC:
        raise MatrixError("not a chromosome matrix file (bad magic)")
    version, name_len = struct.unpack_from("<II", data, 4)
    if version != MATRIX_VERSION:
        raise MatrixError(f"unsupported matrix format version {version}")
    off = 12
    name = data[off : off + name_len].decode("utf-8")
    off += name_len
    length, ncols = struct.unpack_from("<QQ", data, off)
    off += 16
    dtype = np.dtype([("pos", "<u8"), ("w", "<f8", (N_ALLELES,))])
    cols = np.frombuffer(data, dtype=dtype, count=ncols, offset=off)
    off += ncols * dtype.itemsize
    sequence = data[off : off + length].decode("ascii")
    if len(sequence) != length:
        raise MatrixError("truncated reference section")
    ref = ReferenceContig(name, sequence)
    return ChromosomeMatrix(ref, cols["pos"].astype(np.int64), cols["w"].astype(np.float64))


def _write_bytes(target, data: bytes) -> None:
    if isinstance(target, (str, Path)):
        Path(target).write_bytes(data)
    else:
        target.write(data)


def _read_bytes(source) -> bytes:
    if isinstance(source, (str, Path)):
        return Path(source).read_bytes()
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    return source.read()


__all__ = [
    "ALLELES",
    "BuildReport",
    "ChromosomeMatrix",
    "MatrixError",
    "ParseError",
    "ReferenceContig",
    "Rejection",
    "VariantClass",
    "VariantRecord",
    "allele_placements",
    "build_chromosome_matrix",
    "classify_variant",
    "column_distribution",
    "parse_fasta",
    "parse_variant_records",
    "read_fasta",
    "read_matrix",
    "read_variants",
    "write_fasta",
    "write_matrix",
    "write_variants",
]
