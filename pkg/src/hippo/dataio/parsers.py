"""Parsers and emitters for FASTA and the three TSV formats.

Emitters write a canonical form (sorted rows, LF endings, UTF-8); parsing a
canonical file and re-emitting it reproduces it byte for byte.
"""
from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np

from ..errors import DataError
from ..hierarchy import HierarchyTree
from .records import EdgeRecord

EDGES_HEADER = "protein_a\tprotein_b\ttype"
ANNOTATIONS_HEADER = "id\tkeywords"
HIERARCHY_HEADER = "protein_id\tfamily_id\tclan_id"


def parse_fasta(path) -> list[tuple[str, str]]:
    """Read (id, sequence) pairs; id is the first whitespace token of the header."""
    records: list[tuple[str, str]] = []
    seen: set[str] = set()
    current_id: str | None = None
    header_line = 0
    chunks: list[str] = []

    def flush():
        if current_id is None:
            return
        seq = "".join(chunks)
        if not seq:
            raise DataError(f"empty sequence for {current_id!r} (line {header_line})")
        records.append((current_id, seq))

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith(">"):
                flush()
                current_id = line[1:].split()[0] if line[1:].split() else ""
                if not current_id:
                    raise DataError(f"header with no id at line {lineno}")
                if current_id in seen:
                    raise DataError(f"duplicate FASTA id {current_id!r} (line {lineno})")
                seen.add(current_id)
                header_line = lineno
                chunks = []
            else:
                if current_id is None:
                    raise DataError(f"sequence data before any header at line {lineno}")
                chunks.append(line)
    flush()
    return records


def write_fasta(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pid, seq in records:
            fh.write(f">{pid}\n{seq}\n")


def parse_edges(path, type_vocab: list[str] | None = None) -> tuple[list[EdgeRecord], list[str]]:
    """Read interaction rows (protein_a, protein_b, type), one row per pair/type.

    Rows naming the same unordered pair are merged into one record with the
    union of labels. The type vocabulary is the sorted set of types seen in
    the file unless one is supplied, in which case unknown types are errors.
    """
    pair_types: dict[tuple[str, str], set[str]] = {}
    seen_types: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if lineno == 1 and line == EDGES_HEADER:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"expected 3 tab-separated columns at line {lineno}")
            a, b, typ = parts
            if a == b:
                raise DataError(f"self-interaction {a!r} at line {lineno}")
            if type_vocab is not None and typ not in type_vocab:
                raise DataError(f"unknown interaction type {typ!r} at line {lineno}")
            key = (a, b) if a < b else (b, a)
            pair_types.setdefault(key, set()).add(typ)
            seen_types.add(typ)

    vocab = list(type_vocab) if type_vocab is not None else sorted(seen_types)
    index = {t: k for k, t in enumerate(vocab)}
    records = []
    for (a, b) in sorted(pair_types):
        labels = np.zeros(len(vocab), dtype=np.uint8)
        for t in pair_types[(a, b)]:
            labels[index[t]] = 1
        records.append(EdgeRecord(a=a, b=b, labels=labels))
    return records, vocab


def write_edges(records, vocab: list[str], path) -> None:
    rows = []
    for rec in records:
        for t in rec.label_names(vocab):
            rows.append((rec.a, rec.b, t))
    rows.sort()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(EDGES_HEADER + "\n")
        for a, b, t in rows:
            fh.write(f"{a}\t{b}\t{t}\n")


def parse_annotations(path) -> tuple[list[str], dict[str, np.ndarray]]:
    """Read keyword annotations (id, ';'-joined tokens) into binary vectors.

    The vocabulary is the sorted set of tokens in the file. An id listed with
    no tokens gets an all-zero vector (allowed, warned). Ids absent from the
    file are simply absent from the map; callers default them to zero vectors.
    """
    raw: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if lineno == 1 and line == ANNOTATIONS_HEADER:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"expected 2 tab-separated columns at line {lineno}")
            pid, tokens = parts
            if pid in raw:
                raise DataError(f"duplicate annotation row for {pid!r} at line {lineno}")
            toks = {t for t in tokens.split(";") if t}
            if not toks:
                warnings.warn(f"protein {pid!r} has an empty keyword list", stacklevel=2)
            raw[pid] = toks

    vocab = sorted({t for toks in raw.values() for t in toks})
    index = {t: k for k, t in enumerate(vocab)}
    vectors = {}
    for pid, toks in raw.items():
        v = np.zeros(len(vocab), dtype=np.uint8)
        for t in toks:
            v[index[t]] = 1
        vectors[pid] = v
    return vocab, vectors


def annotation_matrix(ids, vocab: list[str], vectors: dict[str, np.ndarray]) -> np.ndarray:
    """Stack per-protein keyword vectors; missing proteins get zero rows."""
    out = np.zeros((len(ids), len(vocab)), dtype=np.float64)
    for k, pid in enumerate(ids):
        if pid in vectors:
            out[k] = vectors[pid]
    return out


def write_annotations(vectors: dict[str, np.ndarray], vocab: list[str], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(ANNOTATIONS_HEADER + "\n")
        for pid in sorted(vectors):
            tokens = ";".join(vocab[k] for k in np.flatnonzero(vectors[pid]))
            fh.write(f"{pid}\t{tokens}\n")


def parse_hierarchy(path) -> HierarchyTree:
    """Read (protein_id, family_id, clan_id) rows into a two-level tree.

    A family with an empty clan column is attached to a synthetic singleton
    clan named after the family. A family appearing under two clans is an
    error naming the family.
    """
    paths: dict[str, tuple[str, str]] = {}
    family_clan: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if lineno == 1 and line == HIERARCHY_HEADER:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"expected 3 tab-separated columns at line {lineno}")
            pid, family, clan = parts
            if not pid or not family:
                raise DataError(f"missing protein or family id at line {lineno}")
            clan = clan or family
            if pid in paths:
                raise DataError(f"protein {pid!r} appears twice (line {lineno})")
            prev = family_clan.setdefault(family, clan)
            if prev != clan:
                raise DataError(
                    f"family {family!r} is mapped to clans {prev!r} and {clan!r}"
                )
            paths[pid] = (clan, family)
    return HierarchyTree(levels=["clan", "family"], leaf_paths=paths)


def write_hierarchy(rows, path) -> None:
    """Write (protein_id, family_id, clan_id) rows sorted by protein id."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(HIERARCHY_HEADER + "\n")
        for pid, family, clan in sorted(rows):
            fh.write(f"{pid}\t{family}\t{clan}\n")


def parse_sites(path) -> dict[str, tuple[int, ...]]:
    """Read ground-truth site rows (protein_id, comma-joined 0-based positions)."""
    sites: dict[str, tuple[int, ...]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if lineno == 1 and line == "protein_id\tpositions":
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"expected 2 tab-separated columns at line {lineno}")
            pid, positions = parts
            if pid in sites:
                raise DataError(f"duplicate site row for {pid!r} at line {lineno}")
            try:
                sites[pid] = tuple(int(x) for x in positions.split(",") if x != "")
            except ValueError:
                raise DataError(f"non-integer site position at line {lineno}") from None
    return sites


def write_sites(sites: dict[str, tuple[int, ...]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("protein_id\tpositions\n")
        for pid in sorted(sites):
            fh.write(f"{pid}\t{','.join(str(x) for x in sites[pid])}\n")


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
