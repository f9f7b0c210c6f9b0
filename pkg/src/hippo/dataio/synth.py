"""Synthetic hierarchical corpus with planted motifs and rule-driven edges.

Every family carries a distinct sequence motif; interactions and their labels
are a pure function of the family pair through a compatibility table; keyword
vectors expose the clan and a two-family group but deliberately not the family
itself, so the family signal lives only in the sequences. Motif positions are
the ground-truth binding sites. Everything is reproducible from the seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, ParameterError
from ..hierarchy import HierarchyTree
from ..numcore import Rng
from .records import AA_ALPHABET, EdgeRecord, ProteinRecord

DEFAULT_TYPES = ("activation", "binding", "catalysis")


@dataclass
class InteractionRule:
    """Compatibility table over family index pairs.

    ``entries`` maps a sorted family pair to its label names and the
    probability that a protein pair drawn from those families interacts.
    """

    types: tuple[str, ...]
    entries: dict[tuple[int, int], tuple[tuple[str, ...], float]]

    def validate(self, n_families: int) -> None:
        for (a, b), (labels, prob) in self.entries.items():
            if not (0 <= a <= b < n_families):
                raise DataError(f"interaction rule references unknown family pair {(a, b)}")
            if not labels:
                raise DataError(f"interaction rule entry {(a, b)} has no labels")
            for lab in labels:
                if lab not in self.types:
                    raise DataError(f"interaction rule label {lab!r} not in type vocabulary")
            if not 0.0 < prob <= 1.0:
                raise DataError(f"interaction rule probability for {(a, b)} outside (0, 1]")

    def lookup(self, fa: int, fb: int):
        key = (fa, fb) if fa <= fb else (fb, fa)
        return self.entries.get(key)


def default_interaction_rule(
    n_families: int,
    types: tuple[str, ...] = DEFAULT_TYPES,
    edge_prob: float = 0.2,
) -> InteractionRule:
    """Family pairs of equal parity interact; labels rotate with the pair.

    Sibling families 2g and 2g+1 share all keyword-visible structure but
    produce different label sets, which is what makes sequence-level family
    identity worth learning.
    """
    entries = {}
    for a in range(n_families):
        for b in range(a, n_families):
            if (a + b) % 2 != 0:
                continue
            labels = [types[(a + b) % len(types)]]
            if (a * b) % 2 == 0:
                labels.append(types[(a + b + 1) % len(types)])
            entries[(a, b)] = (tuple(labels), edge_prob)
    return InteractionRule(types=tuple(types), entries=entries)


@dataclass(frozen=True)
class SynthSpec:
    n_clans: int
    n_families: int
    n_proteins: int
    interaction_rule: InteractionRule
    motif_length: int = 8
    label_noise: float = 0.0
    seed: int = 0
    seq_len_range: tuple[int, int] = (48, 96)

    def __post_init__(self):
        if self.n_clans < 1 or self.n_families < self.n_clans:
            raise ParameterError("need n_families >= n_clans >= 1")
        if self.n_proteins < self.n_families:
            raise ParameterError("need at least one protein per family")
        if not 0.0 <= self.label_noise < 1.0:
            raise ParameterError("label_noise must lie in [0, 1)")
        if self.motif_length < 1 or self.motif_length > self.seq_len_range[0]:
            raise ParameterError("motif_length must fit in the shortest sequence")
        if self.seq_len_range[0] > self.seq_len_range[1]:
            raise ParameterError("invalid sequence length range")


@dataclass
class SynthCorpus:
    records: list[ProteinRecord]
    edges: list[EdgeRecord]
    tree: HierarchyTree
    sites: dict[str, tuple[int, ...]]
    type_vocab: list[str]
    keyword_vocab: list[str]
    keyword_vectors: dict[str, np.ndarray] = field(default_factory=dict)


def _clan_of(f: int, n_families: int, n_clans: int) -> int:
    return f * n_clans // n_families


def _draw_motifs(n_families: int, length: int, rng: Rng) -> list[str]:
    motifs: list[str] = []
    seen: set[str] = set()
    guard = 0
    while len(motifs) < n_families:
        guard += 1
        if guard > 100 * n_families:
            raise ParameterError("motif space too small for distinct family motifs")
        m = "".join(AA_ALPHABET[k] for k in rng.integers(0, 20, length))
        if m not in seen:
            seen.add(m)
            motifs.append(m)
    return motifs


def synth_generate(spec: SynthSpec) -> SynthCorpus:
    rule = spec.interaction_rule
    rule.validate(spec.n_families)
    root = Rng(spec.seed)

    family_of = [p % spec.n_families for p in range(spec.n_proteins)]
    clan_of = [_clan_of(f, spec.n_families, spec.n_clans) for f in family_of]
    ids = [f"P{p:05d}" for p in range(spec.n_proteins)]
    family_names = [f"FAM{f:04d}" for f in range(spec.n_families)]
    clan_names = [f"CLAN{c:03d}" for c in range(spec.n_clans)]

    motifs = _draw_motifs(spec.n_families, spec.motif_length, root.split("motifs"))

    n_groups = math.ceil(spec.n_families / 2)
    keyword_vocab = (
        [f"kw_clan_{c:03d}" for c in range(spec.n_clans)]
        + [f"kw_fgrp_{g:03d}" for g in range(n_groups)]
        + [f"kw_misc_{k}" for k in range(4)]
    )
    kw_index = {t: k for k, t in enumerate(keyword_vocab)}

    records: list[ProteinRecord] = []
    sites: dict[str, tuple[int, ...]] = {}
    keyword_vectors: dict[str, np.ndarray] = {}
    lo, hi = spec.seq_len_range
    for p, pid in enumerate(ids):
        f = family_of[p]
        srng = root.split("sequence", pid)
        length = srng.integers(lo, hi + 1)
        seq = [AA_ALPHABET[k] for k in srng.integers(0, 20, length)]
        start = srng.integers(0, length - spec.motif_length + 1)
        seq[start : start + spec.motif_length] = motifs[f]
        sites[pid] = tuple(range(start, start + spec.motif_length))

        kv = np.zeros(len(keyword_vocab), dtype=np.uint8)
        kv[kw_index[f"kw_clan_{clan_of[p]:03d}"]] = 1
        kv[kw_index[f"kw_fgrp_{f // 2:03d}"]] = 1
        krng = root.split("keywords", pid)
        for k in range(4):
            if krng.uniform(0.0, 1.0) < 0.3:
                kv[kw_index[f"kw_misc_{k}"]] = 1
        if spec.label_noise > 0:
            flips = krng.uniform(0.0, 1.0, len(kv)) < spec.label_noise
            kv = np.where(flips, 1 - kv, kv).astype(np.uint8)
        keyword_vectors[pid] = kv

        records.append(
            ProteinRecord(
                id=pid,
                sequence="".join(seq),
                keywords=kv,
                family_id=family_names[f],
                clan_id=clan_names[clan_of[p]],
            )
        )

    type_vocab = sorted(rule.types)
    type_index = {t: k for k, t in enumerate(type_vocab)}
    erng = root.split("edges")
    nrng = root.split("edge_labels")
    edges: list[EdgeRecord] = []
    for i in range(spec.n_proteins):
        for j in range(i + 1, spec.n_proteins):
            entry = rule.lookup(family_of[i], family_of[j])
            if entry is None:
                continue
            labels_names, prob = entry
            if erng.uniform(0.0, 1.0) >= prob:
                continue
            base = np.zeros(len(type_vocab), dtype=np.uint8)
            for lab in labels_names:
                base[type_index[lab]] = 1
            labels = base
            if spec.label_noise > 0:
                flips = nrng.uniform(0.0, 1.0, len(labels)) < spec.label_noise
                flipped = np.where(flips, 1 - labels, labels).astype(np.uint8)
                labels = flipped if flipped.sum() > 0 else base
            edges.append(EdgeRecord(a=ids[i], b=ids[j], labels=labels))

    leaf_paths = {
        pid: (clan_names[clan_of[p]], family_names[family_of[p]]) for p, pid in enumerate(ids)
    }
    tree = HierarchyTree(levels=["clan", "family"], leaf_paths=leaf_paths)
    return SynthCorpus(
        records=records,
        edges=edges,
        tree=tree,
        sites=sites,
        type_vocab=type_vocab,
        keyword_vocab=keyword_vocab,
        keyword_vectors=keyword_vectors,
    )


def expected_edge_density(spec: SynthSpec) -> float:
    """Mean edge probability over all protein pairs, by direct enumeration."""
    family_of = [p % spec.n_families for p in range(spec.n_proteins)]
    total = 0.0
    pairs = 0
    for i in range(spec.n_proteins):
        for j in range(i + 1, spec.n_proteins):
            pairs += 1
            entry = spec.interaction_rule.lookup(family_of[i], family_of[j])
            if entry is not None:
                total += entry[1]
    return total / pairs if pairs else 0.0
