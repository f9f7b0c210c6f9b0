"""Multi-level label tree and the hierarchical multi-label contrastive loss.

Level indices are 1-based and ordered root-to-leaf: level 1 is the coarsest
grouping (clan), level 2 the finer one (family). Two proteins are contrastive
positives at the level of their lowest common ancestor. The loss floors every
pair loss at a level by the maximum constrained pair loss of the parent level,
so confidence in coarse ancestry is never reported below descendant confidence.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, ParameterError, ShapeError
from .numcore import (
    MASK_NEG,
    Tensor,
    concat,
    constant,
    csum,
    gather,
    gather2d,
    l2_normalize_rows,
    logsumexp,
    matmul,
    maximum,
    mul,
    reduce_max,
    reshape,
    slice_axis,
    sub,
    tensor,
    transpose,
)


class HierarchyTree:
    """Label tree whose leaves are protein ids.

    ``levels`` names the internal levels root-to-leaf; every leaf has exactly
    one ancestor per level. ``level_weights`` are the per-level loss weights,
    all positive, defaulting to 1.
    """

    def __init__(
        self,
        levels: Sequence[str],
        leaf_paths: Mapping[str, Sequence[str]],
        level_weights: Sequence[float] | None = None,
    ):
        if not levels:
            raise ParameterError("a hierarchy needs at least one level")
        self.levels = list(levels)
        if level_weights is None:
            level_weights = [1.0] * len(self.levels)
        if len(level_weights) != len(self.levels):
            raise ParameterError("one weight per level required")
        if any(w <= 0 for w in level_weights):
            raise ParameterError("level weights must be positive")
        self.level_weights = [float(w) for w in level_weights]
        self._paths: dict[str, tuple[str, ...]] = {}
        for pid, path in leaf_paths.items():
            path = tuple(path)
            if len(path) != len(self.levels):
                raise DataError(
                    f"leaf {pid!r} has {len(path)} ancestors, expected {len(self.levels)}"
                )
            self._paths[pid] = path
        # Consistency: a node at level l must have a single parent at level l-1.
        parent_of: dict[tuple[int, str], str] = {}
        for pid, path in self._paths.items():
            for li in range(1, len(path)):
                key = (li, path[li])
                prev = parent_of.setdefault(key, path[li - 1])
                if prev != path[li - 1]:
                    raise DataError(
                        f"{self.levels[li]} {path[li]!r} is attached to both "
                        f"{prev!r} and {path[li - 1]!r}"
                    )

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def __contains__(self, pid: str) -> bool:
        return pid in self._paths

    def __len__(self) -> int:
        return len(self._paths)

    def leaf_ids(self) -> list[str]:
        return sorted(self._paths)

    def ancestors(self, pid: str) -> tuple[str, ...]:
        """Ancestor node per level, root-to-leaf."""
        try:
            return self._paths[pid]
        except KeyError:
            raise DataError(f"protein {pid!r} is not a leaf of the hierarchy") from None

    def ancestor_at(self, pid: str, level: int) -> str:
        self._check_level(level)
        return self.ancestors(pid)[level - 1]

    def nodes_at(self, level: int) -> set[str]:
        self._check_level(level)
        return {path[level - 1] for path in self._paths.values()}

    def _check_level(self, level: int) -> None:
        if not 1 <= level <= self.n_levels:
            raise ParameterError(f"level {level} outside 1..{self.n_levels}")


@dataclass(frozen=True)
class LevelPairs:
    """Positive set P_l(i): batch indices sharing the anchor's level-l ancestor."""

    anchor: int
    level: int
    positives: tuple[int, ...]


@dataclass
class PairTerm:
    anchor: int
    positive: int
    raw: float
    constrained: float


@dataclass
class LevelStats:
    mean_pair_loss: float
    pair_max: float
    n_pairs: int
    pairs: list[PairTerm] = field(default_factory=list)


@dataclass
class HcLossBreakdown:
    total: Tensor
    per_level: dict[int, LevelStats]
    constraint_activations: int
    no_positives: bool

    @property
    def total_value(self) -> float:
        return self.total.item()


def positives_at_level(tree: HierarchyTree, batch: Sequence[str], i: int, level: int) -> set[int]:
    """Batch indices whose lowest common ancestor with anchor ``i`` sits at
    ``level``: same ancestor there, different ancestor one level deeper (when a
    deeper level exists)."""
    tree._check_level(level)
    if not 0 <= i < len(batch):
        raise ParameterError(f"anchor index {i} outside batch of {len(batch)}")
    anchor_path = tree.ancestors(batch[i])
    out = set()
    for j, pid in enumerate(batch):
        if j == i:
            continue
        path = tree.ancestors(pid)
        if path[level - 1] != anchor_path[level - 1]:
            continue
        if level < tree.n_levels and path[level] == anchor_path[level]:
            continue
        out.add(j)
    return out


def level_pairs_for_batch(tree: HierarchyTree, batch: Sequence[str]) -> list[LevelPairs]:
    """All nonempty positive sets for the batch, every level and anchor."""
    if len(set(batch)) != len(batch):
        raise ParameterError("batch ids must be distinct")
    out = []
    for level in range(1, tree.n_levels + 1):
        for i in range(len(batch)):
            pos = positives_at_level(tree, batch, i, level)
            if pos:
                out.append(LevelPairs(anchor=i, level=level, positives=tuple(sorted(pos))))
    return out


def _similarity_and_denominator(embeddings, tau: float) -> tuple[Tensor, Tensor]:
    if tau <= 0:
        raise ParameterError("temperature must be positive")
    emb = embeddings if isinstance(embeddings, Tensor) else tensor(embeddings)
    if emb.ndim != 2:
        raise ShapeError("embeddings must be [N, d]")
    n = emb.shape[0]
    if n < 2:
        raise ParameterError("contrastive terms need at least two embeddings")
    z = l2_normalize_rows(emb)
    sims = mul(matmul(z, transpose(z)), 1.0 / tau)
    mask = constant(np.where(np.eye(n, dtype=bool), MASK_NEG, 0.0))
    denom = logsumexp(sims + mask, axis=1)  # per-anchor log-partition over A \ {i}
    return sims, denom


def pair_loss(i: int, p: int, embeddings, tau: float) -> Tensor:
    """Positive-pair InfoNCE term, sign-folded so the value is always >= 0.

    Rows are L2-normalized internally; the candidate set is the whole batch
    minus the anchor, so the positive itself appears in the denominator.
    """
    sims, denom = _similarity_and_denominator(embeddings, tau)
    n = sims.shape[0]
    if not (0 <= i < n and 0 <= p < n):
        raise ParameterError("pair indices outside the batch")
    if i == p:
        raise ParameterError("anchor cannot be its own positive")
    d_i = gather(denom, np.array([i]))
    s_ip = gather2d(sims, np.array([i]), np.array([p]))
    return reshape(sub(d_i, s_ip), ())


def hc_loss_from_pairs(
    embeddings,
    level_pairs: Iterable[LevelPairs],
    n_levels: int,
    level_weights: Sequence[float],
    tau: float,
) -> HcLossBreakdown:
    """Hierarchical contrastive loss from precomputed positive sets.

    Levels are processed root-to-leaf; each pair loss is floored by the
    maximum constrained pair loss of the parent level (0 above the root). On
    an exact tie the subgradient stays on the pair-loss branch. Anchors with
    an empty positive set contribute nothing at that level. A level with no
    pairs passes its inherited floor through unchanged.
    """
    if len(level_weights) != n_levels:
        raise ParameterError("one weight per level required")
    emb = embeddings if isinstance(embeddings, Tensor) else tensor(embeddings)
    if emb.ndim != 2 or emb.shape[0] == 0:
        raise ParameterError("hc_loss requires a non-empty [N, d] batch")

    by_level: dict[int, list[LevelPairs]] = {}
    for lp in level_pairs:
        if not 1 <= lp.level <= n_levels:
            raise ParameterError(f"pair level {lp.level} outside 1..{n_levels}")
        if lp.anchor in lp.positives:
            raise ParameterError("anchor found in its own positive set")
        by_level.setdefault(lp.level, []).append(lp)

    if not by_level:
        return HcLossBreakdown(
            total=tensor(0.0),
            per_level={l: LevelStats(0.0, 0.0, 0) for l in range(1, n_levels + 1)},
            constraint_activations=0,
            no_positives=True,
        )

    sims, denom = _similarity_and_denominator(emb, tau)
    floor: Tensor | None = None  # None encodes the root floor of exactly 0
    per_level: dict[int, LevelStats] = {}
    activations = 0
    level_contribs: list[Tensor] = []

    for level in range(1, n_levels + 1):
        lps = sorted(by_level.get(level, []), key=lambda lp: lp.anchor)
        if not lps:
            inherited = 0.0 if floor is None else floor.item()
            per_level[level] = LevelStats(0.0, inherited, 0)
            continue
        anchors = np.concatenate([np.full(len(lp.positives), lp.anchor) for lp in lps])
        positives = np.concatenate([np.array(lp.positives) for lp in lps])
        raw = sub(gather(denom, anchors), gather2d(sims, anchors, positives))
        constrained = raw if floor is None else maximum(raw, floor)

        floor_value = 0.0 if floor is None else floor.item()
        if np.any(constrained.data < floor_value):
            raise AssertionError("constraint violated: pair loss below parent floor")
        activations += int(np.sum((raw.data < floor_value)))

        # per-anchor means; pairs are contiguous per anchor in `constrained`
        terms: list[Tensor] = []
        offset = 0
        for lp in lps:
            k = len(lp.positives)
            seg = slice_axis(constrained, 0, offset, offset + k)
            terms.append(reshape(mul(csum(seg), 1.0 / k), (1,)))
            offset += k
        weight = level_weights[level - 1] / n_levels
        level_contribs.append(mul(csum(concat(terms, axis=0)), weight))

        pair_records = [
            PairTerm(int(a), int(p), float(r), float(c))
            for a, p, r, c in zip(anchors, positives, raw.data, constrained.data)
        ]
        new_floor = reduce_max(constrained)
        per_level[level] = LevelStats(
            mean_pair_loss=float(np.mean(constrained.data)),
            pair_max=float(new_floor.data),
            n_pairs=len(pair_records),
            pairs=pair_records,
        )
        floor = new_floor

    total = level_contribs[0]
    for contrib in level_contribs[1:]:
        total = total + contrib
    return HcLossBreakdown(
        total=reshape(total, ()),
        per_level=per_level,
        constraint_activations=activations,
        no_positives=False,
    )


def hc_loss(tree: HierarchyTree, batch: Sequence[str], embeddings, tau: float) -> HcLossBreakdown:
    """Hierarchical contrastive loss with positives derived from the tree."""
    if len(batch) == 0:
        raise ParameterError("empty batch")
    pairs = level_pairs_for_batch(tree, batch)
    return hc_loss_from_pairs(embeddings, pairs, tree.n_levels, tree.level_weights, tau)


# -- embedding cluster report -------------------------------------------------


@dataclass
class ClusterReport:
    rows: list[tuple[str, float, float, str]]  # id, pc1, pc2, level label
    silhouette: float | None

    def to_csv(self) -> str:
        lines = ["id,pc1,pc2,label"]
        for pid, pc1, pc2, label in self.rows:
            lines.append(f"{pid},{pc1!r},{pc2!r},{label}")
        return "\n".join(lines) + "\n"


def embedding_cluster_report(
    embeddings, ids: Sequence[str], tree: HierarchyTree, level: int
) -> ClusterReport:
    """Two-component PCA projection plus a silhouette score by level label.

    Rows are sorted by id and the principal axes are computed from the sorted
    matrix, so permuting the input changes nothing. Each axis has its
    largest-magnitude component forced positive. The silhouette is None when
    it is undefined (fewer than two labels, all labels singletons, or all
    points coincident).
    """
    emb = np.asarray(embeddings.data if isinstance(embeddings, Tensor) else embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[0] != len(ids):
        raise ShapeError("embeddings must be [N, d] matching ids")
    if emb.shape[0] < 2:
        raise ParameterError("cluster report needs at least two samples")
    order = np.argsort(np.asarray(ids))
    ids_sorted = [ids[int(k)] for k in order]
    x = emb[order]
    labels = [tree.ancestor_at(pid, level) for pid in ids_sorted]

    centered = x - x.mean(axis=0, keepdims=True)
    cov = centered.T @ centered
    eigvals, eigvecs = np.linalg.eigh(cov)
    axes = eigvecs[:, np.argsort(eigvals)[::-1][:2]].T
    if axes.shape[0] < 2:
        axes = np.vstack([axes, np.zeros((2 - axes.shape[0], x.shape[1]))])
    for k in range(2):
        peak = int(np.argmax(np.abs(axes[k])))
        if axes[k, peak] < 0:
            axes[k] = -axes[k]
    coords = centered @ axes.T

    rows = [
        (pid, float(coords[k, 0]), float(coords[k, 1]), labels[k])
        for k, pid in enumerate(ids_sorted)
    ]
    return ClusterReport(rows=rows, silhouette=_silhouette(x, labels))


def _silhouette(x: np.ndarray, labels: Sequence[str]) -> float | None:
    uniq = sorted(set(labels))
    n = x.shape[0]
    if len(uniq) < 2 or len(uniq) >= n:
        return None
    d = np.sqrt(np.maximum(
        (x * x).sum(1)[:, None] + (x * x).sum(1)[None, :] - 2.0 * (x @ x.T), 0.0
    ))
    if float(d.max()) == 0.0:
        return None
    lab = np.asarray(labels)
    scores = np.zeros(n)
    for i in range(n):
        same = (lab == lab[i]) & (np.arange(n) != i)
        if not same.any():
            scores[i] = 0.0
            continue
        a = float(d[i, same].mean())
        b = min(float(d[i, lab == other].mean()) for other in uniq if other != lab[i])
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())
