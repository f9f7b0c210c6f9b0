"""Edge-set partitioning, easy/hard stratification and evaluation metrics.

Traversal splits walk the interaction graph from a seeded random root
(ascending-index neighbor expansion) and collect edges whose endpoints have
both been visited, until the test quota is reached exactly; the remainder is
shuffled into train and validation. This concentrates unseen proteins in the
test set, which is what makes these splits harder than random ones.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, ParameterError, ShapeError
from .numcore import Rng

EASY = "easy"
HARD = "hard"


def _pairs(edges) -> list[tuple[str, str]]:
    out = []
    for e in edges:
        a, b = (e.a, e.b) if hasattr(e, "a") else (e[0], e[1])
        out.append((a, b) if a < b else (b, a))
    return out


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


@dataclass
class SplitSpec:
    method: str
    test_fraction: float
    seed: int
    train_edges: list[int]
    val_edges: list[int]
    test_edges: list[int]
    difficulty: dict[int, str] = field(default_factory=dict)

    def validate(self, n_edges: int) -> None:
        all_idx = sorted(self.train_edges) + sorted(self.val_edges) + sorted(self.test_edges)
        if sorted(all_idx) != list(range(n_edges)):
            raise DataError("split does not partition the edge set")
        quota = _round_half_up(self.test_fraction * n_edges)
        if abs(len(self.test_edges) - quota) > 1:
            raise DataError(
                f"test size {len(self.test_edges)} not within 1 of quota {quota}"
            )
        missing = set(self.test_edges) - set(self.difficulty)
        if missing:
            raise DataError(f"difficulty missing for test edges {sorted(missing)[:3]}")

    def to_json(self) -> str:
        doc = {
            "method": self.method,
            "test_fraction": self.test_fraction,
            "seed": self.seed,
            "train_edges": sorted(self.train_edges),
            "val_edges": sorted(self.val_edges),
            "test_edges": sorted(self.test_edges),
            "difficulty": {str(k): v for k, v in sorted(self.difficulty.items())},
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SplitSpec":
        doc = json.loads(text)
        return cls(
            method=doc["method"],
            test_fraction=float(doc["test_fraction"]),
            seed=int(doc["seed"]),
            train_edges=[int(x) for x in doc["train_edges"]],
            val_edges=[int(x) for x in doc["val_edges"]],
            test_edges=[int(x) for x in doc["test_edges"]],
            difficulty={int(k): v for k, v in doc["difficulty"].items()},
        )


def stratify_difficulty(split: SplitSpec, edges) -> dict[int, str]:
    """Tag each test edge: easy when at least one endpoint occurs in a train or
    validation edge, hard when neither does."""
    pairs = _pairs(edges)
    seen: set[str] = set()
    for k in list(split.train_edges) + list(split.val_edges):
        a, b = pairs[int(k)]
        seen.add(a)
        seen.add(b)
    out = {}
    for k in split.test_edges:
        a, b = pairs[int(k)]
        out[int(k)] = EASY if (a in seen or b in seen) else HARD
    return out


def split_random(edges, test_fraction: float, val_fraction: float, rng: Rng) -> SplitSpec:
    """Uniform shuffle then slice; fractions apply to the whole edge set."""
    pairs = _pairs(edges)
    m = len(pairs)
    if not 0.0 <= test_fraction < 1.0 or not 0.0 <= val_fraction < 1.0:
        raise ParameterError("fractions must lie in [0, 1)")
    if test_fraction + val_fraction >= 1.0:
        raise ParameterError("test and validation fractions must sum below 1")
    n_test = _round_half_up(test_fraction * m)
    n_val = _round_half_up(val_fraction * m)
    if m == 0 or n_test + n_val >= m:
        raise ParameterError(f"too few edges ({m}) to honor the requested fractions")
    perm = rng.split("shuffle").permutation(m)
    spec = SplitSpec(
        method="random",
        test_fraction=test_fraction,
        seed=rng.seed,
        train_edges=sorted(int(x) for x in perm[n_test + n_val :]),
        val_edges=sorted(int(x) for x in perm[n_test : n_test + n_val]),
        test_edges=sorted(int(x) for x in perm[:n_test]),
    )
    spec.difficulty = stratify_difficulty(spec, edges)
    spec.validate(m)
    return spec


def split_bfs(edges, test_fraction: float, rng: Rng, val_fraction: float = 0.2) -> SplitSpec:
    return _traversal_split(edges, test_fraction, rng, val_fraction, "bfs")


def split_dfs(edges, test_fraction: float, rng: Rng, val_fraction: float = 0.2) -> SplitSpec:
    return _traversal_split(edges, test_fraction, rng, val_fraction, "dfs")


def traversal_order(pairs: Sequence[tuple[str, str]], roots: Sequence[str], method: str) -> list[str]:
    """Node visit order for a fixed root sequence; used as a test oracle hook.

    Expansion is by ascending node id; BFS marks nodes when enqueued, DFS when
    popped, matching the split construction exactly.
    """
    adj: dict[str, list[str]] = {}
    for a, b in pairs:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    for k in adj:
        adj[k] = sorted(set(adj[k]))
    visited: list[str] = []
    seen: set[str] = set()
    for root in roots:
        if root in seen:
            continue
        if method == "bfs":
            seen.add(root)
            visited.append(root)
            queue = deque([root])
            while queue:
                v = queue.popleft()
                for u in adj.get(v, []):
                    if u not in seen:
                        seen.add(u)
                        visited.append(u)
                        queue.append(u)
        else:
            stack = [root]
            while stack:
                v = stack.pop()
                if v in seen:
                    continue
                seen.add(v)
                visited.append(v)
                for u in reversed(adj.get(v, [])):
                    if u not in seen:
                        stack.append(u)
    return visited


def _traversal_split(edges, test_fraction, rng: Rng, val_fraction, method: str) -> SplitSpec:
    pairs = _pairs(edges)
    m = len(pairs)
    if not 0.0 <= test_fraction < 1.0:
        raise ParameterError("test fraction must lie in [0, 1)")
    if not 0.0 <= val_fraction < 1.0:
        raise ParameterError("validation fraction must lie in [0, 1)")
    quota = _round_half_up(test_fraction * m)
    if quota > m:
        raise ParameterError(f"test quota {quota} exceeds edge count {m}")
    if m == 0:
        raise ParameterError("no edges to split")

    edge_index: dict[tuple[str, str], int] = {}
    adj: dict[str, list[str]] = {}
    for k, (a, b) in enumerate(pairs):
        if (a, b) in edge_index:
            raise DataError(f"duplicate edge {a!r}-{b!r} in split input")
        edge_index[(a, b)] = k
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    for key in adj:
        adj[key] = sorted(set(adj[key]))
    nodes = sorted(adj)

    root_rng = rng.split("roots")
    visited: set[str] = set()
    test_idx: list[int] = []

    def new_edges_for(u: str, parent: str | None) -> list[int]:
        touching = [w for w in adj[u] if w in visited and w != u]
        if parent is not None and parent in touching:
            touching.remove(parent)
            touching = [parent] + touching  # parent edge first keeps test nodes connected
        out = []
        for w in touching:
            key = (u, w) if u < w else (w, u)
            out.append(edge_index[key])
        return out

    def absorb(u: str, parent: str | None) -> bool:
        """Mark u visited, collect induced edges; True when quota reached."""
        visited.add(u)
        for e in new_edges_for(u, parent):
            if len(test_idx) < quota:
                test_idx.append(e)
            if len(test_idx) >= quota:
                return True
        return len(test_idx) >= quota

    while len(test_idx) < quota:
        unvisited = [n for n in nodes if n not in visited]
        if not unvisited:
            raise ParameterError("traversal exhausted all components before the quota")
        root = unvisited[root_rng.integers(0, len(unvisited))]
        done = absorb(root, None)
        if done:
            break
        if method == "bfs":
            queue = deque([root])
            while queue and not done:
                v = queue.popleft()
                for u in adj[v]:
                    if u not in visited:
                        done = absorb(u, v)
                        queue.append(u)
                        if done:
                            break
        else:
            stack: list[tuple[str, str | None]] = [(root, None)]
            while stack and not done:
                v, parent = stack.pop()
                if v in visited and parent is not None:
                    continue
                if v != root:
                    done = absorb(v, parent)
                    if done:
                        break
                for u in reversed(adj[v]):
                    if u not in visited:
                        stack.append((u, v))

    rest = sorted(set(range(m)) - set(test_idx))
    n_val = _round_half_up(val_fraction * len(rest))
    if len(rest) - n_val < 1 and m > quota:
        raise ParameterError("too few non-test edges left for a training set")
    perm = rng.split("valsplit").permutation(len(rest))
    val = sorted(rest[int(k)] for k in perm[:n_val])
    train = sorted(rest[int(k)] for k in perm[n_val:])
    spec = SplitSpec(
        method=method,
        test_fraction=test_fraction,
        seed=rng.seed,
        train_edges=train,
        val_edges=val,
        test_edges=sorted(test_idx),
    )
    spec.difficulty = stratify_difficulty(spec, edges)
    spec.validate(m)
    return spec


# -- metrics -----------------------------------------------------------------


def confusion_counts(predicted, truth) -> tuple[int, int, int]:
    p = np.asarray(predicted)
    t = np.asarray(truth)
    if p.shape != t.shape:
        raise ShapeError("prediction and truth shapes differ")
    if not np.all((p == 0) | (p == 1)) or not np.all((t == 0) | (t == 1)):
        raise ParameterError("confusion counting expects binary matrices")
    tp = int(np.sum((p == 1) & (t == 1)))
    fp = int(np.sum((p == 1) & (t == 0)))
    fn = int(np.sum((p == 0) & (t == 1)))
    return tp, fp, fn


def micro_f1(predicted, truth) -> float:
    """F1 with TP/FP/FN pooled over all samples and label types; 0 when the
    pooled precision and recall are both undefined or zero."""
    tp, fp, fn = confusion_counts(predicted, truth)
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2.0 * tp / denom


def aupr(scores, labels) -> float | None:
    """Area under the precision-recall curve with tie blocks grouped.

    Scores are swept descending; equal scores enter as one block, and the area
    sums precision-weighted recall increments without interpolation. Returns
    None (undefined) when there are no positive labels.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.ndim != 1 or s.shape != y.shape:
        raise ShapeError("scores and labels must be matching vectors")
    if not np.all((y == 0) | (y == 1)):
        raise ParameterError("labels must be binary")
    n_pos = int(y.sum())
    if n_pos == 0:
        return None
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    area = 0.0
    tp = fp = 0
    prev_recall = 0.0
    k = 0
    n = s.size
    while k < n:
        j = k
        while j < n and s_sorted[j] == s_sorted[k]:
            j += 1
        tp += int(y_sorted[k:j].sum())
        fp += (j - k) - int(y_sorted[k:j].sum())
        recall = tp / n_pos
        precision = tp / (tp + fp)
        area += (recall - prev_recall) * precision
        prev_recall = recall
        k = j
    return float(area)


def overlap_rate(predicted: Iterable[int], annotated: Iterable[int]) -> float:
    """Fraction of annotated residues recovered by the predicted set."""
    ann = set(annotated)
    if not ann:
        raise ParameterError("annotated residue set is empty")
    return len(set(predicted) & ann) / len(ann)


@dataclass
class MetricReport:
    micro_f1: float
    micro_f1_easy: float
    micro_f1_hard: float
    per_type_aupr: dict[str, float | None]
    counts: dict[str, int]

    def to_json(self) -> str:
        doc = {
            "micro_f1": self.micro_f1,
            "micro_f1_easy": self.micro_f1_easy,
            "micro_f1_hard": self.micro_f1_hard,
            "aupr": self.per_type_aupr,
            "counts": self.counts,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def compute_metric_report(
    probabilities,
    truth,
    difficulty: Sequence[str],
    type_vocab: Sequence[str],
    threshold: float = 0.5,
    max_workers: int = 1,
) -> MetricReport:
    """Stratified micro-F1 plus per-type AUPR for one test set.

    ``difficulty`` aligns with the rows of ``probabilities``. Empty strata
    report a micro-F1 of 0 via the degenerate-count rule, with the stratum
    sizes recorded in ``counts``.
    """
    probs = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(truth)
    if probs.shape != y.shape or probs.ndim != 2:
        raise ShapeError("probabilities and truth must be matching [M, T] matrices")
    if len(difficulty) != probs.shape[0]:
        raise ShapeError("difficulty tags must align with test rows")
    if probs.shape[1] != len(type_vocab):
        raise ShapeError("type vocabulary does not match probability columns")
    pred = (probs >= threshold).astype(np.uint8)
    tags = np.asarray(list(difficulty))
    easy = tags == EASY
    hard = tags == HARD

    def typed_aupr(k: int):
        return aupr(probs[:, k], y[:, k])

    if max_workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            values = list(pool.map(typed_aupr, range(len(type_vocab))))
    else:
        values = [typed_aupr(k) for k in range(len(type_vocab))]

    tp, fp, fn = confusion_counts(pred, y)
    return MetricReport(
        micro_f1=micro_f1(pred, y),
        micro_f1_easy=micro_f1(pred[easy], y[easy]),
        micro_f1_hard=micro_f1(pred[hard], y[hard]),
        per_type_aupr={t: values[k] for k, t in enumerate(type_vocab)},
        counts={
            "tp": tp,
            "fp": fp,
            "fn": fn,
            "n_test": int(probs.shape[0]),
            "n_easy": int(easy.sum()),
            "n_hard": int(hard.sum()),
        },
    )


def degree_guess_probabilities(edges, split: SplitSpec, n_types: int) -> np.ndarray:
    """Feature-free baseline: per-type rates of the train+val edges incident to
    each endpoint, averaged over the two endpoints, with the global rate as the
    fallback for unseen proteins."""
    pairs = _pairs(edges)
    labels = np.stack([np.asarray(e.labels if hasattr(e, "labels") else e[2]) for e in edges])
    if labels.shape[1] != n_types:
        raise ShapeError("label width disagrees with n_types")
    seen_idx = list(split.train_edges) + list(split.val_edges)
    node_sum: dict[str, np.ndarray] = {}
    node_count: dict[str, int] = {}
    for k in seen_idx:
        for endpoint in pairs[int(k)]:
            node_sum[endpoint] = node_sum.get(endpoint, np.zeros(n_types)) + labels[int(k)]
            node_count[endpoint] = node_count.get(endpoint, 0) + 1
    if seen_idx:
        global_rate = labels[[int(k) for k in seen_idx]].mean(axis=0)
    else:
        global_rate = np.full(n_types, 0.5)

    def rate(endpoint: str) -> np.ndarray:
        if endpoint in node_count:
            return node_sum[endpoint] / node_count[endpoint]
        return global_rate

    out = np.zeros((len(split.test_edges), n_types))
    for row, k in enumerate(sorted(split.test_edges)):
        a, b = pairs[int(k)]
        out[row] = 0.5 * (rate(a) + rate(b))
    return out
