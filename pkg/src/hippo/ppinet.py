"""PPI graph model: GIN message passing, pair classification, training loop.

Message passing runs over the training-edge adjacency only; test edges are the
prediction target and never reach aggregation. All node-wise maps and batch
statistics use order-canonical reductions, so relabeling the nodes permutes
``gin_forward`` output bit-exactly.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import GraphError, ParameterError, ShapeError
from .numcore import (
    Adam,
    Rng,
    Tensor,
    concat,
    constant,
    csum,
    gather,
    group_sum_rows,
    matmul,
    mul,
    power,
    relu,
    rowmap,
    seeded_init,
    sigmoid,
    softplus,
    sub,
    tensor,
    tsum,
    zero_grads,
)
from .splitbench import SplitSpec, micro_f1


@dataclass(frozen=True)
class GinConfig:
    n_blocks: int = 3
    hidden: int = 64
    eps: float = 0.0
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        if self.n_blocks < 1 or self.hidden < 1:
            raise ParameterError("GIN needs at least one block and positive width")
        if not 0.0 < self.bn_momentum <= 1.0 or self.bn_eps <= 0:
            raise ParameterError("invalid batch-norm settings")


@dataclass(frozen=True)
class PairHeadConfig:
    combine: str = "hadamard"

    def __post_init__(self):
        if self.combine not in ("hadamard", "concat"):
            raise ParameterError("pair head combine mode must be 'hadamard' or 'concat'")


@dataclass
class PpiGraph:
    node_ids: tuple[str, ...]
    features: np.ndarray  # [N, F]
    neighbors: tuple[tuple[int, ...], ...]  # sorted, symmetric, no self loops
    edges: list[tuple[int, int, np.ndarray]]  # i < j, binary label vector
    type_vocab: tuple[str, ...]

    def index_of(self, pid: str) -> int:
        try:
            return self._index[pid]
        except AttributeError:
            self._index = {p: k for k, p in enumerate(self.node_ids)}
            return self._index[pid]

    def degree(self, k: int) -> int:
        return len(self.neighbors[k])


def build_graph(
    edge_records,
    embeddings: Mapping[str, np.ndarray],
    type_vocab: Sequence[str],
    adjacency_edges: Sequence[int] | None = None,
) -> PpiGraph:
    """Assemble the graph with deterministic (sorted-id) node ordering.

    ``adjacency_edges`` selects which edge indices feed message passing;
    training code passes the train split so held-out edges never leak into
    aggregation. Duplicate records for one pair merge into a single edge with
    the union of labels.
    """
    merged: dict[tuple[str, str], np.ndarray] = {}
    for rec in edge_records:
        key = rec.pair
        if key in merged:
            merged[key] = np.maximum(merged[key], rec.labels)
        else:
            merged[key] = rec.labels.copy()
    pairs = sorted(merged)

    node_ids = tuple(sorted({p for pair in pairs for p in pair}))
    for pid in node_ids:
        if pid not in embeddings:
            raise GraphError(f"no embedding for protein {pid!r}")
    index = {p: k for k, p in enumerate(node_ids)}
    feats = np.stack([np.asarray(embeddings[p], dtype=np.float64) for p in node_ids]) if node_ids else np.zeros((0, 0))

    edges = []
    for a, b in pairs:
        i, j = index[a], index[b]
        if i > j:
            i, j = j, i
        edges.append((i, j, merged[(a, b)].astype(np.uint8)))

    if adjacency_edges is None:
        adjacency_edges = range(len(edges))
    adj: list[set[int]] = [set() for _ in node_ids]
    for e in adjacency_edges:
        i, j, _ = edges[int(e)]
        adj[i].add(j)
        adj[j].add(i)
    neighbors = tuple(tuple(sorted(s)) for s in adj)
    return PpiGraph(
        node_ids=node_ids,
        features=feats,
        neighbors=neighbors,
        edges=edges,
        type_vocab=tuple(type_vocab),
    )


def verify_adjacency(graph: PpiGraph, allowed_edges: Sequence[int]) -> None:
    """Raise if message passing could see a pair outside the allowed edges."""
    allowed = {tuple(sorted(graph.edges[int(e)][:2])) for e in allowed_edges}
    present = {(min(i, j), max(i, j)) for i, nbrs in enumerate(graph.neighbors) for j in nbrs}
    leaked = present - allowed
    if leaked:
        raise GraphError(f"adjacency leaks {len(leaked)} non-training pairs, e.g. {sorted(leaked)[0]}")


@dataclass
class BnState:
    mean: list[np.ndarray]
    var: list[np.ndarray]

    @classmethod
    def fresh(cls, cfg: GinConfig) -> "BnState":
        return cls(
            mean=[np.zeros(cfg.hidden) for _ in range(cfg.n_blocks)],
            var=[np.ones(cfg.hidden) for _ in range(cfg.n_blocks)],
        )

    def copy(self) -> "BnState":
        return BnState(mean=[m.copy() for m in self.mean], var=[v.copy() for v in self.var])


def init_gin(cfg: GinConfig, in_dim: int, rng: Rng) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    width_in = in_dim
    for b in range(cfg.n_blocks):
        p = f"gin{b}."
        params[p + "w1"] = seeded_init([width_in, cfg.hidden], "uniform_scaled", rng.split(p + "w1"), name=p + "w1")
        params[p + "b1"] = seeded_init([cfg.hidden], "zeros", name=p + "b1")
        params[p + "w2"] = seeded_init([cfg.hidden, cfg.hidden], "uniform_scaled", rng.split(p + "w2"), name=p + "w2")
        params[p + "b2"] = seeded_init([cfg.hidden], "zeros", name=p + "b2")
        params[p + "bn_g"] = seeded_init([cfg.hidden], "ones", name=p + "bn_g")
        params[p + "bn_b"] = seeded_init([cfg.hidden], "zeros", name=p + "bn_b")
        width_in = cfg.hidden
    return params


def _batch_norm(
    x: Tensor,
    gain: Tensor,
    bias: Tensor,
    state_mean: np.ndarray,
    state_var: np.ndarray,
    cfg: GinConfig,
    training: bool,
    update_stats: bool,
) -> tuple[Tensor, np.ndarray, np.ndarray]:
    n = x.shape[0]
    if training:
        mean = mul(csum(x, axis=0), 1.0 / n)
        centered = sub(x, mean)
        var = mul(csum(mul(centered, centered), axis=0), 1.0 / n)
        if update_stats:
            m = cfg.bn_momentum
            state_mean = (1.0 - m) * state_mean + m * mean.data
            state_var = (1.0 - m) * state_var + m * var.data
    else:
        mean = constant(state_mean)
        centered = sub(x, mean)
        var = constant(state_var)
    normed = mul(centered, power(var + cfg.bn_eps, -0.5))
    return mul(normed, gain) + bias, state_mean, state_var


def gin_forward(
    cfg: GinConfig,
    params: Mapping[str, Tensor],
    graph: PpiGraph,
    bn: BnState,
    training: bool,
    features: Tensor | None = None,
    update_stats: bool | None = None,
) -> Tensor:
    """Node embeddings [N, hidden].

    Per block: h' = BatchNorm(ReLU(MLP((1 + eps) * h + sum of neighbor h))).
    Training mode normalizes with batch statistics (and updates the running
    ones unless ``update_stats`` is False); eval mode uses the running
    statistics. Isolated nodes aggregate a zero neighbor sum.
    """
    if update_stats is None:
        update_stats = training
    h = features if features is not None else constant(graph.features)
    if h.shape[0] != len(graph.node_ids):
        raise ShapeError("feature rows do not match node count")
    for b in range(cfg.n_blocks):
        p = f"gin{b}."
        agg = mul(h, 1.0 + cfg.eps) + group_sum_rows(h, graph.neighbors)
        z = rowmap(agg, params[p + "w1"]) + params[p + "b1"]
        z = rowmap(relu(z), params[p + "w2"]) + params[p + "b2"]
        z = relu(z)
        z, bn.mean[b], bn.var[b] = _batch_norm(
            z, params[p + "bn_g"], params[p + "bn_b"], bn.mean[b], bn.var[b], cfg, training, update_stats
        )
        h = z
    return h


def init_pair_head(cfg: PairHeadConfig, hidden: int, n_types: int, rng: Rng) -> dict[str, Tensor]:
    in_dim = hidden if cfg.combine == "hadamard" else 2 * hidden
    return {
        "head_w": seeded_init([in_dim, n_types], "uniform_scaled", rng.split("head_w"), name="head_w"),
        "head_b": seeded_init([n_types], "zeros", name="head_b"),
    }


def pair_logits(cfg: PairHeadConfig, params: Mapping[str, Tensor], g_i: Tensor, g_j: Tensor) -> Tensor:
    """Per-type logits for node embedding pairs [E, hidden] -> [E, T].

    Hadamard mode applies the linear map to the elementwise product, which is
    symmetric by construction; concat mode averages both concatenation orders
    so the symmetry still holds.
    """
    if g_i.shape != g_j.shape:
        raise ShapeError("pair embeddings must share a shape")
    if cfg.combine == "hadamard":
        return matmul(mul(g_i, g_j), params["head_w"]) + params["head_b"]
    fwd = matmul(concat([g_i, g_j], axis=1), params["head_w"])
    rev = matmul(concat([g_j, g_i], axis=1), params["head_w"])
    return mul(fwd + rev, 0.5) + params["head_b"]


def bce_multilabel(logits, labels, reduction: str = "mean") -> Tensor:
    """Binary cross-entropy over all edges and interaction types.

    Computed in log space from logits (softplus(z) - z*y), so confident
    predictions stay finite. ``sum`` reproduces the double sum over types and
    edges; ``mean`` divides by edges x types and is the optimization default.
    """
    if reduction not in ("sum", "mean"):
        raise ParameterError("reduction must be 'sum' or 'mean'")
    z = logits if isinstance(logits, Tensor) else tensor(logits)
    y = np.asarray(labels, dtype=np.float64)
    if z.shape != y.shape:
        raise ShapeError("logits and labels must share a shape")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ParameterError("labels must be binary")
    per_elem = sub(softplus(z), mul(z, constant(y)))
    total = tsum(per_elem)
    if reduction == "sum":
        return total
    return mul(total, 1.0 / y.size)


@dataclass(frozen=True)
class PpiTrainConfig:
    gin: GinConfig = GinConfig()
    head: PairHeadConfig = PairHeadConfig()
    epochs: int = 60
    lr: float = 1e-3
    seed: int = 0
    batch_size: int | None = None
    threshold: float = 0.5


@dataclass
class AnnCotrain:
    """Optional joint training of the annotation encoder during the PPI stage.

    ``seq_features`` stays frozen; the annotation embedding is recomputed each
    step and concatenated to it, and the encoder parameters join the optimizer.
    """

    params: dict[str, Tensor]
    keyword_matrix: np.ndarray
    seq_features: np.ndarray


@dataclass
class TrainResult:
    params: dict[str, Tensor]
    bn: BnState
    log: list[dict]
    best_epoch: int
    initial_loss: float
    ann_params: dict[str, Tensor] | None = None
    final_features: np.ndarray | None = None


def select_best_epoch(log: Sequence[Mapping]) -> int:
    """Index of the epoch with the highest validation micro-F1 (first wins ties)."""
    if not log:
        raise ParameterError("empty training log")
    best, best_f1 = 0, -1.0
    for k, entry in enumerate(log):
        f1 = float(entry["val_micro_f1"])
        if f1 > best_f1:
            best, best_f1 = k, f1
    return best


def _edge_arrays(graph: PpiGraph, edge_indices: Sequence[int]):
    rows_i = np.array([graph.edges[int(e)][0] for e in edge_indices], dtype=np.intp)
    rows_j = np.array([graph.edges[int(e)][1] for e in edge_indices], dtype=np.intp)
    labels = np.stack([graph.edges[int(e)][2] for e in edge_indices]).astype(np.float64)
    return rows_i, rows_j, labels


def _features_tensor(graph: PpiGraph, ann: AnnCotrain | None) -> Tensor:
    if ann is None:
        return constant(graph.features)
    from .encoders import encode_annotations

    ann_emb = encode_annotations(ann.params, ann.keyword_matrix)
    return concat([constant(ann.seq_features), ann_emb], axis=1)


def _loss_on(
    cfg: PpiTrainConfig,
    params: Mapping[str, Tensor],
    graph: PpiGraph,
    bn: BnState,
    rows_i,
    rows_j,
    labels,
    ann: AnnCotrain | None,
    training: bool,
    update_stats: bool,
) -> Tensor:
    feats = _features_tensor(graph, ann)
    h = gin_forward(cfg.gin, params, graph, bn, training, features=feats, update_stats=update_stats)
    logits = pair_logits(cfg.head, params, gather(h, rows_i), gather(h, rows_j))
    return bce_multilabel(logits, labels, reduction="mean")


def train_ppi(
    graph: PpiGraph,
    split: SplitSpec,
    cfg: PpiTrainConfig,
    ann_cotrain: AnnCotrain | None = None,
) -> TrainResult:
    """Adam training on the train split with per-epoch validation micro-F1.

    Returns the parameters (and batch-norm state) of the best validation
    epoch. Zero epochs return the initial parameters unchanged.
    """
    if len(split.train_edges) == 0:
        raise ParameterError("empty training split")
    verify_adjacency(graph, split.train_edges)

    rng = Rng(cfg.seed)
    in_dim = graph.features.shape[1] + (
        0 if ann_cotrain is None else ann_cotrain.params["w2"].shape[1]
    )
    if ann_cotrain is not None:
        in_dim = ann_cotrain.seq_features.shape[1] + ann_cotrain.params["w2"].shape[1]
    params = init_gin(cfg.gin, in_dim, rng.split("gin"))
    params.update(init_pair_head(cfg.head, cfg.gin.hidden, len(graph.type_vocab), rng.split("head")))
    trainable = dict(params)
    if ann_cotrain is not None:
        trainable.update({f"ann.{k}": v for k, v in ann_cotrain.params.items()})
    opt = Adam(trainable, lr=cfg.lr)
    bn = BnState.fresh(cfg.gin)

    tr_i, tr_j, tr_y = _edge_arrays(graph, split.train_edges)
    initial_loss = _loss_on(
        cfg, params, graph, bn.copy(), tr_i, tr_j, tr_y, ann_cotrain, training=True, update_stats=False
    ).item()

    best_params = {k: v.data.copy() for k, v in params.items()}
    best_bn = bn.copy()
    best_ann = (
        {k: v.data.copy() for k, v in ann_cotrain.params.items()} if ann_cotrain else None
    )
    log: list[dict] = []
    order_rng = rng.split("batches")

    n_train = len(split.train_edges)
    for epoch in range(1, cfg.epochs + 1):
        if cfg.batch_size is None or cfg.batch_size >= n_train:
            slices = [np.arange(n_train)]
        else:
            perm = order_rng.permutation(n_train)
            slices = [perm[s : s + cfg.batch_size] for s in range(0, n_train, cfg.batch_size)]
        losses = []
        for sl in slices:
            loss = _loss_on(
                cfg, params, graph, bn, tr_i[sl], tr_j[sl], tr_y[sl], ann_cotrain,
                training=True, update_stats=True,
            )
            losses.append(loss.item())
            zero_grads(trainable.values())
            loss.backward()
            opt.step()
        end_loss = _loss_on(
            cfg, params, graph, bn.copy(), tr_i, tr_j, tr_y, ann_cotrain,
            training=True, update_stats=False,
        ).item()

        if split.val_edges:
            va_i, va_j, va_y = _edge_arrays(graph, split.val_edges)
            probs = _predict_probs(cfg, params, graph, bn, va_i, va_j, ann_cotrain)
            val_f1 = micro_f1((probs >= cfg.threshold).astype(np.uint8), va_y.astype(np.uint8))
        else:
            val_f1 = 0.0
        log.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)),
                "train_loss_end": end_loss,
                "val_micro_f1": float(val_f1),
            }
        )
        if log[select_best_epoch(log)]["epoch"] == epoch:
            best_params = {k: v.data.copy() for k, v in params.items()}
            best_bn = bn.copy()
            if ann_cotrain is not None:
                best_ann = {k: v.data.copy() for k, v in ann_cotrain.params.items()}

    final_params = {k: tensor(v) for k, v in best_params.items()}
    result_ann = None
    final_features = graph.features
    if ann_cotrain is not None:
        result_ann = {k: tensor(v) for k, v in (best_ann or {}).items()}
        from .encoders import encode_annotations

        ann_emb = encode_annotations(result_ann, ann_cotrain.keyword_matrix)
        final_features = np.concatenate([ann_cotrain.seq_features, ann_emb.data], axis=1)
    return TrainResult(
        params=final_params,
        bn=best_bn,
        log=log,
        best_epoch=select_best_epoch(log) + 1 if log else 0,
        initial_loss=initial_loss,
        ann_params=result_ann,
        final_features=final_features,
    )


def _predict_probs(cfg, params, graph, bn, rows_i, rows_j, ann: AnnCotrain | None = None):
    feats = _features_tensor(graph, ann)
    h = gin_forward(cfg.gin, params, graph, bn, training=False, features=feats)
    logits = pair_logits(cfg.head, params, gather(h, rows_i), gather(h, rows_j))
    return _stable_sigmoid(logits.data)


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def predict(
    cfg: PpiTrainConfig,
    params: Mapping[str, Tensor],
    graph: PpiGraph,
    bn: BnState,
    pairs: Sequence[tuple[str, str]],
) -> np.ndarray:
    """Interaction-type probabilities [len(pairs), T] in eval mode.

    Pairs may be non-edges; message passing still uses the graph's fixed
    adjacency. Unknown proteins are an error, not a zero-feature fallback.
    """
    rows_i, rows_j = [], []
    for a, b in pairs:
        try:
            rows_i.append(graph.index_of(a))
            rows_j.append(graph.index_of(b))
        except KeyError as err:
            raise GraphError(f"unknown protein {err.args[0]!r} in prediction pair") from None
    return _predict_probs(
        cfg, params, graph, bn, np.array(rows_i, dtype=np.intp), np.array(rows_j, dtype=np.intp)
    )
