"""Sequence and annotation encoders, alignment losses, combined objective.

The sequence encoder stacks transformer-like blocks: a narrow+wide 1-D
convolution pair fused back to model width, multi-head self-attention, and a
feed-forward layer, each wrapped in a skip connection and layer norm. Padded
positions are zeroed before convolutions and excluded from attention keys and
from the mean-pooled embedding. Depth and width are config fields, so larger
configurations remain expressible; the defaults are sized for desk-scale runs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataio.records import SEQUENCE_ALPHABET
from .errors import DataError, ParameterError, ShapeError
from .hierarchy import HcLossBreakdown, LevelPairs, hc_loss_from_pairs
from .numcore import (
    Rng,
    Tensor,
    clip,
    concat,
    constant,
    csum,
    exp,
    gather,
    gather2d,
    l2_normalize_rows,
    log,
    logsumexp,
    matmul,
    mul,
    pad_axis,
    power,
    relu,
    reshape,
    seeded_init,
    sigmoid,
    slice_axis,
    sub,
    tensor,
    transpose,
    tsum,
)

PAD_ID = 0
TOKEN_VOCAB = [None] + list(SEQUENCE_ALPHABET)  # ids 1..21 for the 20 AAs plus X
VOCAB_SIZE = len(TOKEN_VOCAB)
_TOKEN_ID = {ch: k for k, ch in enumerate(TOKEN_VOCAB) if ch is not None}

PROB_CLAMP = 1e-7


def tokenize(sequence: str) -> np.ndarray:
    try:
        return np.array([_TOKEN_ID[c] for c in sequence], dtype=np.intp)
    except KeyError as err:
        raise DataError(f"character {err.args[0]!r} outside the sequence alphabet") from None


@dataclass(frozen=True)
class SequenceEncoderConfig:
    d_model: int = 64
    n_blocks: int = 2
    conv_widths: tuple[int, int] = (3, 15)
    n_heads: int = 4
    max_len: int = 512

    def __post_init__(self):
        if self.d_model < 1 or self.n_blocks < 1 or self.n_heads < 1 or self.max_len < 1:
            raise ParameterError("encoder dimensions must be positive")
        if self.d_model % self.n_heads != 0:
            raise ParameterError("d_model must be divisible by n_heads")
        if any(w < 1 or w % 2 == 0 for w in self.conv_widths):
            raise ParameterError("conv widths must be odd and positive")


@dataclass(frozen=True)
class AlignmentConfig:
    tau: float = 0.07
    alpha: float = 0.25
    gamma: float = 2.0
    proj_dim: int = 32

    def __post_init__(self):
        if self.tau <= 0:
            raise ParameterError("temperature must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError("alpha must lie in (0, 1)")
        if self.gamma < 0:
            raise ParameterError("gamma must be non-negative")
        if self.proj_dim < 1:
            raise ParameterError("projection width must be positive")


def init_sequence_encoder(cfg: SequenceEncoderConfig, rng: Rng) -> dict[str, Tensor]:
    d = cfg.d_model
    k1, k2 = cfg.conv_widths
    params: dict[str, Tensor] = {
        "embed": seeded_init([VOCAB_SIZE, d], "uniform_scaled", rng.split("embed"), name="embed")
    }
    for b in range(cfg.n_blocks):
        p = f"blk{b}."
        shapes = {
            "conv_n_w": [k1, d, d],
            "conv_w_w": [k2, d, d],
            "fuse_w": [2 * d, d],
            "wq": [d, d],
            "wk": [d, d],
            "wv": [d, d],
            "wo": [d, d],
            "ff1_w": [d, 2 * d],
            "ff2_w": [2 * d, d],
        }
        for name, shape in shapes.items():
            params[p + name] = seeded_init(shape, "uniform_scaled", rng.split(p + name), name=p + name)
        for name, width in [
            ("conv_n_b", d), ("conv_w_b", d), ("fuse_b", d), ("wo_b", d),
            ("ff1_b", 2 * d), ("ff2_b", d),
        ]:
            params[p + name] = seeded_init([width], "zeros", name=p + name)
        for ln in ("ln1", "ln2", "ln3"):
            params[f"{p}{ln}_g"] = seeded_init([d], "ones", name=f"{p}{ln}_g")
            params[f"{p}{ln}_b"] = seeded_init([d], "zeros", name=f"{p}{ln}_b")
    return params


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.mean(axis=1, keepdims=True)
    centered = sub(x, mu)
    var = mul(centered, centered).mean(axis=1, keepdims=True)
    return mul(centered, power(var + eps, -0.5)) * gain + bias


def _conv1d_same(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    k = w.shape[0]
    length = x.shape[0]
    xp = pad_axis(x, 0, k // 2, k // 2)
    acc = None
    for o in range(k):
        win = slice_axis(xp, 0, o, o + length)
        tap = reshape(slice_axis(w, 0, o, o + 1), (w.shape[1], w.shape[2]))
        term = matmul(win, tap)
        acc = term if acc is None else acc + term
    return acc + b


def _attention(x: Tensor, params: dict[str, Tensor], prefix: str, n_heads: int, mask: np.ndarray):
    length, d = x.shape
    dh = d // n_heads

    def heads(name):
        proj = matmul(x, params[prefix + name])
        return transpose(reshape(proj, (length, n_heads, dh)), (1, 0, 2))

    q, k, v = heads("wq"), heads("wk"), heads("wv")
    scores = mul(matmul(q, transpose(k, (0, 2, 1))), 1.0 / math.sqrt(dh))
    key_mask = constant((mask[None, None, :] - 1.0) * 1e30)
    scores = scores + key_mask
    attn = exp(sub(scores, logsumexp(scores, axis=2, keepdims=True)))
    mixed = transpose(matmul(attn, v), (1, 0, 2))
    out = matmul(reshape(mixed, (length, d)), params[prefix + "wo"]) + params[prefix + "wo_b"]
    return out, attn.data.copy()


def encode_sequence(
    cfg: SequenceEncoderConfig,
    params: dict[str, Tensor],
    tokens: np.ndarray,
    mask: np.ndarray | None = None,
):
    """Encode one tokenized sequence.

    Returns per-residue states [L, d_model], the masked-mean pooled embedding
    [d_model], and the attention maps as a plain array
    [n_blocks, n_heads, L, L] (each row sums to 1 over unmasked keys).
    """
    tokens = np.asarray(tokens, dtype=np.intp)
    if tokens.ndim != 1 or tokens.size == 0:
        raise ShapeError("tokens must be a non-empty 1-D array")
    if tokens.size > cfg.max_len:
        raise DataError(
            f"sequence length {tokens.size} exceeds max_len {cfg.max_len}; "
            "truncation is never performed silently"
        )
    if tokens.min() < 0 or tokens.max() >= VOCAB_SIZE:
        raise DataError("token id outside the vocabulary")
    length = tokens.size
    if mask is None:
        mask = np.ones(length, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (length,) or not np.all((mask == 0.0) | (mask == 1.0)):
        raise ShapeError("mask must be a 0/1 vector matching the sequence length")
    if mask.sum() == 0:
        raise ParameterError("fully masked sequence")
    if np.any((mask == 0.0) != (tokens == PAD_ID)):
        raise DataError("mask inconsistent with pad tokens")

    mcol = constant(mask[:, None])
    x = gather(params["embed"], tokens)
    x = mul(x, mcol)
    maps = []
    for b in range(cfg.n_blocks):
        p = f"blk{b}."
        xm = mul(x, mcol)
        narrow = _conv1d_same(xm, params[p + "conv_n_w"], params[p + "conv_n_b"])
        wide = _conv1d_same(xm, params[p + "conv_w_w"], params[p + "conv_w_b"])
        fused = matmul(concat([narrow, wide], axis=1), params[p + "fuse_w"]) + params[p + "fuse_b"]
        x = layer_norm(x + fused, params[p + "ln1_g"], params[p + "ln1_b"])
        attn_out, amap = _attention(x, params, p, cfg.n_heads, mask)
        x = layer_norm(x + attn_out, params[p + "ln2_g"], params[p + "ln2_b"])
        ff = matmul(relu(matmul(x, params[p + "ff1_w"]) + params[p + "ff1_b"]), params[p + "ff2_w"])
        x = layer_norm(x + ff + params[p + "ff2_b"], params[p + "ln3_g"], params[p + "ln3_b"])
        maps.append(amap)
    states = x
    pooled = mul(tsum(mul(states, mcol), axis=0), 1.0 / float(mask.sum()))
    return states, pooled, np.stack(maps)


def init_annotation_encoder(n_keywords: int, d_model: int, rng: Rng) -> dict[str, Tensor]:
    return {
        "w1": seeded_init([n_keywords, d_model], "uniform_scaled", rng.split("w1"), name="ann.w1"),
        "b1": seeded_init([d_model], "zeros", name="ann.b1"),
        "w2": seeded_init([d_model, d_model], "uniform_scaled", rng.split("w2"), name="ann.w2"),
        "b2": seeded_init([d_model], "zeros", name="ann.b2"),
    }


def encode_annotations(params: dict[str, Tensor], keyword_vectors) -> Tensor:
    """Two-layer perceptron over binary keyword vectors -> [N, d_model]."""
    kw = np.asarray(
        keyword_vectors.data if isinstance(keyword_vectors, Tensor) else keyword_vectors,
        dtype=np.float64,
    )
    if kw.ndim != 2:
        raise ShapeError("keyword vectors must be [N, K]")
    if not np.all((kw == 0.0) | (kw == 1.0)):
        raise DataError("keyword vectors must be binary")
    if kw.shape[1] != params["w1"].shape[0]:
        raise ShapeError(
            f"keyword width {kw.shape[1]} does not match encoder input {params['w1'].shape[0]}"
        )
    x = keyword_vectors if isinstance(keyword_vectors, Tensor) else constant(kw)
    hidden = relu(matmul(x, params["w1"]) + params["b1"])
    return matmul(hidden, params["w2"]) + params["b2"]


def init_alignment_heads(d_model: int, cfg: AlignmentConfig, rng: Rng) -> dict[str, Tensor]:
    dp = cfg.proj_dim
    return {
        "seq_proj_w": seeded_init([d_model, dp], "uniform_scaled", rng.split("seq_proj"), name="seq_proj_w"),
        "seq_proj_b": seeded_init([dp], "zeros", name="seq_proj_b"),
        "ann_proj_w": seeded_init([d_model, dp], "uniform_scaled", rng.split("ann_proj"), name="ann_proj_w"),
        "ann_proj_b": seeded_init([dp], "zeros", name="ann_proj_b"),
        "match_w1": seeded_init([2 * dp, dp], "uniform_scaled", rng.split("match_w1"), name="match_w1"),
        "match_b1": seeded_init([dp], "zeros", name="match_b1"),
        "match_w2": seeded_init([dp, 1], "uniform_scaled", rng.split("match_w2"), name="match_w2"),
        "match_b2": seeded_init([1], "zeros", name="match_b2"),
    }


def project(params: dict[str, Tensor], which: str, x: Tensor) -> Tensor:
    if which not in ("seq", "ann"):
        raise ParameterError("projection selector must be 'seq' or 'ann'")
    return matmul(x, params[f"{which}_proj_w"]) + params[f"{which}_proj_b"]


def sac_loss(z_seq, z_ann, tau: float) -> Tensor:
    """Symmetric InfoNCE over matching sequence/annotation rows.

    Rows are L2-normalized internally. Both softmax directions (over
    annotations for each sequence, over sequences for each annotation) are
    averaged, so swapping the arguments leaves the value unchanged.
    """
    if tau <= 0:
        raise ParameterError("temperature must be positive")
    zs = z_seq if isinstance(z_seq, Tensor) else tensor(z_seq)
    za = z_ann if isinstance(z_ann, Tensor) else tensor(z_ann)
    if zs.ndim != 2 or zs.shape != za.shape:
        raise ShapeError("sac_loss expects matching [N, d] inputs")
    n = zs.shape[0]
    if n < 1:
        raise ParameterError("sac_loss needs at least one pair")
    zs = l2_normalize_rows(zs)
    za = l2_normalize_rows(za)
    sims = mul(matmul(zs, transpose(za)), 1.0 / tau)
    idx = np.arange(n)
    diag = gather2d(sims, idx, idx)
    row_lse = logsumexp(sims, axis=1)
    col_lse = logsumexp(sims, axis=0)
    return reshape(mul(csum(sub(row_lse, diag)) + csum(sub(col_lse, diag)), 1.0 / (2.0 * n)), ())


def sam_pairs(n: int, rng: Rng) -> list[tuple[int, int, int]]:
    """All matching pairs plus one uniformly mismatched pair per sequence."""
    if n < 2:
        raise ParameterError("negative sampling needs a batch of at least 2")
    pairs = [(i, i, 1) for i in range(n)]
    for i in range(n):
        k = rng.integers(0, n - 1)
        j = k if k < i else k + 1
        pairs.append((i, j, 0))
    return pairs


def match_probabilities(
    params: dict[str, Tensor], z_seq: Tensor, z_ann: Tensor, pairs: Sequence[tuple[int, int, int]]
) -> Tensor:
    """Matching probability per (sequence, annotation) pair via the match head."""
    zs = l2_normalize_rows(z_seq)
    za = l2_normalize_rows(z_ann)
    si = np.array([p[0] for p in pairs], dtype=np.intp)
    ai = np.array([p[1] for p in pairs], dtype=np.intp)
    feats = concat([gather(zs, si), gather(za, ai)], axis=1)
    hidden = relu(matmul(feats, params["match_w1"]) + params["match_b1"])
    logits = matmul(hidden, params["match_w2"]) + params["match_b2"]
    return sigmoid(reshape(logits, (len(pairs),)))


def sam_loss(targets, probs, alpha: float, gamma: float) -> Tensor:
    """Focal matching loss; probabilities are clamped to [1e-7, 1 - 1e-7]."""
    if not 0.0 < alpha < 1.0:
        raise ParameterError("alpha must lie in (0, 1)")
    if gamma < 0:
        raise ParameterError("gamma must be non-negative")
    p = probs if isinstance(probs, Tensor) else tensor(probs)
    y = np.asarray(targets, dtype=np.float64)
    if p.ndim != 1 or y.shape != p.shape:
        raise ShapeError("sam_loss expects matching 1-D probabilities and targets")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DataError("targets must be binary")
    p = clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    yv = constant(y)
    pos = mul(mul(mul(yv, alpha), power(sub(1.0, p), gamma)), log(p))
    negt = mul(mul(mul(sub(1.0, yv), 1.0 - alpha), power(p, gamma)), log(sub(1.0, p)))
    return reshape(mul(csum(pos + negt), -1.0 / y.size), ())


@dataclass
class PretrainBatch:
    ids: list[str]
    token_lists: list[np.ndarray]
    masks: list[np.ndarray]
    keyword_matrix: np.ndarray
    level_pairs: list[LevelPairs]
    n_levels: int
    level_weights: list[float]

    def __post_init__(self):
        n = len(self.ids)
        if n < 2:
            raise ParameterError("contrastive pretraining needs batches of at least 2")
        if len(self.token_lists) != n or len(self.masks) != n or self.keyword_matrix.shape[0] != n:
            raise ShapeError("batch field lengths disagree")


@dataclass
class PretrainStep:
    total: Tensor
    components: dict[str, float]
    hc_breakdown: HcLossBreakdown
    pooled: Tensor


def pretrain_objective(
    batch: PretrainBatch,
    seq_cfg: SequenceEncoderConfig,
    align_cfg: AlignmentConfig,
    params: dict[str, dict[str, Tensor]],
    weights: tuple[float, float, float],
    rng: Rng,
) -> PretrainStep:
    """Weighted sum of the three pretraining objectives.

    ``params`` holds the three groups under keys ``seq``, ``ann`` and
    ``align``. Components are always reported individually; the total is the
    weighted sum, so zero weights isolate components exactly.
    """
    w_hc, w_sac, w_sam = weights
    if min(w_hc, w_sac, w_sam) < 0:
        raise ParameterError("objective weights must be non-negative")

    pooled_rows = []
    for tokens, mask in zip(batch.token_lists, batch.masks):
        _, pooled, _ = encode_sequence(seq_cfg, params["seq"], tokens, mask)
        pooled_rows.append(reshape(pooled, (1, seq_cfg.d_model)))
    pooled = concat(pooled_rows, axis=0)
    ann = encode_annotations(params["ann"], batch.keyword_matrix)

    hc_bd = hc_loss_from_pairs(
        pooled, batch.level_pairs, batch.n_levels, batch.level_weights, align_cfg.tau
    )
    z_seq = project(params["align"], "seq", pooled)
    z_ann = project(params["align"], "ann", ann)
    sac = sac_loss(z_seq, z_ann, align_cfg.tau)
    pairs = sam_pairs(len(batch.ids), rng)
    probs = match_probabilities(params["align"], z_seq, z_ann, pairs)
    sam = sam_loss([y for _, _, y in pairs], probs, align_cfg.alpha, align_cfg.gamma)

    total = mul(hc_bd.total, w_hc) + mul(sac, w_sac) + mul(sam, w_sam)
    components = {
        "hc": hc_bd.total_value,
        "sac": sac.item(),
        "sam": sam.item(),
        "total": total.item(),
    }
    return PretrainStep(total=total, components=components, hc_breakdown=hc_bd, pooled=pooled)


def attention_site_scores(maps: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-residue attention received, averaged over blocks, heads and queries.

    Masked positions are excluded from both the averaging and the output,
    which is normalized to sum to 1. Returns a length-L vector with zeros at
    masked positions.
    """
    maps = np.asarray(maps, dtype=np.float64)
    if maps.ndim != 4 or maps.shape[2] != maps.shape[3]:
        raise ShapeError("attention maps must be [blocks, heads, L, L]")
    length = maps.shape[2]
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (length,):
        raise ShapeError("mask length does not match attention maps")
    valid = np.flatnonzero(mask > 0)
    if valid.size == 0:
        raise ParameterError("all positions are masked")
    sub_maps = maps[:, :, valid][:, :, :, valid]
    received = sub_maps.mean(axis=(0, 1, 2))
    total = received.sum()
    if total <= 0:
        raise ParameterError("attention mass is zero over unmasked positions")
    out = np.zeros(length, dtype=np.float64)
    out[valid] = received / total
    return out


def top_attention_residues(scores: np.ndarray, n: int) -> tuple[int, ...]:
    """Indices of the n highest-scoring residues; ties break on lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    if n < 0 or n > scores.size:
        raise ParameterError("top-n outside 0..L")
    order = np.argsort(-scores, kind="stable")
    return tuple(sorted(int(k) for k in order[:n]))
