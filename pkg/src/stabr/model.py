"""SABR and STABR next-song models.

Song branch: embedding -> Bi-GRU -> additive attention -> song context.
STABR adds a tag branch (per-song mean tag embedding -> Bi-GRU -> attention)
whose context is concatenated with the song context.  The joint context
goes through a ReLU bottleneck and a linear layer over all songs; the
model returns log-probabilities.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import layers
from .errors import DimensionError, VocabularyError
from .layers import AttentionParams, GruParams
from .numerics import DTYPE, Rng, glorot_uniform, log_softmax

ARCHS = ("sabr", "stabr")
_GRU_KEYS = ("Wz", "Wr", "Wh", "Uz", "Ur", "Uh", "bz", "br", "bh")
_ATT_KEYS = ("Wa", "ba", "u")


@dataclass(frozen=True)
class ModelConfig:
    arch: str
    n_songs: int
    n_tags: int = 0
    song_dim: int = 50
    tag_dim: int = 25
    song_hidden: int = 50
    tag_hidden: int = 25
    song_att_dim: int = 0  # 0 -> half the Bi-GRU state width
    tag_att_dim: int = 0
    bottleneck: int = 50
    dropout: float = 0.1
    m: int = 10

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"arch must be one of {ARCHS}, got {self.arch!r}")
        if self.n_songs < 1:
            raise ValueError("n_songs must be positive")
        if self.arch == "stabr" and self.n_tags < 1:
            raise ValueError("stabr needs a non-empty tag vocabulary")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.m < 1:
            raise ValueError("history window m must be at least 1")

    @property
    def uses_tags(self) -> bool:
        return self.arch == "stabr"

    @property
    def song_state(self) -> int:
        return 2 * self.song_hidden

    @property
    def tag_state(self) -> int:
        return 2 * self.tag_hidden

    @property
    def context_dim(self) -> int:
        return self.song_state + (self.tag_state if self.uses_tags else 0)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ModelParams:
    """All learnable tensors, keyed by name, plus the config that shaped them."""

    config: ModelConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def gru(self, prefix: str) -> GruParams:
        return GruParams(**{k: self.tensors[f"{prefix}.{k}"] for k in _GRU_KEYS})

    def attention(self, prefix: str) -> AttentionParams:
        return AttentionParams(**{k: self.tensors[f"{prefix}.{k}"] for k in _ATT_KEYS})

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}


def expected_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    shapes = {"E1": (cfg.song_dim, cfg.n_songs)}
    if cfg.uses_tags:
        shapes["E2"] = (cfg.tag_dim, cfg.n_tags)
    branches = [("song", cfg.song_dim, cfg.song_hidden, cfg.song_att_dim)]
    if cfg.uses_tags:
        branches.append(("tag", cfg.tag_dim, cfg.tag_hidden, cfg.tag_att_dim))
    for name, inp, hid, att in branches:
        for direction in ("fwd", "bwd"):
            p = f"{name}_{direction}"
            for k in ("Wz", "Wr", "Wh"):
                shapes[f"{p}.{k}"] = (hid, inp)
            for k in ("Uz", "Ur", "Uh"):
                shapes[f"{p}.{k}"] = (hid, hid)
            for k in ("bz", "br", "bh"):
                shapes[f"{p}.{k}"] = (hid,)
        att = att or hid
        shapes[f"{name}_att.Wa"] = (att, 2 * hid)
        shapes[f"{name}_att.ba"] = (att,)
        shapes[f"{name}_att.u"] = (att,)
    shapes["W1"] = (cfg.bottleneck, cfg.context_dim)
    shapes["b1"] = (cfg.bottleneck,)
    shapes["W2"] = (cfg.n_songs, cfg.bottleneck)
    shapes["b2"] = (cfg.n_songs,)
    return shapes


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases, drawn in a fixed order."""
    rng = Rng(seed)
    tensors = {}
    for name, shape in expected_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if len(shape) == 1 and leaf != "u":
            tensors[name] = np.zeros(shape, dtype=DTYPE)
        elif leaf == "u":
            tensors[name] = glorot_uniform(rng, 1, shape[0])[0]
        else:
            tensors[name] = glorot_uniform(rng, *shape)
    return ModelParams(cfg, tensors)


def validate_params(params: ModelParams) -> None:
    expected = expected_shapes(params.config)
    if list(expected) != list(params.tensors):
        raise DimensionError(
            f"tensor names {sorted(params.tensors)} do not match {sorted(expected)}"
        )
    for name, shape in expected.items():
        if params.tensors[name].shape != shape:
            raise DimensionError(f"{name} has shape {params.tensors[name].shape}, expected {shape}")


@dataclass(frozen=True)
class TrainingExample:
    prefix: tuple[int, ...]
    prefix_tags: tuple[tuple[int, ...], ...]
    target: int

    def __post_init__(self):
        if not self.prefix:
            raise ValueError("a training example needs a non-empty prefix")
        if len(self.prefix_tags) != len(self.prefix):
            raise ValueError("prefix_tags must have one tag list per prefix song")


def _check_prefix(cfg: ModelConfig, prefix, prefix_tags) -> None:
    if len(prefix) == 0:
        raise ValueError("empty prefix")
    for s in prefix:
        if not 0 <= s < cfg.n_songs:
            raise VocabularyError(f"song index {s} outside vocabulary of {cfg.n_songs}")
    if cfg.uses_tags:
        for tags in prefix_tags:
            for t in tags:
                if not 0 <= t < cfg.n_tags:
                    raise VocabularyError(f"tag index {t} outside vocabulary of {cfg.n_tags}")


def _tag_inputs(e2: np.ndarray, padded_tags, lengths, T: int):
    """Mean tag embeddings laid out as a left-padded (T, B, d') tensor."""
    B = len(padded_tags)
    out = np.zeros((T, B, e2.shape[0]), dtype=DTYPE)
    memo: dict[tuple, np.ndarray] = {}
    for b, tag_lists in enumerate(padded_tags):
        offset = T - lengths[b]
        for j, tags in enumerate(tag_lists):
            key = tuple(tags)
            if key not in memo:
                memo[key] = layers.embed_tags_avg(key, e2)
            out[offset + j, b] = memo[key]
    return out


def forward_batch(
    params: ModelParams,
    prefixes: Sequence[Sequence[int]],
    prefix_tags: Sequence[Sequence[Sequence[int]]] | None,
    mode: str = "eval",
    rng: Rng | None = None,
):
    """Log-probabilities ``(B, |V|)`` for a batch of (possibly ragged) prefixes."""
    cfg = params.config
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "train" and cfg.dropout > 0 and rng is None:
        raise ValueError("train mode with dropout needs an Rng")
    if prefix_tags is None:
        prefix_tags = [[()] * len(p) for p in prefixes]
    for p, tg in zip(prefixes, prefix_tags):
        _check_prefix(cfg, p, tg)
    t = params.tensors
    B = len(prefixes)
    lengths = [len(p) for p in prefixes]
    T = max(lengths)
    mask = np.zeros((T, B), dtype=DTYPE)
    idx = np.zeros((T, B), dtype=np.int64)
    for b, p in enumerate(prefixes):
        mask[T - len(p):, b] = 1.0
        idx[T - len(p):, b] = p
    xs = t["E1"][:, idx].transpose(1, 2, 0)

    song_fwd, song_bwd = params.gru("song_fwd"), params.gru("song_bwd")
    song_att = params.attention("song_att")
    hs, c_sgru = layers.bigru_forward(xs, song_fwd, song_bwd, mask)
    ctx_s, alpha, c_satt = layers.attention_forward(hs, song_att, mask)
    cache = {
        "mask": mask, "idx": idx, "lengths": lengths, "prefix_tags": prefix_tags,
        "c_sgru": c_sgru, "c_satt": c_satt, "alpha": alpha,
    }
    if cfg.uses_tags:
        gs_in = _tag_inputs(t["E2"], prefix_tags, lengths, T)
        tag_fwd, tag_bwd = params.gru("tag_fwd"), params.gru("tag_bwd")
        gs, c_tgru = layers.bigru_forward(gs_in, tag_fwd, tag_bwd, mask)
        ctx_t, beta, c_tatt = layers.attention_forward(gs, params.attention("tag_att"), mask)
        context = np.concatenate([ctx_s, ctx_t], axis=1)
        cache.update(c_tgru=c_tgru, c_tatt=c_tatt, beta=beta)
    else:
        context = ctx_s

    mid, c_d1 = layers.dense_forward(context, t["W1"], t["b1"], "relu")
    mid, m1 = layers.dropout_forward(mid, cfg.dropout, mode, rng)
    logits, c_d2 = layers.dense_forward(mid, t["W2"], t["b2"], "none")
    logits, m2 = layers.dropout_forward(logits, cfg.dropout, mode, rng)
    log_probs = log_softmax(logits, axis=1)
    cache.update(c_d1=c_d1, m1=m1, c_d2=c_d2, m2=m2, log_probs=log_probs)
    return log_probs, cache


def forward(params: ModelParams, ex: TrainingExample, mode: str = "eval", rng: Rng | None = None):
    """Log-probabilities over all songs for one example's prefix."""
    log_probs, cache = forward_batch(params, [ex.prefix], [ex.prefix_tags], mode, rng)
    return log_probs[0], cache


def loss(log_probs: np.ndarray, target: int) -> float:
    """Negative log-likelihood of ``target``."""
    if not 0 <= target < log_probs.shape[-1]:
        raise VocabularyError(f"target {target} outside vocabulary of {log_probs.shape[-1]}")
    return float(-log_probs[target])


def backward_batch(params: ModelParams, cache, targets: Sequence[int]) -> dict[str, np.ndarray]:
    """Gradient of the summed NLL over the batch w.r.t. every tensor."""
    cfg = params.config
    t = params.tensors
    log_probs = cache["log_probs"]
    B, V = log_probs.shape
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (B,) or np.any(targets < 0) or np.any(targets >= V):
        raise VocabularyError(f"targets {targets.tolist()} invalid for {B} rows over {V} songs")
    grads = params.zeros_like()

    d_logits = np.exp(log_probs)
    d_logits[np.arange(B), targets] -= 1.0
    d_logits = layers.dropout_backward(cache["m2"], d_logits)
    d_mid, g = layers.dense_backward(cache["c_d2"], d_logits, t["W2"])
    grads["W2"] += g["W"]
    grads["b2"] += g["b"]
    d_mid = layers.dropout_backward(cache["m1"], d_mid)
    d_ctx, g = layers.dense_backward(cache["c_d1"], d_mid, t["W1"])
    grads["W1"] += g["W"]
    grads["b1"] += g["b"]

    S = cfg.song_state
    d_hs, g = layers.attention_backward(cache["c_satt"], d_ctx[:, :S], params.attention("song_att"))
    _accumulate(grads, "song_att", g)
    dxs, g_f, g_b = layers.bigru_backward(
        cache["c_sgru"], d_hs, params.gru("song_fwd"), params.gru("song_bwd")
    )
    _accumulate(grads, "song_fwd", g_f)
    _accumulate(grads, "song_bwd", g_b)
    mask = cache["mask"] > 0
    np.add.at(grads["E1"].T, cache["idx"][mask], dxs[mask])

    if cfg.uses_tags:
        d_gs, g = layers.attention_backward(cache["c_tatt"], d_ctx[:, S:], params.attention("tag_att"))
        _accumulate(grads, "tag_att", g)
        dgs, g_f, g_b = layers.bigru_backward(
            cache["c_tgru"], d_gs, params.gru("tag_fwd"), params.gru("tag_bwd")
        )
        _accumulate(grads, "tag_fwd", g_f)
        _accumulate(grads, "tag_bwd", g_b)
        T = mask.shape[0]
        gE2 = grads["E2"]
        for b, tag_lists in enumerate(cache["prefix_tags"]):
            offset = T - cache["lengths"][b]
            for j, tags in enumerate(tag_lists):
                if tags:
                    tags = list(tags)
                    np.add.at(gE2, (slice(None), tags), dgs[offset + j, b][:, None] / len(tags))
    return grads


def backward(params: ModelParams, cache, target: int) -> dict[str, np.ndarray]:
    """Gradient of one example's NLL; cache must come from :func:`forward`."""
    return backward_batch(params, cache, [target])


def _accumulate(grads: dict, prefix: str, g: dict) -> None:
    for k, v in g.items():
        grads[f"{prefix}.{k}"] += v


def loss_and_grad(params: ModelParams, examples: Sequence[TrainingExample], rng: Rng | None,
                  mode: str = "train"):
    """Summed NLL and summed gradients over ``examples``."""
    log_probs, cache = forward_batch(
        params, [e.prefix for e in examples], [e.prefix_tags for e in examples], mode, rng
    )
    targets = [e.target for e in examples]
    total = float(-np.sum(log_probs[np.arange(len(targets)), targets]))
    return total, backward_batch(params, cache, targets)


def rank_topk(log_probs: np.ndarray, k: int) -> list[int]:
    """Indices of the ``k`` largest entries, ties by ascending index."""
    n = log_probs.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    return np.argsort(-log_probs, kind="stable")[:k].tolist()


def predict_topk(params: ModelParams, prefix, prefix_tags, k: int) -> list[int]:
    """Top-``k`` next songs under the eval-mode model, at most ``m`` history."""
    m = params.config.m
    prefix = list(prefix)[-m:]
    if prefix_tags is None:
        prefix_tags = [()] * len(prefix)
    prefix_tags = [tuple(t) for t in list(prefix_tags)[-m:]]
    log_probs, _ = forward_batch(params, [prefix], [prefix_tags], "eval")
    return rank_topk(log_probs[0], k)
