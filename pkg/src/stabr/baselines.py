"""Comparison recommenders: popularity, session kNN, and a plain GRU.

All three expose ``recommend(prefix, k)`` so the evaluation loop can treat
them exactly like the attentive models.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import layers
from .errors import DimensionError, VocabularyError
from .layers import GruParams
from .model import TrainingExample, rank_topk
from .numerics import DTYPE, Rng, glorot_uniform, log_softmax


# --------------------------------------------------------------------------
# POP


@dataclass
class PopModel:
    counts: np.ndarray
    order: np.ndarray

    @classmethod
    def fit(cls, sessions: Iterable[Sequence[int]], n_songs: int) -> "PopModel":
        counts = np.zeros(n_songs, dtype=DTYPE)
        for s in sessions:
            for song in s:
                if song >= 0:
                    counts[song] += 1
        return cls.from_counts(counts)

    @classmethod
    def from_counts(cls, counts) -> "PopModel":
        counts = np.asarray(counts, dtype=DTYPE)
        return cls(counts, np.argsort(-counts, kind="stable"))

    def __len__(self) -> int:
        return len(self.order)


def pop_recommend(model: PopModel, k: int) -> list[int]:
    if not 1 <= k <= len(model):
        raise ValueError(f"k must lie in [1, {len(model)}], got {k}")
    return model.order[:k].tolist()


class PopRecommender:
    m = 1

    def __init__(self, model: PopModel):
        self.model = model
        self.n_items = len(model)

    def recommend(self, prefix: Sequence[int], k: int) -> list[int]:
        return pop_recommend(self.model, k)


# --------------------------------------------------------------------------
# session-based collaborative filtering


@dataclass
class SscfIndex:
    sessions: list[frozenset]
    inverted: dict[int, list[int]] = field(default_factory=dict)

    @classmethod
    def build(cls, sessions: Iterable[Sequence[int]]) -> "SscfIndex":
        sets = [frozenset(s for s in sess if s >= 0) for sess in sessions]
        inverted: dict[int, list[int]] = defaultdict(list)
        for sid, items in enumerate(sets):
            for song in sorted(items):
                inverted[song].append(sid)
        return cls(sets, dict(inverted))


def sscf_neighbors(index: SscfIndex, recent: Sequence[int], n_neighbors: int = 100):
    """``[(session_id, cosine), ...]`` for the most similar train sessions.

    Similarity is the cosine between binary song-incidence vectors of the
    recent window and each session; sessions sharing no song are never
    neighbours.  Ties go to the lower session id.
    """
    active = set(recent)
    overlap: dict[int, int] = defaultdict(int)
    for song in active:
        for sid in index.inverted.get(song, ()):
            overlap[sid] += 1
    sims = [
        (sid, n / math.sqrt(len(active) * len(index.sessions[sid])))
        for sid, n in overlap.items()
    ]
    sims.sort(key=lambda p: (-p[1], p[0]))
    return sims[:n_neighbors]


def sscf_recommend(index: SscfIndex, recent: Sequence[int], k: int, n_neighbors: int = 100,
                   pop: PopModel | None = None) -> list[int]:
    """Top-``k`` songs scored by summed similarity of neighbour sessions.

    Songs in ``recent`` are excluded.  When fewer than ``k`` songs score
    above zero the list is completed in popularity order (if ``pop`` is
    given).
    """
    recent = [s for s in recent if s >= 0]
    if not recent:
        raise ValueError("sscf_recommend needs at least one recent song")
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    active = set(recent)
    scores: dict[int, float] = defaultdict(float)
    for sid, sim in sscf_neighbors(index, recent, n_neighbors):
        for song in sorted(index.sessions[sid]):
            if song not in active:
                scores[song] += sim
    ranked = sorted(scores, key=lambda s: (-scores[s], s))[:k]
    if len(ranked) < k and pop is not None:
        if k > len(pop):
            raise ValueError(f"k must lie in [1, {len(pop)}], got {k}")
        chosen = set(ranked)
        fill = [s for s in pop.order.tolist() if s not in chosen and s not in active]
        fill += [s for s in pop.order.tolist() if s in active]
        ranked += fill[: k - len(ranked)]
    return ranked


class SscfRecommender:
    def __init__(self, index: SscfIndex, pop: PopModel, window: int = 5, n_neighbors: int = 100):
        self.index = index
        self.pop = pop
        self.m = window
        self.n_neighbors = n_neighbors
        self.n_items = len(pop)

    def recommend(self, prefix: Sequence[int], k: int) -> list[int]:
        return sscf_recommend(self.index, list(prefix)[-self.m:], k, self.n_neighbors, self.pop)


# --------------------------------------------------------------------------
# GRU baseline

_GRU_KEYS = ("Wz", "Wr", "Wh", "Uz", "Ur", "Uh", "bz", "br", "bh")


@dataclass(frozen=True)
class RnnConfig:
    n_songs: int
    emb_dim: int = 50
    hidden: int = 100
    m: int = 10

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RnnParams:
    config: RnnConfig
    tensors: dict[str, np.ndarray]

    def gru(self) -> GruParams:
        return GruParams(**{k: self.tensors[f"gru.{k}"] for k in _GRU_KEYS})

    def copy(self) -> "RnnParams":
        return RnnParams(self.config, {k: v.copy() for k, v in self.tensors.items()})


def rnn_expected_shapes(cfg: RnnConfig) -> dict[str, tuple]:
    shapes = {"E": (cfg.emb_dim, cfg.n_songs)}
    for k in ("Wz", "Wr", "Wh"):
        shapes[f"gru.{k}"] = (cfg.hidden, cfg.emb_dim)
    for k in ("Uz", "Ur", "Uh"):
        shapes[f"gru.{k}"] = (cfg.hidden, cfg.hidden)
    for k in ("bz", "br", "bh"):
        shapes[f"gru.{k}"] = (cfg.hidden,)
    shapes["W"] = (cfg.n_songs, cfg.hidden)
    shapes["b"] = (cfg.n_songs,)
    return shapes


def rnn_init(cfg: RnnConfig, seed: int) -> RnnParams:
    rng = Rng(seed)
    tensors = {}
    for name, shape in rnn_expected_shapes(cfg).items():
        tensors[name] = np.zeros(shape, dtype=DTYPE) if len(shape) == 1 else glorot_uniform(rng, *shape)
    return RnnParams(cfg, tensors)


def validate_rnn_params(params: RnnParams) -> None:
    for name, shape in rnn_expected_shapes(params.config).items():
        if name not in params.tensors or params.tensors[name].shape != shape:
            raise DimensionError(f"rnn tensor {name} missing or not shaped {shape}")


def rnn_forward_batch(params: RnnParams, prefixes: Sequence[Sequence[int]]):
    """Log-probabilities from the final GRU state of each prefix."""
    t = params.tensors
    V = params.config.n_songs
    B = len(prefixes)
    T = max(len(p) for p in prefixes)
    if min(len(p) for p in prefixes) == 0:
        raise ValueError("empty prefix")
    mask = np.zeros((T, B), dtype=DTYPE)
    idx = np.zeros((T, B), dtype=np.int64)
    for b, p in enumerate(prefixes):
        for s in p:
            if not 0 <= s < V:
                raise VocabularyError(f"song index {s} outside vocabulary of {V}")
        mask[T - len(p):, b] = 1.0
        idx[T - len(p):, b] = p
    xs = t["E"][:, idx].transpose(1, 2, 0)
    hs, c_gru = layers.gru_forward(xs, params.gru(), mask)
    logits, c_out = layers.dense_forward(hs[-1], t["W"], t["b"])
    log_probs = log_softmax(logits, axis=1)
    return log_probs, (mask, idx, c_gru, c_out, log_probs, hs.shape)


def rnn_backward_batch(params: RnnParams, cache, targets: Sequence[int]) -> dict[str, np.ndarray]:
    mask, idx, c_gru, c_out, log_probs, hs_shape = cache
    t = params.tensors
    B = log_probs.shape[0]
    grads = {k: np.zeros_like(v) for k, v in t.items()}
    d_logits = np.exp(log_probs)
    d_logits[np.arange(B), list(targets)] -= 1.0
    d_h, g = layers.dense_backward(c_out, d_logits, t["W"])
    grads["W"] += g["W"]
    grads["b"] += g["b"]
    d_hs = np.zeros(hs_shape, dtype=DTYPE)
    d_hs[-1] = d_h
    dxs, g = layers.gru_backward(c_gru, d_hs, params.gru())
    for k, v in g.items():
        grads[f"gru.{k}"] += v
    valid = mask > 0
    np.add.at(grads["E"].T, idx[valid], dxs[valid])
    return grads


def rnn_loss_and_grad(params: RnnParams, examples: Sequence[TrainingExample], rng=None):
    """Summed NLL and gradients; matches ``optim.train``'s ``grad_fn`` slot."""
    log_probs, cache = rnn_forward_batch(params, [e.prefix for e in examples])
    targets = [e.target for e in examples]
    total = float(-np.sum(log_probs[np.arange(len(targets)), targets]))
    return total, rnn_backward_batch(params, cache, targets)


def rnn_predict_topk(params: RnnParams, prefix: Sequence[int], k: int) -> list[int]:
    prefix = list(prefix)[-params.config.m:]
    log_probs, _ = rnn_forward_batch(params, [prefix])
    return rank_topk(log_probs[0], k)


class RnnRecommender:
    def __init__(self, params: RnnParams):
        self.params = params
        self.m = params.config.m
        self.n_items = params.config.n_songs

    def recommend(self, prefix: Sequence[int], k: int) -> list[int]:
        return rnn_predict_topk(self.params, prefix, k)
