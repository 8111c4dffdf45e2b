"""Teacher-forced next-song evaluation and HitRatio@k reporting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

from . import model as model_mod

DEFAULT_KS = (10, 20, 30, 40, 50)


class Recommender(Protocol):
    m: int  # history window the recommender looks at
    n_items: int

    def recommend(self, prefix: Sequence[int], k: int) -> list[int]: ...


class ModelRecommender:
    """Adapter exposing a SABR/STABR model through ``recommend``."""

    def __init__(self, params: model_mod.ModelParams, tag_table: Sequence[Sequence[int]]):
        self.params = params
        self.tag_table = tag_table
        self.m = params.config.m
        self.n_items = params.config.n_songs

    def recommend(self, prefix: Sequence[int], k: int) -> list[int]:
        prefix = list(prefix)[-self.m:]
        tags = [self.tag_table[s] for s in prefix] if self.params.config.uses_tags else None
        return model_mod.predict_topk(self.params, prefix, tags, k)


@dataclass
class EvalReport:
    ks: tuple[int, ...]
    hits: dict[int, int]
    events: int
    cold_start: int = 0
    empty_prefix: int = 0
    name: str = "model"

    def hit_ratio(self, k: int) -> float:
        """Percentage of events whose true next song is in the top ``k``."""
        return 100.0 * self.hits[k] / self.events if self.events else 0.0

    def as_dict(self) -> dict:
        out = {
            "model": self.name,
            "events": self.events,
            "cold_start_targets": self.cold_start,
            "empty_prefix_events": self.empty_prefix,
        }
        for k in self.ks:
            out[f"hits@{k}"] = self.hits[k]
            out[f"hit_ratio@{k}"] = round(self.hit_ratio(k), 6)
        return out

    def to_kv(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.as_dict().items())


def format_table(reports: Sequence[EvalReport]) -> str:
    """Aligned text table, one row per model, one HitRatio column per k."""
    ks = reports[0].ks
    name_w = max(5, *(len(r.name) for r in reports))
    header = f"{'Model':<{name_w}}" + "".join(f"  {'k=' + str(k):>7}" for k in ks)
    lines = [header, "-" * len(header)]
    for r in reports:
        lines.append(f"{r.name:<{name_w}}" + "".join(f"  {r.hit_ratio(k):7.2f}" for k in ks))
    return "\n".join(lines) + "\n"


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def evaluate(recommender: Recommender, test_sessions: Sequence[Sequence[int]],
             ks: Sequence[int] = DEFAULT_KS, name: str = "model") -> EvalReport:
    """HitRatio@k over every position from the second song of each session.

    ``test_sessions`` hold song indices with ``-1`` for songs outside the
    training vocabulary.  At each position the recommender sees the
    in-vocabulary songs played so far (its last ``m`` of them).  Targets
    outside the vocabulary, and positions where no earlier song is in the
    vocabulary, still count as events and are misses.
    """
    if len(test_sessions) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    ks = tuple(sorted(set(int(k) for k in ks)))
    if not ks or ks[0] < 1:
        raise ValueError(f"ks must be positive, got {ks}")
    k_query = min(ks[-1], recommender.n_items)
    hits = {k: 0 for k in ks}
    events = cold = empty = 0
    for session in test_sessions:
        history: list[int] = []
        for pos, target in enumerate(session):
            if pos > 0:
                events += 1
                if target < 0:
                    cold += 1
                elif not history:
                    empty += 1
                else:
                    ranked = recommender.recommend(history[-recommender.m:], k_query)
                    if target in ranked:
                        rank = ranked.index(target)
                        for k in ks:
                            if rank < k:
                                hits[k] += 1
            if target >= 0:
                history.append(target)
    return EvalReport(ks, hits, events, cold, empty, name)

