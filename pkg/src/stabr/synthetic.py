"""Synthetic listening corpora whose next song follows the tag cluster.

``tag_cluster_corpus`` builds users whose sessions walk a cycle of tag
clusters: the song after one from cluster ``c`` is drawn from cluster
``(c + 1) % n_clusters``.  Within each cluster a few songs are *new
releases*: in a user's earlier (training) sessions they are only ever
heard as the last song of a session, while later (test) sessions play
them anywhere.  A model that only sees song identities has never had the
chance to learn what a new release means as history; a model that also
sees tags can read its cluster off the tags it shares with established
songs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Interaction, SongKey, train_count
from .numerics import Rng


@dataclass
class SyntheticCorpus:
    interactions: list[Interaction]
    song_tags: dict[SongKey, list[str]]
    cluster_of: dict[SongKey, int]
    new_releases: set[SongKey]

    def log_lines(self) -> list[str]:
        return [
            f"{it.user_id}\t{int(it.timestamp)}\t{it.artist}\t{it.track}"
            for it in self.interactions
        ]

    def tag_lines(self) -> list[str]:
        return [f"{a}\t{t}\t{','.join(tags)}" for (a, t), tags in self.song_tags.items()]


def tag_cluster_corpus(
    seed: int = 0,
    n_users: int = 20,
    sessions_per_user: int = 10,
    n_songs: int = 20,
    n_clusters: int = 4,
    new_per_cluster: int = 2,
    tags_per_cluster: int = 3,
    tags_per_song: int = 2,
    length_range: tuple[int, int] = (5, 8),
    new_rate_test: float = 0.5,
    play_gap: int = 180,
    t0: int = 1_500_000_000,
) -> SyntheticCorpus:
    if n_songs % n_clusters:
        raise ValueError("n_songs must be a multiple of n_clusters")
    per_cluster = n_songs // n_clusters
    if not 0 < new_per_cluster < per_cluster:
        raise ValueError("each cluster needs both established and new songs")
    rng = Rng(seed)

    songs: list[list[SongKey]] = []
    song_tags: dict[SongKey, list[str]] = {}
    cluster_of: dict[SongKey, int] = {}
    new_releases: set[SongKey] = set()
    for c in range(n_clusters):
        pool = [f"cluster{c}-tag{j}" for j in range(tags_per_cluster)]
        members = []
        for j in range(per_cluster):
            key = (f"artist{c}", f"song{c}-{j}")
            pick = np.sort(rng.permutation(tags_per_cluster)[:tags_per_song])
            song_tags[key] = [pool[i] for i in pick]
            cluster_of[key] = c
            if j >= per_cluster - new_per_cluster:
                new_releases.add(key)
            members.append(key)
        songs.append(members)
    established = [[s for s in grp if s not in new_releases] for grp in songs]

    def draw(options: list[SongKey]) -> SongKey:
        return options[int(rng.random() * len(options))]

    interactions = []
    n_train = train_count(sessions_per_user)
    lo, hi = length_range
    for u in range(n_users):
        user = f"user{u:03d}"
        for s in range(sessions_per_user):
            is_train = s < n_train
            length = lo + int(rng.random() * (hi - lo + 1))
            cluster = int(rng.random() * n_clusters)
            start = t0 + (u * sessions_per_user + s) * 86_400
            for pos in range(length):
                last = pos == length - 1
                if is_train:
                    use_new = last and rng.random() < 0.5
                else:
                    use_new = rng.random() < new_rate_test
                pool = [x for x in songs[cluster] if x in new_releases] if use_new else established[cluster]
                artist, track = draw(pool)
                interactions.append(Interaction(user, float(start + pos * play_gap), artist, track))
                cluster = (cluster + 1) % n_clusters
    return SyntheticCorpus(interactions, song_tags, cluster_of, new_releases)
