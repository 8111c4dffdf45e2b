"""Listening-log ingestion, sessionization, splitting and example building.

File formats (UTF-8, tab separated, one record per line):

* listening log: ``user_id<TAB>timestamp<TAB>artist<TAB>track``.  A timestamp
  made only of digits is epoch seconds; anything else is parsed as
  ISO 8601 (a trailing ``Z`` or missing offset means UTC).
* tag file: ``artist<TAB>track<TAB>tag1,tag2,...``; the tag field may be
  empty or absent.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Hashable, Iterable, Sequence

from .errors import DataFormatError
from .model import TrainingExample

log = logging.getLogger(__name__)

SongKey = tuple[str, str]

MIN_SESSION_LENGTH = 5
DEFAULT_GAP_SECONDS = 1800


@dataclass(frozen=True)
class Interaction:
    user_id: str
    timestamp: float
    artist: str
    track: str

    @property
    def song(self) -> SongKey:
        return (self.artist, self.track)


@dataclass
class Session:
    """One user's contiguous run of plays, songs identified by key."""

    user_id: str
    songs: list[SongKey]
    timestamps: list[float]

    @property
    def start(self) -> float:
        return self.timestamps[0]

    def __len__(self) -> int:
        return len(self.songs)


class Vocab:
    """Dense bijection between hashable keys and ``0..size-1``."""

    def __init__(self, keys: Iterable[Hashable] = ()):
        self._keys: list = []
        self._index: dict = {}
        for k in keys:
            self.add(k)

    def add(self, key) -> int:
        if key not in self._index:
            self._index[key] = len(self._keys)
            self._keys.append(key)
        return self._index[key]

    def index(self, key) -> int:
        return self._index[key]

    def get(self, key, default: int = -1) -> int:
        return self._index.get(key, default)

    def key(self, i: int):
        return self._keys[i]

    def keys(self) -> list:
        return list(self._keys)

    def __contains__(self, key) -> bool:
        return key in self._index

    def __len__(self) -> int:
        return len(self._keys)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self._keys == other._keys


# --------------------------------------------------------------------------
# parsing


def parse_timestamp(text: str) -> float:
    """Epoch seconds from an all-digit string or an ISO 8601 timestamp."""
    text = text.strip()
    if text.isdigit():
        return float(int(text))
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def _parse_log_line(line: str) -> Interaction:
    parts = line.split("\t")
    if len(parts) != 4:
        raise ValueError(f"expected 4 fields, got {len(parts)}")
    user, ts, artist, track = (p.strip() for p in parts)
    if not user or not track:
        raise ValueError("empty user id or track")
    timestamp = parse_timestamp(ts)
    if not timestamp > 0:
        raise ValueError(f"non-positive timestamp {ts!r}")
    return Interaction(user, timestamp, artist, track)


def parse_logs(path) -> tuple[list[Interaction], int]:
    """Read a listening log; returns ``(interactions, n_skipped)``.

    Blank lines are ignored.  Malformed lines are skipped and counted; if
    more than half of the non-blank lines are malformed the file is rejected.
    """
    path = Path(path)
    interactions = []
    skipped = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            try:
                interactions.append(_parse_log_line(line))
            except ValueError as exc:
                skipped += 1
                log.debug("%s:%d skipped: %s", path, lineno, exc)
    total = len(interactions) + skipped
    if total and skipped * 2 > total:
        raise DataFormatError(f"{path}: {skipped} of {total} lines are malformed")
    if skipped:
        log.warning("%s: skipped %d malformed lines", path, skipped)
    return interactions, skipped


def parse_tags(path) -> dict[SongKey, list[str]]:
    """Read a tag file into ``{(artist, track): [tag, ...]}``.

    Tags are stripped and lowercased; duplicates (after normalisation) are
    dropped, and repeated song lines merge their tags in file order.
    """
    path = Path(path)
    table: dict[SongKey, list[str]] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise DataFormatError(f"{path}:{lineno}: expected 2 or 3 tab-separated fields")
            key = (parts[0].strip(), parts[1].strip())
            tags = table.setdefault(key, [])
            if len(parts) == 3:
                for tag in parts[2].split(","):
                    tag = tag.strip().lower()
                    if tag and tag not in tags:
                        tags.append(tag)
    return table


# --------------------------------------------------------------------------
# sessions


def sessionize(interactions: Iterable[Interaction], gap_seconds: float = DEFAULT_GAP_SECONDS,
               min_length: int = MIN_SESSION_LENGTH) -> list[Session]:
    """Split each user's history wherever consecutive plays are more than
    ``gap_seconds`` apart, dropping sessions shorter than ``min_length``.

    Output is ordered by user id, then session start.
    """
    by_user: dict[str, list[Interaction]] = defaultdict(list)
    for it in interactions:
        by_user[it.user_id].append(it)
    sessions = []
    for user in sorted(by_user):
        plays = sorted(by_user[user], key=lambda it: it.timestamp)
        current: list[Interaction] = []
        for it in plays:
            if current and it.timestamp - current[-1].timestamp > gap_seconds:
                sessions.append(current)
                current = []
            current.append(it)
        if current:
            sessions.append(current)
    return [
        Session(s[0].user_id, [it.song for it in s], [it.timestamp for it in s])
        for s in sessions
        if len(s) >= min_length
    ]


def sessions_to_interactions(sessions: Iterable[Session]) -> list[Interaction]:
    return [
        Interaction(s.user_id, ts, artist, track)
        for s in sessions
        for (artist, track), ts in zip(s.songs, s.timestamps)
    ]


def train_count(n: int) -> int:
    """ceil(0.7 * n) in exact integer arithmetic."""
    return (7 * n + 9) // 10


def split_sessions(sessions: Sequence[Session]) -> tuple[list[Session], list[Session]]:
    """Per user, the earliest ceil(70%) of sessions train, the rest test."""
    by_user: dict[str, list[Session]] = defaultdict(list)
    for s in sessions:
        by_user[s.user_id].append(s)
    train, test = [], []
    for user in sorted(by_user):
        ordered = sorted(by_user[user], key=lambda s: s.start)
        cut = train_count(len(ordered))
        train.extend(ordered[:cut])
        test.extend(ordered[cut:])
    return train, test


# --------------------------------------------------------------------------
# vocabularies and examples


def build_vocabs_from_table(train_sessions: Sequence[Session],
                            song_tags: dict[SongKey, list[str]]):
    """Song vocab in first-appearance order over train sessions; tag vocab in
    first-appearance order over those songs' tags."""
    songs = Vocab()
    for s in train_sessions:
        for key in s.songs:
            songs.add(key)
    tags = Vocab()
    tag_table: list[list[int]] = []
    for key in songs.keys():
        tag_table.append([tags.add(t) for t in song_tags.get(key, [])])
    return songs, tags, tag_table


def build_vocabs(train_sessions: Sequence[Session], tag_file):
    """Returns ``(song_vocab, tag_vocab, tag_table)``; ``tag_table[i]`` lists
    the tag indices of song ``i`` (empty when the song has no tag line)."""
    return build_vocabs_from_table(train_sessions, parse_tags(tag_file))


def index_session(session: Session, songs: Vocab) -> list[int]:
    """Song indices of a session, ``-1`` for songs outside the vocabulary."""
    return [songs.get(k) for k in session.songs]


def examples_from_indices(indices: Sequence[int], m: int,
                          tag_table: Sequence[Sequence[int]]) -> list[TrainingExample]:
    out = []
    history: list[int] = []
    for pos, song in enumerate(indices):
        if pos > 0 and song >= 0 and history:
            prefix = tuple(history[-m:])
            out.append(TrainingExample(prefix, tuple(tuple(tag_table[s]) for s in prefix), song))
        if song >= 0:
            history.append(song)
    return out


def make_examples(session: Session, m: int, songs: Vocab,
                  tag_table: Sequence[Sequence[int]]) -> list[TrainingExample]:
    """One example per position from the second song on.

    The prefix is the last ``m`` in-vocabulary songs before the position;
    positions with an out-of-vocabulary target or no usable prefix are
    skipped.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    return examples_from_indices(index_session(session, songs), m, tag_table)


# --------------------------------------------------------------------------
# statistics


@dataclass
class DatasetStats:
    total_logs: int
    total_users: int
    total_sessions: int
    unique_songs: int
    unique_tags: int
    avg_songs_per_session: float
    avg_logs_per_user: float
    skipped_lines: int = 0

    ROWS = (
        ("Total Logs", "total_logs"),
        ("Total Users", "total_users"),
        ("Total Sessions", "total_sessions"),
        ("Total Unique Songs", "unique_songs"),
        ("Total Unique Tags", "unique_tags"),
        ("Average Songs Per Session", "avg_songs_per_session"),
        ("Average logs per user", "avg_logs_per_user"),
    )

    def as_dict(self) -> dict:
        return {attr: getattr(self, attr) for _, attr in self.ROWS}

    def to_table(self) -> str:
        width = max(len(label) for label, _ in self.ROWS)
        lines = [f"{'Description':<{width}}  Value"]
        for label, attr in self.ROWS:
            value = getattr(self, attr)
            text = f"{value:.2f}" if isinstance(value, float) else str(value)
            lines.append(f"{label:<{width}}  {text}")
        return "\n".join(lines)


def dataset_stats(interactions: Sequence[Interaction], sessions: Sequence[Session],
                  song_tags: dict[SongKey, list[str]], skipped: int = 0) -> DatasetStats:
    """Corpus summary: logs, users and songs count every parsed play; sessions
    and songs-per-session count only sessions kept after filtering."""
    users = {it.user_id for it in interactions}
    songs = {it.song for it in interactions}
    tags = {t for key in songs for t in song_tags.get(key, [])}
    plays = sum(len(s) for s in sessions)
    return DatasetStats(
        total_logs=len(interactions),
        total_users=len(users),
        total_sessions=len(sessions),
        unique_songs=len(songs),
        unique_tags=len(tags),
        avg_songs_per_session=plays / len(sessions) if sessions else 0.0,
        avg_logs_per_user=len(interactions) / len(users) if users else 0.0,
        skipped_lines=skipped,
    )


__all__ = [
    "Interaction", "Session", "Vocab", "parse_timestamp", "parse_logs", "parse_tags",
    "sessionize", "split_sessions", "build_vocabs", "build_vocabs_from_table",
    "index_session", "make_examples", "examples_from_indices", "dataset_stats",
    "DatasetStats", "train_count", "sessions_to_interactions",
]
