"""Prepared corpus: vocabularies, tag table, and indexed train/test sessions.

Persisted as a single ``dataset.json`` (sorted keys, fixed separators) so
repeated ingestion of the same inputs yields byte-identical files.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import data
from .data import DatasetStats, Interaction, Session, SongKey, Vocab
from .errors import DataFormatError
from .model import TrainingExample

FORMAT_VERSION = 1
FILENAME = "dataset.json"


@dataclass
class IndexedSession:
    user_id: str
    start: float
    songs: list[int]  # -1 marks a song outside the training vocabulary


@dataclass
class Dataset:
    songs: Vocab
    tags: Vocab
    tag_table: list[list[int]]
    train: list[IndexedSession]
    test: list[IndexedSession]
    stats: DatasetStats

    def examples(self, m: int, split: str = "train") -> list[TrainingExample]:
        sessions = self.train if split == "train" else self.test
        out = []
        for s in sessions:
            out.extend(data.examples_from_indices(s.songs, m, self.tag_table))
        return out

    def session_lists(self, split: str = "test") -> list[list[int]]:
        sessions = self.train if split == "train" else self.test
        return [s.songs for s in sessions]

    def to_json(self) -> str:
        payload = {
            "format_version": FORMAT_VERSION,
            "songs": [list(k) for k in self.songs.keys()],
            "tags": self.tags.keys(),
            "tag_table": self.tag_table,
            "train": [[s.user_id, s.start, s.songs] for s in self.train],
            "test": [[s.user_id, s.start, s.songs] for s in self.test],
            "stats": self.stats.as_dict() | {"skipped_lines": self.stats.skipped_lines},
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Dataset":
        try:
            payload = json.loads(text)
            version = payload["format_version"]
            if version != FORMAT_VERSION:
                raise DataFormatError(f"unsupported dataset format version {version}")
            return cls(
                songs=Vocab(tuple(k) for k in payload["songs"]),
                tags=Vocab(payload["tags"]),
                tag_table=[list(t) for t in payload["tag_table"]],
                train=[IndexedSession(u, st, list(s)) for u, st, s in payload["train"]],
                test=[IndexedSession(u, st, list(s)) for u, st, s in payload["test"]],
                stats=DatasetStats(**payload["stats"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataFormatError):
                raise
            raise DataFormatError(f"malformed dataset file: {exc}") from exc

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / FILENAME
        atomic_write(path, self.to_json().encode("utf-8"))
        return path

    @classmethod
    def load(cls, directory) -> "Dataset":
        path = Path(directory) / FILENAME
        return cls.from_json(path.read_text(encoding="utf-8"))


def atomic_write(path, payload: bytes) -> None:
    """Write to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def prepare(interactions: Sequence[Interaction], song_tags: dict[SongKey, list[str]],
            gap_seconds: float = data.DEFAULT_GAP_SECONDS,
            min_length: int = data.MIN_SESSION_LENGTH, skipped: int = 0) -> Dataset:
    """Sessionize, split 70/30 per user, and index against the train vocabulary."""
    sessions = data.sessionize(interactions, gap_seconds, min_length)
    train, test = data.split_sessions(sessions)
    songs, tags, tag_table = data.build_vocabs_from_table(train, song_tags)

    def index(ss: list[Session]) -> list[IndexedSession]:
        return [IndexedSession(s.user_id, s.start, data.index_session(s, songs)) for s in ss]

    stats = data.dataset_stats(interactions, sessions, song_tags, skipped)
    return Dataset(songs, tags, tag_table, index(train), index(test), stats)


def prepare_files(log_path, tag_path, gap_seconds: float = data.DEFAULT_GAP_SECONDS,
                  min_length: int = data.MIN_SESSION_LENGTH) -> Dataset:
    interactions, skipped = data.parse_logs(log_path)
    song_tags = data.parse_tags(tag_path)
    return prepare(interactions, song_tags, gap_seconds, min_length, skipped)
