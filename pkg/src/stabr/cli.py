"""Command-line entry point: ``stabr {ingest,train,evaluate,predict,stats}``.

Settings come from built-in defaults, then an optional ``--config`` file of
``key = value`` lines (``#`` starts a comment), then command-line flags.
Exit codes: 0 success, 1 usage, 2 data or format error, 3 checkpoint error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import baselines, checkpoint, data
from . import model as model_mod
from .dataset import Dataset, atomic_write, prepare_files
from .errors import CheckpointError, DataFormatError, DimensionError, StabrError, VocabularyError
from .evaluate import ModelRecommender, evaluate, format_table
from .optim import TrainConfig, train

log = logging.getLogger("stabr")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECKPOINT = 0, 1, 2, 3
MODELS = ("stabr", "sabr", "rnn", "pop", "sscf")


class UsageError(StabrError):
    pass


@dataclass
class RunConfig:
    logs: str = ""
    tags: str = ""
    dataset_dir: str = "dataset"
    checkpoint: str = "model.ckpt"
    report: str = "report"
    loss_trace: str = ""
    model: str = "stabr"
    seed: int = 0
    gap_seconds: float = data.DEFAULT_GAP_SECONDS
    min_session_length: int = data.MIN_SESSION_LENGTH
    m: int = 10
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.05
    epsilon: float = 1e-8
    clip_norm: float = 0.0
    song_dim: int = 50
    tag_dim: int = 25
    song_hidden: int = 50
    tag_hidden: int = 25
    attention_dim: int = 0
    bottleneck: int = 50
    dropout: float = 0.1
    rnn_hidden: int = 100
    rnn_learning_rate: float = 0.1
    rnn_batch_size: int = 20
    sscf_neighbors: int = 100
    sscf_window: int = 5
    ks: str = "10,20,30,40,50"
    k: int = 10

    PATH_KEYS = ("logs", "tags", "dataset_dir", "checkpoint", "report", "loss_trace")

    def validate(self) -> None:
        if self.model not in MODELS:
            raise UsageError(f"model must be one of {', '.join(MODELS)}; got {self.model!r}")
        for name in ("m", "batch_size", "rnn_batch_size", "song_dim", "tag_dim", "song_hidden",
                     "tag_hidden", "bottleneck", "rnn_hidden", "sscf_neighbors", "sscf_window",
                     "k", "min_session_length"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be at least 1")
        if self.epochs < 0 or self.learning_rate < 0 or self.rnn_learning_rate < 0:
            raise UsageError("epochs and learning rates must be nonnegative")
        if not 0 <= self.dropout < 1:
            raise UsageError("dropout must lie in [0, 1)")
        if self.gap_seconds <= 0 or self.epsilon <= 0 or self.clip_norm < 0:
            raise UsageError("gap_seconds and epsilon must be positive, clip_norm nonnegative")
        self.ks_tuple()

    def ks_tuple(self) -> tuple[int, ...]:
        try:
            ks = tuple(int(x) for x in self.ks.split(",") if x.strip())
        except ValueError:
            raise UsageError(f"ks must be a comma-separated list of integers, got {self.ks!r}")
        if not ks or min(ks) < 1:
            raise UsageError("ks must contain positive integers")
        return ks

    def hyperparams(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k not in self.PATH_KEYS}


_FIELD_TYPES = {f.name: {"int": int, "float": float, "str": str}[f.type] for f in fields(RunConfig)}


def _coerce(key: str, value: str):
    try:
        return _FIELD_TYPES[key](value)
    except ValueError:
        raise UsageError(f"{key}: cannot parse {value!r} as {_FIELD_TYPES[key].__name__}")


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines, rejecting unknown keys."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        if key not in _FIELD_TYPES:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = _coerce(key, value.strip())
    return out


def write_config_file(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in asdict(cfg).items())


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stabr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "ingest": "sessionize logs, split 70/30 per user, write the dataset directory",
        "train": "train the selected model and write a checkpoint and loss trace",
        "evaluate": "HitRatio@k on the test sessions; writes <report>.txt and <report>.kv",
        "predict": "rank next songs for a given history",
        "stats": "print corpus statistics for a log and tag file",
    }
    defaults = RunConfig()
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", help="key = value config file")
        for f in fields(RunConfig):
            p.add_argument(
                "--" + f.name.replace("_", "-"),
                dest=f.name,
                type=_FIELD_TYPES[f.name],
                default=None,
                help=f"(default: {getattr(defaults, f.name)!r})",
            )
        if name == "predict":
            p.add_argument("--song", nargs=2, action="append", default=[],
                           metavar=("ARTIST", "TRACK"), help="history song, oldest first; repeatable")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = read_config_file(args.config) if args.config else {}
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# --------------------------------------------------------------------------
# model construction and checkpoint conversion


def model_config(cfg: RunConfig, ds_songs: int, ds_tags: int) -> model_mod.ModelConfig:
    return model_mod.ModelConfig(
        arch=cfg.model,
        n_songs=ds_songs,
        n_tags=ds_tags,
        song_dim=cfg.song_dim,
        tag_dim=cfg.tag_dim,
        song_hidden=cfg.song_hidden,
        tag_hidden=cfg.tag_hidden,
        song_att_dim=cfg.attention_dim,
        tag_att_dim=cfg.attention_dim,
        bottleneck=cfg.bottleneck,
        dropout=cfg.dropout,
        m=cfg.m,
    )


def _vocab_header(ds: Dataset) -> dict:
    return {
        "songs": [list(k) for k in ds.songs.keys()],
        "tags": ds.tags.keys(),
        "tag_table": ds.tag_table,
    }


def fit(cfg: RunConfig, ds: Dataset) -> tuple[checkpoint.Checkpoint, list[float]]:
    """Train ``cfg.model`` on ``ds`` and package the result as a checkpoint."""
    n_songs = len(ds.songs)
    if n_songs == 0:
        raise DataFormatError("dataset has an empty song vocabulary")
    header = _vocab_header(ds)
    hp = cfg.hyperparams()
    train_lists = ds.session_lists("train")
    if cfg.model == "pop":
        pop = baselines.PopModel.fit(train_lists, n_songs)
        return checkpoint.Checkpoint("pop", {"n_songs": n_songs}, {"counts": pop.counts}, hp, **header), []
    if cfg.model == "sscf":
        conf = {"n_songs": n_songs, "window": cfg.sscf_window, "n_neighbors": cfg.sscf_neighbors}
        return checkpoint.Checkpoint("sscf", conf, {}, hp, **header), []

    examples = ds.examples(cfg.m, "train")
    if not examples:
        raise DataFormatError("dataset yields no training examples")
    clip = cfg.clip_norm or None
    if cfg.model == "rnn":
        rc = baselines.RnnConfig(n_songs, cfg.song_dim, cfg.rnn_hidden, cfg.m)
        params = baselines.rnn_init(rc, cfg.seed)
        tc = TrainConfig(cfg.rnn_batch_size, cfg.rnn_learning_rate, cfg.epochs, cfg.seed, cfg.m,
                         clip, cfg.epsilon)
        _, trace = train(params, examples, tc, grad_fn=baselines.rnn_loss_and_grad)
        return checkpoint.Checkpoint("rnn", rc.to_dict(), params.tensors, hp, **header), trace
    if cfg.model == "stabr" and len(ds.tags) == 0:
        raise DataFormatError("stabr needs tags, but no training song has any")
    mc = model_config(cfg, n_songs, len(ds.tags))
    params = model_mod.init_params(mc, cfg.seed)
    tc = TrainConfig(cfg.batch_size, cfg.learning_rate, cfg.epochs, cfg.seed, cfg.m, clip, cfg.epsilon)
    _, trace = train(params, examples, tc)
    return checkpoint.Checkpoint(cfg.model, mc.to_dict(), params.tensors, hp, **header), trace


def recommender_from_checkpoint(ck: checkpoint.Checkpoint, ds: Dataset | None = None):
    """Rebuild a ``recommend(prefix, k)`` object; SSCF and POP need the train
    sessions of ``ds`` when the checkpoint does not carry counts."""
    try:
        if ck.kind in ("sabr", "stabr"):
            params = model_mod.ModelParams(model_mod.ModelConfig(**ck.config), dict(ck.tensors))
            model_mod.validate_params(params)
            return ModelRecommender(params, ck.tag_table)
        if ck.kind == "rnn":
            params = baselines.RnnParams(baselines.RnnConfig(**ck.config), dict(ck.tensors))
            baselines.validate_rnn_params(params)
            return baselines.RnnRecommender(params)
        if ck.kind == "pop":
            counts = ck.tensors["counts"]
            if counts.shape != (len(ck.songs),):
                raise DimensionError(f"pop counts shaped {counts.shape} for {len(ck.songs)} songs")
            return baselines.PopRecommender(baselines.PopModel.from_counts(counts))
        if ck.kind == "sscf":
            if ds is None:
                raise CheckpointError("sscf needs the dataset's train sessions")
            train_lists = ds.session_lists("train")
            pop = baselines.PopModel.fit(train_lists, len(ck.songs))
            return baselines.SscfRecommender(
                baselines.SscfIndex.build(train_lists), pop, ck.config["window"], ck.config["n_neighbors"]
            )
    except (TypeError, KeyError, ValueError) as exc:
        raise CheckpointError(f"checkpoint does not describe a valid {ck.kind} model: {exc}") from exc
    raise CheckpointError(f"unknown checkpoint kind {ck.kind!r}")


def _scores(rec, prefix: list[int]) -> np.ndarray:
    """Full score vector used by ``predict``: probabilities for neural models,
    normalised counts / similarity mass for POP and SSCF."""
    if isinstance(rec, ModelRecommender):
        p = rec.params
        tags = [rec.tag_table[s] for s in prefix[-rec.m:]] if p.config.uses_tags else None
        lp, _ = model_mod.forward_batch(p, [prefix[-rec.m:]], [tags] if tags else None)
        return np.exp(lp[0])
    if isinstance(rec, baselines.RnnRecommender):
        lp, _ = baselines.rnn_forward_batch(rec.params, [prefix[-rec.m:]])
        return np.exp(lp[0])
    if isinstance(rec, baselines.PopRecommender):
        c = rec.model.counts
        return c / c.sum() if c.sum() > 0 else np.full(len(c), 1.0 / len(c))
    scores = np.zeros(rec.n_items)
    active = set(prefix[-rec.m:])
    for sid, sim in baselines.sscf_neighbors(rec.index, prefix[-rec.m:], rec.n_neighbors):
        for song in rec.index.sessions[sid]:
            if song not in active:
                scores[song] += sim
    return scores / scores.sum() if scores.sum() > 0 else scores


# --------------------------------------------------------------------------
# commands


def _require(path: str, what: str) -> Path:
    if not path:
        raise UsageError(f"--{what.replace('_', '-')} is required")
    return Path(path)


def cmd_ingest(cfg: RunConfig, out=None) -> Dataset:
    out = out or sys.stdout
    logs = _require(cfg.logs, "logs")
    tags = _require(cfg.tags, "tags")
    ds = prepare_files(logs, tags, cfg.gap_seconds, cfg.min_session_length)
    directory = Path(cfg.dataset_dir)
    ds.save(directory)
    table = ds.stats.to_table() + "\n"
    atomic_write(directory / "stats.txt", table.encode("utf-8"))
    out.write(table)
    out.write(f"train sessions: {len(ds.train)}, test sessions: {len(ds.test)}, "
              f"skipped lines: {ds.stats.skipped_lines}\n")
    return ds


def _load_dataset(cfg: RunConfig) -> Dataset:
    directory = Path(cfg.dataset_dir)
    if not (directory / "dataset.json").exists():
        raise DataFormatError(f"no ingested dataset at {directory}; run `stabr ingest` first")
    return Dataset.load(directory)


def cmd_train(cfg: RunConfig, out=None) -> checkpoint.Checkpoint:
    out = out or sys.stdout
    ds = _load_dataset(cfg)
    ck, trace = fit(cfg, ds)
    ck_path = Path(cfg.checkpoint)
    ck_path.parent.mkdir(parents=True, exist_ok=True)
    checkpoint.save(ck, ck_path)
    trace_path = Path(cfg.loss_trace or str(ck_path) + ".loss.tsv")
    lines = "epoch\tmean_loss\n" + "".join(f"{i + 1}\t{v!r}\n" for i, v in enumerate(trace))
    atomic_write(trace_path, lines.encode("utf-8"))
    if trace:
        out.write(f"{cfg.model}: {len(trace)} epochs, loss {trace[0]:.4f} -> {trace[-1]:.4f}\n")
    out.write(f"wrote {ck_path}\n")
    return ck


def _check_vocab(ck: checkpoint.Checkpoint, ds: Dataset) -> None:
    if [list(k) for k in ds.songs.keys()] != [list(s) for s in ck.songs]:
        raise CheckpointError("checkpoint song vocabulary does not match the dataset")


def cmd_evaluate(cfg: RunConfig, out=None):
    out = out or sys.stdout
    ck = checkpoint.load(cfg.checkpoint)
    ds = _load_dataset(cfg)
    _check_vocab(ck, ds)
    rec = recommender_from_checkpoint(ck, ds)
    report = evaluate(rec, ds.session_lists("test"), cfg.ks_tuple(), name=ck.kind)
    text = format_table([report])
    base = Path(cfg.report)
    base.parent.mkdir(parents=True, exist_ok=True)
    atomic_write(base.with_name(base.name + ".txt"), text.encode("utf-8"))
    atomic_write(base.with_name(base.name + ".kv"), report.to_kv().encode("utf-8"))
    out.write(text)
    out.write(f"events: {report.events}, cold-start targets: {report.cold_start}\n")
    return report


def cmd_predict(cfg: RunConfig, songs: list[tuple[str, str]], out=None):
    out = out or sys.stdout
    ck = checkpoint.load(cfg.checkpoint)
    ds = None
    if ck.kind == "sscf":
        ds = _load_dataset(cfg)
        _check_vocab(ck, ds)
    rec = recommender_from_checkpoint(ck, ds)
    index = {tuple(k): i for i, k in enumerate(ck.songs)}
    keys = [(a.strip(), t.strip()) for a, t in songs]
    unknown = [k for k in keys if k not in index]
    prefix = [index[k] for k in keys if k in index]
    listed = "; ".join(f"{a} - {t}" for a, t in unknown)
    if not prefix:
        raise UsageError("no history song is in the model vocabulary"
                         + (f" (unknown: {listed})" if unknown else ""))
    if unknown:
        out.write(f"unknown songs skipped: {listed}\n")
    k = min(cfg.k, rec.n_items)
    ranked = rec.recommend(prefix[-rec.m:], k)
    scores = _scores(rec, prefix)
    rows = [(i, ck.songs[i][0], ck.songs[i][1], float(scores[i])) for i in ranked]
    for rank, (_, artist, track, p) in enumerate(rows, 1):
        out.write(f"{rank}\t{artist}\t{track}\t{p:.6f}\n")
    return rows


def cmd_stats(cfg: RunConfig, out=None) -> data.DatasetStats:
    out = out or sys.stdout
    logs = _require(cfg.logs, "logs")
    tags = _require(cfg.tags, "tags")
    interactions, skipped = data.parse_logs(logs)
    sessions = data.sessionize(interactions, cfg.gap_seconds, cfg.min_session_length)
    stats = data.dataset_stats(interactions, sessions, data.parse_tags(tags), skipped)
    out.write(stats.to_table() + "\n")
    return stats


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "ingest":
            cmd_ingest(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "evaluate":
            cmd_evaluate(cfg)
        elif args.command == "predict":
            cmd_predict(cfg, [tuple(s) for s in args.song])
        elif args.command == "stats":
            cmd_stats(cfg)
    except UsageError as exc:
        print(f"stabr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CheckpointError as exc:
        print(f"stabr: checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (DataFormatError, VocabularyError, DimensionError, OSError, ValueError) as exc:
        print(f"stabr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
