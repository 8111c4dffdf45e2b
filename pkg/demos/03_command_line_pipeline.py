"""
The command-line pipeline end to end
====================================

Writes a synthetic listening log and tag file, then drives ``stabr ingest``,
``train``, ``evaluate`` and ``predict`` through ``stabr.cli.main`` exactly as
the shell would.  Everything lands in a temporary directory.
"""

import tempfile
from pathlib import Path

from stabr.cli import main
from stabr.synthetic import tag_cluster_corpus

work = Path(tempfile.mkdtemp(prefix="stabr-demo-"))
corpus = tag_cluster_corpus(seed=1)
(work / "logs.tsv").write_text("\n".join(corpus.log_lines()) + "\n")
(work / "tags.tsv").write_text("\n".join(corpus.tag_lines()) + "\n")

# Settings can live in a key = value file; flags on the command line win.
(work / "run.cfg").write_text(
    "model = stabr\n"
    "epochs = 20\n"
    "song_dim = 8\ntag_dim = 8\nsong_hidden = 8\ntag_hidden = 8\nbottleneck = 16\n"
    "ks = 1,3,5,10\n"
)
paths = ["--config", str(work / "run.cfg"), "--dataset-dir", str(work / "ds"),
         "--checkpoint", str(work / "stabr.ckpt"), "--report", str(work / "stabr")]

print("$ stabr ingest")
main(["ingest", "--logs", str(work / "logs.tsv"), "--tags", str(work / "tags.tsv"), *paths])
print("\n$ stabr train")
main(["train", *paths])
print("\n$ stabr evaluate")
main(["evaluate", *paths])

first = corpus.interactions[0]
print(f"\n$ stabr predict --song {first.artist} {first.track} --k 5")
main(["predict", *paths, "--song", first.artist, first.track, "--k", "5"])

print("\n$ stabr train --model pop && stabr evaluate --model pop")
pop = [*paths[:4], "--checkpoint", str(work / "pop.ckpt"), "--report", str(work / "pop")]
main(["train", *pop, "--model", "pop"])
main(["evaluate", *pop])
print(f"\nartifacts in {work}: {sorted(p.name for p in work.iterdir())}")
