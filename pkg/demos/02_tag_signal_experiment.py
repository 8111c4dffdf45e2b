"""
When do tags help?
==================

A synthetic corpus where the next song's tag cluster follows the current
one.  A few songs per cluster are new releases: in training sessions they
only ever end a session, so a songs-only model never learns what comes
after them.  Their tags are shared with established songs, which lets the
tag branch fill the gap.  All five recommenders are scored on the held-out
sessions.

Takes roughly a minute.
"""

from stabr import model
from stabr.baselines import (
    PopModel, PopRecommender, RnnConfig, RnnRecommender, SscfIndex, SscfRecommender,
    rnn_init, rnn_loss_and_grad,
)
from stabr.dataset import prepare
from stabr.evaluate import ModelRecommender, evaluate, format_table
from stabr.model import ModelConfig
from stabr.optim import TrainConfig, train
from stabr.synthetic import tag_cluster_corpus

SEED = 0
KS = (1, 3, 5, 10)

corpus = tag_cluster_corpus(seed=SEED)
ds = prepare(corpus.interactions, corpus.song_tags)
print(ds.stats.to_table())
print(f"train sessions {len(ds.train)}, test sessions {len(ds.test)}")

examples = ds.examples(m=10)
train_lists, test = ds.session_lists("train"), ds.session_lists("test")
reports = []

pop = PopModel.fit(train_lists, len(ds.songs))
reports.append(evaluate(PopRecommender(pop), test, KS, "POP"))
reports.append(evaluate(SscfRecommender(SscfIndex.build(train_lists), pop), test, KS, "SSCF"))

rnn = rnn_init(RnnConfig(len(ds.songs), emb_dim=8, hidden=16), SEED)
train(rnn, examples, TrainConfig(batch_size=20, learning_rate=0.1, epochs=100, seed=SEED),
      grad_fn=rnn_loss_and_grad)
reports.append(evaluate(RnnRecommender(rnn), test, KS, "GRU"))

for arch in ("sabr", "stabr"):
    cfg = ModelConfig(arch, n_songs=len(ds.songs), n_tags=len(ds.tags), song_dim=8, tag_dim=8,
                      song_hidden=8, tag_hidden=8, bottleneck=16)
    params = model.init_params(cfg, SEED)
    _, trace = train(params, examples, TrainConfig(epochs=100, seed=SEED))
    print(f"{arch}: mean train loss {trace[0]:.3f} -> {trace[-1]:.3f}")
    reports.append(evaluate(ModelRecommender(params, ds.tag_table), test, KS, arch.upper()))

print()
print(format_table(reports))
