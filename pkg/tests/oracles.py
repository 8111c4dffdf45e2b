"""Independent straight-line reference implementations used as test oracles."""

import math

import numpy as np


def sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def gru_oracle(x, h, p):
    """Scalar-loop transcription of the four GRU formulas."""
    H, I = p.Wz.shape
    z = [sig(sum(p.Wz[i, j] * x[j] for j in range(I)) + sum(p.Uz[i, j] * h[j] for j in range(H)) + p.bz[i]) for i in range(H)]
    r = [sig(sum(p.Wr[i, j] * x[j] for j in range(I)) + sum(p.Ur[i, j] * h[j] for j in range(H)) + p.br[i]) for i in range(H)]
    c = [math.tanh(sum(p.Wh[i, j] * x[j] for j in range(I)) + sum(p.Uh[i, j] * r[j] * h[j] for j in range(H)) + p.bh[i]) for i in range(H)]
    return np.array([(1 - z[i]) * h[i] + z[i] * c[i] for i in range(H)])


def bigru_oracle(xs, pf, pb):
    T = len(xs)
    H = pf.Wz.shape[0]
    fwd, bwd = [None] * T, [None] * T
    h = np.zeros(H)
    for t in range(T):
        h = gru_oracle(xs[t], h, pf)
        fwd[t] = h
    h = np.zeros(H)
    for t in reversed(range(T)):
        h = gru_oracle(xs[t], h, pb)
        bwd[t] = h
    return [np.concatenate([fwd[t], bwd[t]]) for t in range(T)]


def attention_oracle(states, Wa, ba, u):
    scores = []
    for s in states:
        a = [math.tanh(sum(Wa[i, j] * s[j] for j in range(len(s))) + ba[i]) for i in range(len(ba))]
        scores.append(sum(u[i] * a[i] for i in range(len(u))))
    top = max(scores)
    e = [math.exp(v - top) for v in scores]
    weights = [v / sum(e) for v in e]
    return sum(w * s for w, s in zip(weights, states)), weights


def model_oracle(params, prefix, prefix_tags):
    """Eval-mode probabilities over all songs, written out step by step."""
    t = params.tensors
    cfg = params.config
    xs = [t["E1"][:, s] for s in prefix]
    hs = bigru_oracle(xs, params.gru("song_fwd"), params.gru("song_bwd"))
    a = params.attention("song_att")
    context = list(attention_oracle(hs, a.Wa, a.ba, a.u)[0])
    if cfg.uses_tags:
        gins = []
        for tags in prefix_tags:
            if tags:
                gins.append(sum(t["E2"][:, j] for j in tags) / len(tags))
            else:
                gins.append(np.zeros(cfg.tag_dim))
        gs = bigru_oracle(gins, params.gru("tag_fwd"), params.gru("tag_bwd"))
        a = params.attention("tag_att")
        context += list(attention_oracle(gs, a.Wa, a.ba, a.u)[0])
    W1, b1, W2, b2 = t["W1"], t["b1"], t["W2"], t["b2"]
    mid = [max(0.0, sum(W1[i, j] * context[j] for j in range(len(context))) + b1[i]) for i in range(len(b1))]
    out = [sum(W2[i, j] * mid[j] for j in range(len(mid))) + b2[i] for i in range(len(b2))]
    denom = sum(math.exp(o) for o in out)
    return np.array([math.exp(o) / denom for o in out])


def brute_force_sessions(rows, gap, min_length):
    """Group plays i and j together iff no consecutive gap between them exceeds ``gap``."""
    out = []
    for user in sorted({r.user_id for r in rows}):
        mine = sorted([r for r in rows if r.user_id == user], key=lambda r: r.timestamp)
        n = len(mine)
        linked = [[all(mine[t + 1].timestamp - mine[t].timestamp <= gap
                       for t in range(min(i, j), max(i, j)))
                   for j in range(n)] for i in range(n)]
        seen = set()
        for i in range(n):
            if i in seen:
                continue
            group = [j for j in range(n) if linked[i][j]]
            seen.update(group)
            if len(group) >= min_length:
                out.append([(mine[j].user_id, mine[j].timestamp, mine[j].song) for j in group])
    return out


SIX_SESSIONS = [
    [0, 1, 2, 3],
    [1, 2, 4],
    [0, 5, 6],
    [3, 4, 5, 7],
    [2, 7, 8],
    [6, 8, 9, 0],
]


def exhaustive_sscf(sessions, recent, k, n_neighbors):
    """Dense cosine over every stored session, then a full sort."""
    n_items = 1 + max(max(s) for s in sessions)
    a = np.zeros(n_items)
    a[list(set(recent))] = 1.0
    sims = []
    for sid, s in enumerate(sessions):
        v = np.zeros(n_items)
        v[list(set(s))] = 1.0
        sims.append((sid, float(a @ v) / (np.linalg.norm(a) * np.linalg.norm(v))))
    sims = [p for p in sorted(sims, key=lambda p: (-p[1], p[0])) if p[1] > 0][:n_neighbors]
    scores = np.zeros(n_items)
    for sid, sim in sims:
        for song in set(sessions[sid]):
            scores[song] += sim
    scores[list(set(recent))] = 0.0
    ranked = sorted((i for i in range(n_items) if scores[i] > 0), key=lambda i: (-scores[i], i))
    return ranked[:k]
