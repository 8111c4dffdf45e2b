"""
Layers, attention weights and a gradient check
==============================================

Builds a tiny STABR model, looks at the attention it pays to each song of a
short history, and compares the analytic gradient of the loss with central
finite differences.
"""

import numpy as np

from stabr import model
from stabr.gradcheck import check_gradients
from stabr.model import ModelConfig, TrainingExample
from stabr.numerics import Rng

# A five-song vocabulary with four tags, and very small layer widths.
cfg = ModelConfig("stabr", n_songs=5, n_tags=4, song_dim=3, tag_dim=2,
                  song_hidden=3, tag_hidden=2, bottleneck=4, m=10)
params = model.init_params(cfg, seed=0)
print({name: t.shape for name, t in params.tensors.items() if "." not in name})

# One history of three songs; the middle song has no tags at all.
ex = TrainingExample(prefix=(0, 3, 1), prefix_tags=((0, 2), (), (1,)), target=4)

log_probs, cache = model.forward(params, ex)
print("next-song distribution:", np.round(np.exp(log_probs), 4))
print("song attention:", np.round(cache["alpha"][:, 0], 4))
print("tag attention: ", np.round(cache["beta"][:, 0], 4))
print("loss:", model.loss(log_probs, ex.target))

# Training mode draws dropout masks; replaying the same Rng seed makes the
# loss a deterministic function of the parameters, so finite differences apply.
_, grads = model.loss_and_grad(params, [ex], Rng(3))
errors = check_gradients(lambda: model.loss_and_grad(params, [ex], Rng(3))[0],
                         params.tensors, grads)
worst = max(errors, key=errors.get)
print(f"largest relative error: {worst} {errors[worst]:.2e}")
