"""Attention-based next-song recommendation from song sequences and song tags.

``stabr`` implements two models trained end to end with hand-written
backpropagation in numpy:

* SABR: song embeddings -> Bi-GRU -> additive attention -> bottleneck -> softmax.
* STABR: SABR plus a parallel branch over per-song mean tag embeddings.

Alongside them live the data pipeline (log parsing, idle-gap sessions,
per-user 70/30 split), popularity / session-kNN / GRU baselines, the
HitRatio@k protocol and a small command-line tool.
"""

from .errors import CheckpointError, DataFormatError, DimensionError, StabrError, VocabularyError
from .model import ModelConfig, ModelParams, TrainingExample, init_params, predict_topk
from .numerics import Rng

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "DataFormatError",
    "DimensionError",
    "ModelConfig",
    "ModelParams",
    "Rng",
    "StabrError",
    "TrainingExample",
    "VocabularyError",
    "init_params",
    "predict_topk",
]
