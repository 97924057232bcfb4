"""Token embeddings as complex waves, and a single-layer wave network classifier."""

from .estimators import Token2WaveTransformer, WaveNetworkClassifier, WaveTokenizer
from .model import CLS_ID, PAD_ID, ModelParams, backward, forward, init_params, loss
from .wave_ops import CartesianWave, interference, interference_term, modulation
from .wave_repr import WaveRepr, restore_embedding, to_cartesian, token2wave

__version__ = "0.1.0"

__all__ = [
    "CLS_ID",
    "PAD_ID",
    "CartesianWave",
    "ModelParams",
    "Token2WaveTransformer",
    "WaveNetworkClassifier",
    "WaveRepr",
    "WaveTokenizer",
    "backward",
    "forward",
    "init_params",
    "interference",
    "interference_term",
    "loss",
    "modulation",
    "restore_embedding",
    "to_cartesian",
    "token2wave",
]
