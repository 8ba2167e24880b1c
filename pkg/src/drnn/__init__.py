"""Sequence classification with derivative-gated recurrent memory cells.

The cell is a gated recurrent unit whose input/forget/output gates are
driven by discretized time derivatives of the internal state; sequences
are summarized either by the last hidden state, mean/max pooling, or by
averaging the hidden states at energy-profile landmarks.  Training is
plain SGD with full or truncated backpropagation through time.

Hot kernels run in a compiled extension when available, with a pure-numpy
fallback (see drnn.backend; override with DRNN_BACKEND=python|compiled).
"""

__version__ = "0.1.0"

from .backend import backend_name, get_backend
from .cell import CellState, SequenceTrace, StepTrace, drnn_step, init_cell_params, run_sequence
from .checkpoint import load_checkpoint, load_model, save_checkpoint, save_model
from .data import (
    Dataset,
    LabeledSequence,
    PcaTransform,
    fit_pca,
    gen_synthetic,
    import_csv,
    load_dataset,
    load_sequence,
    save_sequence,
)
from .errors import ConfigError, DataError, DrnnError, NumericError, ShapeError
from .model import (
    Model,
    ModelConfig,
    Prediction,
    frame_loss,
    init_model,
    output_layer,
    predict_frames,
    predict_sequence,
    sequence_loss,
    softmax,
)
from .numerics import RandomSource, derive_seed, rng_uniform
from .pooling import PooledRepresentation, energy_profile, find_landmarks, pool
from .train import TrainConfig, backward, evaluate, grad_check, sgd_epoch, train_model

__all__ = [
    "CellState", "ConfigError", "DataError", "Dataset", "DrnnError",
    "LabeledSequence", "Model", "ModelConfig", "NumericError",
    "PcaTransform", "PooledRepresentation", "Prediction", "RandomSource",
    "SequenceTrace", "ShapeError", "StepTrace", "TrainConfig",
    "backend_name", "backward", "drnn_step", "energy_profile", "evaluate",
    "find_landmarks", "fit_pca", "frame_loss", "gen_synthetic",
    "get_backend", "grad_check", "import_csv", "init_cell_params",
    "init_model", "load_checkpoint", "load_dataset", "load_model",
    "load_sequence", "output_layer", "pool", "predict_frames",
    "predict_sequence", "rng_uniform", "run_sequence", "save_checkpoint",
    "save_model", "save_sequence", "sequence_loss", "sgd_epoch", "softmax",
    "train_model", "derive_seed",
]
