"""Sequence classifier: derivative-gated cell + pooling + linear-tanh head.

The pooled hidden representation is mapped to class scores y = tanh(W_yh h
+ b_y) and then through a softmax.  The tanh bounds the scores to [-1, 1];
that is the published form and the default, a config flag drops it for the
plain linear head.  Class indices are 1-based at every public boundary and
0-based internally.
"""

from dataclasses import dataclass, field

import numpy as np

from . import cell as cell_mod
from .errors import ConfigError, ShapeError
from .kernels_py import PARAM_NAMES
from .numerics import RandomSource, matvec
from .pooling import STRATEGIES, pool

MODEL_TENSOR_NAMES = PARAM_NAMES + ("W_yh", "b_y")


@dataclass
class ModelConfig:
    input_dim: int
    state_dim: int
    classes: int
    order: int = 2
    pooling: str = "sep"
    sep_orders: tuple = None  # None means all orders 0..N
    output_tanh: bool = True
    dedup_candidates: bool = False

    def __post_init__(self):
        if self.classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.classes}")
        if self.pooling not in STRATEGIES:
            raise ConfigError(
                f"unknown pooling strategy {self.pooling!r}, expected one of {STRATEGIES}"
            )
        if not 0 <= self.order <= cell_mod.MAX_ORDER:
            raise ConfigError(f"derivative order must be in [0, 2], got {self.order}")
        if self.sep_orders is None:
            self.sep_orders = tuple(range(self.order + 1))
        else:
            self.sep_orders = tuple(sorted(set(int(r) for r in self.sep_orders)))
            if len(self.sep_orders) == 0:
                raise ConfigError("sep_orders must not be empty")
            bad = [r for r in self.sep_orders if r < 0 or r > self.order]
            if bad:
                raise ConfigError(
                    f"sep orders {bad} exceed the model's derivative order {self.order}"
                )

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "state_dim": self.state_dim,
            "classes": self.classes,
            "order": self.order,
            "pooling": self.pooling,
            "sep_orders": list(self.sep_orders),
            "output_tanh": self.output_tanh,
            "dedup_candidates": self.dedup_candidates,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            input_dim=int(d["input_dim"]),
            state_dim=int(d["state_dim"]),
            classes=int(d["classes"]),
            order=int(d["order"]),
            pooling=str(d["pooling"]),
            sep_orders=tuple(d["sep_orders"]),
            output_tanh=bool(d["output_tanh"]),
            dedup_candidates=bool(d["dedup_candidates"]),
        )


@dataclass
class Prediction:
    y: np.ndarray  # class scores
    p: np.ndarray  # softmax probabilities

    def predicted_class(self):
        """Winning class, 1-based."""
        return int(np.argmax(self.p)) + 1


class Model:
    """Bundle of config and named parameter tensors."""

    def __init__(self, config, params):
        self.config = config
        self.params = params
        cell_mod.validate_cell_params(params, config.order, config.input_dim, config.state_dim)
        if params["W_yh"].shape != (config.classes, config.state_dim):
            raise ShapeError(
                f"W_yh has shape {params['W_yh'].shape}, "
                f"expected {(config.classes, config.state_dim)}"
            )
        if params["b_y"].shape != (config.classes,):
            raise ShapeError(f"b_y has shape {params['b_y'].shape}, expected ({config.classes},)")

    def tensor_items(self):
        return [(name, self.params[name]) for name in MODEL_TENSOR_NAMES]

    def copy(self):
        return Model(self.config, {k: v.copy() for k, v in self.params.items()})


def init_model(config, seed, scale=cell_mod.DEFAULT_INIT_SCALE):
    root = RandomSource(seed)
    params = cell_mod.init_cell_params(
        config.order, config.input_dim, config.state_dim,
        root.derive("cell-init"), scale=scale,
    )
    out_rng = root.derive("output-init")
    k, n = config.classes, config.state_dim
    params["W_yh"] = out_rng.uniform(-scale, scale, k * n).reshape(k, n)
    params["b_y"] = out_rng.uniform(-scale, scale, k)
    return Model(config, params)


def softmax(y):
    e = np.exp(y - np.max(y))
    return e / e.sum()


def output_layer(params, h, output_tanh=True):
    z = matvec(params["W_yh"], h) + params["b_y"]
    y = np.tanh(z) if output_tanh else z
    return Prediction(y=y, p=softmax(y))


def sequence_loss(pred, c):
    """Negative log probability of the 1-based target class."""
    k = pred.p.shape[0]
    if not 1 <= c <= k:
        raise ConfigError(f"class index {c} outside [1, {k}]")
    return float(-np.log(pred.p[c - 1]))


def frame_loss(preds, labels):
    """Cumulative negative log probability over per-frame targets."""
    if len(preds) != len(labels):
        raise ShapeError(
            f"{len(preds)} frame predictions but {len(labels)} frame labels"
        )
    return float(sum(sequence_loss(p, int(c)) for p, c in zip(preds, labels)))


def forward_sequence(model, xs):
    """Run cell, pooling and head; returns (trace, pooled, prediction)."""
    cfg = model.config
    trace = cell_mod.run_sequence(model.params, xs)
    pooled = pool(trace, cfg.pooling, orders=cfg.sep_orders, dedup=cfg.dedup_candidates)
    pred = output_layer(model.params, pooled.vector, output_tanh=cfg.output_tanh)
    return trace, pooled, pred


def predict_sequence(model, xs):
    return forward_sequence(model, xs)[2]


def predict_frames(model, xs):
    """Per-step predictions from the frame-level head (causal by design)."""
    cfg = model.config
    trace = cell_mod.run_sequence(model.params, xs)
    return [
        output_layer(model.params, trace.H[t], output_tanh=cfg.output_tanh)
        for t in range(len(trace))
    ]
