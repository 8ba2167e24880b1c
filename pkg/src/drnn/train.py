"""Backpropagation through time, the SGD loop, and a gradient checker.

`backward` differentiates the chosen loss through the output head, the
pooling stage (landmark positions frozen, as selected on the forward pass)
and the unrolled cell.  Mode "full" is exact reverse-mode; "truncated"
drops the adjoint flows that leave a memory cell through its derivative
inputs (see kernels_py for the precise rule).  Updates are plain SGD, one
sequence at a time.
"""

import time
from dataclasses import dataclass

import numpy as np

from .backend import get_backend
from .errors import ConfigError, DataError, NumericError
from .model import (
    MODEL_TENSOR_NAMES,
    forward_sequence,
    output_layer,
    predict_sequence,
    sequence_loss,
)
from .numerics import RandomSource
from .pooling import pool_backward

BPTT_MODES = ("full", "truncated")


@dataclass
class TrainConfig:
    lr: float = 0.0001
    epochs: int = 50
    bptt: str = "full"
    seed: int = 0
    shuffle: bool = True
    clip: float = None  # optional max-norm on the whole gradient set
    timing: bool = False  # measure wall time per epoch; off keeps logs reproducible

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.bptt not in BPTT_MODES:
            raise ConfigError(f"bptt mode must be one of {BPTT_MODES}, got {self.bptt!r}")
        if self.clip is not None and self.clip <= 0:
            raise ConfigError(f"clip norm must be positive, got {self.clip}")


def _head_backward(model, h, pred, c):
    """Gradient of -log p_c through softmax and the (tanh) head."""
    k = model.config.classes
    dy = pred.p.copy()
    dy[c - 1] -= 1.0
    if model.config.output_tanh:
        dz = dy * (1.0 - pred.y * pred.y)
    else:
        dz = dy
    return dz, np.outer(dz, h), model.params["W_yh"].T @ dz


def backward(model, xs, target, mode="full"):
    """Loss and gradients for one sequence.

    `target` is a 1-based class index for sequence-level loss, or a
    length-T sequence of 1-based frame labels for the cumulative
    frame-level loss.  Returns (loss, grads, prediction) where prediction
    is the sequence-level Prediction (or the per-frame list).
    """
    if mode not in BPTT_MODES:
        raise ConfigError(f"bptt mode must be one of {BPTT_MODES}, got {mode!r}")
    X = np.asarray(xs, dtype=np.float64)
    cfg = model.config
    frame_level = not np.isscalar(target) and not isinstance(target, (int, np.integer))
    grads = {}

    if not frame_level:
        c = int(target)
        trace, pooled, pred = forward_sequence(model, X)
        loss = sequence_loss(pred, c)
        dz, dW_yh, dh = _head_backward(model, pooled.vector, pred, c)
        grads["W_yh"] = dW_yh
        grads["b_y"] = dz
        dH = pool_backward(pooled, len(trace), cfg.state_dim, dh)
        result_pred = pred
    else:
        from .cell import run_sequence
        labels = [int(c) for c in target]
        trace = run_sequence(model.params, X)
        if len(labels) != len(trace):
            raise DataError(
                f"{len(trace)} frames but {len(labels)} frame labels"
            )
        grads["W_yh"] = np.zeros_like(model.params["W_yh"])
        grads["b_y"] = np.zeros_like(model.params["b_y"])
        dH = np.zeros((len(trace), cfg.state_dim), dtype=np.float64)
        loss = 0.0
        preds = []
        for t in range(len(trace)):
            pred_t = output_layer(model.params, trace.H[t], output_tanh=cfg.output_tanh)
            loss += sequence_loss(pred_t, labels[t])
            dz, dW_yh, dh = _head_backward(model, trace.H[t], pred_t, labels[t])
            grads["W_yh"] += dW_yh
            grads["b_y"] += dz
            dH[t] = dh
            preds.append(pred_t)
        result_pred = preds

    cell_grads = get_backend().backward(
        model.params, X, trace.cache, dH, truncated=(mode == "truncated")
    )
    grads.update(cell_grads)
    for name in MODEL_TENSOR_NAMES:
        if not np.isfinite(grads[name]).all():
            raise NumericError(f"non-finite gradient in tensor {name}")
    return loss, grads, result_pred


def apply_update(model, grads, lr, clip=None):
    if clip is not None:
        total = 0.0
        for name in MODEL_TENSOR_NAMES:
            g = grads[name]
            total += float((g * g).sum())
        norm = total ** 0.5
        if norm > clip:
            scale = clip / norm
            grads = {k: v * scale for k, v in grads.items()}
    for name in MODEL_TENSOR_NAMES:
        model.params[name] -= lr * grads[name]


@dataclass
class EpochStats:
    mean_loss: float
    accuracy: float


def sgd_epoch(model, dataset, cfg, rng=None, epoch=None):
    """One pass of per-sequence SGD; stats reflect the pre-update visits."""
    if len(dataset) == 0:
        raise DataError("cannot train on an empty dataset")
    order = list(range(len(dataset)))
    if cfg.shuffle and rng is not None:
        rng.shuffle(order)
    total_loss = 0.0
    correct = 0
    total = 0
    for idx in order:
        seq = dataset[idx]
        target = seq.frame_labels if getattr(seq, "frame_labels", None) is not None else seq.label
        try:
            loss, grads, pred = backward(model, seq.features, target, mode=cfg.bptt)
        except NumericError as exc:
            where = f"epoch {epoch}, " if epoch is not None else ""
            raise NumericError(f"{where}sequence {getattr(seq, 'id', idx)}: {exc}") from exc
        if not np.isfinite(loss):
            where = f"epoch {epoch}, " if epoch is not None else ""
            raise NumericError(f"{where}sequence {getattr(seq, 'id', idx)}: non-finite loss")
        total_loss += loss
        if isinstance(pred, list):
            correct += sum(p.predicted_class() == int(c) for p, c in zip(pred, target))
            total += len(pred)
        else:
            correct += int(pred.predicted_class() == int(target))
            total += 1
        apply_update(model, grads, cfg.lr, clip=cfg.clip)
    return EpochStats(mean_loss=total_loss / len(dataset), accuracy=correct / total)


def evaluate(model, dataset):
    """Sequence-level accuracy and the k x k confusion matrix (rows = truth)."""
    k = model.config.classes
    conf = np.zeros((k, k), dtype=np.int64)
    for seq in dataset:
        if seq.label is None:
            raise DataError(f"sequence {seq.id} has no sequence-level label")
        if not 1 <= seq.label <= k:
            raise DataError(f"sequence {seq.id} label {seq.label} outside [1, {k}]")
        pred = predict_sequence(model, seq.features)
        conf[seq.label - 1, pred.predicted_class() - 1] += 1
    total = int(conf.sum())
    acc = float(np.trace(conf)) / total if total else 0.0
    return acc, conf


def train_model(model, train_set, val_set, cfg, on_improve=None):
    """Full training run; returns per-epoch history and the best epoch.

    Validation accuracy is measured after every epoch; when the validation
    set is empty the running train accuracy stands in for it.  `on_improve`
    is called as on_improve(model, epoch, val_acc) whenever validation
    accuracy strictly improves.
    """
    rng = RandomSource(cfg.seed).derive("epoch-shuffle")
    history = []
    best_acc = -1.0
    best_epoch = 0
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter() if cfg.timing else 0.0
        stats = sgd_epoch(model, train_set, cfg, rng=rng, epoch=epoch)
        if val_set:
            val_acc, _ = evaluate(model, val_set)
        else:
            val_acc = stats.accuracy
        wall = time.perf_counter() - start if cfg.timing else 0.0
        history.append({
            "epoch": epoch,
            "mean_loss": stats.mean_loss,
            "train_acc": stats.accuracy,
            "val_acc": val_acc,
            "wall_time": wall,
        })
        if val_acc > best_acc:
            best_acc = val_acc
            best_epoch = epoch
            if on_improve is not None:
                on_improve(model, epoch, val_acc)
    return history, best_epoch, best_acc


def grad_check(model, xs, target, tolerance=1e-5, h=1e-6, mode="full", inject_fault=None):
    """Central finite differences against the analytic gradients.

    Only full mode is checkable: finite differences always see the exact
    loss surface, so a truncated request is a config error.  Every entry
    of every tensor is perturbed; the report carries one relative error
    per parameter tensor,

        ||g_analytic - g_fd|| / max(||g_analytic||, ||g_fd||, 1e-8),

    and an overall pass flag.  The error is taken per tensor rather than
    per entry because a central difference of the loss carries roundoff
    noise of about 1e-10 at h=1e-6, so entries whose true gradient is
    below ~1e-5 cannot be resolved individually no matter how exact the
    analytic value is.
    """
    if mode != "full":
        raise ConfigError(
            "gradient checking requires full bptt mode: finite differences "
            "measure the exact loss and cannot observe truncation"
        )
    _, analytic, _ = backward(model, xs, target, mode="full")
    if inject_fault is not None:
        if inject_fault not in analytic:
            raise ConfigError(f"unknown tensor {inject_fault!r} for fault injection")
        g = analytic[inject_fault]
        flat = np.argmax(np.abs(g))
        g.flat[flat] *= 2.0

    report = {}
    worst = 0.0
    for name in MODEL_TENSOR_NAMES:
        tensor = model.params[name]
        ga = analytic[name]
        gf = np.zeros_like(ga)
        it = np.nditer(tensor, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = tensor[idx]
            tensor[idx] = orig + h
            lp = _loss_only(model, xs, target)
            tensor[idx] = orig - h
            lm = _loss_only(model, xs, target)
            tensor[idx] = orig
            gf[idx] = (lp - lm) / (2.0 * h)
            it.iternext()
        na = float(np.linalg.norm(ga))
        nf = float(np.linalg.norm(gf))
        err = float(np.linalg.norm(ga - gf)) / max(na, nf, 1e-8)
        report[name] = {"rel_err": err, "pass": err < tolerance}
        worst = max(worst, err)
    report["__overall__"] = {"rel_err": worst, "pass": worst < tolerance}
    return report


def _loss_only(model, xs, target):
    if np.isscalar(target) or isinstance(target, (int, np.integer)):
        _, _, pred = forward_sequence(model, xs)
        return sequence_loss(pred, int(target))
    from .model import frame_loss, predict_frames
    preds = predict_frames(model, xs)
    return frame_loss(preds, [int(c) for c in target])
