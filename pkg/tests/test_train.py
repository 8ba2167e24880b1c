import numpy as np
import pytest

from drnn.data import LabeledSequence
from drnn.errors import ConfigError, DataError, NumericError
from drnn.model import MODEL_TENSOR_NAMES, ModelConfig, init_model, sequence_loss
from drnn.numerics import RandomSource, derive_seed
from drnn.train import (
    TrainConfig,
    apply_update,
    backward,
    evaluate,
    grad_check,
    sgd_epoch,
    train_model,
)


def _model(order=2, pooling="sep", seed=0, m=3, n=4, k=3, scale=0.6):
    cfg = ModelConfig(input_dim=m, state_dim=n, classes=k, order=order, pooling=pooling)
    return init_model(cfg, seed, scale=scale)


def _input(T=6, m=3, seed=1):
    return RandomSource(seed).uniform(-1, 1, T * m).reshape(T, m)


def _toy_dataset(count=12, T=5, m=3, k=3, seed=2):
    rng = RandomSource(seed)
    seqs = []
    for j in range(count):
        label = j % k + 1
        X = rng.uniform(-1, 1, T * m).reshape(T, m) + 0.3 * label
        seqs.append(LabeledSequence(id=f"toy-{j}", features=X, label=label, split="train"))
    return seqs


# ----------------------------------------------------------------- config

def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(lr=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(bptt="half")
    with pytest.raises(ConfigError):
        TrainConfig(clip=-1.0)


# --------------------------------------------------------------- backward

def test_backward_returns_full_gradient_set():
    model = _model()
    loss, grads, pred = backward(model, _input(), 2)
    assert set(grads) == set(MODEL_TENSOR_NAMES)
    for name in MODEL_TENSOR_NAMES:
        assert grads[name].shape == model.params[name].shape
    assert loss == pytest.approx(sequence_loss(pred, 2))
    assert loss > 0


def test_backward_frame_level_targets():
    model = _model(pooling="lhs")
    X = _input(T=4)
    labels = [1, 2, 3, 1]
    loss, grads, preds = backward(model, X, labels)
    assert isinstance(preds, list) and len(preds) == 4
    assert loss == pytest.approx(sum(sequence_loss(p, c) for p, c in zip(preds, labels)))
    assert set(grads) == set(MODEL_TENSOR_NAMES)
    with pytest.raises(DataError):
        backward(model, X, [1, 2])


def test_backward_rejects_bad_mode():
    with pytest.raises(ConfigError):
        backward(_model(), _input(), 1, mode="fast")


def test_truncated_equals_full_at_single_step():
    for order in (0, 1, 2):
        for pooling in ("lhs", "sep"):
            model = _model(order=order, pooling=pooling, seed=order)
            X = _input(T=1, seed=order + 5)
            _, gf, _ = backward(model, X, 1, mode="full")
            _, gt, _ = backward(model, X, 1, mode="truncated")
            for name in MODEL_TENSOR_NAMES:
                assert np.array_equal(gf[name], gt[name]), name


def test_truncated_differs_from_full_on_longer_sequences():
    model = _model(order=2, pooling="lhs", seed=4)
    X = _input(T=8, seed=6)
    _, gf, _ = backward(model, X, 1, mode="full")
    _, gt, _ = backward(model, X, 1, mode="truncated")
    gap = max(np.max(np.abs(gf[n] - gt[n])) for n in MODEL_TENSOR_NAMES)
    assert gap > 1e-9


# ----------------------------------------------------------------- update

def test_apply_update_plain_step():
    model = _model()
    before = {k: v.copy() for k, v in model.params.items()}
    _, grads, _ = backward(model, _input(), 1)
    apply_update(model, grads, lr=0.1)
    for name in MODEL_TENSOR_NAMES:
        assert np.allclose(model.params[name], before[name] - 0.1 * grads[name], atol=1e-15)


def test_apply_update_clips_global_norm():
    model = _model()
    _, grads, _ = backward(model, _input(), 1)
    norm = np.sqrt(sum(float((g ** 2).sum()) for g in grads.values()))
    clip = norm / 2.0
    before = {k: v.copy() for k, v in model.params.items()}
    apply_update(model, grads, lr=1.0, clip=clip)
    applied = {k: before[k] - model.params[k] for k in MODEL_TENSOR_NAMES}
    new_norm = np.sqrt(sum(float((g ** 2).sum()) for g in applied.values()))
    assert new_norm == pytest.approx(clip, rel=1e-12)
    # a loose bound leaves the step untouched
    model2 = _model()
    _, grads2, _ = backward(model2, _input(), 1)
    b2 = {k: v.copy() for k, v in model2.params.items()}
    apply_update(model2, grads2, lr=1.0, clip=norm * 10)
    for name in MODEL_TENSOR_NAMES:
        assert np.allclose(model2.params[name], b2[name] - grads2[name], atol=1e-15)


# -------------------------------------------------------------- sgd/eval

def test_sgd_epoch_runs_and_reports():
    model = _model(n=5)
    data = _toy_dataset()
    stats = sgd_epoch(model, data, TrainConfig(lr=0.01, shuffle=False))
    assert np.isfinite(stats.mean_loss)
    assert 0.0 <= stats.accuracy <= 1.0


def test_sgd_epoch_empty_dataset():
    with pytest.raises(DataError):
        sgd_epoch(_model(), [], TrainConfig())


def test_sgd_epoch_wraps_numeric_failures_with_context():
    model = _model()
    bad = LabeledSequence(id="bad-seq", features=np.full((3, 3), np.nan), label=1, split="train")
    with pytest.raises(NumericError, match="bad-seq"):
        sgd_epoch(model, [bad], TrainConfig(), epoch=3)


def test_sgd_epoch_uses_frame_labels_when_present():
    model = _model(pooling="lhs")
    X = _input(T=3, seed=9)
    seq = LabeledSequence(id="f", features=X, label=1,
                          frame_labels=np.array([1, 2, 1]), split="train")
    stats = sgd_epoch(model, [seq], TrainConfig(lr=0.01, shuffle=False))
    # three frame targets scored, not one sequence target
    assert stats.accuracy in (0.0, 1 / 3, 2 / 3, 1.0)


def test_evaluate_confusion_layout():
    model = _model(n=5, seed=8)
    data = _toy_dataset(count=15)
    acc, conf = evaluate(model, data)
    assert conf.shape == (3, 3)
    assert conf.sum() == 15
    for c in range(3):
        assert conf[c].sum() == 5  # five sequences per class, rows are truth
    assert acc == pytest.approx(np.trace(conf) / 15)


def test_evaluate_requires_labels():
    seq = LabeledSequence(id="u", features=_input(), label=None, split="test")
    with pytest.raises(DataError):
        evaluate(_model(), [seq])
    seq = LabeledSequence(id="v", features=_input(), label=9, split="test")
    with pytest.raises(DataError):
        evaluate(_model(), [seq])


def test_train_model_history_and_best_tracking():
    model = _model(n=5, seed=1)
    data = _toy_dataset(count=9)
    val = _toy_dataset(count=6, seed=7)
    improvements = []

    def on_improve(m, epoch, val_acc):
        improvements.append((epoch, val_acc))

    history, best_epoch, best_acc = train_model(
        model, data, val, TrainConfig(lr=0.05, epochs=4), on_improve=on_improve
    )
    assert len(history) == 4
    assert [row["epoch"] for row in history] == [1, 2, 3, 4]
    accs = [row["val_acc"] for row in history]
    assert best_acc == max(accs)
    assert best_epoch == accs.index(best_acc) + 1
    assert improvements[0][0] == 1  # first epoch always improves over -1
    assert all(b[1] > a[1] for a, b in zip(improvements, improvements[1:]))
    assert all(row["wall_time"] == 0.0 for row in history)


def test_train_model_uses_train_accuracy_without_val_split():
    model = _model(seed=3)
    history, _, _ = train_model(model, _toy_dataset(count=6), None,
                                TrainConfig(lr=0.01, epochs=2))
    for row in history:
        assert row["val_acc"] == row["train_acc"]


def test_train_model_timing_flag():
    model = _model(seed=5)
    history, _, _ = train_model(model, _toy_dataset(count=4), None,
                                TrainConfig(lr=0.01, epochs=1, timing=True))
    assert history[0]["wall_time"] > 0.0


def test_training_is_deterministic():
    data = _toy_dataset()
    runs = []
    for _ in range(2):
        model = _model(n=5, seed=12)
        train_model(model, data, None, TrainConfig(lr=0.02, epochs=3, seed=12))
        runs.append({k: v.copy() for k, v in model.params.items()})
    for name in MODEL_TENSOR_NAMES:
        assert np.array_equal(runs[0][name], runs[1][name])


# -------------------------------------------------------------- gradcheck

def test_grad_check_passes_on_exact_gradients():
    model = _model(order=2, pooling="sep", seed=21, scale=0.9)
    X = _input(T=5, seed=22)
    report = grad_check(model, X, 2)
    assert report["__overall__"]["pass"]
    assert set(report) == set(MODEL_TENSOR_NAMES) | {"__overall__"}
    for entry in report.values():
        assert entry["rel_err"] < 1e-5


def test_grad_check_frame_targets():
    model = _model(order=1, pooling="lhs", seed=23, scale=0.9, m=2, n=3, k=2)
    X = _input(T=3, m=2, seed=24)
    report = grad_check(model, X, [1, 2, 1])
    assert report["__overall__"]["pass"]


def test_grad_check_catches_injected_fault():
    model = _model(order=1, pooling="mean", seed=25, scale=0.9)
    X = _input(T=4, seed=26)
    report = grad_check(model, X, 1, inject_fault="W_sh")
    assert not report["__overall__"]["pass"]
    assert not report["W_sh"]["pass"]
    with pytest.raises(ConfigError):
        grad_check(model, X, 1, inject_fault="W_zz")


def test_grad_check_rejects_truncated_mode():
    with pytest.raises(ConfigError):
        grad_check(_model(), _input(), 1, mode="truncated")


def test_derive_seed_spreads_models():
    a = init_model(ModelConfig(input_dim=2, state_dim=2, classes=2), derive_seed(0, "a"))
    b = init_model(ModelConfig(input_dim=2, state_dim=2, classes=2), derive_seed(0, "b"))
    assert not np.array_equal(a.params["W_sh"], b.params["W_sh"])
