"""Command-line interface.

Commands:
  generate   write a synthetic kinematics dataset (manifest + sequences)
  train      fit a model on a manifest's train split, log per-epoch stats
  eval       evaluate a checkpoint (optionally n-fold cross-validation)
  trace      per-frame predictions and energy-profile curves for one sequence
  gradcheck  finite-difference check of the analytic gradients

Settings come from an optional `key = value` config file (--config) with
command-line flags taking precedence; unknown keys in the file are
rejected.  All float cells in reports are written with repr, so reruns
under a fixed seed are byte-identical; per-epoch wall time is reported as
0.000000 unless --timing is given, keeping the default log reproducible.

Environment: DRNN_REPORT_DIR is the default output directory when --out is
absent; DRNN_BACKEND picks the kernel implementation (auto|compiled|python).

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

import argparse
import os
import sys
import tempfile

import numpy as np

from . import data as data_mod
from .cell import run_sequence
from .checkpoint import load_model, save_model
from .errors import ConfigError, DataError, NumericError, ShapeError
from .model import ModelConfig, init_model, predict_frames
from .numerics import RandomSource, derive_seed
from .pooling import STRATEGIES, energy_profile, find_landmarks
from .train import BPTT_MODES, TrainConfig, evaluate, grad_check, train_model

REPORT_DIR_ENV = "DRNN_REPORT_DIR"

GRADCHECK_DIM_LIMIT = 8
GRADCHECK_T_LIMIT = 8


def _fnum(x):
    return repr(float(x))


def _write_lines(path, lines):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".report-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_orders(text):
    try:
        return tuple(int(p) for p in str(text).split(",") if p.strip() != "")
    except ValueError as exc:
        raise ConfigError(f"bad order list {text!r}: {exc}") from exc


_CONVERTERS = {
    "seed": int, "order": int, "epochs": int, "count": int, "frames": int,
    "dim": int, "classes": int, "segment": int, "state_dim": int,
    "input_dim": int, "folds": int,
    "lr": float, "sigma": float, "curvature": float, "clip": float,
    "tolerance": float,
    "shuffle": _parse_bool, "timing": _parse_bool, "output_tanh": _parse_bool,
    "dedup": _parse_bool,
    "sep_orders": _parse_orders,
    "out": str, "manifest": str, "checkpoint": str, "split": str,
    "pooling": str, "bptt": str, "input": str, "inject_fault": str,
}


def _parse_config_file(path):
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = text.partition("=")
        out[key.strip()] = value.strip()
    return out


def _merge_settings(args, allowed, defaults):
    """defaults <- config file <- explicitly given flags."""
    settings = dict(defaults)
    if args.config:
        for key, raw in _parse_config_file(args.config).items():
            if key not in allowed:
                raise ConfigError(
                    f"unknown config key {key!r} for command {args.command!r}"
                )
            try:
                settings[key] = _CONVERTERS[key](raw)
            except ValueError as exc:
                raise ConfigError(f"config key {key!r}: {exc}") from exc
    for key in allowed:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def _resolve_out(settings):
    out = settings.get("out")
    if not out:
        out = os.environ.get(REPORT_DIR_ENV) or "."
    return out


# ---------------------------------------------------------------- generate

GENERATE_KEYS = (
    "seed", "out", "count", "frames", "dim", "sigma", "classes",
    "segment", "curvature",
    "order", "pooling", "bptt", "lr", "epochs",  # shared flags, unused here
)

GENERATE_DEFAULTS = {
    "seed": 0, "count": 500, "frames": 40, "dim": 8, "sigma": 0.05,
    "classes": 3, "segment": 10, "curvature": 0.7,
}


def cmd_generate(args):
    settings = _merge_settings(args, GENERATE_KEYS, GENERATE_DEFAULTS)
    out = _resolve_out(settings)
    dataset = data_mod.gen_synthetic(
        seed=settings["seed"], classes=settings["classes"],
        count=settings["count"], frames=settings["frames"],
        dim=settings["dim"], sigma=settings["sigma"],
        segment=settings["segment"], curvature=settings["curvature"],
    )
    manifest = data_mod.write_dataset(dataset, out)
    counts = {tag: len(dataset.split(tag)) for tag in data_mod.SPLITS}
    print(
        f"wrote {len(dataset.sequences)} sequences "
        f"(train={counts['train']} val={counts['val']} test={counts['test']}) "
        f"to {manifest}"
    )
    return 0


# ------------------------------------------------------------------- train

TRAIN_KEYS = (
    "seed", "out", "manifest", "order", "pooling", "sep_orders", "bptt",
    "lr", "epochs", "state_dim", "clip", "shuffle", "timing",
    "output_tanh", "dedup",
)

TRAIN_DEFAULTS = {
    "seed": 0, "order": 2, "pooling": "sep", "sep_orders": None,
    "bptt": "full", "lr": 0.0001, "epochs": 50, "state_dim": 16,
    "clip": None, "shuffle": True, "timing": False,
    "output_tanh": True, "dedup": False,
}


def _require(settings, key, command):
    if not settings.get(key):
        raise ConfigError(f"{command} requires --{key.replace('_', '-')}")
    return settings[key]


def _format_history(history, best_epoch, best_acc):
    lines = ["epoch,mean_loss,train_acc,val_acc,wall_time"]
    for row in history:
        lines.append(
            f"{row['epoch']},{_fnum(row['mean_loss'])},{_fnum(row['train_acc'])},"
            f"{_fnum(row['val_acc'])},{row['wall_time']:.6f}"
        )
    lines.append(f"# best epoch {best_epoch} val_acc {_fnum(best_acc)}")
    return lines


def cmd_train(args):
    settings = _merge_settings(args, TRAIN_KEYS, TRAIN_DEFAULTS)
    manifest = _require(settings, "manifest", "train")
    out = _resolve_out(settings)
    dataset = data_mod.load_dataset(manifest)
    train_set = dataset.split("train")
    val_set = dataset.split("val")
    if not train_set:
        raise DataError(f"{manifest}: no sequences in the train split")

    mcfg = ModelConfig(
        input_dim=dataset.dim, state_dim=settings["state_dim"],
        classes=dataset.classes, order=settings["order"],
        pooling=settings["pooling"], sep_orders=settings["sep_orders"],
        output_tanh=settings["output_tanh"], dedup_candidates=settings["dedup"],
    )
    tcfg = TrainConfig(
        lr=settings["lr"], epochs=settings["epochs"], bptt=settings["bptt"],
        seed=settings["seed"], shuffle=settings["shuffle"],
        clip=settings["clip"], timing=settings["timing"],
    )
    model = init_model(mcfg, settings["seed"])
    ckpt_path = os.path.join(out, "checkpoint.ckpt")

    def on_improve(m, epoch, val_acc):
        save_model(ckpt_path, m)

    history, best_epoch, best_acc = train_model(
        model, train_set, val_set, tcfg, on_improve=on_improve
    )
    log_path = os.path.join(out, "train_log.csv")
    _write_lines(log_path, _format_history(history, best_epoch, best_acc))
    print(
        f"trained {tcfg.epochs} epochs on {len(train_set)} sequences; "
        f"best epoch {best_epoch} val_acc {_fnum(best_acc)}; "
        f"checkpoint {ckpt_path}, log {log_path}"
    )
    return 0


# -------------------------------------------------------------------- eval

EVAL_KEYS = (
    "seed", "out", "manifest", "checkpoint", "split", "folds",
    "order", "pooling", "bptt", "lr", "epochs", "shuffle", "timing", "clip",
)

EVAL_DEFAULTS = {
    "seed": 0, "split": "test", "folds": None,
    "bptt": "full", "lr": 0.0001, "epochs": 50,
    "shuffle": True, "timing": False, "clip": None,
}


def _metrics_lines(conf, names):
    total = int(conf.sum())
    acc = float(np.trace(conf)) / total if total else 0.0
    lines = ["metric,value", f"accuracy,{_fnum(acc)}"]
    for i, name in enumerate(names):
        row = conf[i].sum()
        recall = float(conf[i, i]) / row if row else 0.0
        lines.append(f"recall_{name},{_fnum(recall)}")
    return lines, acc


def _confusion_lines(conf, names, as_float=False):
    lines = ["true," + ",".join(names)]
    for i, name in enumerate(names):
        cells = [(_fnum(v) if as_float else str(int(v))) for v in conf[i]]
        lines.append(f"{name}," + ",".join(cells))
    return lines


def cmd_eval(args):
    settings = _merge_settings(args, EVAL_KEYS, EVAL_DEFAULTS)
    manifest = _require(settings, "manifest", "eval")
    ckpt = _require(settings, "checkpoint", "eval")
    out = _resolve_out(settings)
    model = load_model(ckpt)
    dataset = data_mod.load_dataset(manifest)
    if dataset.classes != model.config.classes:
        raise ConfigError(
            f"checkpoint has {model.config.classes} classes "
            f"but dataset has {dataset.classes}"
        )
    if dataset.dim != model.config.input_dim:
        raise ConfigError(
            f"checkpoint expects input dim {model.config.input_dim} "
            f"but dataset has dim {dataset.dim}"
        )
    if settings.get("order") is not None and settings["order"] != model.config.order:
        raise ConfigError(
            f"checkpoint was trained at derivative order {model.config.order}; "
            "the order cannot be changed at evaluation time"
        )
    if settings.get("pooling") is not None:
        model.config.pooling = settings["pooling"]

    if settings["folds"]:
        return _eval_folds(settings, model, dataset, out)

    subset = dataset.split(settings["split"])
    if not subset:
        raise DataError(f"{manifest}: no sequences in split {settings['split']!r}")
    acc, conf = evaluate(model, subset)
    metrics, _ = _metrics_lines(conf, dataset.names)
    _write_lines(os.path.join(out, "metrics.csv"), metrics)
    _write_lines(os.path.join(out, "confusion.csv"), _confusion_lines(conf, dataset.names))
    print(f"accuracy {_fnum(acc)} on {len(subset)} {settings['split']} sequences")
    return 0


def _eval_folds(settings, model, dataset, out):
    """Cross-validation: re-train per fold, average confusion counts,
    then row-normalize the average."""
    folds = settings["folds"]
    if folds < 2:
        raise ConfigError(f"need at least 2 folds, got {folds}")
    seqs = list(dataset.sequences)
    if len(seqs) < folds:
        raise DataError(f"{len(seqs)} sequences cannot fill {folds} folds")
    order = list(range(len(seqs)))
    RandomSource(settings["seed"]).derive("cv-folds").shuffle(order)
    assignment = {idx: pos % folds for pos, idx in enumerate(order)}

    k = dataset.classes
    tcfg_base = dict(
        lr=settings["lr"], epochs=settings["epochs"], bptt=settings["bptt"],
        shuffle=settings["shuffle"], clip=settings["clip"], timing=settings["timing"],
    )
    summed = np.zeros((k, k), dtype=np.int64)
    averaged = np.zeros((k, k), dtype=np.float64)
    for f in range(folds):
        train_f = [s for i, s in enumerate(seqs) if assignment[i] != f]
        test_f = [s for i, s in enumerate(seqs) if assignment[i] == f]
        fold_seed = derive_seed(settings["seed"], f"cv-fold-{f}")
        fold_model = init_model(model.config, fold_seed)
        train_model(fold_model, train_f, None, TrainConfig(seed=fold_seed, **tcfg_base))
        _, conf = evaluate(fold_model, test_f)
        _write_lines(
            os.path.join(out, f"confusion_fold{f + 1}.csv"),
            _confusion_lines(conf, dataset.names),
        )
        summed += conf
        averaged += conf
    averaged /= folds
    norm = averaged.copy()
    for i in range(k):
        row = norm[i].sum()
        if row > 0:
            norm[i] /= row
    metrics, acc = _metrics_lines(summed, dataset.names)
    _write_lines(os.path.join(out, "metrics.csv"), metrics)
    _write_lines(
        os.path.join(out, "confusion.csv"),
        _confusion_lines(norm, dataset.names, as_float=True),
    )
    print(f"{folds}-fold accuracy {_fnum(acc)} over {len(seqs)} sequences")
    return 0


# ------------------------------------------------------------------- trace

TRACE_KEYS = (
    "seed", "out", "checkpoint", "input",
    "order", "pooling", "bptt", "lr", "epochs",
)

TRACE_DEFAULTS = {}


def cmd_trace(args):
    settings = _merge_settings(args, TRACE_KEYS, TRACE_DEFAULTS)
    ckpt = _require(settings, "checkpoint", "trace")
    source = _require(settings, "input", "trace")
    out = _resolve_out(settings)
    model = load_model(ckpt)
    if source.endswith(".csv"):
        X = data_mod.import_csv(source).features
    else:
        X = data_mod.load_sequence(source)
    if X.shape[1] != model.config.input_dim:
        raise DataError(
            f"{source}: feature dim {X.shape[1]} does not match "
            f"checkpoint input dim {model.config.input_dim}"
        )

    preds = predict_frames(model, X)
    k = model.config.classes
    lines = ["t," + ",".join(f"p_{c + 1}" for c in range(k)) + ",pred"]
    for t, pred in enumerate(preds, start=1):
        probs = ",".join(_fnum(p) for p in pred.p)
        lines.append(f"{t},{probs},{pred.predicted_class()}")
    pred_path = os.path.join(out, "frame_predictions.csv")
    _write_lines(pred_path, lines)

    trace = run_sequence(model.params, X)
    T = len(trace)
    profiles = {}
    landmark_sets = {}
    for r in range(3):
        if r <= model.config.order:
            e = energy_profile(trace, r)
            profiles[r] = e
            landmark_sets[r] = set(find_landmarks(e))
    lines = ["t,E0,E1,E2,is_landmark_0,is_landmark_1,is_landmark_2"]
    for t in range(1, T + 1):
        energy = [
            _fnum(profiles[r][t - 1]) if r in profiles else "" for r in range(3)
        ]
        flags = [
            ("1" if t in landmark_sets[r] else "0") if r in landmark_sets else ""
            for r in range(3)
        ]
        lines.append(f"{t}," + ",".join(energy) + "," + ",".join(flags))
    sep_path = os.path.join(out, "sep_profile.csv")
    _write_lines(sep_path, lines)
    print(f"wrote {pred_path} and {sep_path} ({T} frames)")
    return 0


# --------------------------------------------------------------- gradcheck

GRADCHECK_KEYS = (
    "seed", "out", "order", "pooling", "bptt", "lr", "epochs",
    "state_dim", "input_dim", "classes", "frames", "tolerance", "inject_fault",
)

GRADCHECK_DEFAULTS = {
    "seed": 0, "state_dim": 4, "input_dim": 3, "classes": 2, "frames": 5,
    "tolerance": 1e-5, "inject_fault": None,
}

# Central differences at h=1e-6 carry ~1e-10 of roundoff noise, so the
# checked model is drawn with weights large enough that gradient norms
# sit far above that floor.  The training default (0.08) would drown.
GRADCHECK_INIT_SCALE = 0.9


def cmd_gradcheck(args):
    settings = _merge_settings(args, GRADCHECK_KEYS, GRADCHECK_DEFAULTS)
    if settings.get("bptt") == "truncated":
        raise ConfigError(
            "gradient checking requires full bptt mode: finite differences "
            "measure the exact loss and cannot observe truncation"
        )
    n, m = settings["state_dim"], settings["input_dim"]
    T, k = settings["frames"], settings["classes"]
    if n > GRADCHECK_DIM_LIMIT or m > GRADCHECK_DIM_LIMIT or k > GRADCHECK_DIM_LIMIT:
        raise ConfigError(
            f"gradcheck dims must be <= {GRADCHECK_DIM_LIMIT} "
            f"(got state={n} input={m} classes={k}); finite differences on "
            "larger models are slow and numerically muddy"
        )
    if T > GRADCHECK_T_LIMIT:
        raise ConfigError(f"gradcheck sequence length must be <= {GRADCHECK_T_LIMIT}, got {T}")
    if settings["tolerance"] <= 0:
        raise ConfigError(f"tolerance must be positive, got {settings['tolerance']}")

    orders = [settings["order"]] if settings.get("order") is not None else [0, 1, 2]
    poolings = [settings["pooling"]] if settings.get("pooling") is not None else list(STRATEGIES)
    rng = RandomSource(settings["seed"]).derive("gradcheck-input")
    X = rng.uniform(-1.0, 1.0, T * m).reshape(T, m)
    target = rng.randbelow(k) + 1

    failures = []
    for order in orders:
        for pooling in poolings:
            mcfg = ModelConfig(
                input_dim=m, state_dim=n, classes=k, order=order, pooling=pooling
            )
            model = init_model(
                mcfg,
                derive_seed(settings["seed"], f"gc-{order}-{pooling}"),
                scale=GRADCHECK_INIT_SCALE,
            )
            report = grad_check(
                model, X, target, tolerance=settings["tolerance"],
                inject_fault=settings["inject_fault"],
            )
            overall = report["__overall__"]
            status = "pass" if overall["pass"] else "FAIL"
            print(
                f"order={order} pooling={pooling} T={T} "
                f"rel_err={overall['rel_err']:.3e} {status}"
            )
            if not overall["pass"]:
                bad = [
                    f"{name} ({entry['rel_err']:.3e})"
                    for name, entry in report.items()
                    if name != "__overall__" and not entry["pass"]
                ]
                failures.append(f"order={order} pooling={pooling}: " + ", ".join(bad))
    if failures:
        raise NumericError(
            "gradient check failed for "
            f"{len(failures)} combination(s): " + "; ".join(failures)
        )
    print("all gradient checks passed")
    return 0


# -------------------------------------------------------------------- main

COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "trace": cmd_trace,
    "gradcheck": cmd_gradcheck,
}


def _add_shared_flags(sp):
    sp.add_argument("--config", help="settings file (key = value); flags override it")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--order", type=int, choices=(0, 1, 2))
    sp.add_argument("--pooling", choices=STRATEGIES)
    sp.add_argument("--bptt", choices=BPTT_MODES)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--out", help=f"output directory (default ${REPORT_DIR_ENV} or .)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="drnn",
        description="sequence classification with derivative-gated recurrent cells",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("generate", help="write a synthetic kinematics dataset")
    _add_shared_flags(sp)
    sp.add_argument("--count", type=int, help="total sequences (60/20/20 split)")
    sp.add_argument("--frames", type=int)
    sp.add_argument("--dim", type=int)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--classes", type=int)
    sp.add_argument("--segment", type=int)
    sp.add_argument("--curvature", type=float)

    sp = sub.add_parser("train", help="train on a manifest's train split")
    _add_shared_flags(sp)
    sp.add_argument("--manifest")
    sp.add_argument("--state-dim", type=int, dest="state_dim")
    sp.add_argument("--sep-orders", type=_parse_orders, dest="sep_orders")
    sp.add_argument("--clip", type=float)
    sp.add_argument("--no-shuffle", action="store_const", const=False, dest="shuffle")
    sp.add_argument("--timing", action="store_const", const=True,
                    help="measure real wall time (makes logs non-reproducible)")
    sp.add_argument("--no-output-tanh", action="store_const", const=False, dest="output_tanh")
    sp.add_argument("--dedup", action="store_const", const=True,
                    help="collapse duplicate pooling candidates")

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_shared_flags(sp)
    sp.add_argument("--manifest")
    sp.add_argument("--checkpoint")
    sp.add_argument("--split", choices=data_mod.SPLITS)
    sp.add_argument("--folds", type=int, help="n-fold cross-validation (re-trains per fold)")
    sp.add_argument("--no-shuffle", action="store_const", const=False, dest="shuffle")
    sp.add_argument("--timing", action="store_const", const=True)
    sp.add_argument("--clip", type=float)

    sp = sub.add_parser("trace", help="frame predictions and energy curves for one sequence")
    _add_shared_flags(sp)
    sp.add_argument("--checkpoint")
    sp.add_argument("--input", help="sequence file (.dseq) or CSV (t,f1..fD[,label])")

    sp = sub.add_parser("gradcheck", help="finite-difference gradient check")
    _add_shared_flags(sp)
    sp.add_argument("--state-dim", type=int, dest="state_dim")
    sp.add_argument("--input-dim", type=int, dest="input_dim")
    sp.add_argument("--classes", type=int)
    sp.add_argument("--frames", type=int)
    sp.add_argument("--tolerance", type=float)
    sp.add_argument("--inject-fault", nargs="?", const="W_sh", dest="inject_fault",
                    metavar="TENSOR", help="double one analytic entry to prove the check bites")

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ShapeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
