"""Dataset I/O, PCA feature reduction, and the synthetic benchmark generator.

Sequence files are a small self-describing binary (exact byte layout below)
so round-trips are bit-stable; a CSV import path exists for hand-made data
and is also the only way to attach per-frame labels.  Datasets are described
by a human-editable manifest.

Sequence file layout, little-endian:

  offset 0   8 bytes  magic b"DRNNSEQ1"
  offset 8   u32      format version (1)
  offset 12  u32      T  (frames)
  offset 16  u32      D  (feature dim)
  offset 20           T*D float64, row-major frames

Manifest: `key = value` lines plus one `seq = <path> <label> <split>`
record per sequence; `#` starts a comment.  Recognized keys: version, dim,
classes, names, seq.  Anything else is rejected.
"""

import csv
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .numerics import RandomSource

SEQ_MAGIC = b"DRNNSEQ1"
SEQ_VERSION = 1
SPLITS = ("train", "val", "test")
ARCHETYPES = ("constant", "ramp", "arc")


@dataclass
class LabeledSequence:
    id: str
    features: np.ndarray  # (T, D) float64
    label: int = None  # 1-based class, sequence level
    frame_labels: np.ndarray = None  # (T,) 1-based classes, or None
    split: str = None


@dataclass
class Dataset:
    dim: int
    classes: int
    names: list
    sequences: list = field(default_factory=list)

    def split(self, tag):
        return [s for s in self.sequences if s.split == tag]


def save_sequence(path, features):
    X = np.ascontiguousarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DataError(f"sequence must be a nonempty (T, D) matrix, got shape {X.shape}")
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".seq-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(SEQ_MAGIC)
            fh.write(struct.pack("<III", SEQ_VERSION, X.shape[0], X.shape[1]))
            fh.write(X.astype("<f8", copy=False).tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_sequence(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 20 or raw[:8] != SEQ_MAGIC:
        raise DataError(f"{path}: not a sequence file (bad magic)")
    version, T, D = struct.unpack("<III", raw[8:20])
    if version != SEQ_VERSION:
        raise DataError(f"{path}: unsupported sequence format version {version}")
    expected = 20 + T * D * 8
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes for a {T}x{D} sequence, got {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", count=T * D, offset=20)
    return data.reshape(T, D).astype(np.float64)


def import_csv(path, seq_id=None):
    """Read one sequence from CSV with header t,f1..fD[,label].

    A trailing label column yields per-frame labels; this is the only
    input path that produces frame-level targets.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    has_label = header and header[-1] == "label"
    feat_cols = header[1:-1] if has_label else header[1:]
    dim = len(feat_cols)
    if header[:1] != ["t"] or dim < 1 or feat_cols != [f"f{i + 1}" for i in range(dim)]:
        raise DataError(f"{path}: header must be t,f1..fD with optional trailing label column")
    feats = []
    labels = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
        try:
            t = int(row[0])
            vals = [float(v) for v in row[1:dim + 1]]
            if has_label:
                labels.append(int(row[-1]))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        if t != lineno - 1:
            raise DataError(f"{path}:{lineno}: frame index {t} out of order, expected {lineno - 1}")
        feats.append(vals)
    if not feats:
        raise DataError(f"{path}: no frames")
    return LabeledSequence(
        id=seq_id or os.path.splitext(os.path.basename(path))[0],
        features=np.array(feats, dtype=np.float64),
        frame_labels=np.array(labels, dtype=np.int64) if has_label else None,
    )


def write_manifest(path, dataset, records):
    """records: list of (relative path, label, split) aligned with dataset order."""
    lines = [
        "version = 1",
        f"dim = {dataset.dim}",
        f"classes = {dataset.classes}",
        f"names = {','.join(dataset.names)}",
    ]
    for rel, label, split in records:
        lines.append(f"seq = {rel} {label} {split}")
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".man-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_dataset(dataset, out_dir):
    """Serialize every sequence plus the manifest; returns the manifest path."""
    seq_dir = os.path.join(out_dir, "sequences")
    os.makedirs(seq_dir, exist_ok=True)
    records = []
    for seq in dataset.sequences:
        rel = os.path.join("sequences", f"{seq.id}.dseq")
        save_sequence(os.path.join(out_dir, rel), seq.features)
        records.append((rel, seq.label, seq.split))
    manifest = os.path.join(out_dir, "manifest.txt")
    write_manifest(manifest, dataset, records)
    return manifest


def load_dataset(manifest_path):
    base = os.path.dirname(os.path.abspath(manifest_path))
    try:
        with open(manifest_path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DataError(f"cannot read manifest {manifest_path}: {exc}") from exc
    meta = {}
    records = []
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise DataError(f"{manifest_path}:{lineno}: expected 'key = value'")
        key, _, value = text.partition("=")
        key = key.strip()
        value = value.strip()
        if key == "seq":
            parts = value.split()
            if len(parts) != 3:
                raise DataError(
                    f"{manifest_path}:{lineno}: seq record needs 'path label split'"
                )
            records.append((lineno, parts[0], parts[1], parts[2]))
        elif key in ("version", "dim", "classes"):
            try:
                meta[key] = int(value)
            except ValueError as exc:
                raise DataError(f"{manifest_path}:{lineno}: {key} must be an integer") from exc
        elif key == "names":
            meta["names"] = [v.strip() for v in value.split(",") if v.strip()]
        else:
            raise DataError(f"{manifest_path}:{lineno}: unknown manifest key {key!r}")
    if meta.get("version") != 1:
        raise DataError(f"{manifest_path}: missing or unsupported manifest version")
    for key in ("dim", "classes"):
        if key not in meta:
            raise DataError(f"{manifest_path}: missing required key {key!r}")
    if not records:
        raise DataError(f"{manifest_path}: no sequences")
    k = meta["classes"]
    names = meta.get("names") or [f"class-{i + 1}" for i in range(k)]
    if len(names) != k:
        raise DataError(f"{manifest_path}: {len(names)} class names for {k} classes")
    dataset = Dataset(dim=meta["dim"], classes=k, names=names)
    for lineno, rel, label_s, split in records:
        seq_id = os.path.splitext(os.path.basename(rel))[0]
        try:
            label = int(label_s)
        except ValueError as exc:
            raise DataError(f"{manifest_path}:{lineno}: bad label for {seq_id}") from exc
        if not 1 <= label <= k:
            raise DataError(f"sequence {seq_id}: label {label} outside [1, {k}]")
        if split not in SPLITS:
            raise DataError(f"sequence {seq_id}: unknown split {split!r}")
        full = os.path.join(base, rel)
        if not os.path.exists(full):
            raise DataError(f"sequence {seq_id}: file not found: {full}")
        features = load_sequence(full)
        if features.shape[1] != meta["dim"]:
            raise DataError(
                f"sequence {seq_id}: feature dim {features.shape[1]} != manifest dim {meta['dim']}"
            )
        dataset.sequences.append(
            LabeledSequence(id=seq_id, features=features, label=label, split=split)
        )
    return dataset


class PcaTransform:
    """Orthonormal projection onto the top principal directions."""

    def __init__(self, mean, components, eigenvalues, retained):
        self.mean = mean
        self.components = components  # (d, D), rows orthonormal
        self.eigenvalues = eigenvalues  # full spectrum, descending
        self.retained = retained

    @property
    def d(self):
        return self.components.shape[0]

    def transform(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T

    def inverse_transform(self, Y):
        return np.asarray(Y, dtype=np.float64) @ self.components + self.mean


def _stack_frames(data):
    if hasattr(data, "sequences"):
        return np.vstack([s.features for s in data.sequences])
    return np.asarray(data, dtype=np.float64)


def fit_pca(data, threshold=0.9, fixed_d=None):
    """Eigendecomposition of the frame covariance.

    Keeps the smallest d whose eigenvalues cover `threshold` of total
    variance, or exactly `fixed_d` dimensions when given.  Deterministic
    sign convention: each component's largest-magnitude entry is positive.
    """
    X = _stack_frames(data)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError(f"PCA needs at least 2 frames, got array of shape {X.shape}")
    if not 0.0 < threshold <= 1.0:
        raise ConfigError(f"energy threshold must be in (0, 1], got {threshold}")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (X.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    eigvecs = eigvecs[:, order]
    for j in range(eigvecs.shape[1]):
        peak = np.argmax(np.abs(eigvecs[:, j]))
        if eigvecs[peak, j] < 0:
            eigvecs[:, j] = -eigvecs[:, j]
    total = float(eigvals.sum())
    D = X.shape[1]
    if fixed_d is not None:
        if fixed_d < 1:
            raise ConfigError(f"fixed PCA dim must be >= 1, got {fixed_d}")
        d = min(int(fixed_d), D)
    elif total <= 0.0:
        d = 1  # all-zero variance: keep one (arbitrary) direction
    else:
        ratios = np.cumsum(eigvals) / total
        d = int(np.searchsorted(ratios, threshold - 1e-12) + 1)
        rank = int((eigvals > total * 1e-12).sum())
        d = max(1, min(d, max(rank, 1)))
    retained = 1.0 if total <= 0.0 else float(eigvals[:d].sum() / total)
    return PcaTransform(mean, eigvecs[:, :d].T.copy(), eigvals, retained)


def _period_positions(steps):
    """Zero-mean positions whose first differences tile the given period."""
    pos = np.cumsum(steps)
    return pos - pos.mean()


def _warm_envelope(frames):
    # short linear ramp-in so every track starts from rest
    warm = min(6, frames // 4)
    env = np.ones(frames, dtype=np.float64)
    if warm > 0:
        env[:warm] = np.linspace(0.0, 1.0, warm + 1)[1:]
    return env


def _tile_track(base, frames, dim, phase, env):
    """Sample a periodic base track at a shared phase, staggered per dim."""
    period = len(base)
    t = np.arange(frames)
    track = np.empty((frames, dim), dtype=np.float64)
    for d in range(dim):
        track[:, d] = base[(t + 2 * d + phase) % period]
    return track * env[:, None]


def _shape_constant(frames, dim):
    return np.zeros((frames, dim), dtype=np.float64)


def _shape_ramp(frames, dim, rng, segment, slope, env):
    """Piecewise-linear track: velocity is a square wave of height `slope`.

    The base wave is one complete period (zero mean by construction), the
    phase is drawn once per sequence from a half period so no draw is a
    sign flip of another, and dims are staggered two steps apart.
    """
    period = np.arange(2 * segment)
    vel = np.where((period // segment) % 2 == 0, slope, -slope)
    base = _period_positions(vel)
    phase = rng.randbelow(segment)
    return _tile_track(base, frames, dim, phase, env)


def _shape_arc(frames, dim, rng, segment, curvature, env):
    """Chain of quadratic arcs: per-step acceleration has constant magnitude
    `curvature` and alternating sign, so velocity is a triangle wave at
    twice the ramp frequency."""
    half = max(2, segment // 2)
    period = np.arange(2 * half)
    acc = np.where((period // half) % 2 == 0, curvature, -curvature)
    vel = np.cumsum(acc)
    vel -= vel.mean()
    base = _period_positions(vel)
    phase = rng.randbelow(half)
    return _tile_track(base, frames, dim, phase, env)


def gen_synthetic(seed, classes=3, count=500, frames=40, dim=8, sigma=0.05,
                  fractions=(0.6, 0.2, 0.2), segment=10, curvature=0.7):
    """Deterministic 3-archetype kinematics benchmark.

    Archetypes: constant level, piecewise-linear ramps (square-wave
    velocity with half period `segment`), quadratic arcs (triangle-wave
    velocity at twice the ramp frequency, so second differences have
    constant magnitude `curvature` and alternating sign).  Ramp slope is
    chosen so ramp and arc velocities have equal RMS.  Tracks are built
    from complete zero-mean periods sampled at a random per-sequence
    phase (dims staggered two steps apart), ramped in from rest over the
    first few frames, de-meaned per dim, then shifted by small per-dim
    uniform offsets.
    Mean pooling over time therefore recovers only the offsets, which are
    identically distributed across classes; the class lives entirely in
    the difference statistics.  The per-sequence phase also varies where
    each track ends inside its cycle, so the final hidden state of a
    sequence model sees genuine nuisance variation.

    `classes` is an archetype count (2 or 3) or an explicit list of
    archetype names defining the class order.
    """
    if isinstance(classes, int):
        if not 2 <= classes <= len(ARCHETYPES):
            raise ConfigError(
                f"generator defines archetypes {ARCHETYPES}; classes must be 2..3, got {classes}"
            )
        names = list(ARCHETYPES[:classes])
    else:
        names = [str(c) for c in classes]
        bad = [c for c in names if c not in ARCHETYPES]
        if bad:
            raise ConfigError(f"unknown archetypes {bad}, available: {ARCHETYPES}")
        if len(names) < 2:
            raise ConfigError("need at least 2 classes")
    k = len(names)
    if frames < 8:
        raise ConfigError(f"need at least 8 frames, got {frames}")
    if count < 1:
        raise ConfigError(f"sequence count must be >= 1, got {count}")
    if dim < 1:
        raise ConfigError(f"feature dim must be >= 1, got {dim}")
    if sigma < 0:
        raise ConfigError(f"noise level must be >= 0, got {sigma}")
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ConfigError(f"split fractions must be 3 nonnegative numbers summing to 1: {fractions}")
    if segment < 2 or segment > frames:
        raise ConfigError(f"segment length must be in [2, frames], got {segment}")
    if curvature <= 0:
        raise ConfigError(f"curvature must be positive, got {curvature}")

    # ramp slope matching the arc's velocity RMS (square vs triangle wave)
    slope = curvature * max(2, segment // 2) / (2.0 * np.sqrt(3.0))

    n_train = int(round(fractions[0] * count))
    n_val = int(round(fractions[1] * count))
    n_test = count - n_train - n_val
    if min(n_train, n_val, n_test) < 0:
        raise ConfigError(f"split fractions {fractions} give negative counts for {count} sequences")
    sizes = {"train": n_train, "val": n_val, "test": n_test}

    env = _warm_envelope(frames)
    root = RandomSource(seed).derive("synthetic")
    dataset = Dataset(dim=dim, classes=k, names=names)
    for split in SPLITS:
        for j in range(sizes[split]):
            label = j % k + 1
            rng = root.derive(f"seq-{split}-{j}")
            offsets = rng.uniform(-0.15, 0.15, dim)
            arch = names[label - 1]
            if arch == "constant":
                track = _shape_constant(frames, dim)
            elif arch == "ramp":
                track = _shape_ramp(frames, dim, rng, segment, slope, env)
            else:
                track = _shape_arc(frames, dim, rng, segment, curvature, env)
            # the ramp-in leaves a small phase-dependent mean; remove it so
            # time-averaged features carry nothing but the offsets
            X = track - track.mean(axis=0, keepdims=True) + offsets[None, :]
            if sigma > 0:
                X += rng.normal(frames * dim, sigma=sigma).reshape(frames, dim)
            dataset.sequences.append(
                LabeledSequence(
                    id=f"{split}-{j:04d}", features=X, label=label, split=split
                )
            )
    return dataset
