"""Recurrent cells: classic tanh RNN and the derivative-gated memory cell.

The memory cell follows the conventional gated design (input, forget,
output gate around an internal accumulator s), except that the gates are
additionally driven by discretized time derivatives of s: order 0 is the
state itself, order 1 the per-step difference v_t = s_t - s_{t-1}, order 2
the difference of differences a_t = v_t - v_{t-1}.  Input and forget gates
read the previous step's derivative stack; the output gate reads the
current step's, computed after the state update.  With order 0 only, this
is exactly a full-matrix-peephole LSTM.

Parameters live in a plain dict of float64 arrays (see kernels_py for the
canonical names and shapes).  `drnn_step` is the slow, checked one-step
reference; `run_sequence` dispatches whole sequences to the selected
kernel backend and wraps the result in a SequenceTrace.
"""

from dataclasses import dataclass

import numpy as np

from .backend import get_backend
from .errors import ConfigError, DataError, ShapeError
from .kernels_py import CACHE_KEYS, PARAM_NAMES
from .numerics import RandomSource, matvec, sigmoid

MAX_ORDER = 2

DEFAULT_INIT_SCALE = 0.08


def cell_tensor_shapes(order, input_dim, state_dim):
    """Canonical name -> shape map for one cell."""
    n, m = state_dim, input_dim
    shapes = {
        "W_id": (order + 1, n, n),
        "W_fd": (order + 1, n, n),
        "W_od": (order + 1, n, n),
        "W_ih": (n, n), "W_fh": (n, n), "W_oh": (n, n), "W_sh": (n, n),
        "W_ix": (n, m), "W_fx": (n, m), "W_ox": (n, m), "W_sx": (n, m),
        "b_i": (n,), "b_f": (n,), "b_o": (n,), "b_s": (n,),
    }
    return {k: shapes[k] for k in PARAM_NAMES}


def init_cell_params(order, input_dim, state_dim, rng, scale=DEFAULT_INIT_SCALE):
    """Uniform [-scale, scale) init, drawn in canonical tensor order."""
    if not 0 <= order <= MAX_ORDER:
        raise ConfigError(f"derivative order must be in [0, {MAX_ORDER}], got {order}")
    if input_dim < 1 or state_dim < 1:
        raise ConfigError(
            f"dimensions must be positive, got input_dim={input_dim} state_dim={state_dim}"
        )
    params = {}
    for name, shape in cell_tensor_shapes(order, input_dim, state_dim).items():
        size = int(np.prod(shape))
        params[name] = rng.uniform(-scale, scale, size).reshape(shape)
    return params


def validate_cell_params(params, order, input_dim, state_dim):
    shapes = cell_tensor_shapes(order, input_dim, state_dim)
    for name, shape in shapes.items():
        if name not in params:
            raise ShapeError(f"missing cell tensor {name}")
        got = np.asarray(params[name]).shape
        if got != shape:
            raise ShapeError(
                f"cell tensor {name} has shape {got}, expected {shape}",
                left_shape=got,
                right_shape=shape,
            )
        if not np.isfinite(params[name]).all():
            raise ShapeError(f"cell tensor {name} contains non-finite entries")


def cell_order(params):
    return params["W_id"].shape[0] - 1


@dataclass
class CellState:
    """State carried between steps; all zero before the first step."""
    s: np.ndarray
    v: np.ndarray
    a: np.ndarray
    h: np.ndarray
    t: int = 0

    @classmethod
    def zero(cls, state_dim):
        z = lambda: np.zeros(state_dim, dtype=np.float64)
        return cls(s=z(), v=z(), a=z(), h=z(), t=0)


@dataclass
class StepTrace:
    zi: np.ndarray
    zf: np.ndarray
    zo: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    state: CellState


class SequenceTrace:
    """Whole-sequence trace: one (T, n) array per cached signal.

    Thin wrapper over the kernel cache dict; indexing yields the per-step
    StepTrace view for code that works one step at a time.
    """

    def __init__(self, cache, order):
        self.cache = cache
        self.order = order
        for key in CACHE_KEYS:
            setattr(self, key, cache[key])

    def __len__(self):
        return self.cache["H"].shape[0]

    def __getitem__(self, t):
        c = self.cache
        state = CellState(s=c["S"][t], v=c["V"][t], a=c["A"][t], h=c["H"][t], t=t + 1)
        return StepTrace(
            zi=c["ZI"][t], zf=c["ZF"][t], zo=c["ZO"][t],
            i=c["I"][t], f=c["F"][t], o=c["O"][t], g=c["G"][t],
            state=state,
        )


def rnn_step(p, h_prev, x):
    """Classic recurrence h = tanh(W_hh h_prev + W_hx x + b_h)."""
    return np.tanh(matvec(p["W_hh"], h_prev) + matvec(p["W_hx"], x) + p["b_h"])


def init_rnn_params(input_dim, state_dim, rng, scale=DEFAULT_INIT_SCALE):
    n, m = state_dim, input_dim
    return {
        "W_hh": rng.uniform(-scale, scale, n * n).reshape(n, n),
        "W_hx": rng.uniform(-scale, scale, n * m).reshape(n, m),
        "b_h": rng.uniform(-scale, scale, n),
    }


def drnn_step(params, prev, x):
    """One checked step of the derivative-gated cell.

    Reference implementation used by tests and by code that needs custom
    initial state; sequence work should go through run_sequence.
    """
    x = np.asarray(x, dtype=np.float64)
    nord = params["W_id"].shape[0]
    dos_prev = (prev.s, prev.v, prev.a)

    zi = matvec(params["W_ih"], prev.h) + matvec(params["W_ix"], x) + params["b_i"]
    zf = matvec(params["W_fh"], prev.h) + matvec(params["W_fx"], x) + params["b_f"]
    for r in range(nord):
        zi = zi + matvec(params["W_id"][r], dos_prev[r])
        zf = zf + matvec(params["W_fd"][r], dos_prev[r])
    i = sigmoid(zi)
    f = sigmoid(zf)
    g = np.tanh(matvec(params["W_sh"], prev.h) + matvec(params["W_sx"], x) + params["b_s"])
    s = f * prev.s + i * g
    v = s - prev.s
    a = v - prev.v
    zo = matvec(params["W_oh"], prev.h) + matvec(params["W_ox"], x) + params["b_o"]
    for r, d in enumerate((s, v, a)[:nord]):
        zo = zo + matvec(params["W_od"][r], d)
    o = sigmoid(zo)
    h = o * np.tanh(s)
    state = CellState(s=s, v=v, a=a, h=h, t=prev.t + 1)
    return StepTrace(zi=zi, zf=zf, zo=zo, i=i, f=f, o=o, g=g, state=state)


def run_sequence(params, xs):
    """Unroll the cell over a (T, m) input from the zero initial state."""
    X = np.asarray(xs, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"expected a (T, m) input matrix, got shape {X.shape}")
    if X.shape[0] == 0:
        raise DataError("cannot run the cell on an empty sequence")
    if X.shape[1] != params["W_ix"].shape[1]:
        raise ShapeError(
            f"input dim {X.shape[1]} does not match cell input dim {params['W_ix'].shape[1]}",
            left_shape=X.shape,
            right_shape=params["W_ix"].shape,
        )
    cache = get_backend().forward(params, X)
    return SequenceTrace(cache, order=cell_order(params))


def make_init_rng(seed):
    return RandomSource(seed).derive("cell-init")
