"""State-energy pooling of a hidden-state sequence.

The energy profile of order r is the per-step L2 norm of the r-th state
derivative (state itself, first difference, second difference).  Peaks of
these curves mark the steps where the cell's content moves fastest; the
hidden states at those peaks, together with the final hidden state, are
averaged into the sequence representation.  Plain last-state, mean and max
pooling are provided as baselines.

Time indices are 1-based everywhere in this module, matching the CSV
output of the trace command.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

STRATEGIES = ("lhs", "mean", "max", "sep")

_ENERGY_KEYS = {0: "S", 1: "V", 2: "A"}


def energy_profile(trace, order):
    """Per-step L2 norm of the order-r state derivative, shape (T,)."""
    if order not in _ENERGY_KEYS:
        raise ConfigError(f"energy order must be 0, 1 or 2, got {order}")
    if order > trace.order:
        raise ConfigError(
            f"energy order {order} exceeds the cell's derivative order {trace.order}"
        )
    values = trace.cache[_ENERGY_KEYS[order]]
    return np.sqrt((values * values).sum(axis=1))


def find_landmarks(e):
    """1-based indices of interior strict local maxima of a profile.

    A plateau that rises strictly on the left and falls strictly on the
    right counts once, at its first index.  Endpoints are never returned;
    the final step joins the candidate set separately.
    """
    e = np.asarray(e, dtype=np.float64)
    T = e.shape[0]
    marks = []
    start = 0
    while start < T:
        stop = start
        while stop + 1 < T and e[stop + 1] == e[start]:
            stop += 1
        if start > 0 and stop < T - 1 and e[start - 1] < e[start] and e[stop + 1] < e[start]:
            marks.append(start + 1)
        start = stop + 1
    return marks


def candidate_indices(trace, orders, dedup=False):
    """Pooling candidates: landmarks of every requested order, then T.

    Without dedup a step selected by several orders contributes once per
    order; with dedup each step contributes once.
    """
    T = len(trace)
    cands = []
    for order in sorted(orders):
        cands.extend(find_landmarks(energy_profile(trace, order)))
    cands.append(T)
    if dedup:
        cands = sorted(set(cands))
    return cands


@dataclass
class PooledRepresentation:
    strategy: str
    vector: np.ndarray
    # 1-based contributing step indices; for max pooling, the per-component
    # argmax steps instead
    indices: list


def pool(trace, strategy, orders=None, dedup=False):
    """Reduce a trace to one representation vector."""
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown pooling strategy {strategy!r}, expected one of {STRATEGIES}")
    H = trace.H
    T = H.shape[0]
    if strategy == "lhs":
        return PooledRepresentation("lhs", H[T - 1].copy(), [T])
    if strategy == "mean":
        return PooledRepresentation("mean", H.mean(axis=0), list(range(1, T + 1)))
    if strategy == "max":
        arg = H.argmax(axis=0)
        return PooledRepresentation("max", H.max(axis=0), [int(t) + 1 for t in arg])
    if orders is None or len(orders) == 0:
        raise ConfigError("sep pooling needs a nonempty set of energy orders")
    cands = candidate_indices(trace, orders, dedup=dedup)
    vec = H[[c - 1 for c in cands]].mean(axis=0)
    return PooledRepresentation("sep", vec, cands)


def pool_backward(pooled, T, state_dim, dv):
    """Adjoint of pool: spread dv over the contributing hidden states.

    Landmark positions are constants of the forward pass, so sep pooling
    backpropagates like a mean over its candidate multiset.
    """
    dH = np.zeros((T, state_dim), dtype=np.float64)
    if pooled.strategy == "lhs":
        dH[T - 1] = dv
    elif pooled.strategy == "mean":
        dH[:] = dv / T
    elif pooled.strategy == "max":
        for j, t in enumerate(pooled.indices):
            dH[t - 1, j] += dv[j]
    else:
        share = dv / len(pooled.indices)
        for t in pooled.indices:
            dH[t - 1] += share
    return dH
