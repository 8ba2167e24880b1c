import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from drnn.cell import init_cell_params, run_sequence
from drnn.errors import ConfigError
from drnn.numerics import RandomSource
from drnn.pooling import (
    STRATEGIES,
    candidate_indices,
    energy_profile,
    find_landmarks,
    pool,
    pool_backward,
)

from oracles import brute_landmarks


class StubTrace:
    """Trace stand-in with hand-picked state arrays."""

    def __init__(self, H, S=None, V=None, A=None, order=2):
        T, n = H.shape
        zeros = np.zeros((T, n))
        self.H = H
        self.cache = {
            "H": H,
            "S": zeros if S is None else S,
            "V": zeros if V is None else V,
            "A": zeros if A is None else A,
        }
        self.order = order

    def __len__(self):
        return self.H.shape[0]


def _real_trace(seed=3, order=2, m=3, n=4, T=10):
    params = init_cell_params(order, m, n, RandomSource(seed).derive("p"), scale=0.8)
    X = RandomSource(seed).derive("x").uniform(-1, 1, T * m).reshape(T, m)
    return run_sequence(params, X)


# ------------------------------------------------------------- landmarks

def test_find_landmarks_pinned_examples():
    assert find_landmarks([1, 3, 2, 5, 4]) == [2, 4]
    assert find_landmarks([0, 2, 2, 2, 0]) == [2]
    assert find_landmarks([1, 2, 3, 4]) == []
    assert find_landmarks([4, 3, 2, 1]) == []
    assert find_landmarks([2, 2, 1]) == []
    assert find_landmarks([1, 2, 2]) == []
    assert find_landmarks([5]) == []
    assert find_landmarks([]) == []
    assert find_landmarks([0, 1, 0, 1, 0]) == [2, 4]
    assert find_landmarks([3, 3, 3, 3]) == []


@given(
    values=st.lists(st.integers(min_value=0, max_value=6), min_size=1, max_size=40),
)
def test_find_landmarks_matches_brute_force(values):
    e = np.array(values, dtype=np.float64) / 2.0
    assert find_landmarks(e) == brute_landmarks(e)


def test_energy_profile_values_and_validation():
    trace = _real_trace()
    for order, key in ((0, "S"), (1, "V"), (2, "A")):
        expect = np.sqrt((trace.cache[key] ** 2).sum(axis=1))
        assert np.allclose(energy_profile(trace, order), expect, atol=1e-15)
    with pytest.raises(ConfigError):
        energy_profile(trace, 3)
    low = _real_trace(order=1)
    with pytest.raises(ConfigError):
        energy_profile(low, 2)


def test_candidate_indices_multiset_and_dedup():
    T, n = 6, 2
    H = np.zeros((T, n))
    spiky = np.array([0, 5, 0, 5, 0, 0], dtype=np.float64)
    S = np.zeros((T, n))
    S[:, 0] = spiky
    V = S.copy()
    trace = StubTrace(H, S=S, V=V)
    # both orders mark steps 2 and 4, plus the final step
    cands = candidate_indices(trace, (0, 1))
    assert cands == [2, 4, 2, 4, 6]
    assert candidate_indices(trace, (0, 1), dedup=True) == [2, 4, 6]
    assert candidate_indices(trace, (0,)) == [2, 4, 6]


# ------------------------------------------------------------------ pool

def test_pool_lhs_returns_copy():
    trace = _real_trace()
    rep = pool(trace, "lhs")
    assert rep.indices == [len(trace)]
    rep.vector[0] += 1.0
    assert rep.vector[0] != trace.H[-1][0]


def test_pool_mean_and_max_values():
    trace = _real_trace(seed=9)
    H = trace.H
    mean = pool(trace, "mean")
    assert np.allclose(mean.vector, H.mean(axis=0), atol=1e-15)
    assert mean.indices == list(range(1, len(trace) + 1))
    mx = pool(trace, "max")
    assert np.array_equal(mx.vector, H.max(axis=0))
    assert mx.indices == [int(t) + 1 for t in H.argmax(axis=0)]


def test_pool_sep_averages_candidates():
    trace = _real_trace(seed=12)
    rep = pool(trace, "sep", orders=(0, 1, 2))
    cands = candidate_indices(trace, (0, 1, 2))
    assert rep.indices == cands
    expect = trace.H[[c - 1 for c in cands]].mean(axis=0)
    assert np.allclose(rep.vector, expect, atol=1e-15)


def test_pool_validation():
    trace = _real_trace()
    with pytest.raises(ConfigError):
        pool(trace, "sum")
    with pytest.raises(ConfigError):
        pool(trace, "sep", orders=())
    with pytest.raises(ConfigError):
        pool(trace, "sep", orders=None)


def test_sep_without_landmarks_is_last_state_exactly():
    # flat profiles never produce interior strict maxima
    T, n = 8, 3
    H = RandomSource(2).uniform(-1, 1, T * n).reshape(T, n)
    S = np.ones((T, n))
    trace = StubTrace(H, S=S)
    rep = pool(trace, "sep", orders=(0, 1, 2))
    assert rep.indices == [T]
    assert np.array_equal(rep.vector, H[-1])


def test_sep_equals_lhs_for_short_sequences():
    # T <= 2 has no interior steps, so the candidate set is always {T}
    for T in (1, 2):
        trace = _real_trace(seed=T, T=T)
        sep = pool(trace, "sep", orders=(0, 1, 2))
        lhs = pool(trace, "lhs")
        assert np.array_equal(sep.vector, lhs.vector)


# dyadic grids make every sum exact, so invariances can be checked bitwise
dyadic = st.integers(min_value=-2048, max_value=2048).map(lambda k: k / 1024.0)


@given(
    rows=st.lists(st.lists(dyadic, min_size=3, max_size=3), min_size=1, max_size=32),
    seed=st.integers(min_value=0, max_value=1000),
)
def test_mean_pool_permutation_invariant(rows, seed):
    H = np.array(rows, dtype=np.float64)
    perm = list(range(H.shape[0]))
    RandomSource(seed).shuffle(perm)
    a = pool(StubTrace(H), "mean").vector
    b = pool(StubTrace(H[perm]), "mean").vector
    assert np.array_equal(a, b)


@given(rows=st.lists(st.lists(dyadic, min_size=4, max_size=4), min_size=1, max_size=32))
def test_max_pool_dominates_mean_pool(rows):
    H = np.array(rows, dtype=np.float64)
    mx = pool(StubTrace(H), "max").vector
    mean = pool(StubTrace(H), "mean").vector
    assert (mx >= mean).all()


# --------------------------------------------------------- pool_backward

def test_pool_backward_structure():
    trace = _real_trace(seed=6, T=7)
    T, n = trace.H.shape
    dv = RandomSource(31).uniform(-1, 1, n)

    lhs = pool_backward(pool(trace, "lhs"), T, n, dv)
    assert np.array_equal(lhs[-1], dv)
    assert not lhs[:-1].any()

    mean = pool_backward(pool(trace, "mean"), T, n, dv)
    assert np.allclose(mean, np.tile(dv / T, (T, 1)), atol=1e-15)

    mx_rep = pool(trace, "max")
    mx = pool_backward(mx_rep, T, n, dv)
    for j, t in enumerate(mx_rep.indices):
        assert mx[t - 1, j] == dv[j]
    assert mx.sum() == pytest.approx(dv.sum(), abs=1e-12)

    sep_rep = pool(trace, "sep", orders=(0, 1, 2))
    sep = pool_backward(sep_rep, T, n, dv)
    expect = np.zeros((T, n))
    for t in sep_rep.indices:
        expect[t - 1] += dv / len(sep_rep.indices)
    assert np.allclose(sep, expect, atol=1e-15)


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_pool_backward_is_adjoint_of_pool(strategy):
    """<pool(H) via dv> responds to dH exactly as the spread adjoint predicts."""
    trace = _real_trace(seed=40, T=9)
    T, n = trace.H.shape
    rep = pool(trace, strategy, orders=(0, 1, 2))
    rng = RandomSource(41)
    dv = rng.uniform(-1, 1, n)
    dH = rng.uniform(-1, 1, T * n).reshape(T, n)
    # directional derivative with landmark/argmax indices frozen
    rows = np.zeros((T, n))
    if strategy == "max":
        for j, t in enumerate(rep.indices):
            rows[t - 1, j] = 1.0
        forward_dir = (rows * dH).sum(axis=0) @ dv
    else:
        idx = rep.indices
        forward_dir = sum(dH[t - 1] for t in idx) @ dv / len(idx)
    adjoint = (pool_backward(rep, T, n, dv) * dH).sum()
    assert adjoint == pytest.approx(float(forward_dir), abs=1e-12)
