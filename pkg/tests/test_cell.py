import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from drnn.cell import (
    CellState,
    cell_order,
    cell_tensor_shapes,
    drnn_step,
    init_cell_params,
    init_rnn_params,
    make_init_rng,
    rnn_step,
    run_sequence,
    validate_cell_params,
)
from drnn.errors import ConfigError, DataError, NumericError, ShapeError
from drnn.kernels_py import CACHE_KEYS
from drnn.numerics import RandomSource


def _params(order, m, n, seed=0, scale=0.6):
    return init_cell_params(order, m, n, RandomSource(seed).derive("cell-init"), scale=scale)


def test_tensor_shapes():
    shapes = cell_tensor_shapes(2, 3, 5)
    assert shapes["W_id"] == (3, 5, 5)
    assert shapes["W_sh"] == (5, 5)
    assert shapes["W_ox"] == (5, 3)
    assert shapes["b_s"] == (5,)
    assert cell_tensor_shapes(0, 3, 5)["W_od"] == (1, 5, 5)


def test_init_params_shapes_and_bounds():
    params = _params(1, 4, 6, scale=0.3)
    for name, shape in cell_tensor_shapes(1, 4, 6).items():
        assert params[name].shape == shape
        assert (np.abs(params[name]) <= 0.3).all()
    assert cell_order(params) == 1
    validate_cell_params(params, 1, 4, 6)


def test_init_params_rejects_bad_dims():
    rng = RandomSource(0)
    with pytest.raises(ConfigError):
        init_cell_params(3, 2, 2, rng)
    with pytest.raises(ConfigError):
        init_cell_params(1, 0, 2, rng)


def test_validate_rejects_missing_and_misshapen():
    params = _params(0, 2, 3)
    broken = dict(params)
    del broken["W_fh"]
    with pytest.raises(ShapeError):
        validate_cell_params(broken, 0, 2, 3)
    broken = {k: v.copy() for k, v in params.items()}
    broken["W_ix"] = broken["W_ix"][:, :1]
    with pytest.raises(ShapeError):
        validate_cell_params(broken, 0, 2, 3)
    broken = {k: v.copy() for k, v in params.items()}
    broken["b_o"][0] = np.nan
    with pytest.raises(ShapeError):
        validate_cell_params(broken, 0, 2, 3)


@pytest.mark.parametrize("order", [0, 1, 2])
def test_run_sequence_matches_stepwise_reference(order):
    m, n, T = 3, 4, 9
    params = _params(order, m, n, seed=order + 1)
    X = RandomSource(50 + order).uniform(-1, 1, T * m).reshape(T, m)
    trace = run_sequence(params, X)
    assert len(trace) == T
    state = CellState.zero(n)
    for t in range(T):
        step = drnn_step(params, state, X[t])
        state = step.state
        assert np.allclose(trace.S[t], state.s, rtol=0, atol=1e-12)
        assert np.allclose(trace.V[t], state.v, rtol=0, atol=1e-12)
        assert np.allclose(trace.A[t], state.a, rtol=0, atol=1e-12)
        assert np.allclose(trace.H[t], state.h, rtol=0, atol=1e-12)
        assert np.allclose(trace.I[t], step.i, rtol=0, atol=1e-12)
        assert np.allclose(trace.G[t], step.g, rtol=0, atol=1e-12)


def test_trace_cache_keys_and_indexing():
    params = _params(2, 2, 3)
    X = RandomSource(8).uniform(-1, 1, 10).reshape(5, 2)
    trace = run_sequence(params, X)
    assert set(trace.cache.keys()) == set(CACHE_KEYS)
    step = trace[2]
    assert step.state.t == 3
    assert np.array_equal(step.state.s, trace.S[2])
    assert np.array_equal(step.zo, trace.ZO[2])


def test_run_sequence_input_validation():
    params = _params(1, 3, 4)
    with pytest.raises(ShapeError):
        run_sequence(params, np.zeros(6))
    with pytest.raises(DataError):
        run_sequence(params, np.zeros((0, 3)))
    with pytest.raises(ShapeError):
        run_sequence(params, np.zeros((4, 2)))


def test_non_finite_input_raises_with_step_number():
    params = _params(1, 2, 3)
    X = np.zeros((4, 2))
    X[2, 0] = np.nan
    with pytest.raises(NumericError, match="time step 3"):
        run_sequence(params, X)


def test_order0_ignores_higher_derivative_weights():
    """An order-0 cell must not read v or a anywhere."""
    m, n, T = 2, 3, 6
    params = _params(0, m, n, seed=4)
    X = RandomSource(4).uniform(-1, 1, T * m).reshape(T, m)
    base = run_sequence(params, X)
    # order-1 cell whose order-1 weight block is zero behaves identically
    lifted = {k: v.copy() for k, v in params.items()}
    for name in ("W_id", "W_fd", "W_od"):
        block = np.zeros((2, n, n))
        block[0] = params[name][0]
        lifted[name] = block
    upper = run_sequence(lifted, X)
    assert np.allclose(base.H, upper.H, rtol=0, atol=1e-14)
    assert np.allclose(base.S, upper.S, rtol=0, atol=1e-14)


@given(
    seed=st.integers(min_value=0, max_value=10_000),
    order=st.integers(min_value=0, max_value=2),
    T=st.integers(min_value=1, max_value=12),
    n=st.integers(min_value=1, max_value=6),
    m=st.integers(min_value=1, max_value=5),
)
def test_state_difference_identities(seed, order, T, n, m):
    """v and a are exact first and second differences of s."""
    params = _params(order, m, n, seed=seed)
    X = RandomSource(seed).derive("input").uniform(-2, 2, T * m).reshape(T, m)
    trace = run_sequence(params, X)
    S = np.vstack([np.zeros((2, n)), trace.S])
    v_expect = S[2:] - S[1:-1]
    a_expect = S[2:] - 2 * S[1:-1] + S[:-2]
    assert np.max(np.abs(trace.V - v_expect)) <= 1e-14
    assert np.max(np.abs(trace.A - a_expect)) <= 1e-14


def test_classic_rnn_step():
    rng = RandomSource(17)
    p = init_rnn_params(3, 4, rng, scale=0.5)
    assert p["W_hh"].shape == (4, 4)
    h = rnn_step(p, np.zeros(4), np.ones(3))
    assert h.shape == (4,)
    assert (np.abs(h) < 1).all()
    expect = np.tanh(p["W_hx"] @ np.ones(3) + p["b_h"])
    assert np.allclose(h, expect, atol=1e-14)


def test_make_init_rng_deterministic():
    assert make_init_rng(12).uniform(0, 1, 3).tolist() == make_init_rng(12).uniform(0, 1, 3).tolist()
