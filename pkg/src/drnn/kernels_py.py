"""Pure-numpy forward/backward kernels for the derivative-gated cell.

Fallback used when the compiled extension is not available.  Both backends
implement the same contract:

``forward(params, X)`` unrolls the cell over a (T, m) input and returns the
full per-step trace as a dict of (T, n) float64 arrays with keys
ZI, ZF, ZO (gate pre-activations), I, F, O (gate activations), G (candidate
tanh), S, V, A (internal state and its first/second differences), H (hidden
state).

``backward(params, X, cache, dH, truncated)`` consumes that trace plus the
per-step loss adjoints on h and returns one gradient array per parameter
tensor, same shapes as ``params``.

Parameter dict layout (canonical order, shared with checkpoints):
  W_id, W_fd, W_od : (N+1, n, n)  state-derivative gate weights, order 0..N
  W_ih, W_fh, W_oh, W_sh : (n, n) recurrent weights
  W_ix, W_fx, W_ox, W_sx : (n, m) input weights
  b_i, b_f, b_o, b_s : (n,)

Gate conventions: input/forget gates read the previous step's state
derivatives, the output gate reads the current step's.  In truncated mode
the backward pass keeps every within-step adjoint path but drops the three
cross-step flows that run through the derivative inputs (gate-to-previous-
state, and the -s_{t-1} / -v_{t-1} legs of the difference chain); parameter
gradients for the derivative weights themselves are always accumulated.
With a single time step both modes execute the identical instruction
sequence, so their gradients agree bit for bit.
"""

import numpy as np

from .errors import NumericError
from .numerics import sigmoid

PARAM_NAMES = (
    "W_id", "W_fd", "W_od",
    "W_ih", "W_fh", "W_oh", "W_sh",
    "W_ix", "W_fx", "W_ox", "W_sx",
    "b_i", "b_f", "b_o", "b_s",
)

CACHE_KEYS = ("ZI", "ZF", "ZO", "I", "F", "O", "G", "S", "V", "A", "H")

name = "python"


def forward(params, X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    T = X.shape[0]
    W_id, W_fd, W_od = params["W_id"], params["W_fd"], params["W_od"]
    W_ih, W_fh = params["W_ih"], params["W_fh"]
    W_oh, W_sh = params["W_oh"], params["W_sh"]
    nord = W_id.shape[0]
    n = W_ih.shape[0]

    # input drives are step-independent, hoist them out of the loop
    px_i = X @ params["W_ix"].T + params["b_i"]
    px_f = X @ params["W_fx"].T + params["b_f"]
    px_o = X @ params["W_ox"].T + params["b_o"]
    px_s = X @ params["W_sx"].T + params["b_s"]

    cache = {k: np.empty((T, n), dtype=np.float64) for k in CACHE_KEYS}
    zero = np.zeros(n, dtype=np.float64)
    s_prev = v_prev = a_prev = h_prev = zero
    for t in range(T):
        dos_prev = (s_prev, v_prev, a_prev)
        zi = px_i[t] + W_ih @ h_prev
        zf = px_f[t] + W_fh @ h_prev
        for r in range(nord):
            zi += W_id[r] @ dos_prev[r]
            zf += W_fd[r] @ dos_prev[r]
        i = sigmoid(zi)
        f = sigmoid(zf)
        g = np.tanh(px_s[t] + W_sh @ h_prev)
        s = f * s_prev + i * g
        v = s - s_prev
        a = v - v_prev
        zo = px_o[t] + W_oh @ h_prev
        for r, d in enumerate((s, v, a)[:nord]):
            zo += W_od[r] @ d
        o = sigmoid(zo)
        h = o * np.tanh(s)
        if not np.isfinite(s).all() or not np.isfinite(h).all():
            raise NumericError(f"non-finite cell state at time step {t + 1}")
        cache["ZI"][t] = zi
        cache["ZF"][t] = zf
        cache["ZO"][t] = zo
        cache["I"][t] = i
        cache["F"][t] = f
        cache["O"][t] = o
        cache["G"][t] = g
        cache["S"][t] = s
        cache["V"][t] = v
        cache["A"][t] = a
        cache["H"][t] = h
        s_prev, v_prev, a_prev, h_prev = s, v, a, h
    return cache


def backward(params, X, cache, dH, truncated=False):
    X = np.ascontiguousarray(X, dtype=np.float64)
    dH = np.asarray(dH, dtype=np.float64)
    T = X.shape[0]
    W_id, W_fd, W_od = params["W_id"], params["W_fd"], params["W_od"]
    W_ih, W_fh = params["W_ih"], params["W_fh"]
    W_oh, W_sh = params["W_oh"], params["W_sh"]
    nord = W_id.shape[0]
    n = W_ih.shape[0]
    I, F, O, G = cache["I"], cache["F"], cache["O"], cache["G"]
    S, V, A, H = cache["S"], cache["V"], cache["A"], cache["H"]

    grads = {k: np.zeros_like(params[k]) for k in PARAM_NAMES}
    zero = np.zeros(n, dtype=np.float64)
    # adjoints of s_t, v_t, a_t; row t collects every contribution from
    # steps > t before step t itself is resolved
    DS = np.zeros((T, n), dtype=np.float64)
    DV = np.zeros((T, n), dtype=np.float64)
    DA = np.zeros((T, n), dtype=np.float64)
    dos_adj = (DS, DV, DA)
    dh_carry = zero
    for t in range(T - 1, -1, -1):
        s_prev = S[t - 1] if t > 0 else zero
        v_prev = V[t - 1] if t > 0 else zero
        a_prev = A[t - 1] if t > 0 else zero
        h_prev = H[t - 1] if t > 0 else zero

        dh = dH[t] + dh_carry
        ts = np.tanh(S[t])
        dzo = dh * ts * O[t] * (1.0 - O[t])
        DS[t] += dh * O[t] * (1.0 - ts * ts)
        # output gate reads the current step's derivatives
        dos_cur = (S[t], V[t], A[t])
        for r in range(nord):
            dos_adj[r][t] += W_od[r].T @ dzo
        # a_t = v_t - v_{t-1}; the second leg crosses the step boundary
        DV[t] += DA[t]
        if t > 0 and not truncated:
            DV[t - 1] -= DA[t]
        # v_t = s_t - s_{t-1}
        DS[t] += DV[t]
        if t > 0 and not truncated:
            DS[t - 1] -= DV[t]

        dzi = DS[t] * G[t] * I[t] * (1.0 - I[t])
        dzf = DS[t] * s_prev * F[t] * (1.0 - F[t])
        dzg = DS[t] * I[t] * (1.0 - G[t] * G[t])
        if t > 0:
            DS[t - 1] += DS[t] * F[t]

        dos_prev = (s_prev, v_prev, a_prev)
        for r in range(nord):
            grads["W_id"][r] += np.outer(dzi, dos_prev[r])
            grads["W_fd"][r] += np.outer(dzf, dos_prev[r])
            grads["W_od"][r] += np.outer(dzo, dos_cur[r])
        grads["W_ih"] += np.outer(dzi, h_prev)
        grads["W_fh"] += np.outer(dzf, h_prev)
        grads["W_oh"] += np.outer(dzo, h_prev)
        grads["W_sh"] += np.outer(dzg, h_prev)
        grads["W_ix"] += np.outer(dzi, X[t])
        grads["W_fx"] += np.outer(dzf, X[t])
        grads["W_ox"] += np.outer(dzo, X[t])
        grads["W_sx"] += np.outer(dzg, X[t])
        grads["b_i"] += dzi
        grads["b_f"] += dzf
        grads["b_o"] += dzo
        grads["b_s"] += dzg

        if t > 0:
            dh_carry = W_ih.T @ dzi + W_fh.T @ dzf + W_oh.T @ dzo + W_sh.T @ dzg
            if not truncated:
                for r in range(nord):
                    dos_adj[r][t - 1] += W_id[r].T @ dzi + W_fd[r].T @ dzf
    return grads
