# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled forward/backward kernels for the derivative-gated cell.

Same contract and same math as kernels_py; see that module for the
parameter layout, the trace cache keys, and the truncation semantics.
Everything here is hand-rolled C loops because the per-step matrices are
small (state dims of 8..64) and the numpy dispatch overhead dominates at
that scale.
"""

import numpy as np

from libc.math cimport exp, isfinite, tanh

from .errors import NumericError
from .kernels_py import CACHE_KEYS, PARAM_NAMES

name = "compiled"


cdef inline double _sig(double z) nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def forward(params, X):
    Xa = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] Xv = Xa
    cdef double[:, :, ::1] Wid = np.ascontiguousarray(params["W_id"], dtype=np.float64)
    cdef double[:, :, ::1] Wfd = np.ascontiguousarray(params["W_fd"], dtype=np.float64)
    cdef double[:, :, ::1] Wod = np.ascontiguousarray(params["W_od"], dtype=np.float64)
    cdef double[:, ::1] Wih = np.ascontiguousarray(params["W_ih"], dtype=np.float64)
    cdef double[:, ::1] Wfh = np.ascontiguousarray(params["W_fh"], dtype=np.float64)
    cdef double[:, ::1] Woh = np.ascontiguousarray(params["W_oh"], dtype=np.float64)
    cdef double[:, ::1] Wsh = np.ascontiguousarray(params["W_sh"], dtype=np.float64)
    cdef double[:, ::1] Wix = np.ascontiguousarray(params["W_ix"], dtype=np.float64)
    cdef double[:, ::1] Wfx = np.ascontiguousarray(params["W_fx"], dtype=np.float64)
    cdef double[:, ::1] Wox = np.ascontiguousarray(params["W_ox"], dtype=np.float64)
    cdef double[:, ::1] Wsx = np.ascontiguousarray(params["W_sx"], dtype=np.float64)
    cdef double[::1] bi = np.ascontiguousarray(params["b_i"], dtype=np.float64)
    cdef double[::1] bf = np.ascontiguousarray(params["b_f"], dtype=np.float64)
    cdef double[::1] bo = np.ascontiguousarray(params["b_o"], dtype=np.float64)
    cdef double[::1] bs = np.ascontiguousarray(params["b_s"], dtype=np.float64)

    cdef Py_ssize_t T = Xv.shape[0]
    cdef Py_ssize_t m = Xv.shape[1]
    cdef Py_ssize_t nord = Wid.shape[0]
    cdef Py_ssize_t n = Wih.shape[0]

    cache = {k: np.empty((T, n), dtype=np.float64) for k in CACHE_KEYS}
    cdef double[:, ::1] ZI = cache["ZI"]
    cdef double[:, ::1] ZF = cache["ZF"]
    cdef double[:, ::1] ZO = cache["ZO"]
    cdef double[:, ::1] I = cache["I"]
    cdef double[:, ::1] F = cache["F"]
    cdef double[:, ::1] O = cache["O"]
    cdef double[:, ::1] G = cache["G"]
    cdef double[:, ::1] S = cache["S"]
    cdef double[:, ::1] V = cache["V"]
    cdef double[:, ::1] A = cache["A"]
    cdef double[:, ::1] H = cache["H"]

    cdef double[::1] sprev = np.zeros(n, dtype=np.float64)
    cdef double[::1] vprev = np.zeros(n, dtype=np.float64)
    cdef double[::1] aprev = np.zeros(n, dtype=np.float64)
    cdef double[::1] hprev = np.zeros(n, dtype=np.float64)

    cdef Py_ssize_t t, j, q
    cdef double acc_i, acc_f, acc_g, acc_o, x, hp, ii, ff, gg, ss, oo, hh
    cdef bint bad
    for t in range(T):
        bad = 0
        for j in range(n):
            acc_i = bi[j]
            acc_f = bf[j]
            acc_g = bs[j]
            for q in range(m):
                x = Xv[t, q]
                acc_i += Wix[j, q] * x
                acc_f += Wfx[j, q] * x
                acc_g += Wsx[j, q] * x
            for q in range(n):
                hp = hprev[q]
                acc_i += Wih[j, q] * hp
                acc_f += Wfh[j, q] * hp
                acc_g += Wsh[j, q] * hp
            for q in range(n):
                acc_i += Wid[0, j, q] * sprev[q]
                acc_f += Wfd[0, j, q] * sprev[q]
            if nord > 1:
                for q in range(n):
                    acc_i += Wid[1, j, q] * vprev[q]
                    acc_f += Wfd[1, j, q] * vprev[q]
            if nord > 2:
                for q in range(n):
                    acc_i += Wid[2, j, q] * aprev[q]
                    acc_f += Wfd[2, j, q] * aprev[q]
            ZI[t, j] = acc_i
            ZF[t, j] = acc_f
            ii = _sig(acc_i)
            ff = _sig(acc_f)
            gg = tanh(acc_g)
            ss = ff * sprev[j] + ii * gg
            I[t, j] = ii
            F[t, j] = ff
            G[t, j] = gg
            S[t, j] = ss
            V[t, j] = ss - sprev[j]
            A[t, j] = V[t, j] - vprev[j]
        # the output gate reads the finished current-step derivatives
        for j in range(n):
            acc_o = bo[j]
            for q in range(m):
                acc_o += Wox[j, q] * Xv[t, q]
            for q in range(n):
                acc_o += Woh[j, q] * hprev[q]
            for q in range(n):
                acc_o += Wod[0, j, q] * S[t, q]
            if nord > 1:
                for q in range(n):
                    acc_o += Wod[1, j, q] * V[t, q]
            if nord > 2:
                for q in range(n):
                    acc_o += Wod[2, j, q] * A[t, q]
            ZO[t, j] = acc_o
            oo = _sig(acc_o)
            hh = oo * tanh(S[t, j])
            O[t, j] = oo
            H[t, j] = hh
            if not isfinite(S[t, j]) or not isfinite(hh):
                bad = 1
        if bad:
            raise NumericError(f"non-finite cell state at time step {t + 1}")
        for j in range(n):
            sprev[j] = S[t, j]
            vprev[j] = V[t, j]
            aprev[j] = A[t, j]
            hprev[j] = H[t, j]
    return cache


def backward(params, X, cache, dH, truncated=False):
    Xa = np.ascontiguousarray(X, dtype=np.float64)
    dHa = np.ascontiguousarray(dH, dtype=np.float64)
    cdef double[:, ::1] Xv = Xa
    cdef double[:, ::1] dHv = dHa
    cdef double[:, :, ::1] Wid = np.ascontiguousarray(params["W_id"], dtype=np.float64)
    cdef double[:, :, ::1] Wfd = np.ascontiguousarray(params["W_fd"], dtype=np.float64)
    cdef double[:, :, ::1] Wod = np.ascontiguousarray(params["W_od"], dtype=np.float64)
    cdef double[:, ::1] Wih = np.ascontiguousarray(params["W_ih"], dtype=np.float64)
    cdef double[:, ::1] Wfh = np.ascontiguousarray(params["W_fh"], dtype=np.float64)
    cdef double[:, ::1] Woh = np.ascontiguousarray(params["W_oh"], dtype=np.float64)
    cdef double[:, ::1] Wsh = np.ascontiguousarray(params["W_sh"], dtype=np.float64)
    cdef double[:, ::1] I = cache["I"]
    cdef double[:, ::1] F = cache["F"]
    cdef double[:, ::1] O = cache["O"]
    cdef double[:, ::1] G = cache["G"]
    cdef double[:, ::1] S = cache["S"]
    cdef double[:, ::1] V = cache["V"]
    cdef double[:, ::1] A = cache["A"]
    cdef double[:, ::1] H = cache["H"]

    cdef Py_ssize_t T = Xv.shape[0]
    cdef Py_ssize_t m = Xv.shape[1]
    cdef Py_ssize_t nord = Wid.shape[0]
    cdef Py_ssize_t n = Wih.shape[0]
    cdef bint trunc = bool(truncated)

    grads = {k: np.zeros(np.asarray(params[k]).shape, dtype=np.float64) for k in PARAM_NAMES}
    cdef double[:, :, ::1] gWid = grads["W_id"]
    cdef double[:, :, ::1] gWfd = grads["W_fd"]
    cdef double[:, :, ::1] gWod = grads["W_od"]
    cdef double[:, ::1] gWih = grads["W_ih"]
    cdef double[:, ::1] gWfh = grads["W_fh"]
    cdef double[:, ::1] gWoh = grads["W_oh"]
    cdef double[:, ::1] gWsh = grads["W_sh"]
    cdef double[:, ::1] gWix = grads["W_ix"]
    cdef double[:, ::1] gWfx = grads["W_fx"]
    cdef double[:, ::1] gWox = grads["W_ox"]
    cdef double[:, ::1] gWsx = grads["W_sx"]
    cdef double[::1] gbi = grads["b_i"]
    cdef double[::1] gbf = grads["b_f"]
    cdef double[::1] gbo = grads["b_o"]
    cdef double[::1] gbs = grads["b_s"]

    cdef double[:, ::1] DS = np.zeros((T, n), dtype=np.float64)
    cdef double[:, ::1] DV = np.zeros((T, n), dtype=np.float64)
    cdef double[:, ::1] DA = np.zeros((T, n), dtype=np.float64)
    cdef double[::1] dzi = np.empty(n, dtype=np.float64)
    cdef double[::1] dzf = np.empty(n, dtype=np.float64)
    cdef double[::1] dzo = np.empty(n, dtype=np.float64)
    cdef double[::1] dzg = np.empty(n, dtype=np.float64)
    cdef double[::1] dhc = np.zeros(n, dtype=np.float64)
    cdef double[::1] zrow = np.zeros(n, dtype=np.float64)
    cdef double[::1] sprev, vprev, aprev, hprev

    cdef Py_ssize_t t, j, q
    cdef double tsj, dh, oo, acc, ds, ii, ff, gg, di, df, do, dg, x, hp
    for t in range(T - 1, -1, -1):
        if t > 0:
            sprev = S[t - 1]
            vprev = V[t - 1]
            aprev = A[t - 1]
            hprev = H[t - 1]
        else:
            sprev = zrow
            vprev = zrow
            aprev = zrow
            hprev = zrow

        for j in range(n):
            tsj = tanh(S[t, j])
            dh = dHv[t, j] + dhc[j]
            oo = O[t, j]
            dzo[j] = dh * tsj * oo * (1.0 - oo)
            DS[t, j] += dh * oo * (1.0 - tsj * tsj)
        # output-gate derivative feedback, current step
        for j in range(n):
            acc = 0.0
            for q in range(n):
                acc += Wod[0, q, j] * dzo[q]
            DS[t, j] += acc
        if nord > 1:
            for j in range(n):
                acc = 0.0
                for q in range(n):
                    acc += Wod[1, q, j] * dzo[q]
                DV[t, j] += acc
        if nord > 2:
            for j in range(n):
                acc = 0.0
                for q in range(n):
                    acc += Wod[2, q, j] * dzo[q]
                DA[t, j] += acc
        # a_t = v_t - v_{t-1}; cross-step leg dropped when truncated
        for j in range(n):
            DV[t, j] += DA[t, j]
        if t > 0 and not trunc:
            for j in range(n):
                DV[t - 1, j] -= DA[t, j]
        # v_t = s_t - s_{t-1}
        for j in range(n):
            DS[t, j] += DV[t, j]
        if t > 0 and not trunc:
            for j in range(n):
                DS[t - 1, j] -= DV[t, j]

        for j in range(n):
            ds = DS[t, j]
            ii = I[t, j]
            ff = F[t, j]
            gg = G[t, j]
            dzi[j] = ds * gg * ii * (1.0 - ii)
            dzf[j] = ds * sprev[j] * ff * (1.0 - ff)
            dzg[j] = ds * ii * (1.0 - gg * gg)
        if t > 0:
            for j in range(n):
                DS[t - 1, j] += DS[t, j] * F[t, j]

        for j in range(n):
            di = dzi[j]
            df = dzf[j]
            do = dzo[j]
            dg = dzg[j]
            gbi[j] += di
            gbf[j] += df
            gbo[j] += do
            gbs[j] += dg
            for q in range(n):
                hp = hprev[q]
                gWih[j, q] += di * hp
                gWfh[j, q] += df * hp
                gWoh[j, q] += do * hp
                gWsh[j, q] += dg * hp
            for q in range(m):
                x = Xv[t, q]
                gWix[j, q] += di * x
                gWfx[j, q] += df * x
                gWox[j, q] += do * x
                gWsx[j, q] += dg * x
            for q in range(n):
                gWid[0, j, q] += di * sprev[q]
                gWfd[0, j, q] += df * sprev[q]
                gWod[0, j, q] += do * S[t, q]
            if nord > 1:
                for q in range(n):
                    gWid[1, j, q] += di * vprev[q]
                    gWfd[1, j, q] += df * vprev[q]
                    gWod[1, j, q] += do * V[t, q]
            if nord > 2:
                for q in range(n):
                    gWid[2, j, q] += di * aprev[q]
                    gWfd[2, j, q] += df * aprev[q]
                    gWod[2, j, q] += do * A[t, q]

        if t > 0:
            for j in range(n):
                acc = 0.0
                for q in range(n):
                    acc += Wih[q, j] * dzi[q] + Wfh[q, j] * dzf[q] \
                        + Woh[q, j] * dzo[q] + Wsh[q, j] * dzg[q]
                dhc[j] = acc
            # derivative inputs of the step-t input/forget gates live at t-1
            if not trunc:
                for j in range(n):
                    acc = 0.0
                    for q in range(n):
                        acc += Wid[0, q, j] * dzi[q] + Wfd[0, q, j] * dzf[q]
                    DS[t - 1, j] += acc
                if nord > 1:
                    for j in range(n):
                        acc = 0.0
                        for q in range(n):
                            acc += Wid[1, q, j] * dzi[q] + Wfd[1, q, j] * dzf[q]
                        DV[t - 1, j] += acc
                if nord > 2:
                    for j in range(n):
                        acc = 0.0
                        for q in range(n):
                            acc += Wid[2, q, j] * dzi[q] + Wfd[2, q, j] * dzf[q]
                        DA[t - 1, j] += acc
    return grads
